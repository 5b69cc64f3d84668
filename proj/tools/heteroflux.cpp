#include <iostream>

#include "heteroflux/cli.hpp"

int main(int argc, char** argv) { return heteroflux::cli::run_main(argc, argv, std::cout, std::cerr); }
