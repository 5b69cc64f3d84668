#pragma once

// Independent reference formulas used by the tests. Nothing here calls into
// the library: fluxes are written out by hand from the mobility definitions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

using Fn = std::function<double(double)>;

/// f = l1 / (l1 + l2) * (q + (g1 - g2) l2)
inline double fractional(double l1, double l2, double g1 = 2.0, double g2 = 1.0, double q = 0.0) {
  return l1 / (l1 + l2) * (q + (g1 - g2) * l2);
}

inline double exp3_left_l1(double s) { return s < 0.25 ? 1.75 * s : 0.4375 + 0.25 * (s - 0.25); }

/// Closed-form left/right fluxes of the five experiments.
inline std::pair<Fn, Fn> experiment_fluxes(int id) {
  switch (id) {
    case 1:
      return {[](double s) { return fractional(s, 1 - s); }, [](double s) { return fractional(1.1 * s, 1.1 * (1 - s)); }};
    case 2:
      return {[](double s) { return fractional(2 * s, 1 - s); }, [](double s) { return fractional(s, 2 * (1 - s)); }};
    case 3:
      return {[](double s) { return fractional(exp3_left_l1(s), 1 - s * s); },
              [](double s) { return fractional(s, 1 - s * s); }};
    case 4:
      return {[](double s) { return fractional(s, 2 * (1 - s)); }, [](double s) { return fractional(2 * s, 1 - s); }};
    default:
      return {[](double s) { return fractional(10 * s * s, 20 * (1 - s) * (1 - s)); },
              [](double s) { return fractional(50 * s * s, 5 * (1 - s) * (1 - s)); }};
  }
}

/// Fourth-order central difference.
inline double slope(const Fn& f, double s, double d = 1e-3) {
  return (-f(s + 2 * d) + 8 * f(s + d) - 8 * f(s - d) + f(s - 2 * d)) / (12 * d);
}

/// Argmax: dense scan, then bisection on the sign of a difference-quotient slope.
inline double argmax(const Fn& f) {
  constexpr int n = 20001;
  int best = 0;
  double bv = f(0.0);
  for (int i = 1; i < n; ++i) {
    const double v = f(static_cast<double>(i) / (n - 1));
    if (v > bv) {
      bv = v;
      best = i;
    }
  }
  if (best == 0 || best == n - 1) return static_cast<double>(best) / (n - 1);
  double lo = (best - 1.0) / (n - 1);
  double hi = (best + 1.0) / (n - 1);
  for (int it = 0; it < 100; ++it) {
    const double m = 0.5 * (lo + hi);
    if (slope(f, m, 1e-4) > 0)
      lo = m;
    else
      hi = m;
  }
  return 0.5 * (lo + hi);
}

/// Godunov flux by its definition on a dense sample.
inline double godunov(const Fn& f, double a, double b, int n = 20001) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  double best = f(a);
  for (int i = 0; i <= n; ++i) {
    const double v = f(lo + (hi - lo) * i / n);
    best = a <= b ? std::min(best, v) : std::max(best, v);
  }
  return best;
}

/// Bisection for f(s) = v on [lo, hi], f monotone there.
inline double root(const Fn& f, double lo, double hi, double v) {
  const bool inc = f(hi) > f(lo);
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (lo + hi);
    if ((f(m) < v) == inc)
      lo = m;
    else
      hi = m;
  }
  return 0.5 * (lo + hi);
}

inline std::vector<std::pair<double, double>> random_pairs(std::size_t count, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<double, double>> out(count);
  for (auto& p : out) p = {u(rng), u(rng)};
  return out;
}

}  // namespace oracle
