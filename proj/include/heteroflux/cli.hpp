#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"
#include "heteroflux/diagnostics.hpp"
#include "heteroflux/errors.hpp"
#include "heteroflux/flux_models.hpp"
#include "heteroflux/numerical_fluxes.hpp"
#include "heteroflux/reference.hpp"
#include "heteroflux/solver.hpp"

namespace heteroflux::cli {

inline constexpr const char* kVersion = "1.0.0";
/// Leading fraction of steps excluded from the classification tally.
inline constexpr double kTransientFraction = 0.1;
/// Entropy residuals are evaluated on every k-th step.
inline constexpr std::size_t kEntropyStride = 10;
/// Contraction and conservation limits enforced after each run.
inline constexpr double kInvariantTolerance = 1e-10;

enum ExitCode : int { ok = 0, config_error = 2, cfl_violation = 3, invariant_violation = 4, io_error = 5 };

struct CliConfig {
  std::optional<int> experiment;  ///< empty for a custom model
  std::vector<Scheme> schemes{Scheme::ers, Scheme::um, Scheme::av};
  std::vector<double> mesh_sizes{0.1};
  double lambda = 0.125;
  double t_end = 0.0;
  std::vector<double> snapshot_times;  ///< sorted, ends with t_end
  std::filesystem::path output_dir = "heteroflux-out";
  std::optional<std::filesystem::path> model_path;
  bool oracle = true;
  double oracle_h = kOracleMeshSize;
  std::optional<ExperimentSpec> model;  ///< rocks, fluid, initial data and domain in use

  const ExperimentSpec& spec() const { return *model; }
};

// ---------------------------------------------------------------------------
// Text helpers

namespace detail {

inline std::string fmt12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Short form used in file names.
inline std::string fmt_name(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string> words(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline std::optional<double> parse_number(std::string_view t) {
  double v = 0.0;
  const char* end = t.data() + t.size();
  const auto [p, ec] = std::from_chars(t.data(), end, v);
  if (ec != std::errc{} || p != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline double require_number(std::string_view t, const std::string& where) {
  if (auto v = parse_number(t)) return *v;
  throw ConfigError(where + ": expected a number, got '" + std::string(t) + "'");
}

inline std::vector<double> number_list(std::string_view text, const std::string& where) {
  std::vector<double> out;
  for (const auto& w : words(text)) out.push_back(require_number(w, where));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model files

/// Optional run parameters a model file may carry.
struct ModelFile {
  ExperimentSpec spec;
  std::optional<double> h;
  std::optional<double> lambda;
  std::optional<double> t_end;
  std::optional<std::vector<double>> snapshots;
};

namespace detail {

struct Entry {
  std::string value;
  int line = 0;
};

inline const std::set<std::string>& known_model_keys() {
  static const std::set<std::string> keys = {
      "left.porosity",  "left.permeability",  "left.k1",           "left.k2",           "right.porosity",
      "right.permeability", "right.k1",       "right.k2",          "fluid.g1",          "fluid.g2",
      "fluid.q",        "initial.values",     "initial.breakpoints", "domain.half_width", "run.h",
      "run.lambda",     "run.t_end",          "run.snapshots"};
  return keys;
}

inline std::map<std::string, Entry> read_entries(std::istream& in, const std::string& source) {
  std::map<std::string, Entry> entries;
  std::string raw;
  for (int line_no = 1; std::getline(in, raw); ++line_no) {
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'section.key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!known_model_keys().contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
    if (entries.contains(key))
      throw ConfigError(where + ": duplicate key '" + key + "' (first on line " +
                        std::to_string(entries[key].line) + ")");
    entries[key] = {value, line_no};
  }
  return entries;
}

inline MobilityCurve parse_curve(const std::string& text, const std::string& where) {
  const auto w = words(text);
  const std::string kind = w.empty() ? "" : w.front();
  const std::string rest = trim(std::string_view(text).substr(kind.size()));
  try {
    if (kind == "power") {
      if (w.size() < 3 || w.size() > 4) throw ConfigError(where + ": power takes 'c p [increasing|decreasing]'");
      auto orientation = MobilityCurve::Orientation::increasing;
      if (w.size() == 4) {
        if (w[3] == "decreasing")
          orientation = MobilityCurve::Orientation::decreasing;
        else if (w[3] != "increasing")
          throw ConfigError(where + ": unknown power orientation '" + w[3] + "'");
      }
      return MobilityCurve::power(require_number(w[1], where), require_number(w[2], where), orientation);
    }
    if (kind == "piecewise") {
      static const std::regex pair_re(R"(\(\s*([^,()\s]+)\s*,\s*([^,()\s]+)\s*\))");
      std::vector<std::pair<double, double>> nodes;
      std::string leftover;
      auto it = std::sregex_iterator(rest.begin(), rest.end(), pair_re);
      std::size_t pos = 0;
      for (; it != std::sregex_iterator(); ++it) {
        leftover += rest.substr(pos, static_cast<std::size_t>(it->position()) - pos);
        pos = static_cast<std::size_t>(it->position() + it->length());
        nodes.emplace_back(require_number((*it)[1].str(), where), require_number((*it)[2].str(), where));
      }
      leftover += rest.substr(pos);
      if (!trim(leftover).empty()) throw ConfigError(where + ": piecewise expects '(s,v)' pairs, got '" + rest + "'");
      return MobilityCurve::piecewise_linear(std::move(nodes));
    }
    if (kind == "poly") {
      const auto c = number_list(rest, where);
      if (c.empty()) throw ConfigError(where + ": poly needs coefficients");
      return MobilityCurve::polynomial(c);
    }
    if (kind == "ppoly") {
      const auto groups = split(rest, '|');
      if (groups.size() < 2) throw ConfigError(where + ": ppoly takes 'b0 .. bm | c.. | c..'");
      std::vector<std::vector<double>> pieces;
      for (std::size_t i = 1; i < groups.size(); ++i) pieces.push_back(number_list(groups[i], where));
      return MobilityCurve::piecewise_poly(number_list(groups[0], where), std::move(pieces));
    }
  } catch (const InvalidModel& e) {
    throw ConfigError(where + ": " + e.what());
  }
  throw ConfigError(where + ": unknown curve kind '" + kind + "' (power, piecewise, poly, ppoly)");
}

}  // namespace detail

/// Reads a line-oriented "section.key = value" model; see README for the grammar.
inline ModelFile parse_model(std::istream& in, const std::string& source) {
  const auto entries = detail::read_entries(in, source);
  auto where = [&](const std::string& key) {
    const auto it = entries.find(key);
    return it == entries.end() ? source + " (" + key + ")"
                               : source + ":" + std::to_string(it->second.line) + " (" + key + ")";
  };
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = entries.find(key);
    if (it == entries.end()) throw ConfigError(source + ": missing required key '" + key + "'");
    return it->second.value;
  };
  auto number_or = [&](const std::string& key, double fallback) {
    const auto it = entries.find(key);
    return it == entries.end() ? fallback : detail::require_number(it->second.value, where(key));
  };
  auto optional_number = [&](const std::string& key) -> std::optional<double> {
    if (!entries.contains(key)) return std::nullopt;
    return detail::require_number(entries.at(key).value, where(key));
  };

  auto make_rock = [&](const std::string& side) {
    MobilityCurve k1 = detail::parse_curve(get(side + ".k1"), where(side + ".k1"));
    MobilityCurve k2 = detail::parse_curve(get(side + ".k2"), where(side + ".k2"));
    try {
      return RockModel(number_or(side + ".porosity", 1.0), number_or(side + ".permeability", 1.0), std::move(k1),
                       std::move(k2));
    } catch (const InvalidModel& e) {
      const std::string msg = e.what();
      std::string key = side + ".porosity";
      if (msg.find("phase-1") != std::string::npos) key = side + ".k1";
      if (msg.find("phase-2") != std::string::npos) key = side + ".k2";
      if (msg.find("permeability") != std::string::npos) key = side + ".permeability";
      throw ConfigError(where(key) + ": " + msg);
    }
  };
  RockModel left = make_rock("left");
  RockModel right = make_rock("right");
  const FluidParams fluid{number_or("fluid.g1", 0.0), number_or("fluid.g2", 0.0), number_or("fluid.q", 0.0)};

  InitialData initial{detail::number_list(get("initial.values"), where("initial.values")), {}};
  if (entries.contains("initial.breakpoints"))
    initial.breakpoints = detail::number_list(entries.at("initial.breakpoints").value, where("initial.breakpoints"));
  try {
    initial.validate();
  } catch (const InvalidData& e) {
    throw ConfigError(where("initial.values") + ": " + e.what());
  }

  const double half_width = detail::require_number(get("domain.half_width"), where("domain.half_width"));
  if (!(half_width > 0.0)) throw ConfigError(where("domain.half_width") + ": must be > 0");

  ModelFile out{ExperimentSpec{0,
                               "custom model " + source,
                               std::move(left),
                               std::move(right),
                               fluid,
                               std::move(initial),
                               half_width,
                               {},
                               0.0,
                               0.0,
                               {},
                               std::nullopt,
                               ExpectedTraces{},
                               std::nullopt,
                               std::nullopt},
                std::nullopt,
                std::nullopt,
                std::nullopt,
                std::nullopt};

  // Flux construction checks unimodality and nondegenerate mobilities.
  auto make_flux = [&](const RockModel& rock, const std::string& side) {
    try {
      return FluxFunction(rock, fluid);
    } catch (const Error& e) {
      throw ConfigError(source + " (" + side + " flux): " + e.what());
    }
  };
  const FluxFunction fl = make_flux(out.spec.left, "left");
  const FluxFunction fr = make_flux(out.spec.right, "right");
  const double sl = out.spec.initial(-1e-9), sr = out.spec.initial(1e-9);
  try {
    const auto t = entropy_interface_traces(fl, fr, sl, sr);
    out.spec.derived_traces = {t.s_left, t.s_right};
  } catch (const NoAdmissibleTrace& e) {
    throw ConfigError(source + ": " + e.what());
  }
  const auto crossings = intersection_points(fl, fr);
  if (crossings.size() == 1) out.spec.derived_intersection = crossings.front().s;

  out.h = optional_number("run.h");
  out.lambda = optional_number("run.lambda");
  out.t_end = optional_number("run.t_end");
  if (entries.contains("run.snapshots"))
    out.snapshots = detail::number_list(entries.at("run.snapshots").value, where("run.snapshots"));
  if (out.h) out.spec.mesh_sizes = {*out.h};
  if (out.lambda) out.spec.lambda = *out.lambda;
  if (out.t_end) out.spec.t_end = *out.t_end;
  if (out.snapshots) out.spec.snapshot_times = *out.snapshots;
  return out;
}

inline ModelFile parse_model_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--model: cannot open '" + path.string() + "'");
  return parse_model(in, path.filename().string());
}

// ---------------------------------------------------------------------------
// Flags

struct RawOptions {
  std::string experiment;
  std::string schemes = "ers,um,av";
  std::vector<double> h;
  std::optional<double> lambda;
  std::optional<double> t;
  std::vector<double> snapshots;
  std::string out = "heteroflux-out";
  std::string model;
  bool no_oracle = false;
  double oracle_h = kOracleMeshSize;
};

inline void add_options(CLI::App& app, RawOptions& o) {
  app.set_help_flag("--help", "Print this help message and exit");  // -h would clash with --h
  app.add_option("--experiment,-e", o.experiment, "Registry experiment 1..5, or 'custom' with --model");
  app.add_option("--scheme,-s", o.schemes, "Comma-separated subset of ers,um,av (empty string: none)");
  app.add_option("--h", o.h, "Mesh size; a comma-separated list runs several meshes")->delimiter(',');
  app.add_option("--lambda", o.lambda, "dt/h");
  app.add_option("--t", o.t, "Final time");
  app.add_option("--snapshots", o.snapshots, "Comma-separated snapshot times (t_end is always added)")
      ->delimiter(',');
  app.add_option("--out,-o", o.out, "Output directory");
  app.add_option("--model,-m", o.model, "Custom model file (implies --experiment custom)");
  app.add_flag("--no-oracle", o.no_oracle, "Skip the fine-mesh reference run");
  app.add_option("--oracle-h", o.oracle_h, "Mesh size of the fine-mesh reference");
}

namespace detail {

inline void check_mesh(double h, double half_width, const std::string& flag) {
  if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError(flag + ": mesh size must be > 0, got " + fmt12(h));
  const double n = half_width / h;
  if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n) || std::round(n) < 2)
    throw ConfigError(flag + ": half-width " + fmt12(half_width) + " is not a multiple (>= 2) of h=" + fmt12(h));
}

}  // namespace detail

/// Turns raw flag values into a validated config. The CFL check uses the
/// same stability constant as the solver and raises CflViolation.
inline CliConfig resolve(const RawOptions& o) {
  CliConfig c;
  std::optional<ModelFile> file;
  const bool custom = o.experiment == "custom" || (o.experiment.empty() && !o.model.empty());
  if (custom) {
    if (o.model.empty()) throw ConfigError("--experiment custom: --model is required");
    file = parse_model_file(o.model);
    c.model_path = o.model;
    c.model = file->spec;
  } else {
    if (o.experiment.empty()) throw ConfigError("--experiment: required (1..5, or custom with --model)");
    const auto id = detail::parse_number(o.experiment);
    if (!id || *id != std::round(*id) || *id < 1 || *id > kExperimentCount)
      throw ConfigError("--experiment: expected 1..5 or custom, got '" + o.experiment + "'");
    if (!o.model.empty()) throw ConfigError("--model: only valid with --experiment custom");
    c.experiment = static_cast<int>(*id);
    c.model = experiment(*c.experiment);
  }
  const ExperimentSpec& spec = *c.model;

  c.schemes.clear();
  if (!detail::trim(o.schemes).empty()) {
    for (const auto& name : detail::split(o.schemes, ',')) {
      const auto s = parse_scheme(name);
      if (!s) throw ConfigError("--scheme: unknown scheme '" + name + "' (ers, um, av)");
      if (std::find(c.schemes.begin(), c.schemes.end(), *s) != c.schemes.end())
        throw ConfigError("--scheme: '" + name + "' listed twice");
      c.schemes.push_back(*s);
    }
  }

  if (!o.h.empty())
    c.mesh_sizes = o.h;
  else if (!spec.mesh_sizes.empty())
    c.mesh_sizes = {spec.mesh_sizes.front()};
  else
    c.mesh_sizes = {0.1};
  for (double h : c.mesh_sizes) detail::check_mesh(h, spec.half_width, "--h");
  {
    auto sorted = c.mesh_sizes;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ConfigError("--h: repeated value");
  }

  if (o.lambda)
    c.lambda = *o.lambda;
  else if (custom && !file->lambda)
    throw ConfigError("--lambda: required (or run.lambda in the model file)");
  else
    c.lambda = spec.lambda;
  if (!(c.lambda > 0.0) || !std::isfinite(c.lambda)) throw ConfigError("--lambda: must be > 0");

  if (o.t)
    c.t_end = *o.t;
  else if (custom && !file->t_end)
    throw ConfigError("--t: required (or run.t_end in the model file)");
  else
    c.t_end = spec.t_end;
  if (!(c.t_end >= 0.0) || !std::isfinite(c.t_end)) throw ConfigError("--t: must be >= 0");

  if (!o.snapshots.empty()) {
    c.snapshot_times = o.snapshots;
    for (double t : c.snapshot_times)
      if (!(t >= 0.0 && t <= c.t_end))
        throw ConfigError("--snapshots: time " + detail::fmt12(t) + " outside [0, " + detail::fmt12(c.t_end) + "]");
  } else {
    for (double t : spec.snapshot_times)
      if (t <= c.t_end) c.snapshot_times.push_back(t);
  }
  c.snapshot_times.push_back(c.t_end);
  std::sort(c.snapshot_times.begin(), c.snapshot_times.end());
  c.snapshot_times.erase(std::unique(c.snapshot_times.begin(), c.snapshot_times.end(),
                                     [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                         c.snapshot_times.end());

  c.output_dir = o.out;
  if (c.output_dir.empty()) throw ConfigError("--out: empty path");
  c.oracle = !o.no_oracle;
  c.oracle_h = o.oracle_h;
  if (c.oracle) detail::check_mesh(c.oracle_h, spec.half_width, "--oracle-h");

  if (custom) {
    // The oracle of a custom model runs with the resolved parameters; registry
    // oracles keep the registry lambda so the cache stays keyed by (id, t, h).
    c.model->lambda = c.lambda;
    c.model->t_end = c.t_end;
    c.model->snapshot_times = c.snapshot_times;
    c.model->mesh_sizes = c.mesh_sizes;
  }

  const FluxFunction fl = spec.flux_left(), fr = spec.flux_right();
  for (Scheme s : c.schemes) {
    const double m = stability_constant(make_flux_set(s, fl, fr), spec.left.porosity(), spec.right.porosity());
    if (c.lambda * m > 1.0) throw CflViolation(to_string(s), c.lambda, m);
  }
  return c;
}

/// Parses flags (without the program name). Parse failures become ConfigError.
inline CliConfig parse_config(const std::vector<std::string>& args) {
  CLI::App app{"heteroflux"};
  RawOptions o;
  add_options(app, o);
  std::vector<const char*> argv{"heteroflux"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    throw ConfigError(std::string(e.get_name()) + ": " + e.what());
  }
  return resolve(o);
}

/// A model file carrying its own run.* keys, with no further flags.
inline CliConfig parse_config_file(const std::filesystem::path& model_path) {
  RawOptions o;
  o.experiment = "custom";
  o.model = model_path.string();
  return resolve(o);
}

// ---------------------------------------------------------------------------
// Runs and reports

struct SchemeReport {
  Scheme scheme = Scheme::ers;
  double h = 0.0;
  double stability_constant = 0.0;
  std::size_t steps = 0;
  TraceReport traces;
  InterfaceClass final_class = InterfaceClass::compressive;
  double rh_residual = 0.0;
  std::size_t transient_steps = 0;
  std::size_t compressive = 0;
  std::size_t undercompressive = 0;
  std::size_t boundary_case = 0;
  double max_entropy_residual = 0.0;
  bool entropy_ok = true;
  std::optional<double> l1_to_oracle;
  double contraction_excess = 0.0;
  double conservation_defect = 0.0;
  double min = 0.0;
  double max = 0.0;
  bool boundary_disturbed = false;

  double undercompressive_fraction() const {
    const std::size_t total = compressive + undercompressive + boundary_case;
    return total == 0 ? 0.0 : static_cast<double>(undercompressive) / static_cast<double>(total);
  }
};

struct ReportSummary {
  int experiment = 0;
  std::string title;
  double lambda = 0.0;
  double t_end = 0.0;
  std::vector<double> snapshot_times;
  std::vector<double> mesh_sizes;
  ExpectedTraces derived_traces;
  std::optional<ExpectedTraces> nominal_traces;
  std::optional<double> derived_intersection;
  std::optional<double> oracle_h;
  std::vector<SchemeReport> runs;  ///< mesh-major, then scheme order of the config
  std::vector<std::filesystem::path> files;

  const SchemeReport* find(Scheme s, double h) const {
    for (const auto& r : runs)
      if (r.scheme == s && std::abs(r.h - h) < 1e-15) return &r;
    return nullptr;
  }
};

/// One scheme run plus its per-step interface class and entropy residual.
struct SchemeRun {
  RunResult result;
  std::vector<InterfaceClass> classes;
  std::vector<double> entropy_residual;  ///< NaN on steps not evaluated
};

inline SchemeRun run_scheme(const ExperimentSpec& spec, const CliConfig& config, Scheme scheme, double h) {
  SchemeConfig sc = spec.config(scheme);
  sc.lambda = config.lambda;
  sc.t_end = config.t_end;
  sc.snapshot_times = config.snapshot_times;
  const FluxFunction fl = spec.flux_left(), fr = spec.flux_right();
  const FluxSet fluxes = make_flux_set(scheme, fl, fr);
  const auto constants = default_kruzkhov_constants();
  std::vector<InterfaceClass> classes;
  std::vector<double> residuals;
  auto observer = [&](const RunState& before, const RunState& after, const StepRecord& rec) {
    classes.push_back(classify_interface(after, fluxes).classification);
    double r = std::numeric_limits<double>::quiet_NaN();
    if (rec.step % kEntropyStride == 0)
      r = interior_entropy_residual(before, after, rec.dt / h, sc.porosity_left, sc.porosity_right, fluxes, constants)
              .max_interior_residual;
    residuals.push_back(r);
  };
  RunResult result = run(sc, spec.grid(h), fl, fr, spec.initial, observer);
  return {std::move(result), std::move(classes), std::move(residuals)};
}

inline SchemeReport summarize(const ExperimentSpec& spec, const SchemeRun& sr, const Profile* oracle_final) {
  const RunResult& res = sr.result;
  const auto& log = res.diagnostics_log;
  SchemeReport r;
  r.scheme = res.config.scheme;
  r.h = res.grid.h();
  r.stability_constant = res.stability_constant;
  r.steps = log.size();
  r.traces = extract_traces(res, 2);
  const FluxFunction fl = spec.flux_left(), fr = spec.flux_right();
  const FluxSet fluxes = make_flux_set(r.scheme, fl, fr);
  const InterfaceRecord last = classify_interface(res.final_state(), fluxes);
  r.final_class = last.classification;
  r.rh_residual = rankine_hugoniot_residual(last, fl, fr);
  r.transient_steps = static_cast<std::size_t>(std::ceil(kTransientFraction * static_cast<double>(log.size())));
  for (std::size_t i = r.transient_steps; i < sr.classes.size(); ++i) {
    switch (sr.classes[i]) {
      case InterfaceClass::compressive:
        ++r.compressive;
        break;
      case InterfaceClass::undercompressive:
        ++r.undercompressive;
        break;
      case InterfaceClass::boundary_case:
        ++r.boundary_case;
        break;
    }
  }
  for (double e : sr.entropy_residual)
    if (!std::isnan(e)) r.max_entropy_residual = std::max(r.max_entropy_residual, e);
  r.entropy_ok = r.max_entropy_residual <= kEntropyTolerance;
  if (oracle_final) r.l1_to_oracle = l1_distance(Profile::from_cells(res.grid, res.final_snapshot().cells), *oracle_final);
  r.contraction_excess = log.size() > 1 ? l1_contraction_excess(log) : 0.0;
  r.conservation_defect = conservation_defect(log);
  r.min = 1.0;
  r.max = 0.0;
  for (double v : res.initial.cells) r.min = std::min(r.min, v), r.max = std::max(r.max, v);
  for (const auto& rec : log) r.min = std::min(r.min, rec.min), r.max = std::max(r.max, rec.max);
  r.boundary_disturbed = res.boundary_disturbed;
  return r;
}

// ---------------------------------------------------------------------------
// Output files

/// Tracks written files; everything is removed unless commit() is called.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    if (std::filesystem::exists(dir_, ec)) {
      if (!std::filesystem::is_directory(dir_, ec)) throw IoError("output path is not a directory: " + dir_.string());
    } else {
      std::filesystem::create_directories(dir_, ec);
      if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
      created_ = true;
    }
  }
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : files_) std::filesystem::remove(f, ec);
    if (created_) std::filesystem::remove(dir_, ec);  // only succeeds when empty
  }

  void write(const std::string& name, const std::string& content) {
    const auto path = dir_ / name;
    files_.push_back(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
  }

  void commit() { committed_ = true; }
  const std::vector<std::filesystem::path>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> files_;
  bool created_ = false;
  bool committed_ = false;
};

namespace detail {

inline std::vector<std::string> metadata(const CliConfig& c) {
  const ExperimentSpec& spec = c.spec();
  std::vector<std::string> m;
  m.push_back(std::string("# heteroflux ") + kVersion);
  m.push_back("# experiment: " + (c.experiment ? std::to_string(*c.experiment) : std::string("custom")) + " (" +
              spec.title + ")");
  m.push_back("# lambda: " + fmt12(c.lambda));
  m.push_back("# t_end: " + fmt12(c.t_end));
  m.push_back("# half_width: " + fmt12(spec.half_width));
  m.push_back("# expected_traces (derived by root finding): " + fmt12(spec.derived_traces.s_left) + " " +
              fmt12(spec.derived_traces.s_right));
  if (spec.nominal_traces)
    m.push_back("# expected_traces (nominal): " + fmt12(spec.nominal_traces->s_left) + " " +
                fmt12(spec.nominal_traces->s_right));
  return m;
}

inline void put_lines(std::ostringstream& out, const std::vector<std::string>& lines) {
  for (const auto& l : lines) out << l << '\n';
}

/// Mean of a piecewise-constant profile over [a, b].
inline double profile_average(const Profile& p, double a, double b) {
  const Profile cell{b - a, {0.5 * (a + b)}, {0.0}};
  // |p - 0| integrates p itself since p >= 0.
  return l1_distance(p, cell) / (b - a);
}

inline const Snapshot* snapshot_at(const RunResult& r, double t) {
  for (const auto& s : r.snapshots)
    if (std::abs(s.time - t) < 1e-12) return &s;
  return nullptr;
}

}  // namespace detail

/// One plot-data table: x, S_ers, S_um, S_av, S_oracle. Rows follow the grid of
/// the first present run; missing schemes leave blank fields; no runs gives a
/// header-only table.
inline std::string plotdata_text(double time, const std::array<const RunResult*, 3>& runs, const Profile* oracle,
                                 const std::vector<std::string>& meta = {}) {
  std::ostringstream out;
  detail::put_lines(out, meta);
  out << "# time: " << detail::fmt12(time) << '\n';
  out << "x,S_ers,S_um,S_av,S_oracle\n";
  const RunResult* base = nullptr;
  for (const auto* r : runs)
    if (r) {
      base = r;
      break;
    }
  if (!base) return out.str();
  std::array<const Snapshot*, 3> snaps{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!runs[i]) continue;
    if (runs[i]->grid.size() != base->grid.size() || runs[i]->grid.h() != base->grid.h())
      throw std::invalid_argument("plotdata: runs on different grids");
    snaps[i] = detail::snapshot_at(*runs[i], time);
    if (!snaps[i]) throw std::invalid_argument("plotdata: no snapshot at t=" + detail::fmt12(time));
  }
  const Grid& g = base->grid;
  for (std::size_t k = 0; k < g.size(); ++k) {
    out << detail::fmt12(g.center(k));
    for (const auto* s : snaps) {
      out << ',';
      if (s) out << detail::fmt12(s->cells[k]);
    }
    out << ',';
    if (oracle) out << detail::fmt12(detail::profile_average(*oracle, g.left_edge(k), g.right_edge(k)));
    out << '\n';
  }
  return out.str();
}

inline std::filesystem::path emit_plotdata(const std::filesystem::path& path, double time,
                                           const std::array<const RunResult*, 3>& runs, const Profile* oracle,
                                           const std::vector<std::string>& meta = {}) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << plotdata_text(time, runs, oracle, meta);
  if (!out) throw IoError("failed writing " + path.string());
  return path;
}

inline std::string snapshots_text(const SchemeRun& sr, const std::vector<std::string>& meta) {
  std::ostringstream out;
  detail::put_lines(out, meta);
  out << "time,j,x,S\n";
  const Grid& g = sr.result.grid;
  for (const auto& snap : sr.result.snapshots)
    for (std::size_t k = 0; k < g.size(); ++k)
      out << detail::fmt12(snap.time) << ',' << g.index(k) << ',' << detail::fmt12(g.center(k)) << ','
          << detail::fmt12(snap.cells[k]) << '\n';
  return out.str();
}

inline std::string diagnostics_text(const SchemeRun& sr, const std::vector<std::string>& meta) {
  std::ostringstream out;
  detail::put_lines(out, meta);
  out << "step,time,dt,l1_increment,min,max,s_left,s_right,interface_flux,inflow_flux,outflow_flux,mass_before,"
         "mass_after,classification,entropy_residual\n";
  const auto& log = sr.result.diagnostics_log;
  using detail::fmt12;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& r = log[i];
    out << r.step << ',' << fmt12(r.time) << ',' << fmt12(r.dt) << ',' << fmt12(r.l1_increment) << ','
        << fmt12(r.min) << ',' << fmt12(r.max) << ',' << fmt12(r.s_left) << ',' << fmt12(r.s_right) << ','
        << fmt12(r.interface_flux) << ',' << fmt12(r.inflow_flux) << ',' << fmt12(r.outflow_flux) << ','
        << fmt12(r.mass_before) << ',' << fmt12(r.mass_after) << ',' << to_string(sr.classes[i]) << ',';
    if (!std::isnan(sr.entropy_residual[i])) out << fmt12(sr.entropy_residual[i]);
    out << '\n';
  }
  return out.str();
}

inline std::string oracle_text(const Profile& p, double time, double h_ref, const std::vector<std::string>& meta) {
  std::ostringstream out;
  detail::put_lines(out, meta);
  out << "# time: " << detail::fmt12(time) << '\n';
  out << "# oracle: ers at h=" << detail::fmt12(h_ref) << '\n';
  out << "x,S\n";
  for (std::size_t k = 0; k < p.x.size(); ++k) out << detail::fmt12(p.x[k]) << ',' << detail::fmt12(p.s[k]) << '\n';
  return out.str();
}

inline std::string summary_text(const ReportSummary& s) {
  using detail::fmt12;
  std::ostringstream out;
  auto kv = [&](const std::string& k, const std::string& v) { out << k << ": " << v << '\n'; };
  auto list = [](const std::vector<double>& v) {
    std::string t;
    for (std::size_t i = 0; i < v.size(); ++i) t += (i ? " " : "") + fmt12(v[i]);
    return t;
  };
  kv("heteroflux", kVersion);
  kv("experiment", s.experiment > 0 ? std::to_string(s.experiment) : "custom");
  kv("title", s.title);
  kv("lambda", fmt12(s.lambda));
  kv("t_end", fmt12(s.t_end));
  kv("snapshot_times", list(s.snapshot_times));
  kv("mesh_sizes", list(s.mesh_sizes));
  kv("expected.derived.s_left", fmt12(s.derived_traces.s_left));
  kv("expected.derived.s_right", fmt12(s.derived_traces.s_right));
  if (s.nominal_traces) {
    kv("expected.nominal.s_left", fmt12(s.nominal_traces->s_left));
    kv("expected.nominal.s_right", fmt12(s.nominal_traces->s_right));
  }
  if (s.derived_intersection) kv("intersection.derived", fmt12(*s.derived_intersection));
  kv("oracle_h", s.oracle_h ? fmt12(*s.oracle_h) : "none");
  for (const auto& r : s.runs) {
    const std::string p = std::string(to_string(r.scheme)) + ".h" + detail::fmt_name(r.h) + ".";
    kv(p + "stability_constant", fmt12(r.stability_constant));
    kv(p + "steps", std::to_string(r.steps));
    kv(p + "s_left", fmt12(r.traces.s_left));
    kv(p + "s_right", fmt12(r.traces.s_right));
    kv(p + "trace_drift", fmt12(r.traces.trace_drift));
    kv(p + "plateau_offset", std::to_string(r.traces.plateau_offset));
    kv(p + "left_layer.height", fmt12(r.traces.left.height));
    kv(p + "left_layer.width", std::to_string(r.traces.left.width));
    kv(p + "right_layer.height", fmt12(r.traces.right.height));
    kv(p + "right_layer.width", std::to_string(r.traces.right.width));
    kv(p + "interface_class", to_string(r.final_class));
    kv(p + "rh_residual", fmt12(r.rh_residual));
    kv(p + "tally.transient_steps", std::to_string(r.transient_steps));
    kv(p + "tally.compressive", std::to_string(r.compressive));
    kv(p + "tally.undercompressive", std::to_string(r.undercompressive));
    kv(p + "tally.boundary_case", std::to_string(r.boundary_case));
    kv(p + "undercompressive_fraction", fmt12(r.undercompressive_fraction()));
    kv(p + "entropy.max_residual", fmt12(r.max_entropy_residual));
    kv(p + "entropy.verdict", r.entropy_ok ? "pass" : "fail");
    kv(p + "l1_to_oracle", r.l1_to_oracle ? fmt12(*r.l1_to_oracle) : "none");
    kv(p + "contraction_excess", fmt12(r.contraction_excess));
    kv(p + "conservation_defect", fmt12(r.conservation_defect));
    kv(p + "min", fmt12(r.min));
    kv(p + "max", fmt12(r.max));
    kv(p + "boundary_disturbed", r.boundary_disturbed ? "yes" : "no");
  }
  return out.str();
}

/// Runs every (scheme, mesh) pair and the oracle concurrently, checks the run
/// invariants, then writes all outputs. On any failure nothing is left behind.
inline ReportSummary run_experiment(const CliConfig& config) {
  const ExperimentSpec& spec = config.spec();
  struct Job {
    Scheme scheme;
    double h;
  };
  std::vector<Job> jobs;
  for (double h : config.mesh_sizes)
    for (Scheme s : config.schemes) jobs.push_back({s, h});

  std::vector<std::future<SchemeRun>> futures;
  for (const auto& j : jobs)
    futures.push_back(std::async(std::launch::async, [&spec, &config, j] { return run_scheme(spec, config, j.scheme, j.h); }));
  const bool want_oracle = config.oracle && !jobs.empty();
  std::future<std::vector<Profile>> oracle_future;
  if (want_oracle)
    oracle_future = std::async(std::launch::async,
                               [&] { return fine_mesh_oracle(spec, config.snapshot_times, config.oracle_h); });

  // Collect everything first so no future is left running on an exception.
  std::vector<SchemeRun> runs;
  std::exception_ptr failure;
  for (auto& f : futures) {
    try {
      runs.push_back(f.get());
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  }
  std::vector<Profile> oracle;
  if (want_oracle) {
    try {
      oracle = oracle_future.get();
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  ReportSummary summary;
  summary.experiment = config.experiment.value_or(0);
  summary.title = spec.title;
  summary.lambda = config.lambda;
  summary.t_end = config.t_end;
  summary.snapshot_times = config.snapshot_times;
  summary.mesh_sizes = config.mesh_sizes;
  summary.derived_traces = spec.derived_traces;
  summary.nominal_traces = spec.nominal_traces;
  summary.derived_intersection = spec.derived_intersection;
  if (want_oracle) summary.oracle_h = config.oracle_h;

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    SchemeReport r = summarize(spec, runs[i], want_oracle ? &oracle.back() : nullptr);
    const std::string label = std::string(to_string(r.scheme)) + " at h=" + detail::fmt12(r.h);
    if (r.contraction_excess > kInvariantTolerance)
      throw InvariantViolation(label + ": L1 contraction violated by " + detail::fmt12(r.contraction_excess));
    if (r.conservation_defect > kInvariantTolerance)
      throw InvariantViolation(label + ": conservation defect " + detail::fmt12(r.conservation_defect));
    summary.runs.push_back(r);
  }

  OutputSet outputs(config.output_dir);
  const auto meta = detail::metadata(config);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto m = meta;
    m.push_back(std::string("# scheme: ") + to_string(jobs[i].scheme));
    m.push_back("# h: " + detail::fmt12(jobs[i].h));
    m.push_back("# stability_constant: " + detail::fmt12(runs[i].result.stability_constant));
    const std::string stem = std::string(to_string(jobs[i].scheme)) + "-h" + detail::fmt_name(jobs[i].h);
    outputs.write(stem + "-snapshots.csv", snapshots_text(runs[i], m));
    outputs.write(stem + "-diagnostics.csv", diagnostics_text(runs[i], m));
  }
  for (std::size_t ti = 0; ti < config.snapshot_times.size(); ++ti) {
    const double t = config.snapshot_times[ti];
    const Profile* o = want_oracle ? &oracle[ti] : nullptr;
    if (o) outputs.write("oracle-t" + detail::fmt_name(t) + ".csv", oracle_text(*o, t, config.oracle_h, meta));
    for (double h : config.mesh_sizes) {
      std::array<const RunResult*, 3> by_scheme{};
      for (std::size_t i = 0; i < jobs.size(); ++i)
        if (jobs[i].h == h) by_scheme[static_cast<std::size_t>(jobs[i].scheme)] = &runs[i].result;
      auto m = meta;
      m.push_back("# h: " + detail::fmt12(h));
      outputs.write("plot-h" + detail::fmt_name(h) + "-t" + detail::fmt_name(t) + ".csv",
                    plotdata_text(t, by_scheme, o, m));
    }
  }
  outputs.write("summary.txt", summary_text(summary));
  summary.files = outputs.files();
  outputs.commit();
  return summary;
}

// ---------------------------------------------------------------------------
// Entry point

inline void print_verdicts(const ReportSummary& s, std::ostream& out) {
  using detail::fmt12;
  out << "experiment " << (s.experiment > 0 ? std::to_string(s.experiment) : "custom") << ": " << s.title << '\n';
  out << "  expected traces " << fmt12(s.derived_traces.s_left) << " | " << fmt12(s.derived_traces.s_right) << '\n';
  for (const auto& r : s.runs) {
    out << "  " << to_string(r.scheme) << " h=" << fmt12(r.h) << ": traces " << fmt12(r.traces.s_left) << " | "
        << fmt12(r.traces.s_right) << ", " << to_string(r.final_class) << ", undercompressive "
        << fmt12(100.0 * r.undercompressive_fraction()) << "% of steps, entropy "
        << (r.entropy_ok ? "pass" : "fail");
    if (r.l1_to_oracle) out << ", L1 to oracle " << fmt12(*r.l1_to_oracle);
    out << '\n';
  }
  out << "  " << s.files.size() << " files written\n";
}

/// Exit code and message prefix for an error escaping a run.
inline std::pair<int, const char*> classify_error(const std::exception& e) {
  if (dynamic_cast<const CflViolation*>(&e)) return {cfl_violation, "error"};
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidData*>(&e) ||
      dynamic_cast<const InvalidModel*>(&e))
    return {config_error, "config error"};
  if (dynamic_cast<const IoError*>(&e)) return {io_error, "i/o error"};
  if (dynamic_cast<const BoundsViolation*>(&e) || dynamic_cast<const InvariantViolation*>(&e))
    return {invariant_violation, "invariant violation"};
  return {1, "error"};
}

/// Full command-line behaviour; returns the process exit code.
inline int run_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Finite-volume schemes for a conservation law with a discontinuous flux"};
  app.set_version_flag("--version", kVersion);
  RawOptions o;
  add_options(app, o);
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return config_error;
  }
  try {
    const CliConfig config = resolve(o);
    const ReportSummary summary = run_experiment(config);
    print_verdicts(summary, out);
    return ok;
  } catch (const std::exception& e) {
    const auto [code, prefix] = classify_error(e);
    err << prefix << ": " << e.what() << '\n';
    return code;
  }
}

}  // namespace heteroflux::cli
