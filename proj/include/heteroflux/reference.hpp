#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "heteroflux/errors.hpp"
#include "heteroflux/flux_models.hpp"
#include "heteroflux/numerical_fluxes.hpp"
#include "heteroflux/solver.hpp"

namespace heteroflux {

// ---------------------------------------------------------------------------
// Entropy traces at the interface

struct InterfaceTraces {
  double s_left = 0.0;
  double s_right = 0.0;
  double flux_value = 0.0;
};

namespace detail {

/// Root of f(s) = value on [lo, hi] where f is monotone.
template <class F>
double monotone_root(const F& f, double lo, double hi, double value, const char* what) {
  double flo = f(lo) - value;
  double fhi = f(hi) - value;
  const double tol = 1e-12 * std::max(1.0, std::abs(value));
  if (std::abs(flo) <= tol) return lo;
  if (std::abs(fhi) <= tol) return hi;
  if ((flo < 0.0) == (fhi < 0.0)) throw NoAdmissibleTrace(std::string(what) + ": flux value outside branch range");
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double m = 0.5 * (lo + hi);
    const double fm = f(m) - value;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = m;
      flo = fm;
    } else {
      hi = m;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Interface traces of the entropy solution of the Riemann problem (sL | sR).
/// The flux is the interface Godunov value min{A, B}, A = fL(min(sL, thetaL)),
/// B = fR(max(thetaR, sR)). The side attaining the minimum keeps its own state
/// (clamped to its maximizer); the other side takes the root of its flux on the
/// branch facing away from the interface. Ties keep both clamped states.
inline InterfaceTraces entropy_interface_traces(const FluxFunction& left, const FluxFunction& right, double s_left,
                                                double s_right) {
  const double tl = left.theta();
  const double tr = right.theta();
  const double a_state = std::min(s_left, tl);
  const double b_state = std::max(tr, s_right);
  const double a = left(a_state);
  const double b = right(b_state);
  InterfaceTraces out;
  out.flux_value = std::min(a, b);
  const double tie = 1e-10 * std::max(1.0, std::abs(out.flux_value));
  if (std::abs(a - b) <= tie) {
    out.s_left = a_state;
    out.s_right = b_state;
  } else if (a < b) {
    out.s_left = a_state;
    out.s_right = detail::monotone_root(right, 0.0, tr, out.flux_value, "right trace");
  } else {
    out.s_right = b_state;
    out.s_left = detail::monotone_root(left, tl, 1.0, out.flux_value, "left trace");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment registry

struct ExpectedTraces {
  double s_left = 0.0;
  double s_right = 0.0;
};

struct ExperimentSpec {
  int id = 0;
  std::string title;
  RockModel left;
  RockModel right;
  FluidParams fluid;
  InitialData initial;
  double half_width = 0.0;
  std::vector<double> mesh_sizes{0.1, 0.01};
  double lambda = 0.125;
  double t_end = 0.0;
  std::vector<double> snapshot_times;
  /// Nominal traces quoted for the registry entry, when stated.
  std::optional<ExpectedTraces> nominal_traces;
  /// Traces from independent root-finding; these govern tests.
  ExpectedTraces derived_traces;
  std::optional<double> nominal_intersection;
  std::optional<double> derived_intersection;

  FluxFunction flux_left() const { return {left, fluid}; }
  FluxFunction flux_right() const { return {right, fluid}; }
  Grid grid(double h) const { return Grid::with_half_width(half_width, h); }

  SchemeConfig config(Scheme scheme) const {
    SchemeConfig c;
    c.scheme = scheme;
    c.lambda = lambda;
    c.t_end = t_end;
    c.snapshot_times = snapshot_times;
    c.porosity_left = left.porosity();
    c.porosity_right = right.porosity();
    return c;
  }
};

namespace detail {

using Curve = MobilityCurve;

inline RockModel rock(MobilityCurve k1, MobilityCurve k2, double permeability = 1.0) {
  return RockModel(1.0, permeability, std::move(k1), std::move(k2));
}

}  // namespace detail

inline constexpr int kExperimentCount = 5;

inline ExperimentSpec experiment(int id) {
  using detail::Curve;
  using detail::rock;
  const FluidParams fluid{2.0, 1.0, 0.0};
  const double r2 = std::sqrt(2.0);
  switch (id) {
    case 1:
      return {1,
              "rarefaction into a slower rock",
              rock(Curve::power(1.0, 1.0), Curve::power_decreasing(1.0, 1.0)),
              rock(Curve::power(1.0, 1.0), Curve::power_decreasing(1.0, 1.0), 1.1),
              fluid,
              InitialData::riemann(0.65, 0.35),
              4.0,
              {0.1, 0.01},
              0.125,
              1.5,
              {0.5, 1.5},
              ExpectedTraces{0.5, 0.35},
              ExpectedTraces{0.5, 0.349244327711},
              std::nullopt,
              std::nullopt};
    case 2:
      return {2,
              "constant state with crossing maximizers",
              rock(Curve::power(2.0, 1.0), Curve::power_decreasing(1.0, 1.0)),
              rock(Curve::power(1.0, 1.0), Curve::power_decreasing(2.0, 1.0)),
              fluid,
              InitialData::constant(0.5),
              5.0,
              {0.1, 0.01},
              0.125,
              3.0,
              {1.5, 3.0},
              ExpectedTraces{0.42, 0.58},
              ExpectedTraces{r2 - 1.0, 2.0 - r2},
              std::nullopt,
              std::nullopt};
    case 3:
      return {3,
              "constant state with a kinked mobility",
              rock(Curve::piecewise_linear({{0.0, 0.0}, {0.25, 0.4375}, {1.0, 0.625}}),
                   Curve::polynomial({1.0, 0.0, -1.0})),
              rock(Curve::power(1.0, 1.0), Curve::polynomial({1.0, 0.0, -1.0})),
              fluid,
              InitialData::constant(0.5),
              4.5,
              {0.1, 0.01},
              0.125,
              3.75,
              {2.5, 3.75},
              ExpectedTraces{0.45, 0.54},
              ExpectedTraces{0.395790297375, 0.518865493273},
              std::nullopt,
              std::nullopt};
    case 4:
      return {4,
              "undercompressive steady state",
              rock(Curve::power(1.0, 1.0), Curve::power_decreasing(2.0, 1.0)),
              rock(Curve::power(2.0, 1.0), Curve::power_decreasing(1.0, 1.0)),
              fluid,
              InitialData::riemann(2.0 / 3.0, 1.0 / 3.0),
              4.0,
              {0.1, 0.01},
              0.125,
              3.0,
              {1.5, 3.0},
              ExpectedTraces{0.58, 0.42},
              ExpectedTraces{2.0 - r2, r2 - 1.0},
              std::nullopt,
              std::nullopt};
    case 5:
      return {5,
              "quadratic mobilities with strong contrast",
              rock(Curve::power(10.0, 2.0), Curve::power_decreasing(20.0, 2.0)),
              rock(Curve::power(50.0, 2.0), Curve::power_decreasing(5.0, 2.0)),
              fluid,
              InitialData::riemann(0.8, 0.2),
              8.0,
              {0.1, 0.01},
              1.0 / 32.0,
              0.5,
              {0.25, 0.5},
              ExpectedTraces{0.6, 0.32},
              ExpectedTraces{0.638399739186, 0.317014013053},
              0.46,
              0.422064450015};
    default:
      throw ConfigError("unknown experiment id " + std::to_string(id) + " (expected 1.." +
                        std::to_string(kExperimentCount) + ")");
  }
}

inline std::vector<ExperimentSpec> all_experiments() {
  std::vector<ExperimentSpec> out;
  for (int id = 1; id <= kExperimentCount; ++id) out.push_back(experiment(id));
  return out;
}

// ---------------------------------------------------------------------------
// Profiles and the fine-mesh oracle

/// Piecewise-constant profile on a uniform grid: value s[k] on [x[k] - h/2, x[k] + h/2].
struct Profile {
  double h = 0.0;
  std::vector<double> x;
  std::vector<double> s;

  static Profile from_cells(const Grid& grid, std::vector<double> cells) {
    return {grid.h(), grid.centers(), std::move(cells)};
  }

  double left_edge() const { return x.front() - 0.5 * h; }
  double right_edge() const { return x.back() + 0.5 * h; }
};

/// Exact integral of |A - B| over the common domain, with both profiles
/// treated as piecewise constant.
inline double l1_distance(const Profile& a, const Profile& b) {
  if (a.x.empty() || b.x.empty()) return 0.0;
  const double lo = std::max(a.left_edge(), b.left_edge());
  const double hi = std::min(a.right_edge(), b.right_edge());
  if (!(hi > lo)) return 0.0;
  auto cell_of = [](const Profile& p, double x) {
    const auto k = static_cast<long>(std::floor((x - p.left_edge()) / p.h));
    return static_cast<std::size_t>(std::clamp<long>(k, 0, static_cast<long>(p.x.size()) - 1));
  };
  std::vector<double> edges{lo, hi};
  for (const Profile* p : {&a, &b})
    for (std::size_t k = 0; k <= p->x.size(); ++k) {
      const double e = p->left_edge() + static_cast<double>(k) * p->h;
      if (e > lo && e < hi) edges.push_back(e);
    }
  std::sort(edges.begin(), edges.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double w = edges[i + 1] - edges[i];
    if (w <= 0.0) continue;
    const double mid = 0.5 * (edges[i] + edges[i + 1]);
    total += w * std::abs(a.s[cell_of(a, mid)] - b.s[cell_of(b, mid)]);
  }
  return total;
}

inline constexpr double kOracleMeshSize = 0.002;

inline std::filesystem::path oracle_cache_dir() {
  if (const char* env = std::getenv("HETEROFLUX_CACHE_DIR"); env && *env) return env;
  return std::filesystem::temp_directory_path() / "heteroflux-cache";
}

namespace detail {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string oracle_header(int id, double t, double h) {
  return "# heteroflux-oracle v1, exp=" + std::to_string(id) + ", t=" + format_g17(t) + ", h=" + format_g17(h);
}

inline std::filesystem::path oracle_path(int id, double t, double h) {
  return oracle_cache_dir() / ("oracle-exp" + std::to_string(id) + "-t" + format_g17(t) + "-h" + format_g17(h) + ".csv");
}

inline std::optional<Profile> read_oracle(const std::filesystem::path& path, int id, double t, double h) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string line;
  if (!std::getline(in, line) || line != oracle_header(id, t, h)) return std::nullopt;
  Profile p;
  p.h = h;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) return std::nullopt;
    try {
      p.x.push_back(std::stod(line.substr(0, comma)));
      p.s.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  if (p.x.empty()) return std::nullopt;
  return p;
}

inline void write_oracle(const std::filesystem::path& path, int id, double t, const Profile& p) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create oracle cache directory " + path.parent_path().string());
  // Unique temporary name per writer; rename is atomic on one filesystem.
  std::ostringstream tmp_name;
  tmp_name << path.filename().string() << ".tmp" << std::hex << std::random_device{}();
  const fs::path tmp = path.parent_path() / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write oracle cache file " + tmp.string());
    out << oracle_header(id, t, p.h) << '\n';
    for (std::size_t k = 0; k < p.x.size(); ++k) out << format_g17(p.x[k]) << ',' << format_g17(p.s[k]) << '\n';
    if (!out) throw IoError("failed writing oracle cache file " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move oracle cache file into place: " + path.string());
  }
}

}  // namespace detail

/// ERS profiles at mesh size h_ref for each requested time, from one run.
/// Results are cached on disk, one file per (experiment, time, h_ref).
/// Custom models (id <= 0) are never cached: the id does not identify them.
inline std::vector<Profile> fine_mesh_oracle(const ExperimentSpec& spec, const std::vector<double>& times,
                                             double h_ref = kOracleMeshSize) {
  const bool cached_id = spec.id > 0;
  std::vector<Profile> out(times.size());
  std::vector<double> missing;
  for (std::size_t i = 0; i < times.size(); ++i) {
    std::optional<Profile> cached;
    if (cached_id) cached = detail::read_oracle(detail::oracle_path(spec.id, times[i], h_ref), spec.id, times[i], h_ref);
    if (cached)
      out[i] = std::move(*cached);
    else
      missing.push_back(times[i]);
  }
  if (missing.empty()) return out;

  SchemeConfig config = spec.config(Scheme::ers);
  config.t_end = *std::max_element(missing.begin(), missing.end());
  config.snapshot_times = missing;
  const Grid grid = spec.grid(h_ref);
  const RunResult result = run(config, grid, spec.flux_left(), spec.flux_right(), spec.initial);

  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!out[i].x.empty()) continue;
    const auto it = std::find_if(result.snapshots.begin(), result.snapshots.end(),
                                 [&](const Snapshot& s) { return std::abs(s.time - times[i]) < 1e-12; });
    out[i] = Profile::from_cells(grid, it->cells);
    if (cached_id) detail::write_oracle(detail::oracle_path(spec.id, times[i], h_ref), spec.id, times[i], out[i]);
  }
  return out;
}

inline Profile fine_mesh_oracle(const ExperimentSpec& spec, double t, double h_ref = kOracleMeshSize) {
  return fine_mesh_oracle(spec, std::vector<double>{t}, h_ref).front();
}

struct ReferenceSolution {
  InterfaceTraces traces;
  Profile profile;
};

inline ReferenceSolution reference_solution(const ExperimentSpec& spec, double t, double h_ref = kOracleMeshSize) {
  const double sl = spec.initial(-1e-9);
  const double sr = spec.initial(1e-9);
  return {entropy_interface_traces(spec.flux_left(), spec.flux_right(), sl, sr), fine_mesh_oracle(spec, t, h_ref)};
}

/// True when the last two snapshots of a run differ by at most `tol` in every cell.
inline bool is_steady(const RunResult& result, double tol) {
  if (result.snapshots.size() < 2) return false;
  const auto& a = result.snapshots[result.snapshots.size() - 2].cells;
  const auto& b = result.snapshots.back().cells;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (std::abs(a[k] - b[k]) > tol) return false;
  return true;
}

}  // namespace heteroflux
