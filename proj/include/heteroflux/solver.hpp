#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "heteroflux/errors.hpp"
#include "heteroflux/flux_models.hpp"
#include "heteroflux/numerical_fluxes.hpp"

namespace heteroflux {

inline constexpr double kBoundsTolerance = 1e-12;

/// Two-sided uniform grid on [-L, L]. Cells are j = -n..-1 (rock left of the
/// interface) and j = 1..n (rock right of it); x = 0 is the face between cells
/// -1 and 1. Storage is contiguous: slot k in [0, 2n) covers [-L + k h, -L + (k+1) h],
/// so slots 0..n-1 hold j = -n..-1 and slots n..2n-1 hold j = 1..n.
class Grid {
 public:
  Grid(double h, int n_cells_per_side) : h_(h), n_(n_cells_per_side) {
    if (!(h_ > 0.0) || !std::isfinite(h_)) throw InvalidData("grid: h must be > 0");
    if (n_ < 2) throw InvalidData("grid: need at least 2 cells per side");
  }

  /// Grid with n = round(L / h) cells per side.
  static Grid with_half_width(double half_width, double h) {
    if (!(h > 0.0)) throw InvalidData("grid: h must be > 0");
    return Grid(h, static_cast<int>(std::lround(half_width / h)));
  }

  double h() const { return h_; }
  int cells_per_side() const { return n_; }
  std::size_t size() const { return 2 * static_cast<std::size_t>(n_); }
  double half_width() const { return n_ * h_; }

  /// Storage slot of signed cell index j (j != 0).
  std::size_t slot(int j) const {
    if (j == 0 || j < -n_ || j > n_) throw std::out_of_range("grid: bad cell index " + std::to_string(j));
    return j < 0 ? static_cast<std::size_t>(j + n_) : static_cast<std::size_t>(n_ + j - 1);
  }
  int index(std::size_t slot) const {
    const int k = static_cast<int>(slot);
    return k < n_ ? k - n_ : k - n_ + 1;
  }
  double left_edge(std::size_t slot) const { return (static_cast<double>(slot) - n_) * h_; }
  double right_edge(std::size_t slot) const { return (static_cast<double>(slot) + 1 - n_) * h_; }
  double center(std::size_t slot) const { return (static_cast<double>(slot) + 0.5 - n_) * h_; }

  std::vector<double> centers() const {
    std::vector<double> x(size());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = center(k);
    return x;
  }

 private:
  double h_;
  int n_;
};

/// Piecewise-constant initial saturation: values[0] on (-inf, breakpoints[0]),
/// values[i] on [breakpoints[i-1], breakpoints[i]), values.back() beyond.
struct InitialData {
  std::vector<double> values;
  std::vector<double> breakpoints;

  static InitialData constant(double v) { return {{v}, {}}; }
  static InitialData riemann(double left, double right, double at = 0.0) { return {{left, right}, {at}}; }

  void validate() const {
    if (values.size() != breakpoints.size() + 1)
      throw InvalidData("initial data needs exactly one more value than breakpoints");
    for (double v : values)
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidData("initial value " + std::to_string(v) + " outside [0,1]");
    for (std::size_t i = 1; i < breakpoints.size(); ++i)
      if (!(breakpoints[i] > breakpoints[i - 1])) throw InvalidData("initial data breakpoints must increase");
  }

  double operator()(double x) const {
    const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), x);
    return values[static_cast<std::size_t>(it - breakpoints.begin())];
  }
};

struct SchemeConfig {
  Scheme scheme = Scheme::ers;
  double lambda = 0.125;  ///< dt / h
  double t_end = 0.0;
  std::vector<double> snapshot_times;
  double porosity_left = 1.0;
  double porosity_right = 1.0;
};

/// Cell averages S_j^n in grid storage order.
struct RunState {
  std::vector<double> cells;
  std::size_t step = 0;
  double time = 0.0;

  std::size_t cells_per_side() const { return cells.size() / 2; }
  double at(int j) const {
    const int n = static_cast<int>(cells_per_side());
    return cells[j < 0 ? static_cast<std::size_t>(j + n) : static_cast<std::size_t>(n + j - 1)];
  }
  double left_trace() const { return at(-1); }
  double right_trace() const { return at(1); }
};

struct Snapshot {
  double time = 0.0;
  std::vector<double> cells;
};

/// Per-step bookkeeping. `l1_increment` is sum_j |S_j^{n+1} - S_j^n| (no h weight).
struct StepRecord {
  std::size_t step = 0;
  double time = 0.0;  ///< time after the step
  double dt = 0.0;
  double l1_increment = 0.0;
  double min = 0.0;
  double max = 0.0;
  double s_left = 0.0;
  double s_right = 0.0;
  double interface_flux = 0.0;
  double inflow_flux = 0.0;   ///< flux through the outer left face
  double outflow_flux = 0.0;  ///< flux through the outer right face
  double mass_before = 0.0;   ///< sum_j phi_j S_j h
  double mass_after = 0.0;
};

struct RunResult {
  Grid grid;
  SchemeConfig config;
  double stability_constant = 0.0;
  RunState initial;
  std::vector<Snapshot> snapshots;
  std::vector<StepRecord> diagnostics_log;
  /// Waves reached the outer boundary (boundary cells moved by more than 1e-8).
  bool boundary_disturbed = false;

  const Snapshot& final_snapshot() const { return snapshots.back(); }
  RunState final_state() const {
    RunState s;
    s.cells = snapshots.back().cells;
    s.time = snapshots.back().time;
    return s;
  }
};

using StepObserver = std::function<void(const RunState& before, const RunState& after, const StepRecord& record)>;

// ---------------------------------------------------------------------------

/// Exact cell averages of piecewise-constant data.
inline RunState project_initial_data(const InitialData& s0, const Grid& grid) {
  s0.validate();
  RunState state;
  state.cells.resize(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double a = grid.left_edge(k);
    const double b = grid.right_edge(k);
    double integral = 0.0;
    double lo = a;
    for (std::size_t i = 0; i <= s0.breakpoints.size() && lo < b; ++i) {
      const double hi = i < s0.breakpoints.size() ? std::min(b, std::max(lo, s0.breakpoints[i])) : b;
      integral += s0.values[i] * (hi - lo);
      lo = hi;
    }
    state.cells[k] = integral / (b - a);
  }
  return state;
}

/// Fluxes on the 2n+1 faces. Face k separates slots k-1 and k; faces 0 and 2n
/// see a ghost cell copying the adjacent value; face n is the interface.
inline void face_fluxes(std::span<const double> cells, const FluxSet& fluxes, std::vector<double>& out) {
  const std::size_t m = cells.size();
  const std::size_t n = m / 2;
  out.resize(m + 1);
  out[0] = fluxes.left(cells[0], cells[0]);
  for (std::size_t k = 1; k < n; ++k) out[k] = fluxes.left(cells[k - 1], cells[k]);
  out[n] = fluxes.interface(cells[n - 1], cells[n]);
  for (std::size_t k = n + 1; k < m; ++k) out[k] = fluxes.right(cells[k - 1], cells[k]);
  out[m] = fluxes.right(cells[m - 1], cells[m - 1]);
}

inline std::vector<double> face_fluxes(std::span<const double> cells, const FluxSet& fluxes) {
  std::vector<double> out;
  face_fluxes(cells, fluxes, out);
  return out;
}

/// One explicit update S_j <- S_j - (lambda / phi_j) (F_{j+1/2} - F_{j-1/2}).
inline RunState step(const RunState& state, double lambda, double porosity_left, double porosity_right,
                     const FluxSet& fluxes, std::vector<double>* faces_out = nullptr) {
  std::vector<double> local;
  std::vector<double>& faces = faces_out ? *faces_out : local;
  face_fluxes(state.cells, fluxes, faces);
  const std::size_t m = state.cells.size();
  const std::size_t n = m / 2;
  RunState next;
  next.cells.resize(m);
  next.step = state.step + 1;
  for (std::size_t k = 0; k < m; ++k) {
    const double ratio = lambda / (k < n ? porosity_left : porosity_right);
    const double v = state.cells[k] - ratio * (faces[k + 1] - faces[k]);
    if (!(v >= -kBoundsTolerance && v <= 1.0 + kBoundsTolerance))
      throw BoundsViolation("cell " + std::to_string(k) + " left [0,1]: " + std::to_string(v));
    next.cells[k] = v;
  }
  return next;
}

inline RunState step(const RunState& state, const SchemeConfig& config, const FluxSet& fluxes, double h) {
  RunState next = step(state, config.lambda, config.porosity_left, config.porosity_right, fluxes);
  next.time = state.time + config.lambda * h;
  return next;
}

namespace detail {

inline double partial_a(const NumericalFlux& f, double a, double b, double eps) {
  const double lo = std::max(0.0, a - eps);
  const double hi = std::min(1.0, a + eps);
  return (f(hi, b) - f(lo, b)) / (hi - lo);
}

inline double partial_b(const NumericalFlux& f, double a, double b, double eps) {
  const double lo = std::max(0.0, b - eps);
  const double hi = std::min(1.0, b + eps);
  return (f(a, hi) - f(a, lo)) / (hi - lo);
}

/// max over (s_prev, s, s_next) of dF_out/da(s, s_next) - dF_in/db(s_prev, s).
inline double cell_stability(const NumericalFlux& inflow, const NumericalFlux& outflow, int n_samples) {
  constexpr double eps = 1e-7;
  double best = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const double s = static_cast<double>(i) / (n_samples - 1);
    double out_max = -std::numeric_limits<double>::infinity();
    double in_max = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < n_samples; ++k) {
      const double o = static_cast<double>(k) / (n_samples - 1);
      out_max = std::max(out_max, partial_a(outflow, s, o, eps));
      in_max = std::max(in_max, -partial_b(inflow, o, s, eps));
    }
    best = std::max(best, out_max + in_max);
  }
  return best;
}

}  // namespace detail

/// Finite-difference estimate of the monotonicity constant M of the update:
/// the largest dF_{j+1/2}/da - dF_{j-1/2}/db over an n x n sample of states,
/// taken over interior cells and the two cells touching the interface,
/// divided by porosity and inflated by 10%.
inline double compute_cfl_constant(const FluxSet& fluxes, double porosity_left = 1.0, double porosity_right = 1.0,
                                   int n_samples = 101) {
  if (n_samples < 100) throw std::invalid_argument("compute_cfl_constant needs at least 100 samples per axis");
  const double left_interior = detail::cell_stability(fluxes.left, fluxes.left, n_samples) / porosity_left;
  const double left_of_interface = detail::cell_stability(fluxes.left, fluxes.interface, n_samples) / porosity_left;
  const double right_of_interface = detail::cell_stability(fluxes.interface, fluxes.right, n_samples) / porosity_right;
  const double right_interior = detail::cell_stability(fluxes.right, fluxes.right, n_samples) / porosity_right;
  return 1.1 * std::max({left_interior, left_of_interface, right_of_interface, right_interior, 0.0});
}

/// Stability constant used to gate a run: the finite-difference constant for
/// UM, the largest Lipschitz bound of the fluxes involved for ERS and AV.
inline double stability_constant(const FluxSet& fluxes, double porosity_left = 1.0, double porosity_right = 1.0) {
  if (fluxes.scheme == Scheme::um) return compute_cfl_constant(fluxes, porosity_left, porosity_right);
  const double phi = std::min(porosity_left, porosity_right);
  double m = std::max(fluxes.f_left().lipschitz(), fluxes.f_right().lipschitz());
  if (const AveragedFlux* tau = fluxes.interface.averaged()) m = std::max(m, lipschitz_bound(*tau));
  return m / phi;
}

namespace detail {

inline double mass(const std::vector<double>& cells, double h, double phi_l, double phi_r) {
  const std::size_t n = cells.size() / 2;
  double left = 0.0, right = 0.0;
  for (std::size_t k = 0; k < n; ++k) left += cells[k];
  for (std::size_t k = n; k < cells.size(); ++k) right += cells[k];
  return h * (phi_l * left + phi_r * right);
}

}  // namespace detail

/// Drives the scheme from projected initial data to t_end. Uniform steps of
/// dt = lambda h; a snapshot time that falls between steps is reached by one
/// shortened step branched off the trajectory, except at t_end where the
/// shortened step ends the trajectory.
inline RunResult run(const SchemeConfig& config, const Grid& grid, const FluxFunction& left,
                     const FluxFunction& right, const InitialData& s0, const StepObserver& observer = {}) {
  if (!(config.lambda > 0.0)) throw InvalidData("lambda must be > 0");
  if (!(config.t_end >= 0.0)) throw InvalidData("t_end must be >= 0");
  if (!(config.porosity_left > 0.0) || !(config.porosity_right > 0.0)) throw InvalidData("porosity must be > 0");

  const FluxSet fluxes = make_flux_set(config.scheme, left, right);
  const double m = stability_constant(fluxes, config.porosity_left, config.porosity_right);
  if (config.lambda * m > 1.0) throw CflViolation(to_string(config.scheme), config.lambda, m);

  std::vector<double> times = config.snapshot_times;
  for (double t : times)
    if (!(t >= 0.0 && t <= config.t_end)) throw InvalidData("snapshot time outside [0, t_end]");
  times.push_back(config.t_end);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
              times.end());

  RunResult result{grid, config, m, project_initial_data(s0, grid), {}, {}, false};
  RunState state = result.initial;
  const double h = grid.h();
  const double dt = config.lambda * h;
  const double phi_l = config.porosity_left;
  const double phi_r = config.porosity_right;
  std::vector<double> faces;

  // Advances the trajectory by one logged step landing exactly on `new_time`.
  auto advance = [&](double lam, double new_time) {
    RunState next = step(state, lam, phi_l, phi_r, fluxes, &faces);
    next.time = new_time;
    const double step_dt = new_time - state.time;
    StepRecord rec;
    rec.step = next.step;
    rec.time = next.time;
    rec.dt = step_dt;
    double l1 = 0.0;
    for (std::size_t k = 0; k < next.cells.size(); ++k) l1 += std::abs(next.cells[k] - state.cells[k]);
    rec.l1_increment = l1;
    const auto [mn, mx] = std::minmax_element(next.cells.begin(), next.cells.end());
    rec.min = *mn;
    rec.max = *mx;
    rec.s_left = next.left_trace();
    rec.s_right = next.right_trace();
    rec.interface_flux = faces[grid.size() / 2];
    rec.inflow_flux = faces.front();
    rec.outflow_flux = faces.back();
    rec.mass_before = detail::mass(state.cells, h, phi_l, phi_r);
    rec.mass_after = detail::mass(next.cells, h, phi_l, phi_r);
    result.diagnostics_log.push_back(rec);
    if (observer) observer(state, next, rec);
    state = std::move(next);
  };

  for (std::size_t i = 0; i < times.size(); ++i) {
    const double target = times[i];
    const bool last = i + 1 == times.size();
    const auto target_steps = static_cast<std::size_t>(std::floor(target / dt + 1e-9));
    while (state.step < target_steps) advance(config.lambda, static_cast<double>(state.step + 1) * dt);
    const double remainder = target - static_cast<double>(state.step) * dt;
    if (remainder > 1e-12 * std::max(1.0, target)) {
      const double lam = remainder / h;
      if (last) {
        advance(lam, target);
      } else {
        RunState branch = step(state, lam, phi_l, phi_r, fluxes);
        result.snapshots.push_back({target, std::move(branch.cells)});
        continue;
      }
    }
    result.snapshots.push_back({target, state.cells});
  }

  const auto& first = result.initial.cells;
  const auto& final_cells = result.snapshots.back().cells;
  result.boundary_disturbed =
      std::abs(first.front() - final_cells.front()) > 1e-8 || std::abs(first.back() - final_cells.back()) > 1e-8;
  return result;
}

}  // namespace heteroflux
