#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <stdexcept>
#include <span>
#include <vector>

#include "heteroflux/flux_models.hpp"
#include "heteroflux/numerical_fluxes.hpp"
#include "heteroflux/solver.hpp"

namespace heteroflux {

// ---------------------------------------------------------------------------
// Singular mapping psi(s) = int_alpha^s |f'(xi)| dxi

struct SingularMapping {
  std::shared_ptr<const FluxFunction> f;
  double alpha = 0.0;

  SingularMapping(const FluxFunction& flux, double centre)
      : f(std::make_shared<const FluxFunction>(flux)), alpha(centre) {}
};

namespace detail {

template <class G>
double simpson_step(const G& g, double a, double b, double fa, double fm, double fb, double whole, double tol,
                    int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = g(lm);
  const double frm = g(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

/// Adaptive Simpson on [a,b] (a <= b).
template <class G>
double adaptive_simpson(const G& g, double a, double b, double tol) {
  if (b <= a) return 0.0;
  const double fa = g(a), fb = g(b), fm = g(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(g, a, b, fa, fm, fb, whole, tol, 40);
}

}  // namespace detail

/// Signed integral of |f'| from s1 to s2, split at theta and at mobility kinks
/// so that every sub-interval has a smooth integrand.
inline double singular_map_difference(const SingularMapping& psi, double s1, double s2) {
  if (s1 == s2) return 0.0;
  const double sign = s2 > s1 ? 1.0 : -1.0;
  const double lo = std::min(s1, s2);
  const double hi = std::max(s1, s2);
  const FluxFunction& f = *psi.f;
  auto g = [&f](double s) { return std::abs(f.derivative(s)); };
  std::vector<double> cuts{lo};
  for (double b : f.breakpoints())
    if (b > lo && b < hi) cuts.push_back(b);
  cuts.push_back(hi);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    // Evaluate kinked integrands strictly inside each piece.
    const double a = cuts[i];
    const double b = cuts[i + 1];
    const double shrink = 1e-15 * std::max(1.0, std::abs(b));
    total += detail::adaptive_simpson(g, a + shrink, b - shrink, 1e-13);
  }
  return sign * total;
}

inline double singular_map_apply(const SingularMapping& psi, double s) {
  return singular_map_difference(psi, psi.alpha, s);
}

struct TvReport {
  double z = 0.0;  ///< variation of the left transform (frozen right of cell -1)
  double w = 0.0;  ///< variation of the right transform (frozen left of cell 1)
  double max() const { return std::max(z, w); }
};

/// Total variation of z_j = psi_left(S_j) (j <= -1, constant beyond) and
/// w_j = psi_right(S_j) (j >= 1, constant before).
inline TvReport tv_of_transform(const RunState& state, const SingularMapping& psi_left,
                                const SingularMapping& psi_right) {
  const auto& c = state.cells;
  const std::size_t n = c.size() / 2;
  TvReport r;
  for (std::size_t k = 0; k + 1 < n; ++k) r.z += std::abs(singular_map_difference(psi_left, c[k], c[k + 1]));
  for (std::size_t k = n; k + 1 < c.size(); ++k) r.w += std::abs(singular_map_difference(psi_right, c[k], c[k + 1]));
  return r;
}

/// Discrete flux-variation estimator N_h: sum over all cells of
/// |F_{j+1/2} - F_{j-1/2}|, with the interface flux between cells -1 and 1.
inline double flux_variation_estimator(const RunState& state, const FluxSet& fluxes) {
  const auto faces = face_fluxes(state.cells, fluxes);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < faces.size(); ++k) total += std::abs(faces[k + 1] - faces[k]);
  return total;
}

// ---------------------------------------------------------------------------
// Interior entropy (Crandall-Majda) residuals

inline constexpr double kEntropyTolerance = 1e-10;

struct EntropyResidualReport {
  double max_interior_residual = 0.0;
  std::size_t cells_violating = 0;
  std::vector<double> kruzkhov_constants_tested;
};

/// residual_j = |S_j^{n+1} - c| - |S_j^n - c| + (lambda/phi_j)(Q_{j+1/2} - Q_{j-1/2}),
/// Q(a,b;c) = F(max(a,c), max(b,c)) - F(min(a,c), min(b,c)). Cells -1 and 1 are
/// skipped: their interface face is not consistent.
inline EntropyResidualReport interior_entropy_residual(const RunState& before, const RunState& after, double lambda,
                                                       double porosity_left, double porosity_right,
                                                       const FluxSet& fluxes, std::span<const double> constants) {
  EntropyResidualReport rep;
  rep.kruzkhov_constants_tested.assign(constants.begin(), constants.end());
  rep.max_interior_residual = -std::numeric_limits<double>::infinity();
  const auto& u = before.cells;
  const auto& v = after.cells;
  const std::size_t m = u.size();
  const std::size_t n = m / 2;
  auto face_flux = [&](std::size_t face, double a, double b) {
    if (face <= n - 1 || face == 0) return fluxes.left(a, b);
    if (face == n) return fluxes.interface(a, b);
    return fluxes.right(a, b);
  };
  std::vector<double> q(m + 1);
  for (double c : constants) {
    for (std::size_t face = 0; face <= m; ++face) {
      const double a = face == 0 ? u[0] : u[face - 1];
      const double b = face == m ? u[m - 1] : u[face];
      q[face] = face_flux(face, std::max(a, c), std::max(b, c)) - face_flux(face, std::min(a, c), std::min(b, c));
    }
    for (std::size_t k = 0; k < m; ++k) {
      if (k == n - 1 || k == n) continue;
      const double ratio = lambda / (k < n ? porosity_left : porosity_right);
      const double r = std::abs(v[k] - c) - std::abs(u[k] - c) + ratio * (q[k + 1] - q[k]);
      rep.max_interior_residual = std::max(rep.max_interior_residual, r);
      if (r > kEntropyTolerance) ++rep.cells_violating;
    }
  }
  if (constants.empty()) rep.max_interior_residual = 0.0;
  return rep;
}

inline EntropyResidualReport interior_entropy_residual(const RunState& before, const RunState& after,
                                                       const SchemeConfig& config, const FluxSet& fluxes, double c) {
  const double cs[] = {c};
  return interior_entropy_residual(before, after, config.lambda, config.porosity_left, config.porosity_right, fluxes,
                                   cs);
}

/// c = 0.05, 0.10, ..., 0.95.
inline std::vector<double> default_kruzkhov_constants() {
  std::vector<double> cs;
  for (int i = 1; i <= 19; ++i) cs.push_back(0.05 * i);
  return cs;
}

// ---------------------------------------------------------------------------
// Interface classification

/// Traces within this distance of the maximizers are treated as sonic: a cell
/// average cannot resolve which side of theta the limit trace lies on.
inline constexpr double kSonicTolerance = 0.02;
inline constexpr double kCornerTolerance = 1e-6;

enum class InterfaceClass { compressive, undercompressive, boundary_case };

inline const char* to_string(InterfaceClass c) {
  switch (c) {
    case InterfaceClass::compressive:
      return "compressive";
    case InterfaceClass::undercompressive:
      return "undercompressive";
    case InterfaceClass::boundary_case:
      return "boundary_case";
  }
  return "?";
}

struct InterfaceRecord {
  double time = 0.0;
  double s_left = 0.0;
  double s_right = 0.0;
  double flux_value = 0.0;
  InterfaceClass classification = InterfaceClass::compressive;
};

/// Undercompressive iff s_left lies in (theta_left, 1] and s_right in
/// [0, theta_right), each by more than `sonic_tol`; both traces near 0 or near
/// 1 is the allowed boundary case.
inline InterfaceClass classify_traces(double s_left, double s_right, double theta_left, double theta_right,
                                      double sonic_tol = kSonicTolerance) {
  const bool both_zero = std::abs(s_left) <= kCornerTolerance && std::abs(s_right) <= kCornerTolerance;
  const bool both_one = std::abs(s_left - 1.0) <= kCornerTolerance && std::abs(s_right - 1.0) <= kCornerTolerance;
  if (both_zero || both_one) return InterfaceClass::boundary_case;
  const bool left_in = s_left > theta_left + sonic_tol && s_left <= 1.0 + kBoundsTolerance;
  const bool right_in = s_right < theta_right - sonic_tol && s_right >= -kBoundsTolerance;
  return left_in && right_in ? InterfaceClass::undercompressive : InterfaceClass::compressive;
}

inline InterfaceRecord classify_interface(const RunState& state, double theta_left, double theta_right,
                                          double sonic_tol = kSonicTolerance) {
  InterfaceRecord r;
  r.time = state.time;
  r.s_left = state.left_trace();
  r.s_right = state.right_trace();
  r.flux_value = std::numeric_limits<double>::quiet_NaN();
  r.classification = classify_traces(r.s_left, r.s_right, theta_left, theta_right, sonic_tol);
  return r;
}

/// Same as above, also recording the interface numerical flux.
inline InterfaceRecord classify_interface(const RunState& state, const FluxSet& fluxes,
                                          double sonic_tol = kSonicTolerance) {
  InterfaceRecord r = classify_interface(state, fluxes.f_left().theta(), fluxes.f_right().theta(), sonic_tol);
  r.flux_value = fluxes.interface(r.s_left, r.s_right);
  return r;
}

inline double rankine_hugoniot_residual(const InterfaceRecord& record, const FluxFunction& left,
                                        const FluxFunction& right) {
  return std::abs(left(record.s_left) - right(record.s_right));
}

// ---------------------------------------------------------------------------
// Traces and boundary layers

inline constexpr double kPlateauDeviation = 0.01;

struct BoundaryLayer {
  double plateau = 0.0;  ///< value k cells away from the interface
  double height = 0.0;   ///< |trace - plateau|
  int width = 0;         ///< contiguous cells from the interface deviating > 0.01 from the plateau
};

struct TraceReport {
  double s_left = 0.0;
  double s_right = 0.0;
  BoundaryLayer left;
  BoundaryLayer right;
  int plateau_offset = 0;    ///< k = max(3, 0.05 / h)
  double trace_drift = 0.0;  ///< max change of either trace across the inspected snapshots
};

inline int plateau_offset(double h) { return std::max(3, static_cast<int>(std::lround(0.05 / h))); }

inline TraceReport extract_traces(std::span<const double> cells, double h) {
  const std::size_t n = cells.size() / 2;
  TraceReport r;
  r.plateau_offset = std::min<int>(plateau_offset(h), static_cast<int>(n) - 1);
  const auto k = static_cast<std::size_t>(r.plateau_offset);
  r.s_left = cells[n - 1];
  r.s_right = cells[n];
  r.left.plateau = cells[n - 1 - k];
  r.right.plateau = cells[n + k];
  r.left.height = std::abs(r.s_left - r.left.plateau);
  r.right.height = std::abs(r.s_right - r.right.plateau);
  for (std::size_t i = 0; i < k && std::abs(cells[n - 1 - i] - r.left.plateau) > kPlateauDeviation; ++i)
    ++r.left.width;
  for (std::size_t i = 0; i < k && std::abs(cells[n + i] - r.right.plateau) > kPlateauDeviation; ++i)
    ++r.right.width;
  return r;
}

/// Traces from the final snapshot; `window` final snapshots are scanned for drift.
inline TraceReport extract_traces(const RunResult& result, std::size_t window = 1) {
  if (result.snapshots.empty() || window < 1) throw std::invalid_argument("extract_traces: no snapshots");
  TraceReport r = extract_traces(result.snapshots.back().cells, result.grid.h());
  const std::size_t count = std::min(window, result.snapshots.size());
  const std::size_t n = result.grid.size() / 2;
  for (std::size_t i = result.snapshots.size() - count; i < result.snapshots.size(); ++i) {
    const auto& c = result.snapshots[i].cells;
    r.trace_drift = std::max({r.trace_drift, std::abs(c[n - 1] - r.s_left), std::abs(c[n] - r.s_right)});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Step-log invariants

/// Largest growth of the per-step L1 increment between consecutive steps of equal dt.
inline double l1_contraction_excess(std::span<const StepRecord> log) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < log.size(); ++i) {
    if (std::abs(log[i].dt - log[i - 1].dt) > 1e-14 * log[i].dt) continue;
    worst = std::max(worst, log[i].l1_increment - log[i - 1].l1_increment);
  }
  return worst;
}

/// Largest |mass change - dt (inflow - outflow)| over all steps.
inline double conservation_defect(std::span<const StepRecord> log) {
  double worst = 0.0;
  for (const auto& r : log)
    worst = std::max(worst, std::abs(r.mass_after - r.mass_before - r.dt * (r.inflow_flux - r.outflow_flux)));
  return worst;
}

/// h * sum_j |S_j - T_j|.
inline double l1_state_distance(std::span<const double> a, std::span<const double> b, double h) {
  double total = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) total += std::abs(a[k] - b[k]);
  return h * total;
}

}  // namespace heteroflux
