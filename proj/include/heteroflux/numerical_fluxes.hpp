#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "heteroflux/errors.hpp"
#include "heteroflux/flux_models.hpp"

namespace heteroflux {

enum class Scheme { ers, um, av };
enum class Side { interior_left, interior_right, interface };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::ers:
      return "ers";
    case Scheme::um:
      return "um";
    case Scheme::av:
      return "av";
  }
  return "?";
}

inline std::optional<Scheme> parse_scheme(std::string_view name) {
  if (name == "ers" || name == "ERS") return Scheme::ers;
  if (name == "um" || name == "UM") return Scheme::um;
  if (name == "av" || name == "AV") return Scheme::av;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Godunov fluxes

/// Godunov flux from its definition: min of f over [a,b] when a < b, max over
/// [b,a] otherwise. Brute force on 2001 samples plus the endpoints (and theta
/// when the flux exposes one). Slow; kept as a reference.
template <ScalarFlux F>
double godunov_general(const F& f, double a, double b) {
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  const bool take_min = a < b;
  double best = f(lo);
  auto visit = [&](double s) {
    const double v = f(s);
    best = take_min ? std::min(best, v) : std::max(best, v);
  };
  visit(hi);
  constexpr int n = 2001;
  for (int i = 1; i < n - 1; ++i) visit(lo + (hi - lo) * static_cast<double>(i) / (n - 1));
  if constexpr (UnimodalFlux<F>) {
    const double t = f.theta();
    if (t > lo && t < hi) visit(t);
  }
  return best;
}

/// O(1) Godunov flux of a unimodal f: min{ f(min(a, theta)), f(max(theta, b)) }.
template <UnimodalFlux F>
double godunov_unimodal(const F& f, double a, double b) {
  const double t = f.theta();
  return std::min(f(std::min(a, t)), f(std::max(t, b)));
}

/// Godunov flux at the rock interface: min{ fL(min(a, thetaL)), fR(max(thetaR, b)) }.
inline double godunov_interface(const FluxFunction& left, const FluxFunction& right, double a, double b) {
  return std::min(left(std::min(a, left.theta())), right(std::max(right.theta(), b)));
}

// ---------------------------------------------------------------------------
// Upstream mobility

enum class Upstream { left, right };

/// Which side each phase mobility is taken from, and the two sign indicators
/// that decide it.
struct UmCaseTrace {
  double theta1 = 0.0;
  double theta2 = 0.0;
  int case_index = 1;
  Upstream lambda1_side = Upstream::left;
  Upstream lambda2_side = Upstream::left;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

/// Explicit resolution of the implicit upstream choice. `left` supplies the
/// mobilities evaluated at `a`, `right` those at `b`. For an interior flux pass
/// the same flux twice. g1 == g2 is handled by the g1 <= g2 branch.
inline UmCaseTrace um_resolve_case(const FluxFunction& left, const FluxFunction& right, double a, double b) {
  const FluidParams& fl = left.fluid();
  const double q = fl.q;
  const double dg = fl.g1 - fl.g2;
  UmCaseTrace t;
  if (fl.g1 <= fl.g2) {
    t.theta1 = q + dg * left.lambda2(a);
    t.theta2 = q - dg * right.lambda1(b);
    if (t.theta1 >= 0.0) {
      t.case_index = 1;
      t.lambda1_side = Upstream::left;
      t.lambda2_side = Upstream::left;
    } else if (t.theta2 <= 0.0) {
      t.case_index = 3;
      t.lambda1_side = Upstream::right;
      t.lambda2_side = Upstream::right;
    } else {
      t.case_index = 2;
      t.lambda1_side = Upstream::right;
      t.lambda2_side = Upstream::left;
    }
  } else {
    t.theta1 = q + dg * right.lambda2(b);
    t.theta2 = q - dg * left.lambda1(a);
    if (t.theta2 >= 0.0) {
      t.case_index = 1;
      t.lambda1_side = Upstream::left;
      t.lambda2_side = Upstream::left;
    } else if (t.theta1 <= 0.0) {
      t.case_index = 3;
      t.lambda1_side = Upstream::right;
      t.lambda2_side = Upstream::right;
    } else {
      t.case_index = 2;
      t.lambda1_side = Upstream::left;
      t.lambda2_side = Upstream::right;
    }
  }
  t.lambda1 = t.lambda1_side == Upstream::left ? left.lambda1(a) : right.lambda1(b);
  t.lambda2 = t.lambda2_side == Upstream::left ? left.lambda2(a) : right.lambda2(b);
  return t;
}

inline double um_flux(const FluxFunction& left, const FluxFunction& right, double a, double b) {
  const UmCaseTrace t = um_resolve_case(left, right, a, b);
  return fractional_flux(t.lambda1, t.lambda2, left.fluid());
}

// ---------------------------------------------------------------------------
// Averaged interface flux

inline double av_flux(const AveragedFlux& tau, double a, double b) {
  return tau.unimodal() ? godunov_unimodal(tau, a, b) : godunov_general(tau, a, b);
}

inline double av_flux(const FluxFunction& left, const FluxFunction& right, double a, double b) {
  return av_flux(AveragedFlux(left, right), a, b);
}

// ---------------------------------------------------------------------------

/// Two-point flux F(a, b) of a given scheme on one side of the interface.
class NumericalFlux {
 public:
  /// For interior sides only the matching flux is used (`left` for
  /// interior_left, `right` for interior_right).
  NumericalFlux(Scheme scheme, Side side, std::shared_ptr<const FluxFunction> left,
                std::shared_ptr<const FluxFunction> right)
      : scheme_(scheme), side_(side) {
    if (!left || !right) throw InvalidModel("numerical flux needs both flux functions");
    if (!(left->fluid() == right->fluid()))
      throw InvalidModel("both rock types must share the fluid parameters g1, g2, q");
    switch (side) {
      case Side::interior_left:
        left_ = right_ = left;
        break;
      case Side::interior_right:
        left_ = right_ = right;
        break;
      case Side::interface:
        left_ = std::move(left);
        right_ = std::move(right);
        if (scheme == Scheme::av) tau_ = std::make_shared<const AveragedFlux>(*left_, *right_);
        break;
    }
  }

  double operator()(double a, double b) const {
    switch (scheme_) {
      case Scheme::ers:
        if (side_ == Side::interface) return godunov_interface(*left_, *right_, a, b);
        return godunov_unimodal(*left_, a, b);
      case Scheme::um:
        return um_flux(*left_, *right_, a, b);
      case Scheme::av:
        if (side_ == Side::interface) return av_flux(*tau_, a, b);
        return godunov_unimodal(*left_, a, b);
    }
    return 0.0;
  }

  Scheme scheme() const { return scheme_; }
  Side side() const { return side_; }
  const FluxFunction& left() const { return *left_; }
  const FluxFunction& right() const { return *right_; }
  const AveragedFlux* averaged() const { return tau_.get(); }

 private:
  Scheme scheme_;
  Side side_;
  std::shared_ptr<const FluxFunction> left_;
  std::shared_ptr<const FluxFunction> right_;
  std::shared_ptr<const AveragedFlux> tau_;
};

/// The three fluxes a scheme needs: left interior, interface, right interior.
struct FluxSet {
  Scheme scheme;
  NumericalFlux left;
  NumericalFlux interface;
  NumericalFlux right;

  const FluxFunction& f_left() const { return left.left(); }
  const FluxFunction& f_right() const { return right.right(); }
};

inline FluxSet make_flux_set(Scheme scheme, const FluxFunction& left, const FluxFunction& right) {
  auto l = std::make_shared<const FluxFunction>(left);
  auto r = std::make_shared<const FluxFunction>(right);
  return FluxSet{scheme, NumericalFlux(scheme, Side::interior_left, l, r), NumericalFlux(scheme, Side::interface, l, r),
                 NumericalFlux(scheme, Side::interior_right, l, r)};
}

}  // namespace heteroflux
