#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <string>
#include <vector>

#include "heteroflux/errors.hpp"
#include "heteroflux/mobility.hpp"

namespace heteroflux {

inline constexpr double kDegenerateMobility = 1e-14;
inline constexpr double kEndpointTolerance = 1e-12;

/// One rock type. Stored curves are the relative mobilities k_l; the absolute
/// permeability is applied on evaluation, lambda_l = K * k_l.
class RockModel {
 public:
  RockModel(double porosity, double permeability, MobilityCurve k1, MobilityCurve k2)
      : porosity_(porosity), permeability_(permeability), k1_(std::move(k1)), k2_(std::move(k2)) {
    if (!(porosity_ > 0.0) || !std::isfinite(porosity_)) throw InvalidModel("rock porosity must be > 0");
    if (!(permeability_ > 0.0) || !std::isfinite(permeability_)) throw InvalidModel("rock permeability must be > 0");
    if (std::abs(k1_(0.0)) > kEndpointTolerance) throw InvalidModel("phase-1 mobility must vanish at S=0");
    if (std::abs(k2_(1.0)) > kEndpointTolerance) throw InvalidModel("phase-2 mobility must vanish at S=1");
    constexpr int kSamples = 2001;
    for (int i = 1; i < kSamples; ++i) {
      const double a = static_cast<double>(i - 1) / (kSamples - 1);
      const double b = static_cast<double>(i) / (kSamples - 1);
      if (k1_(b) < k1_(a) - 1e-12) throw InvalidModel("phase-1 mobility must be nondecreasing in S");
      if (k2_(b) > k2_(a) + 1e-12) throw InvalidModel("phase-2 mobility must be nonincreasing in S");
    }
  }

  double porosity() const { return porosity_; }
  double permeability() const { return permeability_; }
  const MobilityCurve& k1() const { return k1_; }
  const MobilityCurve& k2() const { return k2_; }

  double lambda1(double s) const { return permeability_ * k1_(s); }
  double lambda2(double s) const { return permeability_ * k2_(s); }
  double dlambda1(double s) const { return permeability_ * k1_.derivative(s); }
  double dlambda2(double s) const { return permeability_ * k2_.derivative(s); }

  std::vector<double> kinks() const {
    auto a = k1_.kinks();
    auto b = k2_.kinks();
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    return a;
  }

 private:
  double porosity_;
  double permeability_;
  MobilityCurve k1_;
  MobilityCurve k2_;
};

/// Gravity constants g_l of the two phases and the total Darcy velocity q.
struct FluidParams {
  double g1 = 0.0;
  double g2 = 0.0;
  double q = 0.0;

  bool operator==(const FluidParams&) const = default;
};

/// Fractional flux of phase 1 from explicit mobilities:
///   lambda1 / (lambda1 + lambda2) * (q + (g1 - g2) * lambda2)
inline double fractional_flux(double lambda1, double lambda2, const FluidParams& fluid) {
  const double total = lambda1 + lambda2;
  if (total < kDegenerateMobility) throw DegenerateMobility("lambda1 + lambda2 vanishes");
  return lambda1 * (fluid.q + (fluid.g1 - fluid.g2) * lambda2) / total;
}

inline double eval_flux(const RockModel& rock, const FluidParams& fluid, double s) {
  return fractional_flux(rock.lambda1(s), rock.lambda2(s), fluid);
}

/// Anything that can be evaluated and differentiated on [0,1].
template <class F>
concept ScalarFlux = requires(const F& f, double s) {
  { f(s) } -> std::convertible_to<double>;
  { f.derivative(s) } -> std::convertible_to<double>;
};

/// A scalar flux with a cached maximizer on [0,1].
template <class F>
concept UnimodalFlux = ScalarFlux<F> && requires(const F& f) {
  { f.theta() } -> std::convertible_to<double>;
};

struct Argmax {
  double theta = 0.0;
  double fmax = 0.0;
};

namespace detail {

inline constexpr int kScanPoints = 2001;

inline double grid_point(int i, int n) { return static_cast<double>(i) / (n - 1); }

/// Number of strict interior local maxima of a sampled sequence, plateaus collapsed.
inline int count_local_maxima(const std::vector<double>& v) {
  const double scale = std::max(1.0, *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end()));
  const double tiny = 1e-13 * scale;
  int last_sign = 0;
  int maxima = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double d = v[i] - v[i - 1];
    const int sign = d > tiny ? 1 : (d < -tiny ? -1 : 0);
    if (sign == 0) continue;
    if (last_sign == 1 && sign == -1) ++maxima;
    last_sign = sign;
  }
  return maxima;
}

}  // namespace detail

/// Maximizer of a unimodal flux on [0,1]. Coarse scan on 2001 points, then
/// golden-section refinement, polished by bisection on the sign of f'.
template <ScalarFlux F>
Argmax find_argmax(const F& f) {
  const int n = detail::kScanPoints;
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = f(detail::grid_point(i, n));
  if (detail::count_local_maxima(v) > 1) throw NotUnimodal("flux has more than one interior local maximum");

  const int best = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  double lo = detail::grid_point(std::max(best - 1, 0), n);
  double hi = detail::grid_point(std::min(best + 1, n - 1), n);

  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > 1e-10) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  double theta = 0.5 * (a + b);

  // Near a smooth maximum f is flat to O(dx^2), so function comparisons stall
  // around 1e-8. The derivative sign pins the location to machine precision.
  if (f.derivative(lo) > 0.0 && f.derivative(hi) < 0.0) {
    double l = lo, r = hi;
    for (int it = 0; it < 200 && r - l > 1e-15; ++it) {
      const double m = 0.5 * (l + r);
      if (f.derivative(m) > 0.0)
        l = m;
      else
        r = m;
    }
    const double candidate = 0.5 * (l + r);
    if (f(candidate) >= f(theta) - 1e-15) theta = candidate;
  }
  // Endpoint maxima (monotone fluxes).
  double fmax = f(theta);
  for (double e : {0.0, 1.0}) {
    if (f(e) > fmax) {
      theta = e;
      fmax = f(e);
    }
  }
  return {theta, fmax};
}

/// Max sampled difference quotient of f on [0,1], inflated by 5%.
template <ScalarFlux F>
double lipschitz_bound(const F& f, int n_samples = 10000) {
  if (n_samples < 1000) throw std::invalid_argument("lipschitz_bound needs at least 1000 samples");
  double best = 0.0;
  double prev = f(0.0);
  const double ds = 1.0 / n_samples;
  for (int i = 1; i <= n_samples; ++i) {
    const double cur = f(static_cast<double>(i) / n_samples);
    best = std::max(best, std::abs(cur - prev) / ds);
    prev = cur;
  }
  return 1.05 * best;
}

/// Flux function f(S) of one rock type together with its cached maximizer
/// theta, the maximum value and a Lipschitz bound. Construction checks that
/// f(0) = 0, f(1) = q and that f is unimodal.
class FluxFunction {
 public:
  FluxFunction(RockModel rock, FluidParams fluid) : rock_(std::move(rock)), fluid_(fluid) {
    if (!std::isfinite(fluid_.g1) || !std::isfinite(fluid_.g2) || !std::isfinite(fluid_.q))
      throw InvalidModel("fluid parameters must be finite");
    if (std::abs((*this)(0.0)) > kEndpointTolerance) throw InvalidModel("flux must vanish at S=0");
    if (std::abs((*this)(1.0) - fluid_.q) > kEndpointTolerance) throw InvalidModel("flux must equal q at S=1");
    const Argmax am = find_argmax(*this);
    theta_ = am.theta;
    fmax_ = am.fmax;
    lipschitz_ = lipschitz_bound(*this);
  }

  double operator()(double s) const { return fractional_flux(rock_.lambda1(s), rock_.lambda2(s), fluid_); }

  /// f' = (lambda1' lambda2 delta1 - lambda1 lambda2' delta2) / (lambda1 + lambda2)^2
  /// with delta1 = q + (g1 - g2) lambda2 and delta2 = q + (g2 - g1) lambda1.
  double derivative(double s) const {
    const double l1 = rock_.lambda1(s);
    const double l2 = rock_.lambda2(s);
    const double total = l1 + l2;
    if (total < kDegenerateMobility) throw DegenerateMobility("lambda1 + lambda2 vanishes");
    const double delta1 = fluid_.q + (fluid_.g1 - fluid_.g2) * l2;
    const double delta2 = fluid_.q + (fluid_.g2 - fluid_.g1) * l1;
    return (rock_.dlambda1(s) * l2 * delta1 - l1 * rock_.dlambda2(s) * delta2) / (total * total);
  }

  double lambda1(double s) const { return rock_.lambda1(s); }
  double lambda2(double s) const { return rock_.lambda2(s); }

  const RockModel& rock() const { return rock_; }
  const FluidParams& fluid() const { return fluid_; }
  double theta() const { return theta_; }
  double fmax() const { return fmax_; }
  double lipschitz() const { return lipschitz_; }
  double q() const { return fluid_.q; }

  /// Points where f' may be discontinuous, plus theta.
  std::vector<double> breakpoints() const {
    auto k = rock_.kinks();
    k.push_back(theta_);
    std::sort(k.begin(), k.end());
    return k;
  }

 private:
  RockModel rock_;
  FluidParams fluid_;
  double theta_ = 0.0;
  double fmax_ = 0.0;
  double lipschitz_ = 0.0;
};

/// tau(S) = (fL(S) + fR(S)) / 2. Unimodality is not guaranteed, so it is
/// recorded instead of enforced.
class AveragedFlux {
 public:
  AveragedFlux(FluxFunction left, FluxFunction right) : left_(std::move(left)), right_(std::move(right)) {
    try {
      const Argmax am = find_argmax(*this);
      theta_ = am.theta;
      fmax_ = am.fmax;
      unimodal_ = true;
    } catch (const NotUnimodal&) {
      unimodal_ = false;
      theta_ = 0.0;
      fmax_ = 0.0;
    }
  }

  double operator()(double s) const { return 0.5 * (left_(s) + right_(s)); }
  double derivative(double s) const { return 0.5 * (left_.derivative(s) + right_.derivative(s)); }

  double theta() const { return theta_; }
  double fmax() const { return fmax_; }
  bool unimodal() const { return unimodal_; }
  const FluxFunction& left() const { return left_; }
  const FluxFunction& right() const { return right_; }

 private:
  FluxFunction left_;
  FluxFunction right_;
  double theta_ = 0.0;
  double fmax_ = 0.0;
  bool unimodal_ = false;
};

enum class Compressivity { undercompressive, overcompressive, neutral };

inline const char* to_string(Compressivity c) {
  switch (c) {
    case Compressivity::undercompressive:
      return "undercompressive";
    case Compressivity::overcompressive:
      return "overcompressive";
    case Compressivity::neutral:
      return "neutral";
  }
  return "?";
}

struct Intersection {
  double s = 0.0;
  Compressivity tag = Compressivity::neutral;
};

/// Roots of fL - fR in (0,1), located by sign scan plus bisection.
inline std::vector<Intersection> intersection_points(const FluxFunction& left, const FluxFunction& right) {
  constexpr int n = 4001;
  auto diff = [&](double s) { return left(s) - right(s); };
  std::vector<double> roots;
  double prev_s = detail::grid_point(1, n);
  double prev_d = diff(prev_s);
  if (prev_d == 0.0) roots.push_back(prev_s);
  for (int i = 2; i < n - 1; ++i) {
    const double s = detail::grid_point(i, n);
    const double d = diff(s);
    if (d == 0.0) {
      roots.push_back(s);
    } else if (prev_d != 0.0 && (prev_d < 0.0) != (d < 0.0)) {
      double lo = prev_s, hi = s, dlo = prev_d;
      while (hi - lo > 1e-14) {
        const double m = 0.5 * (lo + hi);
        const double dm = diff(m);
        if (dm == 0.0) {
          lo = hi = m;
          break;
        }
        if ((dm < 0.0) == (dlo < 0.0)) {
          lo = m;
          dlo = dm;
        } else {
          hi = m;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    prev_s = s;
    prev_d = d;
  }

  std::vector<Intersection> out;
  for (double r : roots) {
    if (!out.empty() && std::abs(out.back().s - r) < 1e-8) continue;
    const double dl = left.derivative(r);
    const double dr = right.derivative(r);
    Compressivity tag = Compressivity::neutral;
    if (dr > 0.0 && dl < 0.0)
      tag = Compressivity::undercompressive;
    else if (dl > 0.0 && dr < 0.0)
      tag = Compressivity::overcompressive;
    out.push_back({r, tag});
  }
  return out;
}

}  // namespace heteroflux
