#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "heteroflux/errors.hpp"

namespace heteroflux {

/// Relative mobility k(S) of one phase as a function of saturation on [0,1].
///
/// Three shapes are supported:
///  - power:            c * S^p            (increasing orientation)
///                      c * (1 - S)^p      (decreasing orientation)
///  - piecewise_linear: linear interpolation between (S_i, v_i) nodes spanning [0,1]
///  - piecewise_poly:   one polynomial in S per interval [b_i, b_{i+1}], coefficients
///                      in ascending powers of S (not of S - b_i)
///
/// Curves are validated on construction: nonnegative on a dense sample and
/// continuous at every breakpoint.
class MobilityCurve {
 public:
  enum class Kind { power, piecewise_linear, piecewise_poly };
  enum class Orientation { increasing, decreasing };

  static MobilityCurve power(double c, double p, Orientation orientation = Orientation::increasing) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidModel("power curve: coefficient must be finite and >= 0");
    if (!(p >= 1.0) || !std::isfinite(p)) throw InvalidModel("power curve: exponent must be >= 1 (Lipschitz on [0,1])");
    MobilityCurve m;
    m.kind_ = Kind::power;
    m.orientation_ = orientation;
    m.coefficients_ = {c, p};
    m.breakpoints_ = {0.0, 1.0};
    m.validate();
    return m;
  }

  static MobilityCurve power_decreasing(double c, double p) { return power(c, p, Orientation::decreasing); }

  static MobilityCurve piecewise_linear(std::vector<std::pair<double, double>> nodes) {
    if (nodes.size() < 2) throw InvalidModel("piecewise_linear curve needs at least two nodes");
    if (nodes.front().first != 0.0 || nodes.back().first != 1.0)
      throw InvalidModel("piecewise_linear nodes must start at S=0 and end at S=1");
    MobilityCurve m;
    m.kind_ = Kind::piecewise_linear;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (i > 0 && !(nodes[i].first > nodes[i - 1].first))
        throw InvalidModel("piecewise_linear nodes must be strictly increasing in S");
      m.breakpoints_.push_back(nodes[i].first);
      m.coefficients_.push_back(nodes[i].second);
    }
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
      m.slopes_.push_back((nodes[i + 1].second - nodes[i].second) / (nodes[i + 1].first - nodes[i].first));
    m.validate();
    return m;
  }

  /// `breakpoints` holds the full partition 0 = b_0 < ... < b_m = 1; `pieces` has m entries.
  static MobilityCurve piecewise_poly(std::vector<double> breakpoints, std::vector<std::vector<double>> pieces) {
    if (breakpoints.size() < 2 || breakpoints.front() != 0.0 || breakpoints.back() != 1.0)
      throw InvalidModel("piecewise_poly breakpoints must start at 0 and end at 1");
    if (pieces.size() + 1 != breakpoints.size())
      throw InvalidModel("piecewise_poly needs exactly one coefficient list per interval");
    for (std::size_t i = 1; i < breakpoints.size(); ++i)
      if (!(breakpoints[i] > breakpoints[i - 1])) throw InvalidModel("piecewise_poly breakpoints must increase");
    MobilityCurve m;
    m.kind_ = Kind::piecewise_poly;
    m.breakpoints_ = std::move(breakpoints);
    m.pieces_ = std::move(pieces);
    for (const auto& p : m.pieces_) {
      if (p.empty()) throw InvalidModel("piecewise_poly piece has no coefficients");
      m.coefficients_.insert(m.coefficients_.end(), p.begin(), p.end());
    }
    m.validate();
    return m;
  }

  /// Single polynomial on [0,1], ascending coefficients.
  static MobilityCurve polynomial(std::vector<double> coefficients) {
    return piecewise_poly({0.0, 1.0}, {std::move(coefficients)});
  }

  double operator()(double s) const {
    switch (kind_) {
      case Kind::power: {
        const double x = orientation_ == Orientation::increasing ? s : 1.0 - s;
        return coefficients_[0] * ipow(x, coefficients_[1]);
      }
      case Kind::piecewise_linear: {
        const std::size_t i = piece_index(s);
        return coefficients_[i] + slopes_[i] * (s - breakpoints_[i]);
      }
      case Kind::piecewise_poly:
        return horner(pieces_[piece_index(s)], s);
    }
    return 0.0;
  }

  /// Derivative in S. At a kink the right-hand derivative is returned (left-hand at S=1).
  double derivative(double s) const {
    switch (kind_) {
      case Kind::power: {
        const double c = coefficients_[0];
        const double p = coefficients_[1];
        if (orientation_ == Orientation::increasing) return c * p * ipow(s, p - 1.0);
        return -c * p * ipow(1.0 - s, p - 1.0);
      }
      case Kind::piecewise_linear:
        return slopes_[piece_index(s)];
      case Kind::piecewise_poly: {
        const auto& c = pieces_[piece_index(s)];
        double d = 0.0;
        for (std::size_t k = c.size(); k-- > 1;) d = d * s + static_cast<double>(k) * c[k];
        return d;
      }
    }
    return 0.0;
  }

  Kind kind() const { return kind_; }
  Orientation orientation() const { return orientation_; }
  std::span<const double> coefficients() const { return coefficients_; }
  std::span<const double> breakpoints() const { return breakpoints_; }

  /// Interior breakpoints where the derivative may jump.
  std::vector<double> kinks() const {
    if (breakpoints_.size() <= 2) return {};
    return {breakpoints_.begin() + 1, breakpoints_.end() - 1};
  }

  /// Returns a copy scaled by `factor` (used for K * k).
  MobilityCurve scaled(double factor) const {
    MobilityCurve m = *this;
    switch (kind_) {
      case Kind::power:
        m.coefficients_[0] *= factor;
        break;
      case Kind::piecewise_linear:
        for (auto& v : m.coefficients_) v *= factor;
        for (auto& v : m.slopes_) v *= factor;
        break;
      case Kind::piecewise_poly:
        for (auto& p : m.pieces_)
          for (auto& v : p) v *= factor;
        for (auto& v : m.coefficients_) v *= factor;
        break;
    }
    return m;
  }

 private:
  MobilityCurve() = default;

  static double ipow(double x, double p) {
    if (p == 0.0) return 1.0;
    if (p == 1.0) return x;
    if (p == 2.0) return x * x;
    if (p == 3.0) return x * x * x;
    return std::pow(x, p);
  }

  static double horner(const std::vector<double>& c, double s) {
    double v = 0.0;
    for (std::size_t k = c.size(); k-- > 0;) v = v * s + c[k];
    return v;
  }

  std::size_t piece_index(double s) const {
    // Right-continuous pieces; S=1 belongs to the last piece.
    const std::size_t m = breakpoints_.size() - 1;
    if (m == 1) return 0;
    auto it = std::upper_bound(breakpoints_.begin() + 1, breakpoints_.end() - 1, s);
    return static_cast<std::size_t>(it - (breakpoints_.begin() + 1));
  }

  void validate() const {
    constexpr int kSamples = 2001;
    for (int i = 0; i < kSamples; ++i) {
      const double s = static_cast<double>(i) / (kSamples - 1);
      const double v = (*this)(s);
      if (!std::isfinite(v)) throw InvalidModel("mobility curve is not finite at S=" + std::to_string(s));
      if (v < -1e-14) throw InvalidModel("mobility curve is negative at S=" + std::to_string(s));
    }
    if (kind_ == Kind::piecewise_poly) {
      for (std::size_t i = 1; i + 1 < breakpoints_.size(); ++i) {
        const double b = breakpoints_[i];
        const double left = horner(pieces_[i - 1], b);
        const double right = horner(pieces_[i], b);
        if (std::abs(left - right) > 1e-12)
          throw InvalidModel("piecewise_poly curve is discontinuous at S=" + std::to_string(b));
      }
    }
  }

  Kind kind_ = Kind::power;
  Orientation orientation_ = Orientation::increasing;
  std::vector<double> coefficients_;
  std::vector<double> breakpoints_;
  std::vector<double> slopes_;
  std::vector<std::vector<double>> pieces_;
};

}  // namespace heteroflux
