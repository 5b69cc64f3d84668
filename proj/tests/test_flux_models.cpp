#include <gtest/gtest.h>

#include <cmath>

#include "heteroflux/flux_models.hpp"
#include "heteroflux/reference.hpp"
#include "oracles.hpp"

using namespace heteroflux;

namespace {

const FluidParams kFluid{2.0, 1.0, 0.0};

RockModel linear_rock(double k = 1.0) {
  return RockModel(1.0, k, MobilityCurve::power(1.0, 1.0), MobilityCurve::power_decreasing(1.0, 1.0));
}

}  // namespace

TEST(MobilityCurve, PowerShapes) {
  const auto up = MobilityCurve::power(2.0, 2.0);
  const auto down = MobilityCurve::power_decreasing(3.0, 1.0);
  EXPECT_DOUBLE_EQ(up(0.5), 0.5);
  EXPECT_DOUBLE_EQ(up.derivative(0.5), 2.0);
  EXPECT_DOUBLE_EQ(down(0.25), 2.25);
  EXPECT_DOUBLE_EQ(down.derivative(0.25), -3.0);
  EXPECT_TRUE(up.kinks().empty());
}

TEST(MobilityCurve, PiecewiseLinearInterpolatesAndReportsKinks) {
  const auto c = MobilityCurve::piecewise_linear({{0.0, 0.0}, {0.25, 0.4375}, {1.0, 0.625}});
  EXPECT_DOUBLE_EQ(c(0.25), 0.4375);
  EXPECT_NEAR(c(0.5), oracle::exp3_left_l1(0.5), 1e-15);
  EXPECT_NEAR(c(0.1), 0.175, 1e-15);
  EXPECT_DOUBLE_EQ(c.derivative(0.1), 1.75);
  EXPECT_DOUBLE_EQ(c.derivative(0.5), 0.25);
  ASSERT_EQ(c.kinks().size(), 1u);
  EXPECT_DOUBLE_EQ(c.kinks()[0], 0.25);
}

TEST(MobilityCurve, PiecewisePolyUsesGlobalPowers) {
  const auto c = MobilityCurve::piecewise_poly({0.0, 0.5, 1.0}, {{0.0, 1.0}, {0.25, 0.0, 1.0}});
  EXPECT_DOUBLE_EQ(c(0.25), 0.25);
  EXPECT_DOUBLE_EQ(c(0.75), 0.75 * 0.75 + 0.25);
  EXPECT_DOUBLE_EQ(c.derivative(0.75), 1.5);
}

TEST(MobilityCurve, RejectsInvalidCurves) {
  EXPECT_THROW(MobilityCurve::power(-1.0, 1.0), InvalidModel);
  EXPECT_THROW(MobilityCurve::power(1.0, 0.5), InvalidModel);
  EXPECT_THROW(MobilityCurve::piecewise_linear({{0.0, 0.0}, {0.5, -0.1}, {1.0, 1.0}}), InvalidModel);
  EXPECT_THROW(MobilityCurve::piecewise_linear({{0.1, 0.0}, {1.0, 1.0}}), InvalidModel);
  EXPECT_THROW(MobilityCurve::piecewise_poly({0.0, 0.5, 1.0}, {{0.0, 1.0}, {0.0, 0.0, 1.0}}), InvalidModel);
  EXPECT_THROW(MobilityCurve::piecewise_poly({0.0, 1.0}, {}), InvalidModel);
}

TEST(RockModel, EnforcesEndpointAndMonotoneRoles) {
  EXPECT_THROW(RockModel(1.0, 1.0, MobilityCurve::polynomial({0.1, 1.0}), MobilityCurve::power_decreasing(1, 1)),
               InvalidModel);
  EXPECT_THROW(RockModel(1.0, 1.0, MobilityCurve::power(1, 1), MobilityCurve::polynomial({1.0})), InvalidModel);
  EXPECT_THROW(RockModel(1.0, 1.0, MobilityCurve::power_decreasing(1, 1), MobilityCurve::power(1, 1)), InvalidModel);
  EXPECT_THROW(RockModel(0.0, 1.0, MobilityCurve::power(1, 1), MobilityCurve::power_decreasing(1, 1)), InvalidModel);
  EXPECT_THROW(RockModel(1.0, -2.0, MobilityCurve::power(1, 1), MobilityCurve::power_decreasing(1, 1)), InvalidModel);
  const RockModel r = linear_rock(1.1);
  EXPECT_DOUBLE_EQ(r.lambda1(0.5), 0.55);
  EXPECT_DOUBLE_EQ(r.dlambda2(0.5), -1.1);
}

TEST(EvalFlux, Exp1LeftAtHalf) { EXPECT_DOUBLE_EQ(eval_flux(linear_rock(), kFluid, 0.5), 0.25); }

TEST(EvalFlux, EndpointsEqualZeroAndQ) {
  const FluidParams moving{2.0, 1.0, 0.7};
  for (int id = 1; id <= 5; ++id) {
    const auto spec = experiment(id);
    for (const RockModel* r : {&spec.left, &spec.right}) {
      EXPECT_NEAR(eval_flux(*r, moving, 0.0), 0.0, 1e-12);
      EXPECT_NEAR(eval_flux(*r, moving, 1.0), 0.7, 1e-12);
    }
  }
}

TEST(EvalFlux, DegenerateMobilityThrows) {
  EXPECT_THROW(fractional_flux(0.0, 0.0, kFluid), DegenerateMobility);
  const RockModel gap(1.0, 1.0, MobilityCurve::piecewise_linear({{0.0, 0.0}, {0.5, 0.0}, {1.0, 1.0}}),
                      MobilityCurve::piecewise_linear({{0.0, 1.0}, {0.5, 0.0}, {1.0, 0.0}}));
  EXPECT_THROW(eval_flux(gap, kFluid, 0.5), DegenerateMobility);
  EXPECT_THROW(FluxFunction(gap, kFluid), DegenerateMobility);
}

TEST(EvalFlux, InvariantUnderPermeabilityRescaling) {
  for (double c : {0.3, 2.0, 7.5}) {
    const RockModel base(1.0, 1.3, MobilityCurve::power(10.0, 2.0), MobilityCurve::power_decreasing(20.0, 2.0));
    const RockModel scaled(1.0, 1.3 / c, MobilityCurve::power(10.0, 2.0).scaled(c),
                           MobilityCurve::power_decreasing(20.0, 2.0).scaled(c));
    for (int i = 1; i < 100; ++i) {
      const double s = i / 100.0;
      EXPECT_NEAR(eval_flux(base, kFluid, s), eval_flux(scaled, kFluid, s), 1e-12);
    }
  }
}

TEST(EvalFlux, MatchesHandWrittenExperimentFluxes) {
  for (int id = 1; id <= 5; ++id) {
    const auto spec = experiment(id);
    const auto [fl, fr] = oracle::experiment_fluxes(id);
    const FluxFunction l = spec.flux_left(), r = spec.flux_right();
    for (int i = 0; i <= 200; ++i) {
      const double s = i / 200.0;
      EXPECT_NEAR(l(s), fl(s), 1e-13) << "exp " << id << " s=" << s;
      EXPECT_NEAR(r(s), fr(s), 1e-13) << "exp " << id << " s=" << s;
    }
  }
}

TEST(FluxFunction, AnalyticDerivativeMatchesDifferenceQuotient) {
  for (int id = 1; id <= 5; ++id) {
    const auto spec = experiment(id);
    for (const FluxFunction& f : {spec.flux_left(), spec.flux_right()}) {
      for (int i = 1; i < 100; ++i) {
        const double s = i / 100.0 + 0.003;
        const double fd = (f(s + 1e-6) - f(s - 1e-6)) / 2e-6;
        EXPECT_NEAR(f.derivative(s), fd, 1e-6) << "exp " << id << " s=" << s;
      }
    }
  }
}

TEST(FindArgmax, Exp1Parabola) {
  const FluxFunction f(linear_rock(), kFluid);
  EXPECT_NEAR(f.theta(), 0.5, 1e-10);
  EXPECT_NEAR(f.fmax(), 0.25, 1e-15);
  const FluxFunction g(linear_rock(1.1), kFluid);
  EXPECT_NEAR(g.theta(), 0.5, 1e-10);
}

TEST(FindArgmax, Exp2LeftAtSqrt2Minus1) {
  const FluxFunction f = experiment(2).flux_left();
  EXPECT_NEAR(f.theta(), std::sqrt(2.0) - 1.0, 1e-10);
}

TEST(FindArgmax, AgreesWithOracleOnAllExperiments) {
  for (int id = 1; id <= 5; ++id) {
    const auto spec = experiment(id);
    const auto [fl, fr] = oracle::experiment_fluxes(id);
    EXPECT_NEAR(spec.flux_left().theta(), oracle::argmax(fl), 1e-9) << "exp " << id;
    EXPECT_NEAR(spec.flux_right().theta(), oracle::argmax(fr), 1e-9) << "exp " << id;
  }
}

TEST(FindArgmax, ThetaIsLocalMaximum) {
  for (int id = 1; id <= 5; ++id) {
    const auto spec = experiment(id);
    for (const FluxFunction& f : {spec.flux_left(), spec.flux_right()}) {
      const double t = f.theta();
      EXPECT_GE(f(t), f(std::min(1.0, t + 1e-6)) - 1e-12);
      EXPECT_GE(f(t), f(std::max(0.0, t - 1e-6)) - 1e-12);
    }
  }
}

TEST(FindArgmax, RejectsTwoHumps) {
  struct TwoHumps {
    double operator()(double s) const { return std::sin(4.0 * M_PI * s) * std::sin(4.0 * M_PI * s); }
    double derivative(double s) const { return 8.0 * M_PI * std::sin(4 * M_PI * s) * std::cos(4 * M_PI * s); }
  };
  EXPECT_THROW(find_argmax(TwoHumps{}), NotUnimodal);
}

TEST(FindArgmax, MonotoneFluxPeaksAtEndpoint) {
  const FluxFunction f(linear_rock(), FluidParams{1.0, 1.0, 1.0});
  EXPECT_DOUBLE_EQ(f.theta(), 1.0);
  EXPECT_DOUBLE_EQ(f.fmax(), 1.0);
}

TEST(LipschitzBound, Examples) {
  const FluxFunction f(linear_rock(), kFluid);
  EXPECT_NEAR(lipschitz_bound(f, 10000), 1.05, 1e-3);
  const FluxFunction g(linear_rock(1.1), kFluid);
  EXPECT_NEAR(lipschitz_bound(g, 10000), 1.155, 1e-3);
  const FluxFunction zero(linear_rock(), FluidParams{1.0, 1.0, 0.0});
  EXPECT_DOUBLE_EQ(lipschitz_bound(zero, 10000), 0.0);
  EXPECT_THROW(lipschitz_bound(f, 999), std::invalid_argument);
}

TEST(FluxFunction, RejectsQMismatchAndNonUnimodal) {
  // k2 does not vanish at 1: f(1) != q.
  EXPECT_THROW(RockModel(1.0, 1.0, MobilityCurve::power(1.0, 1.0), MobilityCurve::polynomial({1.0})), InvalidModel);
  // Strongly wiggly k1 produces two maxima.
  const auto wiggle = MobilityCurve::piecewise_linear({{0.0, 0.0}, {0.2, 1.0}, {0.4, 1.0}, {0.6, 5.0}, {1.0, 5.0}});
  const RockModel r(1.0, 1.0, wiggle, MobilityCurve::power_decreasing(1.0, 1.0));
  EXPECT_THROW(FluxFunction(r, kFluid), NotUnimodal);
}

TEST(IntersectionPoints, Exp2Undercompressive) {
  const auto spec = experiment(2);
  const auto pts = intersection_points(spec.flux_left(), spec.flux_right());
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_NEAR(pts[0].s, 0.5, 1e-10);
  EXPECT_EQ(pts[0].tag, Compressivity::undercompressive);
}

TEST(IntersectionPoints, Exp4Overcompressive) {
  const auto spec = experiment(4);
  const auto pts = intersection_points(spec.flux_left(), spec.flux_right());
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_NEAR(pts[0].s, 0.5, 1e-10);
  EXPECT_EQ(pts[0].tag, Compressivity::overcompressive);
}

TEST(IntersectionPoints, Exp1NoInteriorCrossing) {
  const auto spec = experiment(1);
  EXPECT_TRUE(intersection_points(spec.flux_left(), spec.flux_right()).empty());
}

TEST(IntersectionPoints, Exp5MatchesDerivedRoot) {
  const auto spec = experiment(5);
  const auto [fl, fr] = oracle::experiment_fluxes(5);
  const auto pts = intersection_points(spec.flux_left(), spec.flux_right());
  ASSERT_EQ(pts.size(), 1u);
  const double r = oracle::root([&](double s) { return fl(s) - fr(s); }, 0.3, 0.5, 0.0);
  EXPECT_NEAR(pts[0].s, r, 1e-10);
  EXPECT_NEAR(pts[0].s, *spec.derived_intersection, 1e-10);
}

TEST(AveragedFlux, UnimodalForExperiments) {
  for (int id = 1; id <= 5; ++id) {
    const auto spec = experiment(id);
    const AveragedFlux tau(spec.flux_left(), spec.flux_right());
    EXPECT_TRUE(tau.unimodal()) << "exp " << id;
    const auto [fl, fr] = oracle::experiment_fluxes(id);
    EXPECT_NEAR(tau.theta(), oracle::argmax([&](double s) { return 0.5 * (fl(s) + fr(s)); }), 1e-9);
  }
}
