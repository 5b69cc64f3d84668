// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "heteroflux/diagnostics.hpp"
#include "heteroflux/flux_models.hpp"
#include "heteroflux/numerical_fluxes.hpp"
#include "heteroflux/reference.hpp"
#include "heteroflux/solver.hpp"

using namespace heteroflux;

namespace {

constexpr double kCoarse = 0.1;
constexpr double kFine = 0.01;
constexpr int kTimePairs = 20;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Everything the criteria need from one run, gathered step by step.
struct Probe {
  int id = 0;
  Scheme scheme = Scheme::ers;
  double h = 0.0;
  std::optional<RunResult> result;
  std::vector<InterfaceClass> classes;
  double max_entropy_residual = 0.0;
  double max_deviation_from_initial = 0.0;
  double max_tv = 0.0;
  double tv_bound = 0.0;
  double n0 = 0.0;
  double min_porosity = 1.0;
  std::vector<std::pair<double, std::vector<double>>> samples;  // (time, cells)

  const RunResult& run() const { return *result; }
  std::size_t transient() const {
    return static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(classes.size())));
  }
};

Probe probe(int id, Scheme scheme, double h, std::size_t tv_stride) {
  const ExperimentSpec spec = experiment(id);
  const SchemeConfig config = spec.config(scheme);
  const Grid grid = spec.grid(h);
  const FluxFunction fl = spec.flux_left(), fr = spec.flux_right();
  const FluxSet fluxes = make_flux_set(scheme, fl, fr);
  const SingularMapping psi_l(fl, 0.0), psi_r(fr, 0.0);
  const auto constants = default_kruzkhov_constants();

  Probe p;
  p.id = id;
  p.scheme = scheme;
  p.h = h;
  p.min_porosity = std::min(config.porosity_left, config.porosity_right);
  const RunState initial = project_initial_data(spec.initial, grid);
  p.n0 = flux_variation_estimator(initial, fluxes);
  const double m = stability_constant(fluxes, config.porosity_left, config.porosity_right);
  p.tv_bound = 4.0 / config.lambda * p.n0 + 2.0 * m;
  p.max_tv = tv_of_transform(initial, psi_l, psi_r).max();

  // Sampled step indices for the time-continuity pairs.
  const auto steps = static_cast<std::size_t>(std::ceil(config.t_end / (config.lambda * h) - 1e-9));
  std::mt19937_64 rng(1000 * id + 10 * static_cast<int>(scheme) + static_cast<int>(std::lround(1.0 / h)));
  std::uniform_int_distribution<std::size_t> pick(0, steps);
  std::vector<std::size_t> wanted;
  for (int i = 0; i < 2 * kTimePairs; ++i) wanted.push_back(pick(rng));
  std::sort(wanted.begin(), wanted.end());
  if (std::binary_search(wanted.begin(), wanted.end(), std::size_t{0})) p.samples.emplace_back(0.0, initial.cells);

  auto observer = [&](const RunState& before, const RunState& after, const StepRecord& rec) {
    p.classes.push_back(classify_interface(after, fluxes).classification);
    double dev = 0.0;
    for (std::size_t k = 0; k < after.cells.size(); ++k) dev = std::max(dev, std::abs(after.cells[k] - initial.cells[k]));
    p.max_deviation_from_initial = std::max(p.max_deviation_from_initial, dev);
    if (rec.step % 10 == 0)
      p.max_entropy_residual =
          std::max(p.max_entropy_residual, interior_entropy_residual(before, after, rec.dt / h, config.porosity_left,
                                                                     config.porosity_right, fluxes, constants)
                                               .max_interior_residual);
    if (rec.step % tv_stride == 0 || rec.step == steps)
      p.max_tv = std::max(p.max_tv, tv_of_transform(after, psi_l, psi_r).max());
    if (std::binary_search(wanted.begin(), wanted.end(), rec.step)) p.samples.emplace_back(rec.time, after.cells);
  };
  p.result = run(config, grid, fl, fr, spec.initial, observer);
  return p;
}

struct Report {
  int failures = 0;
  void line(int n, bool pass, const std::string& detail) {
    std::printf("CRITERION %d %s: %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
};

std::string name(const Probe& p) {
  return "exp" + std::to_string(p.id) + "/" + to_string(p.scheme) + "/h=" + fmt(p.h);
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<Scheme> schemes{Scheme::ers, Scheme::um, Scheme::av};

  // Launch all runs and the oracle work at once.
  std::map<std::tuple<int, int, double>, std::future<Probe>> pending;
  for (int id = 1; id <= kExperimentCount; ++id)
    for (Scheme s : schemes)
      for (double h : {kCoarse, kFine})
        pending[{id, static_cast<int>(s), h}] =
            std::async(std::launch::async, probe, id, s, h, h == kCoarse ? std::size_t{1} : std::size_t{10});
  const std::vector<double> ladder{0.1, 0.05, 0.02, 0.01};
  std::map<std::pair<int, double>, std::future<Profile>> ers_ladder;
  std::map<int, std::future<Profile>> oracles;
  for (int id = 1; id <= kExperimentCount; ++id) {
    oracles[id] = std::async(std::launch::async, [id] {
      const auto spec = experiment(id);
      return fine_mesh_oracle(spec, spec.t_end);
    });
    for (double h : {0.05, 0.02})
      ers_ladder[{id, h}] = std::async(std::launch::async, [id, h] {
        const auto spec = experiment(id);
        const RunResult r = run(spec.config(Scheme::ers), spec.grid(h), spec.flux_left(), spec.flux_right(), spec.initial);
        return Profile::from_cells(r.grid, r.final_snapshot().cells);
      });
  }
  std::map<std::tuple<int, int, double>, Probe> probes;
  for (auto& [key, f] : pending) probes.emplace(key, f.get());
  auto get = [&](int id, Scheme s, double h) -> const Probe& { return probes.at({id, static_cast<int>(s), h}); };

  Report report;

  // 1. Rarefaction into a slower rock.
  {
    const auto ers = extract_traces(get(1, Scheme::ers, kFine).run());
    const auto um = extract_traces(get(1, Scheme::um, kFine).run());
    const bool pass = std::abs(ers.s_left - 0.5) <= 0.02 && std::abs(ers.right.plateau - 0.35) <= 0.005 &&
                      um.s_left <= 0.42;
    report.line(1, pass,
                "ERS left trace " + fmt(ers.s_left) + " (0.5 +- 0.02), right plateau " + fmt(ers.right.plateau) +
                    " (0.35 +- 0.005); UM left trace " + fmt(um.s_left) + " (<= 0.42)");
  }

  // 2. Constant data with crossing maximizers.
  {
    const auto spec = experiment(2);
    const double tl = spec.flux_left().theta(), tr = spec.flux_right().theta();
    const auto ers = extract_traces(get(2, Scheme::ers, kFine).run());
    bool pass = std::abs(ers.s_left - (std::sqrt(2.0) - 1.0)) <= 0.015 &&
                std::abs(ers.s_right - (2.0 - std::sqrt(2.0))) <= 0.015;
    double av_dev = 0.0;
    std::string um_detail;
    for (double h : {kCoarse, kFine}) {
      av_dev = std::max(av_dev, get(2, Scheme::av, h).max_deviation_from_initial);
      const auto um = extract_traces(get(2, Scheme::um, h).run());
      pass = pass && std::abs(um.s_left - tl) > 0.03 && std::abs(um.s_right - tr) > 0.03;
      um_detail += " h=" + fmt(h) + ": (" + fmt(um.s_left) + ", " + fmt(um.s_right) + ")";
    }
    pass = pass && av_dev <= 1e-12;
    report.line(2, pass,
                "ERS traces (" + fmt(ers.s_left) + ", " + fmt(ers.s_right) + ") vs (" + fmt(std::sqrt(2.0) - 1.0) +
                    ", " + fmt(2.0 - std::sqrt(2.0)) + ") +- 0.015; AV max deviation from 0.5 " + fmt(av_dev) +
                    "; UM traces outside theta +- 0.03 (theta " + fmt(tl) + ", " + fmt(tr) + ")" + um_detail);
  }

  // 3. Constant data, kinked mobility.
  {
    const auto spec = experiment(3);
    double dev = 0.0;
    std::size_t steps = 0;
    for (Scheme s : {Scheme::um, Scheme::av}) {
      dev = std::max({dev, get(3, s, kCoarse).max_deviation_from_initial, get(3, s, kFine).max_deviation_from_initial});
      steps = std::max(steps, get(3, s, kFine).run().diagnostics_log.size());
    }
    const auto ers = extract_traces(get(3, Scheme::ers, kFine).run());
    const bool pass = dev <= 1e-13 && steps >= 1000 &&
                      std::abs(ers.s_left - spec.derived_traces.s_left) <= 0.02 &&
                      std::abs(ers.s_right - spec.derived_traces.s_right) <= 0.02;
    report.line(3, pass,
                "UM/AV max deviation from 0.5 " + fmt(dev) + " over " + std::to_string(steps) +
                    " steps; ERS traces (" + fmt(ers.s_left) + ", " + fmt(ers.s_right) + ") vs derived (" +
                    fmt(spec.derived_traces.s_left) + ", " + fmt(spec.derived_traces.s_right) + ") +- 0.02");
  }

  // 4. Undercompressive steady state.
  {
    double dev = 0.0;
    bool um_always_under = true;
    for (double h : {kCoarse, kFine}) {
      for (Scheme s : {Scheme::um, Scheme::av}) dev = std::max(dev, get(4, s, h).max_deviation_from_initial);
      for (InterfaceClass c : get(4, Scheme::um, h).classes)
        um_always_under = um_always_under && c == InterfaceClass::undercompressive;
    }
    const Probe& ers_p = get(4, Scheme::ers, kFine);
    const auto ers = extract_traces(ers_p.run());
    std::size_t under = 0;
    for (std::size_t i = ers_p.transient(); i < ers_p.classes.size(); ++i)
      under += ers_p.classes[i] == InterfaceClass::undercompressive;
    const bool pass = dev <= 1e-13 && um_always_under && std::abs(ers.s_left - 0.58) <= 0.02 &&
                      std::abs(ers.s_right - 0.42) <= 0.02 && under == 0;
    report.line(4, pass,
                "UM/AV max deviation from (2/3, 1/3) " + fmt(dev) + "; UM undercompressive at every step: " +
                    (um_always_under ? "yes" : "no") + "; ERS traces (" + fmt(ers.s_left) + ", " + fmt(ers.s_right) +
                    ") vs (0.58, 0.42) +- 0.02; ERS undercompressive post-transient steps " + std::to_string(under));
  }

  // 5. Strong-contrast quadratic mobilities.
  {
    const auto spec = experiment(5);
    const Probe& ers_p = get(5, Scheme::ers, kFine);
    const Probe& um_p = get(5, Scheme::um, kFine);
    const Probe& av_p = get(5, Scheme::av, kFine);
    const auto ers = extract_traces(ers_p.run());
    const auto um = extract_traces(um_p.run());
    const FluxSet av_fluxes = make_flux_set(Scheme::av, spec.flux_left(), spec.flux_right());
    const InterfaceClass av_class = classify_interface(av_p.run().final_state(), av_fluxes).classification;
    const double h = kFine;
    const double um_ers = l1_state_distance(um_p.run().final_snapshot().cells, ers_p.run().final_snapshot().cells, h);
    const double av_ers = l1_state_distance(av_p.run().final_snapshot().cells, ers_p.run().final_snapshot().cells, h);
    // Height of the UM right layer: offset of its right trace from the entropy trace.
    const double layer = std::abs(um.s_right - spec.derived_traces.s_right);
    const bool ers_ok = std::abs(ers.s_left - spec.derived_traces.s_left) <= 0.03 &&
                        std::abs(ers.s_right - spec.derived_traces.s_right) <= 0.03;
    const bool pass = ers_ok && av_class == InterfaceClass::undercompressive && um_ers < 3.0 * av_ers && layer >= 0.03;
    report.line(5, pass,
                "ERS traces (" + fmt(ers.s_left) + ", " + fmt(ers.s_right) + ") vs derived (" +
                    fmt(spec.derived_traces.s_left) + ", " + fmt(spec.derived_traces.s_right) + ") +- 0.03; AV " +
                    to_string(av_class) + "; L1(UM,ERS) " + fmt(um_ers) + " < 3 x L1(AV,ERS) " + fmt(3.0 * av_ers) +
                    "; UM right layer " + fmt(layer) + " (>= 0.03)");
  }

  // 6. Flux properties.
  {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double godunov_gap = 0.0, mono_excess = 0.0, endpoint_err = 0.0, continuity_gap = 0.0;
    for (int id = 1; id <= kExperimentCount; ++id) {
      const auto spec = experiment(id);
      const FluxFunction fl = spec.flux_left(), fr = spec.flux_right();
      for (const FluxFunction* f : {&fl, &fr})
        for (int i = 0; i < 10000; ++i) {
          const double a = u(rng), b = u(rng);
          godunov_gap = std::max(godunov_gap, std::abs(godunov_unimodal(*f, a, b) - godunov_general(*f, a, b)));
        }
      const double q = spec.fluid.q;
      for (Scheme s : {Scheme::ers, Scheme::um, Scheme::av}) {
        const FluxSet fs = make_flux_set(s, fl, fr);
        for (const NumericalFlux* F : {&fs.left, &fs.interface, &fs.right}) {
          endpoint_err = std::max({endpoint_err, std::abs((*F)(0.0, 0.0)), std::abs((*F)(1.0, 1.0) - q)});
          for (int i = 0; i < 2000; ++i) {
            const double a = u(rng) * (1.0 - 1e-6), b = u(rng) * (1.0 - 1e-6);
            const double f0 = (*F)(a, b);
            mono_excess = std::max({mono_excess, f0 - (*F)(a + 1e-6, b), (*F)(a, b + 1e-6) - f0});
          }
        }
      }
      // UM across the switching curves of its case logic, interface and interior.
      for (const auto& [l, r] : {std::pair{&fl, &fr}, std::pair{&fl, &fl}, std::pair{&fr, &fr}})
        for (int ia = 0; ia <= 50; ++ia) {
          const double a = ia / 50.0;
          auto case_of = [&](double b) { return um_resolve_case(*l, *r, a, b).case_index; };
          for (int ib = 0; ib < 400; ++ib) {
            double lo = ib / 400.0, hi = (ib + 1) / 400.0;
            if (case_of(lo) == case_of(hi)) continue;
            for (int it = 0; it < 60; ++it) {
              const double m = 0.5 * (lo + hi);
              (case_of(m) == case_of(lo) ? lo : hi) = m;
            }
            continuity_gap = std::max(continuity_gap, std::abs(um_flux(*l, *r, a, std::max(0.0, lo - 1e-9)) -
                                                               um_flux(*l, *r, a, std::min(1.0, hi + 1e-9))));
          }
        }
    }
    const bool pass = godunov_gap <= 1e-9 && mono_excess <= 1e-12 && endpoint_err <= 1e-12 && continuity_gap <= 1e-6;
    report.line(6, pass,
                "unimodal vs general Godunov max gap " + fmt(godunov_gap) + " (<= 1e-9); monotonicity excess " +
                    fmt(mono_excess) + " (<= 1e-12); endpoint error " + fmt(endpoint_err) +
                    " (<= 1e-12); UM case-boundary jump " + fmt(continuity_gap) + " (<= 1e-6)");
  }

  // 7. Scheme invariants on every run.
  {
    double bounds = 0.0, contraction = -1.0, conservation = 0.0, tv_excess = -1e300, tc_excess = -1e300;
    std::string worst_tv, worst_tc;
    int pairs = 0;
    for (const auto& [key, p] : probes) {
      const auto& log = p.run().diagnostics_log;
      for (const auto& r : log) bounds = std::max({bounds, -r.min, r.max - 1.0});
      contraction = std::max(contraction, l1_contraction_excess(log));
      conservation = std::max(conservation, conservation_defect(log));
      if (p.max_tv - p.tv_bound > tv_excess) {
        tv_excess = p.max_tv - p.tv_bound;
        worst_tv = name(p);
      }
      // Consecutive samples form the pairs.
      const double dt = p.run().config.lambda * p.h;
      for (std::size_t i = 0; i + 1 < p.samples.size() && static_cast<int>(i / 2) < kTimePairs; i += 2) {
        const auto& [t1, c1] = p.samples[i];
        const auto& [t2, c2] = p.samples[i + 1];
        const double lhs = l1_state_distance(c1, c2, p.h);
        const double rhs = p.n0 / p.min_porosity * (2.0 * dt + std::abs(t2 - t1));
        if (lhs - rhs > tc_excess) {
          tc_excess = lhs - rhs;
          worst_tc = name(p);
        }
        ++pairs;
      }
    }
    const bool pass =
        bounds <= 1e-12 && contraction <= 1e-10 && conservation <= 1e-10 && tv_excess <= 1e-8 && tc_excess <= 1e-12;
    report.line(7, pass,
                std::to_string(probes.size()) + " runs; bounds excess " + fmt(bounds) + "; L1 contraction excess " +
                    fmt(contraction) + "; conservation defect " + fmt(conservation) + "; TV bound margin " +
                    fmt(tv_excess) + " (" + worst_tv + "); time-continuity margin " + fmt(tc_excess) + " over " +
                    std::to_string(pairs) + " pairs (" + worst_tc + ")");
  }

  // 8. Entropy residuals and convergence to the oracle.
  {
    double residual = 0.0;
    std::string worst;
    for (const auto& [key, p] : probes) {
      if (p.scheme == Scheme::av) continue;
      if (p.max_entropy_residual > residual || worst.empty()) {
        residual = std::max(residual, p.max_entropy_residual);
        worst = name(p);
      }
    }
    bool monotone = true;
    std::string ladder_detail;
    for (int id = 1; id <= kExperimentCount; ++id) {
      const Profile oracle = oracles[id].get();
      std::vector<double> d;
      for (double h : ladder) {
        Profile p;
        if (h == kCoarse || h == kFine) {
          const RunResult& r = get(id, Scheme::ers, h).run();
          p = Profile::from_cells(r.grid, r.final_snapshot().cells);
        } else {
          p = ers_ladder[{id, h}].get();
        }
        d.push_back(l1_distance(p, oracle));
      }
      for (std::size_t i = 1; i < d.size(); ++i) monotone = monotone && d[i] < d[i - 1];
      ladder_detail += " exp" + std::to_string(id) + ":";
      for (double v : d) ladder_detail += " " + fmt(v);
    }
    const bool pass = residual <= 1e-10 && monotone;
    report.line(8, pass,
                "max interior entropy residual (ERS, UM) " + fmt(residual) + " (" + worst +
                    "); ERS L1 to oracle over h = 0.1, 0.05, 0.02, 0.01:" + ladder_detail);
  }

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%d of 8 criteria passed in %.1f s\n", 8 - report.failures, secs);
  return report.failures == 0 ? 0 : 1;
}
