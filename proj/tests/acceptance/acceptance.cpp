// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "extctl/cli.hpp"
#include "extctl/estimators.hpp"
#include "extctl/glm.hpp"
#include "extctl/inference.hpp"
#include "extctl/nuisance.hpp"
#include "extctl/simlab.hpp"
#include "support/discrete.hpp"
#include "support/fixtures.hpp"
#include "support/glm_fixtures.hpp"

using namespace extctl;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

// Runs a check and turns an escaping exception into a FAIL line.
void criterion(int id, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(id, ok, detail);
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

constexpr std::size_t kReps = 1000;
constexpr std::size_t kN = 1000;

MCResult study(Scenario s, double engagement = 0.0) {
  ScenarioConfig c;
  c.scenario = s;
  c.n = kN;
  c.dgp.engagement = engagement;
  MCOptions o;
  o.reps = kReps;
  o.master_seed = 20240 + static_cast<std::uint64_t>(s);
  o.jobs = jobs();
  return run_monte_carlo(c, o);
}

double mc_se(const MCSummary& s) { return *s.sd / std::sqrt(static_cast<double>(s.reps)); }

struct CliOut {
  int code;
  std::string out;
};

CliOut cli(std::vector<std::string> args) {
  args.insert(args.begin(), "extctl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str()};
}

}  // namespace

int main() {
  criterion(1, [] {
    const struct {
      double point, variance, p;
    } rows[] = {
        {5.82e-2, 16.10e-4, 0.073}, {5.43e-2, 19.55e-4, 0.110}, {6.72e-2, 14.98e-4, 0.041},
        {6.55e-2, 19.56e-4, 0.069}, {9.67e-2, 21.50e-4, 0.019}, {10.24e-2, 38.05e-4, 0.048},
    };
    bool ok = true;
    std::string got;
    for (const auto& r : rows) {
      Estimate e;
      e.point = r.point;
      const double p = test(e, r.variance, 0.0, Sidedness::greater).p_value;
      ok &= std::abs(p - r.p) <= 0.001;
      got += fmt("%.4f ", p);
    }
    return std::pair{ok, "one-sided p-values " + got};
  });

  std::vector<CompositeDataset> random;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) random.push_back(fx::random_dataset(seed));

  criterion(2, [&] {
    double worst = 0;
    for (const auto& ds : random) {
      NuisanceConfig cfg;
      const auto full = fit_nuisances(ds, cfg);
      const auto base = baseline_nuisances(ds, full, cfg);
      worst = std::max(worst, std::abs(estimate_tau_full(ds, base).point -
                                       estimate_tau_trial(ds, base).point));
    }
    return std::pair{worst <= 1e-12, fmt("max |tau_full(r=0) - tau_trial| = %.3g over 100 datasets", worst)};
  });

  criterion(3, [&] {
    double worst = 0;
    for (const auto& ds : random) {
      const auto full = fit_nuisances(ds, NuisanceConfig{});
      const double q = ds.q_hat();
      const double tau = estimate_tau_full(ds, full).point;
      const double psi = estimate_psi(ds, full, Method::full_data).point;
      const double xi = estimate_xi(ds, full, Method::full_data).point;
      worst = std::max(worst, std::abs(psi - (q * tau + (1 - q) * xi)));
    }
    return std::pair{worst <= 1e-10, fmt("max |psi - (q tau + (1-q) xi)| = %.3g over 100 datasets", worst)};
  });

  criterion(4, [] {
    double worst = 0;
    for (const auto& f : fx::kDiscrete) {
      const auto ds = load_csv(fx::data_path(f.file), {});
      const auto cfg = fx::saturated(f.terms);
      const auto full = fit_nuisances(ds, cfg);
      const auto base = baseline_nuisances(ds, full, cfg);
      const double got[] = {
          estimate_tau_full(ds, full).point,
          estimate_tau_trial(ds, base).point,
          estimate_psi(ds, full, Method::full_data).point,
          estimate_psi(ds, base, Method::trial_based).point,
          estimate_xi(ds, full, Method::full_data).point,
          estimate_xi(ds, base, Method::trial_based).point,
          efficiency_bound_plugin(ds, full, Estimand::tau, Method::full_data),
          efficiency_bound_plugin(ds, base, Estimand::tau, Method::trial_based),
      };
      const double want[] = {f.tau_full, f.tau_trial, f.psi_full, f.psi_trial,
                             f.xi_full,  f.xi_trial,  f.bound_full, f.bound_trial};
      for (int k = 0; k < 8; ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
    }
    return std::pair{worst <= 1e-8, fmt("max deviation from the enumerated oracle = %.3g", worst)};
  });

  std::vector<MCResult> runs;
  MCResult engaged;
  try {
    for (auto s : {Scenario::i, Scenario::ii, Scenario::iii, Scenario::iv}) runs.push_back(study(s));
    engaged = study(Scenario::i, 0.5);
  } catch (const std::exception& e) {
    std::printf("Monte Carlo study failed: %s\n", e.what());
  }
  const bool have_mc = runs.size() == 4;

  criterion(5, [&] {
    if (!have_mc) return std::pair{false, std::string("no Monte Carlo results")};
    bool ok = true;
    std::string detail;
    for (int k : {1, 2}) {
      for (const char* id : {"tau_full", "psi_full", "xi_full"}) {
        const auto& s = runs[k].summary(id);
        const double z = s.mean_bias / mc_se(s);
        ok &= std::abs(z) <= 3.0;
        detail += fmt("%s/%s z=%.2f ", to_string(runs[k].config.scenario).c_str(), id, z);
      }
    }
    return std::pair{ok, detail};
  });

  criterion(6, [&] {
    if (!have_mc) return std::pair{false, std::string("no Monte Carlo results")};
    bool ok = true;
    std::string detail;
    for (int k : {0, 1, 2}) {
      for (const char* id : {"tau_full", "tau_full_const"}) {
        const double c = runs[k].summary(id).coverage;
        ok &= c >= 0.93 && c <= 0.97;
        detail += fmt("%s/%s %.3f ", to_string(runs[k].config.scenario).c_str(), id, c);
      }
    }
    const double c4 = runs[3].summary("tau_full").coverage;
    ok &= c4 < 0.5;
    detail += fmt("iv/tau_full %.3f", c4);
    return std::pair{ok, detail};
  });

  criterion(7, [&] {
    if (!have_mc) return std::pair{false, std::string("no Monte Carlo results")};
    const auto& r = runs[0];
    const double v_full = std::pow(*r.summary("tau_full").sd, 2);
    const double v_trial = std::pow(*r.summary("tau_trial").sd, 2);
    const double empirical = (v_trial - v_full) * static_cast<double>(kN);
    const double analytic = r.mean_gain_analytic.value_or(NAN);
    const double rel = std::abs(empirical - analytic) / analytic;
    return std::pair{v_full < v_trial && rel <= 0.25,
                     fmt("var full %.3g < trial %.3g; n*gap %.3f vs analytic %.3f (rel %.3f)",
                         v_full, v_trial, empirical, analytic, rel)};
  });

  criterion(8, [&] {
    if (!have_mc) return std::pair{false, std::string("no Monte Carlo results")};
    const double size = runs[0].exchangeability_rejection_rate;
    const double power = engaged.exchangeability_rejection_rate;
    // Per dataset, |Lambda| against the bound with B = max |b| over the sample.
    bool bounded = true;
    double worst_ratio = 0;
    ScenarioConfig c;
    c.n = kN;
    c.dgp.engagement = 0.5;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      const auto g = generate(c, 7000 + seed);
      const auto n = fit_nuisances(g.data, NuisanceConfig{});
      double B = 0;
      for (Eigen::Index i = 0; i < g.data.x().rows(); ++i) B = std::max(B, std::abs(0.5 * g.data.x()(i, 0)));
      BiasSpec spec;
      spec.bound = B;
      spec.b = [](std::span<const double> x) { return 0.5 * x[0]; };
      const auto bb = bias_bound(g.data, n, spec);
      bounded &= std::abs(*bb.lambda_estimate) <= B * bb.mean_weight + 1e-12;
      worst_ratio = std::max(worst_ratio, std::abs(*bb.lambda_estimate) / (B * bb.mean_weight));
    }
    const bool ok = std::abs(size - 0.05) <= 0.02 && power > 0.5 && bounded;
    return std::pair{ok, fmt("size %.3f, power %.3f at b=0.5x1, max |Lambda|/(B*weight) %.3f; "
                             "bias %.4f vs mean Lambda %.4f",
                             size, power, worst_ratio, engaged.summary("tau_full").mean_bias,
                             engaged.mean_lambda)};
  });

  criterion(9, [] {
    double id_worst = 0, lg_worst = 0;
    for (unsigned seed = 0; seed < 20; ++seed) {
      const auto fi = fx::make_fixture(seed, Family::identity);
      const auto a = fit_glm(fi.x, fi.y, Family::identity, fi.w);
      const auto ra = oracle::wls(fx::to_mat(fi.x), fx::to_vec(fi.y), fx::weights_or_ones(fi));
      for (std::size_t j = 0; j < ra.size(); ++j) {
        id_worst = std::max(id_worst, std::abs(a.coef(j) - static_cast<double>(ra[j])));
      }
      const auto fl = fx::make_fixture(seed, Family::logit);
      const auto b = fit_glm(fl.x, fl.y, Family::logit, fl.w);
      const auto rb = oracle::logit_newton(fx::to_mat(fl.x), fx::to_vec(fl.y), fx::weights_or_ones(fl));
      for (std::size_t j = 0; j < rb.size(); ++j) {
        lg_worst = std::max(lg_worst, std::abs(b.coef(j) - static_cast<double>(rb[j])));
      }
    }
    return std::pair{id_worst <= 1e-10 && lg_worst <= 1e-8,
                     fmt("identity vs WLS %.3g, logit vs Newton %.3g over 20 fixtures", id_worst, lg_worst)};
  });

  criterion(10, [] {
    const std::vector<std::string> sim{"simulate", "--scenario", "all", "--reps", "300", "--n", "300",
                                       "--truth-draws", "200000", "--seed", "17"};
    const std::vector<std::string> boot{"estimate", "--input", fx::data_path("synthetic.csv"),
                                        "--variance", "bootstrap", "--B", "200", "--seed", "17"};
    auto with_jobs = [](std::vector<std::string> a, const char* j) {
      a.insert(a.end(), {"--jobs", j});
      return a;
    };
    const auto s1 = cli(with_jobs(sim, "1")), s4 = cli(with_jobs(sim, "4"));
    const auto b1 = cli(with_jobs(boot, "1")), b3 = cli(with_jobs(boot, "3"));
    const bool ok = s1.code == 0 && b1.code == 0 && s1.out == s4.out && b1.out == b3.out;
    return std::pair{ok, fmt("simulate jobs 1 vs 4 %s, bootstrap jobs 1 vs 3 %s",
                             s1.out == s4.out ? "identical" : "differ",
                             b1.out == b3.out ? "identical" : "differ")};
  });

  return failures == 0 ? 0 : 1;
}
