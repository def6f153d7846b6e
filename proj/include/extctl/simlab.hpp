#pragma once

// Simulation lab: a four-scenario data-generating process with known
// effects, and a Monte Carlo engine that scores the estimators against it.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "extctl/dataset.hpp"
#include "extctl/estimators.hpp"
#include "extctl/nuisance.hpp"

namespace extctl {

// i: every working model correct; ii: outcome models correct, propensities
// wrong; iii: propensities correct, outcome models wrong; iv: both wrong.
enum class Scenario { i, ii, iii, iv };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);
bool propensities_correct(Scenario s);
bool outcomes_correct(Scenario s);

// Coefficients of the true models, written on z where z = x for the correct
// arms and z = distort(x) for the misspecified ones.
struct DgpParams {
  double d0 = 0.0, d1 = 0.4, d2 = -0.4;      // logit pr(D=1)
  double t0 = 0.0, t1 = 0.2, t2 = 0.2;       // logit pr(T=1 | D=1)
  double y0 = 1.0, y1 = 1.0, y2 = 0.5;       // E(Y0)
  double e0 = 1.0, e1 = 0.5;                 // Y1 - Y0 = e0 + e1 z1
  double v1a = 0.2, v1b = 0.2;               // log var(Y0 | x, D=1) = v1a + v1b x1
  double v0a = 0.4, v0b = -0.2;              // log var(Y0 | x, D=0)
  double engagement = 0.0;                   // b(x) = engagement * x1, subtracted from Y0 when D=0

  static constexpr std::size_t size = 16;
  std::vector<double> to_vector() const;
  static DgpParams from_vector(const std::vector<double>& v);
  bool operator==(const DgpParams&) const = default;
};

// The distortion used by the misspecified arms.
std::array<double, 2> distort(double x1, double x2);

struct ScenarioConfig {
  Scenario scenario = Scenario::i;
  std::size_t n = 1000;
  OutcomeKind outcome_kind = OutcomeKind::continuous;
  DgpParams dgp;
  // Analyst working models (raw-x linear specs unless overridden).
  NuisanceConfig analyst;
};

struct Generated {
  CompositeDataset data;
  Eigen::VectorXd y0;  // hidden potential outcomes
  Eigen::VectorXd y1;
};

Generated generate(const ScenarioConfig& cfg, std::uint64_t seed);

struct TrueEffects {
  double tau = 0.0, psi = 0.0, xi = 0.0;
  double q = 0.0;
  double se_tau = 0.0, se_psi = 0.0, se_xi = 0.0;
  std::size_t draws = 0;

  double of(Estimand e) const { return e == Estimand::tau ? tau : e == Estimand::psi ? psi : xi; }
};

// Oracle Monte Carlo with a fixed seed; cached per (scenario, params).
TrueEffects true_effects(const ScenarioConfig& cfg, std::size_t draws = 10'000'000);

// Estimator ids understood by the engine.
//   tau_full, tau_full_const, tau_trial, psi_full, psi_trial, xi_full, xi_trial
const std::vector<std::string>& all_estimator_ids();
struct EstimatorId {
  std::string id;
  Estimand estimand;
  Method method;
  bool constant_ratio;
};
EstimatorId parse_estimator_id(const std::string& id);

struct MCSummary {
  std::string estimator;
  Estimand estimand = Estimand::tau;
  Method method = Method::full_data;
  std::size_t reps = 0;  // successful replicates
  double truth = 0.0;
  double mean_estimate = 0.0;
  double mean_bias = 0.0;
  std::optional<double> sd;  // 1/reps normalization; absent when reps == 1
  double mse = 0.0;
  double coverage = 0.0;
  double mean_variance_estimate = 0.0;
};

struct MCOptions {
  std::size_t reps = 1000;
  std::uint64_t master_seed = 1;
  int jobs = 1;
  std::vector<std::string> estimators = all_estimator_ids();
  double level = 0.95;
  double max_failure_rate = 0.02;
  bool retain_draws = true;
  std::size_t draw_cap = 1'000'000;  // values kept in memory before spilling
  std::string spill_path;            // defaults to a file in the temp directory
  std::size_t truth_draws = 10'000'000;
};

struct MCResult {
  ScenarioConfig config;
  TrueEffects truth;
  std::size_t reps_requested = 0;
  std::size_t failures = 0;
  std::vector<std::string> failure_messages;  // first few only
  std::vector<MCSummary> summaries;

  // Side quantities averaged over successful replicates.
  std::optional<double> mean_gain_analytic;       // efficiency_gain_analytic
  double exchangeability_rejection_rate = 0.0;    // at level 0.05
  double mean_lambda = 0.0;                       // bias term with the true b(x)
  double mean_lambda_weight = 0.0;                // Lambda bound per unit B

  // Raw draws: for every replicate and estimator the pair (bias, IF
  // variance), replicate-major. NaN marks a failed replicate. Held in memory,
  // or in `spill_file` (native doubles, same layout) past the cap.
  std::vector<std::string> estimators;
  std::vector<double> draws;
  std::optional<std::string> spill_file;

  const MCSummary& summary(const std::string& estimator) const;
  // Bias or variance draws for one estimator in replicate order, failed
  // replicates skipped. Empty when draws were not retained.
  std::vector<double> bias_draws(const std::string& estimator) const;
  std::vector<double> variance_draws(const std::string& estimator) const;
  // Replicate indices that succeeded, aligned with the vectors above.
  std::vector<std::size_t> successful_reps() const;
};

MCResult run_monte_carlo(const ScenarioConfig& cfg, const MCOptions& opts);

// Long-format CSV: scenario,estimator,replicate,bias. `estimators` empty means
// every estimator in each run.
void export_boxplot_data(std::ostream& out, const std::vector<MCResult>& runs,
                         const std::vector<std::string>& estimators = {});

// tau_full with the ratio forced to constant mode.
MCSummary constant_ratio_variant(const ScenarioConfig& cfg, std::size_t reps, std::uint64_t seed,
                                 int jobs = 1);

}  // namespace extctl
