#pragma once

// Variances, confidence intervals and tests for the estimators, plus the
// mean-exchangeability check, overlap diagnostics and the bias term under
// violated exchangeability.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "extctl/dataset.hpp"
#include "extctl/estimators.hpp"
#include "extctl/glm.hpp"
#include "extctl/nuisance.hpp"

namespace extctl {

enum class Sidedness { two_sided, greater, less };
enum class VarianceMethod { influence_function, bootstrap };

std::string to_string(Sidedness s);
Sidedness sidedness_from_string(const std::string& s);
std::string to_string(VarianceMethod m);
VarianceMethod variance_method_from_string(const std::string& s);

struct InferenceResult {
  Estimate estimate;
  double variance = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double level = 0.95;
  double p_value = 1.0;
  double null_value = 0.0;
  Sidedness sidedness = Sidedness::two_sided;
  VarianceMethod variance_method = VarianceMethod::influence_function;
};

// mean(IF^2) / n.
double if_variance(const IFVector& ifv);

// Normal-approximation z test; the CI is always two-sided at `level`.
InferenceResult test(const Estimate& est, double variance, double null_value = 0.0,
                     Sidedness side = Sidedness::two_sided, double level = 0.95);

// ---- bootstrap -------------------------------------------------------------

struct BootstrapOptions {
  std::size_t B = 500;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool stratify_by_source = false;  // resample d=1 and d=0 rows separately
  double level = 0.95;
  double max_failure_rate = 0.05;
};

struct BootstrapResult {
  double variance = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t B = 0;
  std::size_t failures = 0;
  std::vector<double> draws;  // successful replicates, replicate order
};

using Statistic = std::function<double(const CompositeDataset&)>;

// Generic row-resampling bootstrap. Rows are put in a canonical order before
// resampling, so the result does not depend on the input row order. A
// replicate whose statistic throws extctl::Error counts as a failure.
BootstrapResult bootstrap(const CompositeDataset& ds, const Statistic& stat,
                          const BootstrapOptions& opts);

struct EstimatorConfig {
  NuisanceConfig nuisance;
  Estimand estimand = Estimand::tau;
  Method method = Method::full_data;
  EvalOptions eval;
};

// Refits every nuisance model on each resample. Requires B >= 100.
BootstrapResult bootstrap_variance(const CompositeDataset& ds, const EstimatorConfig& cfg,
                                   const BootstrapOptions& opts);

// Fits nuisances and computes one estimate (comparators use baseline nuisances).
Estimate fit_and_estimate(const CompositeDataset& ds, const EstimatorConfig& cfg);

// ---- exchangeability -------------------------------------------------------

struct ExchangeabilityTest {
  double statistic = 0.0;
  std::size_t df = 0;
  double p_value = 1.0;
  std::vector<std::string> coefficients_tested;
  std::vector<double> coefficients;
  // Supplementary: the source main effect.
  double d_coef = 0.0;
  double d_se = 0.0;
  double d_p_value = 1.0;
  std::size_t n_controls = 0;
};

// Regresses y on (1, f(x), d, d*f(x)) over all control rows, where f is the
// spec's transform (intercept ignored), and Wald-tests the interaction block
// with the model-based information matrix.
ExchangeabilityTest test_mean_exchangeability(const CompositeDataset& ds, const ModelSpec& spec,
                                              const GlmControl& glm = {});

// ---- bias under violated exchangeability -----------------------------------

struct BiasSpec {
  std::optional<double> bound;                                   // sup |b(x)|
  std::function<double(std::span<const double>)> b;             // b(x), optional
};

struct BiasBound {
  std::optional<double> lambda_estimate;
  std::optional<double> lambda_abs_bound;
  double mean_weight = 0.0;  // empirical mean of the weight factor
};

BiasBound bias_bound(const CompositeDataset& ds, const NuisanceSet& nuis, const BiasSpec& spec,
                     const EvalOptions& opts = {});

// ---- overlap ---------------------------------------------------------------

struct Distribution {
  double min = 0.0, q05 = 0.0, median = 0.0, q95 = 0.0, max = 0.0, mean = 0.0;
};

Distribution describe(std::vector<double> v);

struct OverlapReport {
  std::optional<Distribution> pi;
  std::optional<Distribution> p;
  std::optional<Distribution> pi_times_p;
  std::optional<Distribution> denominator;
  std::size_t p_trimmed = 0;
  std::size_t pi_trimmed = 0;
  std::size_t denominator_floored = 0;
  std::vector<std::size_t> flagged_rows;  // pi * p > 1 - denom_eps
  std::vector<std::string> notes;
};

OverlapReport overlap_diagnostics(const CompositeDataset& ds, const NuisanceSet& nuis,
                                  const EvalOptions& opts = {});

}  // namespace extctl
