#pragma once

// Working models: outcome means m1/m0, treatment propensity p (within the
// trial), selection propensity pi = pr(D=1 | X), and the control-outcome
// variance ratio r(X) = var(Y0 | X, D=1) / var(Y0 | X, D=0).

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "extctl/dataset.hpp"
#include "extctl/glm.hpp"

namespace extctl {

// `zero` is the r = 0 special case that turns the full-data estimators into
// their trial-outcome-only comparators.
enum class RatioMode { known_one, constant, loglinear, zero };

std::string to_string(RatioMode m);
RatioMode ratio_mode_from_string(const std::string& s);

struct VarianceRatioModel {
  RatioMode mode = RatioMode::known_one;
  // constant: {r}; loglinear: coefficients of log r(x) on `spec`'s design.
  Eigen::VectorXd params;
  ModelSpec spec;

  // Trial-control variance V1(x), when the mode fits one.
  enum class V1Kind { none, constant, loglinear } v1_kind = V1Kind::none;
  Eigen::VectorXd v1_coef;  // log-variance regression on trial controls
  double v1_scale = 1.0;    // constant V1, or smearing factor for loglinear

  double predict(std::span<const double> x) const;
  std::optional<double> predict_v1(std::span<const double> x) const;
};

struct NuisanceConfig {
  // Unset specs default to intercept + every covariate, with the outcome
  // family chosen from the outcome kind.
  std::optional<ModelSpec> m1;
  std::optional<ModelSpec> m0;
  std::optional<ModelSpec> p;
  std::optional<ModelSpec> pi;
  std::optional<ModelSpec> ratio;  // transform for the loglinear variance fits

  RatioMode ratio_mode = RatioMode::loglinear;
  bool pool_controls = true;
  bool treated_only = false;
  double var_floor = 1e-8;
  GlmControl glm;
};

struct NuisanceSet {
  std::optional<FittedGLM> m1;  // absent in treated-only mode
  FittedGLM m0;
  std::optional<FittedGLM> p;   // absent => p == 1 (treated-only trial)
  std::optional<FittedGLM> pi;  // absent => no external rows
  VarianceRatioModel r;
  bool m0_pooled = true;
  bool treated_only = false;
  OutcomeKind outcome_kind = OutcomeKind::continuous;

  // Stable hex digest of every fitted coefficient and mode.
  std::string fingerprint() const;
};

// Row filters used by the fits.
std::vector<std::size_t> rows_where(const CompositeDataset& ds, int d, int t);

FittedGLM fit_m1(const CompositeDataset& ds, const ModelSpec& spec, const GlmControl& glm = {});
FittedGLM fit_m0(const CompositeDataset& ds, const ModelSpec& spec, bool pool_controls,
                 const GlmControl& glm = {});
std::pair<FittedGLM, FittedGLM> fit_outcome_models(const CompositeDataset& ds,
                                                   const ModelSpec& spec1, const ModelSpec& spec0,
                                                   bool pool_controls, const GlmControl& glm = {});
FittedGLM fit_treatment_ps(const CompositeDataset& ds, const ModelSpec& spec,
                           const GlmControl& glm = {});
FittedGLM fit_selection_ps(const CompositeDataset& ds, const ModelSpec& spec,
                           const GlmControl& glm = {});
VarianceRatioModel fit_variance_ratio(const CompositeDataset& ds, const FittedGLM& m0,
                                      RatioMode mode, const ModelSpec& spec,
                                      double var_floor = 1e-8);

double predict(const FittedGLM& model, std::span<const double> x);
double predict(const VarianceRatioModel& model, std::span<const double> x);

// Fits every model the configuration needs. `log` collects notes such as
// forced ratio modes.
NuisanceSet fit_nuisances(const CompositeDataset& ds, const NuisanceConfig& cfg,
                          std::vector<std::string>* log = nullptr);

// Comparator set: same m1, p, pi; m0 refit on trial controls; r == 0.
NuisanceSet baseline_nuisances(const CompositeDataset& ds, const NuisanceSet& full,
                               const NuisanceConfig& cfg);

ModelSpec default_spec(const CompositeDataset& ds, Family family);
Family outcome_family(OutcomeKind kind);

struct EvalOptions {
  double trim_eps = 1e-3;
  double denom_eps = 1e-6;
};

// Per-row fitted values, aligned to dataset rows.
struct NuisanceValues {
  Eigen::VectorXd m1;  // NaN when m1 absent
  Eigen::VectorXd m0;
  Eigen::VectorXd p;   // trimmed; 1 when absent
  Eigen::VectorXd pi;  // trimmed; 1 when absent
  Eigen::VectorXd r;
  std::optional<Eigen::VectorXd> v1;
  std::size_t p_trimmed = 0;
  std::size_t pi_trimmed = 0;
  bool has_m1 = false;
  bool has_p = false;
  bool has_pi = false;
  std::string fingerprint;
};

NuisanceValues evaluate(const CompositeDataset& ds, const NuisanceSet& nuis,
                        const EvalOptions& opts = {});

}  // namespace extctl
