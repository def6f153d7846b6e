#pragma once

// Generalized linear models used for every working model: identity-link
// linear regression and logit-link binomial regression fit by IRLS.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace extctl {

enum class Family { identity, logit };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

// One column of a covariate transform. Indices are 0-based covariate columns.
struct Term {
  enum class Kind { raw, pow, inter, log1pexp };
  Kind kind = Kind::raw;
  std::size_t i = 0;
  std::size_t j = 0;  // second covariate for inter
  int power = 1;      // exponent for pow

  double eval(std::span<const double> x) const;
  std::string to_string() const;
  bool operator==(const Term&) const = default;
};

// Parses "raw(0)", "pow(1,2)", "inter(0,1)", "log1pexp(2)". Covariate names
// may stand in for indices when `names` is supplied.
Term parse_term(const std::string& text, const std::vector<std::string>& names = {});

struct ModelSpec {
  Family family = Family::identity;
  std::vector<Term> terms;
  bool include_intercept = true;

  std::size_t n_columns() const { return terms.size() + (include_intercept ? 1 : 0); }
  std::vector<std::string> column_names() const;
  std::string to_string() const;

  // Intercept plus raw(0..k-1).
  static ModelSpec linear(Family family, std::size_t k);
};

Eigen::MatrixXd design_matrix(const ModelSpec& spec, const Eigen::MatrixXd& x);
void design_row(const ModelSpec& spec, std::span<const double> x, Eigen::Ref<Eigen::VectorXd> out);

struct GlmControl {
  double tol = 1e-10;         // sup-norm of the score at convergence
  int max_iter = 100;
  double separation_bound = 30.0;  // |coef| on the logit scale
  double rank_tol = 1e-10;    // relative pivot threshold
};

struct FittedGLM {
  ModelSpec spec;
  Eigen::VectorXd coef;
  bool converged = false;
  int iterations = 0;
  double loglik = 0.0;
  double score_norm = 0.0;  // sup-norm of the weighted score at coef
  std::size_t n_obs = 0;

  double linear_predictor(std::span<const double> x) const;
  // Inverse link applied to the linear predictor; no trimming.
  double predict(std::span<const double> x) const;
};

// Fits `response ~ design` with optional prior weights. The spec carried on
// the result is `spec` (used only for later prediction); the design matrix
// must already be built from it.
FittedGLM fit_glm(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, Family family,
                  const std::optional<Eigen::VectorXd>& weights = std::nullopt,
                  const GlmControl& control = {},
                  const std::vector<std::string>& column_names = {});

// Convenience: builds the design from `spec` and the covariate rows in `x`.
FittedGLM fit_glm(const ModelSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& response,
                  const std::optional<Eigen::VectorXd>& weights = std::nullopt,
                  const GlmControl& control = {});

// Score X'W(y - mu) of the (weighted) log-likelihood at `coef`.
Eigen::VectorXd glm_score(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                          Family family, const Eigen::VectorXd& coef,
                          const std::optional<Eigen::VectorXd>& weights = std::nullopt);

double expit(double eta);

// Counts how many predictions were pulled into [eps, 1 - eps].
struct TrimCounter {
  std::size_t count = 0;
};

double trim_probability(double p, double eps, TrimCounter& counter);

}  // namespace extctl
