#include "extctl/glm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "extctl/error.hpp"

namespace extctl {

std::string to_string(Family f) { return f == Family::identity ? "identity" : "logit"; }

Family family_from_string(const std::string& s) {
  if (s == "identity" || s == "gaussian" || s == "linear") return Family::identity;
  if (s == "logit" || s == "binomial" || s == "logistic") return Family::logit;
  throw Error(ErrorCode::ConfigError, "unknown GLM family '" + s + "'");
}

namespace {

double log1pexp(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

std::string trim_copy(std::string s) {
  auto notspace = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
  return s;
}

}  // namespace

double expit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double Term::eval(std::span<const double> x) const {
  switch (kind) {
    case Kind::raw: return x[i];
    case Kind::pow: return std::pow(x[i], power);
    case Kind::inter: return x[i] * x[j];
    case Kind::log1pexp: return log1pexp(x[i]);
  }
  return 0.0;
}

std::string Term::to_string() const {
  switch (kind) {
    case Kind::raw: return "raw(" + std::to_string(i) + ")";
    case Kind::pow: return "pow(" + std::to_string(i) + "," + std::to_string(power) + ")";
    case Kind::inter: return "inter(" + std::to_string(i) + "," + std::to_string(j) + ")";
    case Kind::log1pexp: return "log1pexp(" + std::to_string(i) + ")";
  }
  return "?";
}

Term parse_term(const std::string& text, const std::vector<std::string>& names) {
  const auto s = trim_copy(text);
  const auto open = s.find('(');
  if (open == std::string::npos || s.back() != ')') {
    throw Error(ErrorCode::ConfigError, "malformed term '" + text + "'");
  }
  const auto head = trim_copy(s.substr(0, open));
  std::vector<std::string> args;
  {
    std::string inner = s.substr(open + 1, s.size() - open - 2);
    std::size_t start = 0;
    while (true) {
      auto comma = inner.find(',', start);
      args.push_back(trim_copy(inner.substr(start, comma == std::string::npos ? std::string::npos
                                                                            : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }

  auto to_int = [&](const std::string& a) -> long {
    long v = -1;
    auto [p, ec] = std::from_chars(a.data(), a.data() + a.size(), v);
    if (ec == std::errc() && p == a.data() + a.size()) return v;
    return std::numeric_limits<long>::min();
  };
  auto index = [&](const std::string& a) -> std::size_t {
    const long v = to_int(a);
    if (v != std::numeric_limits<long>::min()) {
      if (v < 0 || (!names.empty() && static_cast<std::size_t>(v) >= names.size())) {
        throw Error(ErrorCode::ConfigError, "covariate index out of range in '" + text + "'");
      }
      return static_cast<std::size_t>(v);
    }
    auto it = std::find(names.begin(), names.end(), a);
    if (it == names.end()) {
      throw Error(ErrorCode::ConfigError, "unknown covariate '" + a + "' in term '" + text + "'");
    }
    return static_cast<std::size_t>(it - names.begin());
  };

  Term t;
  if (head == "raw" && args.size() == 1) {
    t.kind = Term::Kind::raw;
    t.i = index(args[0]);
  } else if (head == "pow" && args.size() == 2) {
    t.kind = Term::Kind::pow;
    t.i = index(args[0]);
    const long k = to_int(args[1]);
    if (k < 1 || k > 16) throw Error(ErrorCode::ConfigError, "bad exponent in '" + text + "'");
    t.power = static_cast<int>(k);
  } else if (head == "inter" && args.size() == 2) {
    t.kind = Term::Kind::inter;
    t.i = index(args[0]);
    t.j = index(args[1]);
  } else if (head == "log1pexp" && args.size() == 1) {
    t.kind = Term::Kind::log1pexp;
    t.i = index(args[0]);
  } else {
    throw Error(ErrorCode::ConfigError, "unknown term '" + text + "'");
  }
  return t;
}

std::vector<std::string> ModelSpec::column_names() const {
  std::vector<std::string> out;
  if (include_intercept) out.emplace_back("(intercept)");
  for (const auto& t : terms) out.push_back(t.to_string());
  return out;
}

std::string ModelSpec::to_string() const {
  std::string s = extctl::to_string(family) + ":";
  bool first = true;
  for (const auto& c : column_names()) {
    s += first ? " " : " + ";
    s += c;
    first = false;
  }
  return s;
}

ModelSpec ModelSpec::linear(Family family, std::size_t k) {
  ModelSpec s;
  s.family = family;
  for (std::size_t j = 0; j < k; ++j) s.terms.push_back({Term::Kind::raw, j, 0, 1});
  return s;
}

void design_row(const ModelSpec& spec, std::span<const double> x, Eigen::Ref<Eigen::VectorXd> out) {
  Eigen::Index c = 0;
  if (spec.include_intercept) out(c++) = 1.0;
  for (const auto& t : spec.terms) out(c++) = t.eval(x);
}

Eigen::MatrixXd design_matrix(const ModelSpec& spec, const Eigen::MatrixXd& x) {
  const auto n = x.rows();
  const auto p = static_cast<Eigen::Index>(spec.n_columns());
  for (const auto& t : spec.terms) {
    if (static_cast<Eigen::Index>(std::max(t.i, t.j)) >= x.cols()) {
      throw Error(ErrorCode::ConfigError,
                  "term " + t.to_string() + " refers to a covariate that does not exist");
    }
  }
  Eigen::MatrixXd out(n, p);
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  Eigen::VectorXd buf(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) row[static_cast<std::size_t>(j)] = x(i, j);
    design_row(spec, row, buf);
    out.row(i) = buf.transpose();
  }
  return out;
}

double FittedGLM::linear_predictor(std::span<const double> x) const {
  Eigen::VectorXd z(coef.size());
  design_row(spec, x, z);
  return z.dot(coef);
}

double FittedGLM::predict(std::span<const double> x) const {
  const double eta = linear_predictor(x);
  return spec.family == Family::logit ? expit(eta) : eta;
}

double trim_probability(double p, double eps, TrimCounter& counter) {
  if (p < eps) {
    ++counter.count;
    return eps;
  }
  if (p > 1.0 - eps) {
    ++counter.count;
    return 1.0 - eps;
  }
  return p;
}

namespace {

Eigen::VectorXd prior_weights(const std::optional<Eigen::VectorXd>& weights, Eigen::Index n) {
  if (!weights) return Eigen::VectorXd::Ones(n);
  if (weights->size() != n) {
    throw Error(ErrorCode::ConfigError, "weight vector length does not match design rows");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite((*weights)(i)) || (*weights)(i) < 0.0) {
      throw Error(ErrorCode::ConfigError, "weights must be finite and non-negative");
    }
  }
  return *weights;
}

std::vector<std::string> names_or_default(const std::vector<std::string>& names, Eigen::Index p) {
  if (static_cast<Eigen::Index>(names.size()) == p) return names;
  std::vector<std::string> out;
  for (Eigen::Index j = 0; j < p; ++j) out.push_back("col" + std::to_string(j));
  return out;
}

void check_rank(const Eigen::MatrixXd& a, double rank_tol, const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(rank_tol);
  const auto p = a.cols();
  if (qr.rank() >= p) return;
  const auto& perm = qr.colsPermutation().indices();
  std::vector<std::string> cols;
  std::string list;
  for (Eigen::Index j = qr.rank(); j < p; ++j) {
    const auto& nm = names[static_cast<std::size_t>(perm(j))];
    cols.push_back(nm);
    list += (list.empty() ? "" : ", ") + nm;
  }
  Error e(ErrorCode::RankDeficient, "design matrix is rank deficient; collinear: " + list);
  e.columns = std::move(cols);
  throw e;
}

double logit_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += w(i) * (y(i) * eta(i) - log1pexp(eta(i)));
  return ll;
}

}  // namespace

Eigen::VectorXd glm_score(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                          Family family, const Eigen::VectorXd& coef,
                          const std::optional<Eigen::VectorXd>& weights) {
  const Eigen::VectorXd w = prior_weights(weights, design.rows());
  const Eigen::VectorXd eta = design * coef;
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double mu = family == Family::logit ? expit(eta(i)) : eta(i);
    resid(i) = w(i) * (response(i) - mu);
  }
  return design.transpose() * resid;
}

FittedGLM fit_glm(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, Family family,
                  const std::optional<Eigen::VectorXd>& weights, const GlmControl& control,
                  const std::vector<std::string>& column_names) {
  const auto n = design.rows();
  const auto p = design.cols();
  if (response.size() != n) {
    throw Error(ErrorCode::ConfigError, "design rows and response length differ");
  }
  if (n == 0) throw Error(ErrorCode::EmptyCell, "no rows to fit");
  const Eigen::VectorXd w = prior_weights(weights, n);
  const auto names = names_or_default(column_names, p);

  FittedGLM fit;
  fit.spec.family = family;
  fit.n_obs = static_cast<std::size_t>(n);
  const Eigen::VectorXd sw = w.array().sqrt();

  if (family == Family::identity) {
    const Eigen::MatrixXd a = sw.asDiagonal() * design;
    check_rank(a, control.rank_tol, names);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    fit.coef = qr.solve(sw.cwiseProduct(response));
    const Eigen::VectorXd resid = response - design * fit.coef;
    const double rss = resid.cwiseProduct(resid).dot(w);
    const double wsum = w.sum();
    fit.loglik = rss > 0.0 ? -0.5 * wsum * (std::log(2.0 * M_PI * rss / wsum) + 1.0)
                           : std::numeric_limits<double>::infinity();
    fit.score_norm = (design.transpose() * w.cwiseProduct(resid)).lpNorm<Eigen::Infinity>();
    fit.converged = true;
    fit.iterations = 1;
    return fit;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(response(i) >= 0.0 && response(i) <= 1.0)) {
      throw Error(ErrorCode::ConfigError, "logit response must lie in [0, 1]");
    }
  }
  check_rank(sw.asDiagonal() * design, control.rank_tol, names);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double ll = logit_loglik(eta, response, w);
  std::vector<double> trace;

  auto newton_step = [&](const Eigen::VectorXd& eta_now, Eigen::VectorXd& score) {
    Eigen::VectorXd rhs(n);
    Eigen::VectorXd sqw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = expit(eta_now(i));
      const double v = w(i) * mu * (1.0 - mu);
      sqw(i) = std::sqrt(v);
      rhs(i) = sqw(i) > 0.0 ? w(i) * (response(i) - mu) / sqw(i) : 0.0;
    }
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = w(i) * (response(i) - expit(eta_now(i)));
    score = design.transpose() * r;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sqw.asDiagonal() * design);
    return Eigen::VectorXd(qr.solve(rhs));
  };

  Eigen::VectorXd score(p);
  for (int iter = 1; iter <= control.max_iter; ++iter) {
    Eigen::VectorXd delta = newton_step(eta, score);
    const double snorm = score.lpNorm<Eigen::Infinity>();
    trace.push_back(snorm);
    if (snorm <= control.tol) {
      // Polish to machine precision so the solution does not depend on the
      // iteration at which the tolerance happened to be crossed.
      for (int k = 0; k < 3; ++k) {
        if (delta.lpNorm<Eigen::Infinity>() <=
            4.0 * std::numeric_limits<double>::epsilon() * (1.0 + beta.lpNorm<Eigen::Infinity>())) {
          break;
        }
        const Eigen::VectorXd beta_new = beta + delta;
        const Eigen::VectorXd eta_new = design * beta_new;
        Eigen::VectorXd score_new(p);
        const Eigen::VectorXd delta_new = newton_step(eta_new, score_new);
        if (score_new.lpNorm<Eigen::Infinity>() > std::max(control.tol, snorm)) break;
        beta = beta_new;
        eta = eta_new;
        delta = delta_new;
        score = score_new;
      }
      fit.coef = beta;
      fit.converged = true;
      fit.iterations = iter;
      fit.loglik = logit_loglik(eta, response, w);
      fit.score_norm = score.lpNorm<Eigen::Infinity>();
      return fit;
    }

    // Step halving on likelihood decrease.
    double step = 1.0;
    Eigen::VectorXd beta_new = beta + delta;
    Eigen::VectorXd eta_new = design * beta_new;
    double ll_new = logit_loglik(eta_new, response, w);
    for (int h = 0; h < 30 && !(ll_new >= ll - 1e-12 * std::abs(ll)); ++h) {
      step *= 0.5;
      beta_new = beta + step * delta;
      eta_new = design * beta_new;
      ll_new = logit_loglik(eta_new, response, w);
    }
    beta = beta_new;
    eta = eta_new;
    ll = ll_new;

    if (beta.lpNorm<Eigen::Infinity>() > control.separation_bound) {
      Error e(ErrorCode::SeparationDetected,
              "logit coefficients diverging (max |coef| > " +
                  std::to_string(control.separation_bound) + "); likely separation");
      e.trace = trace;
      throw e;
    }
  }

  Error e(ErrorCode::NonConvergence,
          "IRLS did not converge in " + std::to_string(control.max_iter) + " iterations");
  e.trace = trace;
  throw e;
}

FittedGLM fit_glm(const ModelSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& response,
                  const std::optional<Eigen::VectorXd>& weights, const GlmControl& control) {
  auto fit = fit_glm(design_matrix(spec, x), response, spec.family, weights, control,
                     spec.column_names());
  fit.spec = spec;
  return fit;
}

}  // namespace extctl
