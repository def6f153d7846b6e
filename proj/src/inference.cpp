#include "extctl/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "extctl/error.hpp"
#include "extctl/parallel.hpp"

namespace extctl {

std::string to_string(Sidedness s) {
  switch (s) {
    case Sidedness::two_sided: return "two_sided";
    case Sidedness::greater: return "greater";
    case Sidedness::less: return "less";
  }
  return "?";
}

Sidedness sidedness_from_string(const std::string& s) {
  if (s == "two_sided" || s == "two-sided" || s == "two") return Sidedness::two_sided;
  if (s == "greater") return Sidedness::greater;
  if (s == "less") return Sidedness::less;
  throw Error(ErrorCode::ConfigError, "unknown sidedness '" + s + "'");
}

std::string to_string(VarianceMethod m) {
  return m == VarianceMethod::bootstrap ? "bootstrap" : "influence_function";
}

VarianceMethod variance_method_from_string(const std::string& s) {
  if (s == "if" || s == "influence_function") return VarianceMethod::influence_function;
  if (s == "bootstrap") return VarianceMethod::bootstrap;
  throw Error(ErrorCode::ConfigError, "unknown variance method '" + s + "'");
}

double if_variance(const IFVector& ifv) {
  const auto n = static_cast<double>(ifv.values.size());
  if (n == 0) return 0.0;
  return ifv.values.squaredNorm() / n / n;
}

InferenceResult test(const Estimate& est, double variance, double null_value, Sidedness side,
                     double level) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw Error(ErrorCode::DegenerateVariance, "variance must be positive and finite");
  }
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::ConfigError, "level must be in (0, 1)");
  const boost::math::normal_distribution<double> N;
  InferenceResult r;
  r.estimate = est;
  r.variance = variance;
  r.se = std::sqrt(variance);
  r.level = level;
  r.null_value = null_value;
  r.sidedness = side;
  const double z = (est.point - null_value) / r.se;
  switch (side) {
    case Sidedness::greater: r.p_value = boost::math::cdf(boost::math::complement(N, z)); break;
    case Sidedness::less: r.p_value = boost::math::cdf(N, z); break;
    case Sidedness::two_sided:
      r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(N, std::abs(z))));
      break;
  }
  const double crit = boost::math::quantile(N, 0.5 + level / 2.0);
  r.ci_lo = est.point - crit * r.se;
  r.ci_hi = est.point + crit * r.se;
  return r;
}

namespace {

// Linear-interpolation quantile of sorted data.
double quantile_sorted(const std::vector<double>& s, double prob) {
  if (s.empty()) return std::nan("");
  const double h = prob * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

std::vector<std::size_t> canonical_order(const CompositeDataset& ds) {
  std::vector<std::size_t> idx(ds.n());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto& x = ds.x();
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (ds.d()[a] != ds.d()[b]) return ds.d()[a] < ds.d()[b];
    if (ds.t()[a] != ds.t()[b]) return ds.t()[a] < ds.t()[b];
    const auto ia = static_cast<Eigen::Index>(a);
    const auto ib = static_cast<Eigen::Index>(b);
    if (ds.y()(ia) != ds.y()(ib)) return ds.y()(ia) < ds.y()(ib);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (x(ia, j) != x(ib, j)) return x(ia, j) < x(ib, j);
    }
    return false;
  });
  return idx;
}

}  // namespace

BootstrapResult bootstrap(const CompositeDataset& ds, const Statistic& stat,
                          const BootstrapOptions& opts) {
  if (opts.B < 2) throw Error(ErrorCode::ConfigError, "bootstrap needs B >= 2");
  const auto order = canonical_order(ds);

  std::vector<std::size_t> groups[2];
  if (opts.stratify_by_source) {
    for (auto i : order) groups[ds.d()[i]].push_back(i);
  } else {
    groups[0] = order;
  }

  std::vector<double> values(opts.B, 0.0);
  std::vector<char> ok(opts.B, 0);
  parallel_for(opts.B, opts.jobs, [&](std::size_t b) {
    std::mt19937_64 rng(derive_seed(opts.seed, b));
    std::vector<std::size_t> pick;
    pick.reserve(ds.n());
    for (const auto& g : groups) {
      if (g.empty()) continue;
      std::uniform_int_distribution<std::size_t> u(0, g.size() - 1);
      for (std::size_t k = 0; k < g.size(); ++k) pick.push_back(g[u(rng)]);
    }
    try {
      const double v = stat(ds.subset(pick));
      if (std::isfinite(v)) {
        values[b] = v;
        ok[b] = 1;
      }
    } catch (const Error&) {
    }
  });

  BootstrapResult out;
  out.B = opts.B;
  for (std::size_t b = 0; b < opts.B; ++b) {
    if (ok[b]) {
      out.draws.push_back(values[b]);
    } else {
      ++out.failures;
    }
  }
  if (static_cast<double>(out.failures) > opts.max_failure_rate * static_cast<double>(opts.B)) {
    throw Error(ErrorCode::ReplicateFailure,
                std::to_string(out.failures) + " of " + std::to_string(opts.B) +
                    " bootstrap replicates failed");
  }
  if (out.draws.size() < 2) throw Error(ErrorCode::ReplicateFailure, "fewer than two usable replicates");
  const double m = std::accumulate(out.draws.begin(), out.draws.end(), 0.0) /
                   static_cast<double>(out.draws.size());
  double ss = 0.0;
  for (double v : out.draws) ss += (v - m) * (v - m);
  out.variance = ss / static_cast<double>(out.draws.size() - 1);
  auto sorted = out.draws;
  std::sort(sorted.begin(), sorted.end());
  const double a = (1.0 - opts.level) / 2.0;
  out.ci_lo = quantile_sorted(sorted, a);
  out.ci_hi = quantile_sorted(sorted, 1.0 - a);
  return out;
}

Estimate fit_and_estimate(const CompositeDataset& ds, const EstimatorConfig& cfg) {
  auto nuis = fit_nuisances(ds, cfg.nuisance);
  if (cfg.method == Method::trial_based) nuis = baseline_nuisances(ds, nuis, cfg.nuisance);
  return estimate(ds, nuis, cfg.estimand, cfg.method, cfg.eval);
}

BootstrapResult bootstrap_variance(const CompositeDataset& ds, const EstimatorConfig& cfg,
                                   const BootstrapOptions& opts) {
  if (opts.B < 100) throw Error(ErrorCode::ConfigError, "bootstrap variance needs B >= 100");
  return bootstrap(
      ds, [&cfg](const CompositeDataset& bs) { return fit_and_estimate(bs, cfg).point; }, opts);
}

ExchangeabilityTest test_mean_exchangeability(const CompositeDataset& ds, const ModelSpec& spec,
                                              const GlmControl& glm) {
  std::vector<std::size_t> rows;
  std::size_t c1 = 0, c0 = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (ds.t()[i] != 0) continue;
    rows.push_back(i);
    (ds.d()[i] == 1 ? c1 : c0)++;
  }
  if (c1 == 0) throw Error(ErrorCode::EmptyCell, "no trial controls (d=1, t=0) for the exchangeability test");
  if (c0 == 0) throw Error(ErrorCode::EmptyCell, "no external controls (d=0) for the exchangeability test");

  const std::size_t m = spec.terms.size();
  const auto cols = static_cast<Eigen::Index>(2 * m + 2);
  const auto nr = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd X(nr, cols);
  Eigen::VectorXd y(nr);
  std::vector<std::string> names{"(intercept)"};
  for (const auto& t : spec.terms) names.push_back(t.to_string());
  names.push_back("d");
  for (const auto& t : spec.terms) names.push_back("d:" + t.to_string());

  for (Eigen::Index r = 0; r < nr; ++r) {
    const auto i = rows[static_cast<std::size_t>(r)];
    const auto ii = static_cast<Eigen::Index>(i);
    const double d = ds.d()[i];
    Eigen::VectorXd xv = ds.x().row(ii).transpose();
    std::span<const double> xs(xv.data(), static_cast<std::size_t>(xv.size()));
    X(r, 0) = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double f = spec.terms[j].eval(xs);
      X(r, static_cast<Eigen::Index>(1 + j)) = f;
      X(r, static_cast<Eigen::Index>(2 + m + j)) = d * f;
    }
    X(r, static_cast<Eigen::Index>(1 + m)) = d;
    y(r) = ds.y()(ii);
  }

  const Family fam = outcome_family(ds.outcome_kind());
  const auto fit = fit_glm(X, y, fam, std::nullopt, glm, names);

  // Model-based information.
  Eigen::MatrixXd info;
  const Eigen::VectorXd eta = X * fit.coef;
  if (fam == Family::identity) {
    const double rss = (y - eta).squaredNorm();
    const double dof = static_cast<double>(nr - cols);
    if (dof <= 0) throw Error(ErrorCode::DegenerateVariance, "no residual degrees of freedom");
    const double s2 = rss / dof;
    info = X.transpose() * X / (s2 > 0 ? s2 : std::numeric_limits<double>::min());
  } else {
    Eigen::VectorXd w(nr);
    for (Eigen::Index r = 0; r < nr; ++r) {
      const double mu = expit(eta(r));
      w(r) = mu * (1.0 - mu);
    }
    info = X.transpose() * w.asDiagonal() * X;
  }
  const Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(cols, cols));

  ExchangeabilityTest out;
  out.df = m;
  out.n_controls = rows.size();
  const Eigen::Index s = static_cast<Eigen::Index>(2 + m);
  const auto mi = static_cast<Eigen::Index>(m);
  if (m > 0) {
    const Eigen::VectorXd beta = fit.coef.segment(s, mi);
    const Eigen::MatrixXd V = cov.block(s, s, mi, mi);
    out.statistic = beta.dot(V.ldlt().solve(beta));
    if (!(out.statistic > 0.0)) out.statistic = 0.0;
    const boost::math::chi_squared_distribution<double> chi(static_cast<double>(m));
    out.p_value = out.statistic > 0 ? boost::math::cdf(boost::math::complement(chi, out.statistic)) : 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      out.coefficients_tested.push_back(names[2 + m + j]);
      out.coefficients.push_back(beta(static_cast<Eigen::Index>(j)));
    }
  }
  const auto di = static_cast<Eigen::Index>(1 + m);
  out.d_coef = fit.coef(di);
  out.d_se = std::sqrt(std::max(0.0, cov(di, di)));
  if (out.d_se > 0) {
    const boost::math::normal_distribution<double> N;
    out.d_p_value = std::min(
        1.0, 2.0 * boost::math::cdf(boost::math::complement(N, std::abs(out.d_coef / out.d_se))));
  }
  return out;
}

BiasBound bias_bound(const CompositeDataset& ds, const NuisanceSet& nuis, const BiasSpec& spec,
                     const EvalOptions& opts) {
  const auto v = evaluate(ds, nuis, opts);
  const double q = ds.q_hat();
  const auto n = static_cast<Eigen::Index>(ds.n());
  double sw = 0.0, sb = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double den = v.pi(i) * (1.0 - v.p(i)) + (1.0 - v.pi(i)) * v.r(i);
    if (den < opts.denom_eps) den = opts.denom_eps;
    const double w = v.pi(i) / q * ((1.0 - v.pi(i)) * v.r(i) / den);
    sw += w;
    if (spec.b) {
      Eigen::VectorXd xv = ds.x().row(i).transpose();
      sb += w * spec.b(std::span<const double>(xv.data(), static_cast<std::size_t>(xv.size())));
    }
  }
  BiasBound out;
  out.mean_weight = sw / static_cast<double>(n);
  if (spec.b) out.lambda_estimate = sb / static_cast<double>(n);
  if (spec.bound) {
    if (*spec.bound < 0) throw Error(ErrorCode::ConfigError, "bias bound must be nonnegative");
    out.lambda_abs_bound = *spec.bound * out.mean_weight;
  }
  return out;
}

Distribution describe(std::vector<double> v) {
  Distribution d;
  if (v.empty()) return d;
  std::sort(v.begin(), v.end());
  d.min = v.front();
  d.max = v.back();
  d.q05 = quantile_sorted(v, 0.05);
  d.median = quantile_sorted(v, 0.5);
  d.q95 = quantile_sorted(v, 0.95);
  d.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  return d;
}

OverlapReport overlap_diagnostics(const CompositeDataset& ds, const NuisanceSet& nuis,
                                  const EvalOptions& opts) {
  const auto v = evaluate(ds, nuis, opts);
  OverlapReport out;
  out.p_trimmed = v.p_trimmed;
  out.pi_trimmed = v.pi_trimmed;
  const auto n = static_cast<std::size_t>(ds.n());
  std::vector<double> pis, ps, prod, dens;
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const double pi = v.pi(i);
    const double p = v.p(i);
    pis.push_back(pi);
    ps.push_back(p);
    prod.push_back(pi * p);
    const double den = pi * (1.0 - p) + (1.0 - pi) * v.r(i);
    dens.push_back(den);
    if (den < opts.denom_eps) ++out.denominator_floored;
    if (v.has_pi && pi * p > 1.0 - opts.denom_eps) out.flagged_rows.push_back(k);
  }
  if (v.has_pi) {
    out.pi = describe(pis);
    out.denominator = describe(dens);
  } else {
    out.notes.push_back(
        "no external rows: pi(X) = 1 and external weights are undefined; use the trial-based estimator");
  }
  if (v.has_p) {
    out.p = describe(ps);
  } else {
    out.notes.push_back("treated-only trial: p(X) = 1, so pi*p < 1 iff pi < 1");
  }
  if (v.has_pi) out.pi_times_p = describe(prod);
  if (!out.flagged_rows.empty()) {
    out.notes.push_back(std::to_string(out.flagged_rows.size()) +
                        " rows violate the relaxed overlap condition pi*p < 1");
  }
  return out;
}

}  // namespace extctl
