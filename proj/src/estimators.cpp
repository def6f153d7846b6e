#include "extctl/estimators.hpp"

#include <cmath>
#include <string>

#include "extctl/error.hpp"

namespace extctl {

std::string to_string(Estimand e) {
  switch (e) {
    case Estimand::tau: return "tau";
    case Estimand::psi: return "psi";
    case Estimand::xi: return "xi";
  }
  return "?";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::trial_based: return "trial_based";
    case Method::full_data: return "full_data";
    case Method::treated_only: return "treated_only";
  }
  return "?";
}

Estimand estimand_from_string(const std::string& s) {
  if (s == "tau") return Estimand::tau;
  if (s == "psi") return Estimand::psi;
  if (s == "xi") return Estimand::xi;
  throw Error(ErrorCode::ConfigError, "unknown estimand '" + s + "'");
}

Method method_from_string(const std::string& s) {
  if (s == "trial_based" || s == "trial" || s == "baseline") return Method::trial_based;
  if (s == "full_data" || s == "full") return Method::full_data;
  if (s == "treated_only") return Method::treated_only;
  throw Error(ErrorCode::ConfigError, "unknown method '" + s + "'");
}

double weight_W(double pi_x, double p_x, double r_x, int d, int t, double denom_eps, bool* floored) {
  double den = pi_x * (1.0 - p_x) + (1.0 - pi_x) * r_x;
  if (floored) *floored = false;
  if (!(den >= denom_eps)) {
    den = denom_eps;
    if (floored) *floored = true;
  }
  const double num = d == 1 ? (1 - t) * pi_x : pi_x * r_x;
  return num / den;
}

namespace {

// Per-row pieces shared by the full-data moment functions.
struct Parts {
  NuisanceValues v;
  Eigen::VectorXd delta;  // m1 - m0
  Eigen::VectorXd aug;    // d t R1 / p - W R0
  std::size_t floored = 0;
  double q = 0.0;
};

void require_trial_arms(const CompositeDataset& ds) {
  if (ds.n1() == 0) throw Error(ErrorCode::EmptyCell, "no trial rows (d=1)");
  bool any_t = false;
  bool any_c = false;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (ds.d()[i] != 1) continue;
    (ds.t()[i] == 1 ? any_t : any_c) = true;
  }
  if (!any_t) throw Error(ErrorCode::EmptyCell, "trial has no treated units");
  if (!any_c) throw Error(ErrorCode::EmptyCell, "trial has no control units");
}

Parts full_parts(const CompositeDataset& ds, const NuisanceSet& nuis, const EvalOptions& opts,
                 bool needs_external) {
  if (needs_external && ds.n2() == 0) {
    throw Error(ErrorCode::OverlapNoExternal,
                "no external rows (d=0): full-data estimators are unavailable; use the trial-based estimator");
  }
  if (nuis.treated_only || !nuis.m1 || !nuis.p) {
    throw Error(ErrorCode::ConfigError, "full-data estimators need m1 and p (not treated-only nuisances)");
  }
  require_trial_arms(ds);
  Parts out;
  out.v = evaluate(ds, nuis, opts);
  // Without external rows the only admissible r is zero; pi is then 1.
  if (!out.v.has_pi && nuis.r.mode != RatioMode::zero) {
    throw Error(ErrorCode::OverlapNoExternal,
                "no external rows: selection propensity unavailable; use the trial-based estimator");
  }
  const auto n = static_cast<Eigen::Index>(ds.n());
  out.q = ds.q_hat();
  out.delta = out.v.m1 - out.v.m0;
  out.aug.resize(n);
  const auto& y = ds.y();
  for (Eigen::Index i = 0; i < n; ++i) {
    const int d = ds.d()[static_cast<std::size_t>(i)];
    const int t = ds.t()[static_cast<std::size_t>(i)];
    bool fl = false;
    const double w = weight_W(out.v.pi(i), out.v.p(i), out.v.r(i), d, t, opts.denom_eps, &fl);
    out.floored += fl ? 1 : 0;
    double a = 0.0;
    if (d == 1 && t == 1) a += (y(i) - out.v.m1(i)) / out.v.p(i);
    if (t == 0) a -= w * (y(i) - out.v.m0(i));
    out.aug(i) = a;
  }
  return out;
}

void check_method(const NuisanceSet& nuis, Method method) {
  if (method == Method::trial_based) {
    if (nuis.m0_pooled || nuis.r.mode != RatioMode::zero) {
      throw Error(ErrorCode::ConfigError,
                  "trial-based comparator needs unpooled m0 and r == 0 (see baseline_nuisances)");
    }
  } else if (method != Method::full_data) {
    throw Error(ErrorCode::ConfigError, "method " + to_string(method) + " is only defined for tau");
  }
}

Estimate make_estimate(const CompositeDataset& ds, Estimand e, Method m, double point,
                       const NuisanceValues& v, std::size_t floored) {
  Estimate est;
  est.estimand = e;
  est.method = m;
  est.point = point;
  est.n_used = ds.n();
  est.nuisance_fingerprint = v.fingerprint;
  est.trim_count = v.p_trimmed + v.pi_trimmed + floored;
  if (!std::isfinite(point)) {
    throw Error(ErrorCode::InvariantViolation, to_string(e) + " estimate is not finite");
  }
  return est;
}

// Per-row moment (before centering) for the trial-only tau.
Eigen::VectorXd trial_moment(const CompositeDataset& ds, const NuisanceValues& v) {
  const auto n = static_cast<Eigen::Index>(ds.n());
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (ds.d()[k] != 1) continue;
    const double y = ds.y()(i);
    double val = v.m1(i) - v.m0(i);
    if (ds.t()[k] == 1) {
      val += (y - v.m1(i)) / v.p(i);
    } else {
      val -= (y - v.m0(i)) / (1.0 - v.p(i));
    }
    phi(i) = val;
  }
  return phi;
}

NuisanceValues trial_values(const CompositeDataset& ds, const NuisanceSet& nuis,
                            const EvalOptions& opts) {
  if (nuis.m0_pooled) {
    throw Error(ErrorCode::ConfigError, "trial-based tau needs m0 fit on trial controls only");
  }
  if (!nuis.m1 || !nuis.p) throw Error(ErrorCode::ConfigError, "trial-based tau needs m1 and p");
  require_trial_arms(ds);
  return evaluate(ds, nuis, opts);
}

NuisanceValues treated_only_values(const CompositeDataset& ds, const NuisanceSet& nuis,
                                   const EvalOptions& opts) {
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (ds.d()[i] == 1 && ds.t()[i] == 0) {
      Error e(ErrorCode::InvariantViolation,
              "treated-only estimator requires t=1 on every trial row");
      e.row = i;
      throw e;
    }
  }
  if (ds.n1() == 0) throw Error(ErrorCode::EmptyCell, "no trial rows (d=1)");
  auto v = evaluate(ds, nuis, opts);
  if (!v.has_pi) throw Error(ErrorCode::OverlapNoExternal, "treated-only estimator needs external controls");
  return v;
}

Eigen::VectorXd treated_only_moment(const CompositeDataset& ds, const NuisanceValues& v) {
  const auto n = static_cast<Eigen::Index>(ds.n());
  Eigen::VectorXd phi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double res = ds.y()(i) - v.m0(i);
    phi(i) = ds.d()[static_cast<std::size_t>(i)] == 1 ? res : -v.pi(i) / (1.0 - v.pi(i)) * res;
  }
  return phi;
}

}  // namespace

Estimate estimate_tau_trial(const CompositeDataset& ds, const NuisanceSet& nuis,
                            const EvalOptions& opts) {
  const auto v = trial_values(ds, nuis, opts);
  const double point = trial_moment(ds, v).sum() / static_cast<double>(ds.n1());
  auto est = make_estimate(ds, Estimand::tau, Method::trial_based, point, v, 0);
  est.trim_count = v.p_trimmed;
  est.n_used = ds.n1();
  return est;
}

Estimate estimate_tau_full(const CompositeDataset& ds, const NuisanceSet& nuis,
                           const EvalOptions& opts) {
  const auto parts = full_parts(ds, nuis, opts, true);
  double s = 0.0;
  for (Eigen::Index i = 0; i < parts.aug.size(); ++i) {
    if (ds.d()[static_cast<std::size_t>(i)] == 1) s += parts.delta(i);
    s += parts.aug(i);
  }
  const double point = s / static_cast<double>(ds.n()) / parts.q;
  return make_estimate(ds, Estimand::tau, Method::full_data, point, parts.v, parts.floored);
}

Estimate estimate_tau_treated_only(const CompositeDataset& ds, const NuisanceSet& nuis,
                                   const EvalOptions& opts) {
  const auto v = treated_only_values(ds, nuis, opts);
  const double point = treated_only_moment(ds, v).mean() / ds.q_hat();
  return make_estimate(ds, Estimand::tau, Method::treated_only, point, v, 0);
}

Estimate estimate_psi(const CompositeDataset& ds, const NuisanceSet& nuis, Method method,
                      const EvalOptions& opts) {
  check_method(nuis, method);
  const auto parts = full_parts(ds, nuis, opts, method == Method::full_data);
  const double point =
      (parts.delta.array() + parts.aug.array() / parts.v.pi.array()).mean();
  return make_estimate(ds, Estimand::psi, method, point, parts.v, parts.floored);
}

Estimate estimate_xi(const CompositeDataset& ds, const NuisanceSet& nuis, Method method,
                     const EvalOptions& opts) {
  check_method(nuis, method);
  if (ds.n2() == 0) throw Error(ErrorCode::EmptyCell, "xi needs external rows (1 - q > 0)");
  const auto parts = full_parts(ds, nuis, opts, method == Method::full_data);
  double s = 0.0;
  for (Eigen::Index i = 0; i < parts.aug.size(); ++i) {
    if (ds.d()[static_cast<std::size_t>(i)] == 0) s += parts.delta(i);
    s += (1.0 - parts.v.pi(i)) / parts.v.pi(i) * parts.aug(i);
  }
  const double point = s / static_cast<double>(ds.n()) / (1.0 - parts.q);
  return make_estimate(ds, Estimand::xi, method, point, parts.v, parts.floored);
}

Estimate estimate(const CompositeDataset& ds, const NuisanceSet& nuis, Estimand estimand,
                  Method method, const EvalOptions& opts) {
  switch (estimand) {
    case Estimand::tau:
      if (method == Method::trial_based) return estimate_tau_trial(ds, nuis, opts);
      if (method == Method::treated_only) return estimate_tau_treated_only(ds, nuis, opts);
      return estimate_tau_full(ds, nuis, opts);
    case Estimand::psi: return estimate_psi(ds, nuis, method, opts);
    case Estimand::xi: return estimate_xi(ds, nuis, method, opts);
  }
  throw Error(ErrorCode::ConfigError, "unknown estimand");
}

IFVector influence_values(const CompositeDataset& ds, const NuisanceSet& nuis, Estimand estimand,
                          Method method, double point, const EvalOptions& opts) {
  IFVector out;
  out.estimand = estimand;
  out.method = method;
  const auto n = static_cast<Eigen::Index>(ds.n());
  out.values.resize(n);
  const double q = ds.q_hat();

  if (estimand == Estimand::tau && method == Method::trial_based) {
    const auto v = trial_values(ds, nuis, opts);
    const auto phi = trial_moment(ds, v);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int d = ds.d()[static_cast<std::size_t>(i)];
      out.values(i) = d == 1 ? (phi(i) - point) / q : 0.0;
    }
  } else if (estimand == Estimand::tau && method == Method::treated_only) {
    const auto v = treated_only_values(ds, nuis, opts);
    const auto phi = treated_only_moment(ds, v);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int d = ds.d()[static_cast<std::size_t>(i)];
      out.values(i) = (phi(i) - d * point) / q;
    }
  } else {
    if (estimand != Estimand::tau) check_method(nuis, method);
    if (estimand == Estimand::xi && ds.n2() == 0) {
      throw Error(ErrorCode::EmptyCell, "xi needs external rows (1 - q > 0)");
    }
    const auto parts = full_parts(ds, nuis, opts, method == Method::full_data);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int d = ds.d()[static_cast<std::size_t>(i)];
      const double pi = parts.v.pi(i);
      const double dm = parts.delta(i) - point;
      switch (estimand) {
        case Estimand::tau: out.values(i) = (d * dm + parts.aug(i)) / q; break;
        case Estimand::psi: out.values(i) = dm + parts.aug(i) / pi; break;
        case Estimand::xi:
          out.values(i) = ((1 - d) * dm + (1.0 - pi) / pi * parts.aug(i)) / (1.0 - q);
          break;
      }
    }
  }

  const double mean = out.values.mean();
  const double scale = std::max(1.0, out.values.cwiseAbs().mean());
  if (std::abs(mean) > 1e-8 * scale) {
    throw Error(ErrorCode::MismatchedPoint,
                "influence values for " + to_string(estimand) + "/" + to_string(method) +
                    " have mean " + std::to_string(mean) + "; point does not match the nuisances");
  }
  return out;
}

double efficiency_bound_plugin(const CompositeDataset& ds, const NuisanceSet& nuis,
                               Estimand estimand, Method method, const EvalOptions& opts) {
  const auto est = estimate(ds, nuis, estimand, method, opts);
  const auto ifv = influence_values(ds, nuis, estimand, method, est.point, opts);
  return ifv.values.squaredNorm() / static_cast<double>(ifv.values.size());
}

namespace {

NuisanceValues gap_values(const CompositeDataset& ds, const NuisanceSet& nuis,
                          const EvalOptions& opts) {
  auto v = evaluate(ds, nuis, opts);
  if (!v.v1) {
    throw Error(ErrorCode::NoVarianceModel,
                "no trial-control variance model; fit r with mode 'constant' or 'loglinear'");
  }
  return v;
}

double floored_den(const NuisanceValues& v, Eigen::Index i, double eps) {
  const double den = v.pi(i) * (1.0 - v.p(i)) + (1.0 - v.pi(i)) * v.r(i);
  return den >= eps ? den : eps;
}

}  // namespace

double efficiency_gain_analytic(const CompositeDataset& ds, const NuisanceSet& nuis,
                                const EvalOptions& opts) {
  const auto v = gap_values(ds, nuis, opts);
  const double q = ds.q_hat();
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.m0.size(); ++i) {
    if (ds.d()[static_cast<std::size_t>(i)] != 1) continue;
    // 1 - p + ((1 - pi)/pi) r  ==  den / pi
    const double g = 1.0 / (1.0 - v.p(i)) - v.pi(i) / floored_den(v, i, opts.denom_eps);
    s += g * (*v.v1)(i);
  }
  return s / static_cast<double>(ds.n1()) / q;
}

double variance_gap_psi(const CompositeDataset& ds, const NuisanceSet& nuis,
                        const EvalOptions& opts) {
  const auto v = gap_values(ds, nuis, opts);
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.m0.size(); ++i) {
    const double base = v.pi(i) * (1.0 - v.p(i));
    s += (1.0 / base - 1.0 / floored_den(v, i, opts.denom_eps)) * (*v.v1)(i);
  }
  return s / static_cast<double>(ds.n());
}

double variance_gap_xi(const CompositeDataset& ds, const NuisanceSet& nuis,
                       const EvalOptions& opts) {
  if (ds.n2() == 0) throw Error(ErrorCode::EmptyCell, "xi needs external rows (1 - q > 0)");
  const auto v = gap_values(ds, nuis, opts);
  const double q = ds.q_hat();
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.m0.size(); ++i) {
    const double a = (1.0 - v.pi(i)) * (1.0 - v.pi(i));
    const double base = v.pi(i) * (1.0 - v.p(i));
    s += (a / base - a / floored_den(v, i, opts.denom_eps)) * (*v.v1)(i);
  }
  return s / static_cast<double>(ds.n()) / ((1.0 - q) * (1.0 - q));
}

}  // namespace extctl
