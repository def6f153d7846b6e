#include "extctl/serialize.hpp"

namespace extctl {

namespace {

template <class T>
Json opt(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

Json vec(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json opt_vec(const std::vector<std::optional<double>>& v) {
  Json a = Json::array();
  for (const auto& x : v) a.push_back(opt(x));
  return a;
}

}  // namespace

Json to_json(const Error& e) {
  Json j;
  j["code"] = std::string(error_code_name(e.code()));
  j["message"] = e.what();
  if (e.row) j["row"] = *e.row;
  if (e.column) j["column"] = *e.column;
  if (!e.columns.empty()) j["columns"] = e.columns;
  if (!e.trace.empty()) j["score_trace"] = e.trace;
  return j;
}

Json to_json(const ModelSpec& s) {
  Json j;
  j["family"] = to_string(s.family);
  j["intercept"] = s.include_intercept;
  Json terms = Json::array();
  for (const auto& t : s.terms) terms.push_back(t.to_string());
  j["terms"] = terms;
  return j;
}

Json to_json(const FittedGLM& m) {
  Json j;
  j["spec"] = to_json(m.spec);
  j["columns"] = m.spec.column_names();
  j["coef"] = vec(m.coef);
  j["converged"] = m.converged;
  j["iterations"] = m.iterations;
  j["n_obs"] = m.n_obs;
  j["loglik"] = m.loglik;
  return j;
}

Json to_json(const VarianceRatioModel& r) {
  Json j;
  j["mode"] = to_string(r.mode);
  if (r.mode == RatioMode::constant) {
    j["ratio"] = r.params(0);
  } else if (r.mode == RatioMode::loglinear) {
    j["spec"] = to_json(r.spec);
    j["log_ratio_coef"] = vec(r.params);
  }
  return j;
}

Json to_json(const NuisanceSet& n) {
  Json j;
  j["fingerprint"] = n.fingerprint();
  j["outcome_kind"] = to_string(n.outcome_kind);
  j["m0_pooled"] = n.m0_pooled;
  j["treated_only"] = n.treated_only;
  j["m1"] = n.m1 ? to_json(*n.m1) : Json(nullptr);
  j["m0"] = to_json(n.m0);
  j["p"] = n.p ? to_json(*n.p) : Json(nullptr);
  j["pi"] = n.pi ? to_json(*n.pi) : Json(nullptr);
  j["ratio"] = to_json(n.r);
  return j;
}

Json to_json(const ValidationReport& r) {
  Json j;
  j["usable"] = r.usable();
  j["detected_kind"] = to_string(r.detected_kind);
  j["declared_kind"] = r.declared_kind ? Json(to_string(*r.declared_kind)) : Json(nullptr);
  Json v = Json::array();
  for (const auto& x : r.violations) {
    Json e;
    e["row"] = opt(x.row);
    e["column"] = x.column;
    e["kind"] = x.kind;
    e["message"] = x.message;
    v.push_back(e);
  }
  j["violations"] = v;
  j["warnings"] = r.warnings;
  return j;
}

Json to_json(const DescriptiveStats& s) {
  Json j;
  j["n"] = s.n;
  j["n1"] = s.n1;
  j["n2"] = s.n2;
  j["q_hat"] = s.q_hat;
  j["trial_treated_fraction"] = opt(s.trial_treated_fraction);
  Json cells = Json::array();
  for (const auto& c : s.cells) {
    Json cj;
    cj["d"] = c.d;
    cj["t"] = c.t;
    cj["count"] = c.count;
    cj["outcome_mean"] = opt(c.outcome_mean);
    cj["covariate_means"] = c.covariate_means;
    cj["covariate_sds"] = opt_vec(c.covariate_sds);
    cells.push_back(cj);
  }
  j["cells"] = cells;
  j["covariate_means"] = s.covariate_means;
  j["covariate_sds"] = opt_vec(s.covariate_sds);
  return j;
}

Json to_json(const Estimate& e) {
  Json j;
  j["estimand"] = to_string(e.estimand);
  j["method"] = to_string(e.method);
  j["point"] = e.point;
  j["n_used"] = e.n_used;
  j["trim_count"] = e.trim_count;
  j["nuisance_fingerprint"] = e.nuisance_fingerprint;
  return j;
}

Json to_json(const InferenceResult& r) {
  Json j;
  j["estimate"] = to_json(r.estimate);
  j["variance"] = r.variance;
  j["se"] = r.se;
  j["ci"] = Json::array({r.ci_lo, r.ci_hi});
  j["level"] = r.level;
  j["p_value"] = r.p_value;
  j["null_value"] = r.null_value;
  j["sidedness"] = to_string(r.sidedness);
  j["variance_method"] = to_string(r.variance_method);
  return j;
}

Json to_json(const BootstrapResult& b, bool include_draws) {
  Json j;
  j["B"] = b.B;
  j["failures"] = b.failures;
  j["variance"] = b.variance;
  j["percentile_ci"] = Json::array({b.ci_lo, b.ci_hi});
  if (include_draws) j["draws"] = b.draws;
  return j;
}

Json to_json(const ExchangeabilityTest& t) {
  Json j;
  j["statistic"] = t.statistic;
  j["df"] = t.df;
  j["p_value"] = t.p_value;
  j["coefficients_tested"] = t.coefficients_tested;
  j["coefficients"] = t.coefficients;
  j["n_controls"] = t.n_controls;
  Json d;
  d["coef"] = t.d_coef;
  d["se"] = t.d_se;
  d["p_value"] = t.d_p_value;
  j["source_main_effect"] = d;
  return j;
}

Json to_json(const BiasBound& b) {
  Json j;
  j["lambda_estimate"] = opt(b.lambda_estimate);
  j["lambda_abs_bound"] = opt(b.lambda_abs_bound);
  j["mean_weight"] = b.mean_weight;
  return j;
}

Json to_json(const Distribution& d) {
  Json j;
  j["min"] = d.min;
  j["q05"] = d.q05;
  j["median"] = d.median;
  j["q95"] = d.q95;
  j["max"] = d.max;
  j["mean"] = d.mean;
  return j;
}

Json to_json(const OverlapReport& r) {
  auto od = [](const std::optional<Distribution>& d) { return d ? to_json(*d) : Json(nullptr); };
  Json j;
  j["pi"] = od(r.pi);
  j["p"] = od(r.p);
  j["pi_times_p"] = od(r.pi_times_p);
  j["denominator"] = od(r.denominator);
  j["p_trimmed"] = r.p_trimmed;
  j["pi_trimmed"] = r.pi_trimmed;
  j["denominator_floored"] = r.denominator_floored;
  j["n_flagged"] = r.flagged_rows.size();
  j["flagged_rows"] = r.flagged_rows;
  j["notes"] = r.notes;
  return j;
}

Json to_json(const TrueEffects& t) {
  Json j;
  j["tau"] = t.tau;
  j["psi"] = t.psi;
  j["xi"] = t.xi;
  j["q"] = t.q;
  j["se"] = {{"tau", t.se_tau}, {"psi", t.se_psi}, {"xi", t.se_xi}};
  j["draws"] = t.draws;
  return j;
}

Json to_json(const MCSummary& s) {
  Json j;
  j["estimator"] = s.estimator;
  j["estimand"] = to_string(s.estimand);
  j["method"] = to_string(s.method);
  j["reps"] = s.reps;
  j["truth"] = s.truth;
  j["mean_estimate"] = s.mean_estimate;
  j["mean_bias"] = s.mean_bias;
  j["sd"] = opt(s.sd);
  j["mse"] = s.mse;
  j["coverage"] = s.coverage;
  j["mean_variance_estimate"] = s.mean_variance_estimate;
  return j;
}

Json to_json(const ScenarioConfig& c) {
  Json j;
  j["scenario"] = to_string(c.scenario);
  j["n"] = c.n;
  j["outcome_kind"] = to_string(c.outcome_kind);
  j["dgp_params"] = c.dgp.to_vector();
  j["ratio_mode"] = to_string(c.analyst.ratio_mode);
  return j;
}

Json to_json(const MCResult& r) {
  Json j;
  j["config"] = to_json(r.config);
  j["truth"] = to_json(r.truth);
  j["reps_requested"] = r.reps_requested;
  j["failures"] = r.failures;
  j["failure_messages"] = r.failure_messages;
  Json s = Json::array();
  for (const auto& m : r.summaries) s.push_back(to_json(m));
  j["summaries"] = s;
  j["mean_gain_analytic"] = opt(r.mean_gain_analytic);
  j["exchangeability_rejection_rate"] = r.exchangeability_rejection_rate;
  j["mean_lambda"] = r.mean_lambda;
  j["mean_lambda_weight"] = r.mean_lambda_weight;
  return j;
}

ModelSpec spec_from_json(const Json& j, Family family, const std::vector<std::string>& names) {
  ModelSpec s;
  s.family = family;
  const Json* terms = &j;
  if (j.is_object()) {
    if (j.contains("intercept")) s.include_intercept = j.at("intercept").get<bool>();
    if (!j.contains("terms")) throw Error(ErrorCode::ConfigError, "model spec object needs \"terms\"");
    terms = &j.at("terms");
  }
  if (!terms->is_array()) throw Error(ErrorCode::ConfigError, "model spec terms must be a list");
  for (const auto& t : *terms) {
    if (!t.is_string()) throw Error(ErrorCode::ConfigError, "model spec terms must be strings");
    s.terms.push_back(parse_term(t.get<std::string>(), names));
  }
  return s;
}

}  // namespace extctl
