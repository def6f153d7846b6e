#include "extctl/nuisance.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <cstdio>

#include "extctl/error.hpp"

namespace extctl {

std::string to_string(RatioMode m) {
  switch (m) {
    case RatioMode::known_one: return "known_one";
    case RatioMode::constant: return "constant";
    case RatioMode::loglinear: return "loglinear";
    case RatioMode::zero: return "zero";
  }
  return "?";
}

RatioMode ratio_mode_from_string(const std::string& s) {
  if (s == "known_one" || s == "known1" || s == "one") return RatioMode::known_one;
  if (s == "constant") return RatioMode::constant;
  if (s == "loglinear") return RatioMode::loglinear;
  if (s == "zero") return RatioMode::zero;
  throw Error(ErrorCode::ConfigError, "unknown ratio mode '" + s + "'");
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(idx[r]));
  }
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<std::size_t>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) out(static_cast<Eigen::Index>(r)) = v(static_cast<Eigen::Index>(idx[r]));
  return out;
}

Error empty_cell(const std::string& what) { return Error(ErrorCode::EmptyCell, what); }

class Fnv1a {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 1099511628211ULL;
    }
  }
  void str(const std::string& s) {
    bytes(s.data(), s.size());
    bytes("\0", 1);
  }
  void vec(const Eigen::VectorXd& v) {
    const auto n = static_cast<std::uint64_t>(v.size());
    bytes(&n, sizeof n);
    bytes(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
  }
  void model(const std::optional<FittedGLM>& m) {
    if (!m) {
      str("none");
      return;
    }
    str(m->spec.to_string());
    vec(m->coef);
  }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
    return buf;
  }

 private:
  std::uint64_t h_ = 1469598103934665603ULL;
};

}  // namespace

double VarianceRatioModel::predict(std::span<const double> x) const {
  switch (mode) {
    case RatioMode::known_one: return 1.0;
    case RatioMode::zero: return 0.0;
    case RatioMode::constant: return params(0);
    case RatioMode::loglinear: {
      Eigen::VectorXd z(params.size());
      design_row(spec, x, z);
      return std::exp(z.dot(params));
    }
  }
  return 1.0;
}

std::optional<double> VarianceRatioModel::predict_v1(std::span<const double> x) const {
  switch (v1_kind) {
    case V1Kind::none: return std::nullopt;
    case V1Kind::constant: return v1_scale;
    case V1Kind::loglinear: {
      Eigen::VectorXd z(v1_coef.size());
      design_row(spec, x, z);
      return std::exp(z.dot(v1_coef)) * v1_scale;
    }
  }
  return std::nullopt;
}

std::string NuisanceSet::fingerprint() const {
  Fnv1a h;
  h.model(m1);
  h.model(std::optional<FittedGLM>(m0));
  h.model(p);
  h.model(pi);
  h.str(to_string(r.mode));
  h.str(r.spec.to_string());
  h.vec(r.params);
  h.str(m0_pooled ? "pooled" : "trial");
  h.str(treated_only ? "treated_only" : "two_arm");
  return h.hex();
}

std::vector<std::size_t> rows_where(const CompositeDataset& ds, int d, int t) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if ((d < 0 || ds.d()[i] == d) && (t < 0 || ds.t()[i] == t)) idx.push_back(i);
  }
  return idx;
}

ModelSpec default_spec(const CompositeDataset& ds, Family family) {
  return ModelSpec::linear(family, ds.k());
}

Family outcome_family(OutcomeKind kind) {
  return kind == OutcomeKind::binary ? Family::logit : Family::identity;
}

FittedGLM fit_m1(const CompositeDataset& ds, const ModelSpec& spec, const GlmControl& glm) {
  const auto idx = rows_where(ds, 1, 1);
  if (idx.empty()) throw empty_cell("no treated trial units (d=1, t=1) to fit m1");
  return fit_glm(spec, take_rows(ds.x(), idx), take(ds.y(), idx), std::nullopt, glm);
}

FittedGLM fit_m0(const CompositeDataset& ds, const ModelSpec& spec, bool pool_controls,
                 const GlmControl& glm) {
  const auto idx = rows_where(ds, pool_controls ? -1 : 1, 0);
  if (idx.empty()) {
    throw empty_cell(pool_controls ? "no control units (t=0) to fit m0"
                                   : "no trial control units (d=1, t=0) to fit m0");
  }
  return fit_glm(spec, take_rows(ds.x(), idx), take(ds.y(), idx), std::nullopt, glm);
}

std::pair<FittedGLM, FittedGLM> fit_outcome_models(const CompositeDataset& ds,
                                                   const ModelSpec& spec1, const ModelSpec& spec0,
                                                   bool pool_controls, const GlmControl& glm) {
  return {fit_m1(ds, spec1, glm), fit_m0(ds, spec0, pool_controls, glm)};
}

FittedGLM fit_treatment_ps(const CompositeDataset& ds, const ModelSpec& spec, const GlmControl& glm) {
  const auto trial = rows_where(ds, 1, -1);
  std::size_t treated = 0;
  for (auto i : trial) treated += static_cast<std::size_t>(ds.t()[i]);
  if (treated == 0) throw empty_cell("trial has no treated units; cannot fit p(X)");
  if (treated == trial.size()) {
    throw empty_cell("trial has no control units; use treated-only mode (p(X) = 1)");
  }
  Eigen::VectorXd t(static_cast<Eigen::Index>(trial.size()));
  for (std::size_t r = 0; r < trial.size(); ++r) t(static_cast<Eigen::Index>(r)) = ds.t()[trial[r]];
  ModelSpec s = spec;
  s.family = Family::logit;
  return fit_glm(s, take_rows(ds.x(), trial), t, std::nullopt, glm);
}

FittedGLM fit_selection_ps(const CompositeDataset& ds, const ModelSpec& spec, const GlmControl& glm) {
  if (ds.n2() == 0) throw empty_cell("no external rows (d=0); cannot fit pi(X)");
  Eigen::VectorXd d(static_cast<Eigen::Index>(ds.n()));
  for (std::size_t i = 0; i < ds.n(); ++i) d(static_cast<Eigen::Index>(i)) = ds.d()[i];
  ModelSpec s = spec;
  s.family = Family::logit;
  return fit_glm(s, ds.x(), d, std::nullopt, glm);
}

VarianceRatioModel fit_variance_ratio(const CompositeDataset& ds, const FittedGLM& m0,
                                      RatioMode mode, const ModelSpec& spec, double var_floor) {
  VarianceRatioModel out;
  out.mode = mode;
  out.spec = spec;
  out.spec.family = Family::identity;
  if (mode == RatioMode::known_one || mode == RatioMode::zero) return out;

  const auto g1 = rows_where(ds, 1, 0);
  const auto g0 = rows_where(ds, 0, -1);
  if (g1.size() < 2 || g0.size() < 2) {
    throw empty_cell("variance ratio needs at least two control rows in each data source");
  }

  const Eigen::MatrixXd z = design_matrix(out.spec, ds.x());
  Eigen::VectorXd res2(static_cast<Eigen::Index>(ds.n()));
  const Eigen::MatrixXd z0 = design_matrix(m0.spec, ds.x());
  const Eigen::VectorXd fitted = z0 * m0.coef;
  for (Eigen::Index i = 0; i < res2.size(); ++i) {
    const double mu = m0.spec.family == Family::logit ? expit(fitted(i)) : fitted(i);
    const double e = ds.y()(i) - mu;
    res2(i) = e * e;
  }

  auto check_degenerate = [&](const std::vector<std::size_t>& g, const char* which) {
    for (auto i : g) {
      if (res2(static_cast<Eigen::Index>(i)) >= var_floor) return;
    }
    throw Error(ErrorCode::DegenerateVariance,
                std::string("all squared m0 residuals in the ") + which + " group are below var_floor");
  };
  check_degenerate(g1, "trial-control");
  check_degenerate(g0, "external");

  auto mean_over = [&](const std::vector<std::size_t>& g) {
    double s = 0.0;
    for (auto i : g) s += res2(static_cast<Eigen::Index>(i));
    return s / static_cast<double>(g.size());
  };

  if (mode == RatioMode::constant) {
    const double s1 = mean_over(g1);
    const double s0 = mean_over(g0);
    out.params = Eigen::VectorXd::Constant(1, s1 / s0);
    out.v1_kind = VarianceRatioModel::V1Kind::constant;
    out.v1_scale = s1;
    return out;
  }

  // loglinear: regress log(res^2 + floor) on the transform within each source.
  Eigen::VectorXd logres = (res2.array() + var_floor).log();
  const auto f1 = fit_glm(take_rows(z, g1), take(logres, g1), Family::identity, std::nullopt, {},
                          out.spec.column_names());
  const auto f0 = fit_glm(take_rows(z, g0), take(logres, g0), Family::identity, std::nullopt, {},
                          out.spec.column_names());
  out.params = f1.coef - f0.coef;
  out.v1_kind = VarianceRatioModel::V1Kind::loglinear;
  out.v1_coef = f1.coef;
  // Smearing: exp(E log e^2) understates E e^2; rescale on the trial controls.
  double smear = 0.0;
  for (auto i : g1) {
    const auto ii = static_cast<Eigen::Index>(i);
    smear += res2(ii) / std::exp(z.row(ii).dot(f1.coef));
  }
  out.v1_scale = smear / static_cast<double>(g1.size());
  return out;
}

double predict(const FittedGLM& model, std::span<const double> x) { return model.predict(x); }

double predict(const VarianceRatioModel& model, std::span<const double> x) {
  return model.predict(x);
}

namespace {

ModelSpec spec_or(const std::optional<ModelSpec>& s, const CompositeDataset& ds, Family family) {
  return s ? *s : default_spec(ds, family);
}

}  // namespace

NuisanceSet fit_nuisances(const CompositeDataset& ds, const NuisanceConfig& cfg,
                          std::vector<std::string>* log) {
  NuisanceSet out;
  out.outcome_kind = ds.outcome_kind();
  out.treated_only = cfg.treated_only;
  const Family fam = outcome_family(ds.outcome_kind());

  RatioMode mode = cfg.ratio_mode;
  if (ds.outcome_kind() == OutcomeKind::binary && mode != RatioMode::known_one &&
      mode != RatioMode::zero) {
    mode = RatioMode::known_one;
    if (log) log->push_back("binary outcome: variance ratio r(X) set to 1");
  }

  if (cfg.treated_only) {
    for (std::size_t i = 0; i < ds.n(); ++i) {
      if (ds.d()[i] == 1 && ds.t()[i] == 0) {
        Error e(ErrorCode::InvariantViolation,
                "treated-only mode requires every trial row to be treated; row " +
                    std::to_string(i) + " has t=0");
        e.row = i;
        throw e;
      }
    }
    if (ds.n2() == 0) {
      throw Error(ErrorCode::OverlapNoExternal, "treated-only mode requires external controls");
    }
    out.m0 = fit_m0(ds, spec_or(cfg.m0, ds, fam), true, cfg.glm);
    out.m0_pooled = true;
    out.pi = fit_selection_ps(ds, spec_or(cfg.pi, ds, Family::logit), cfg.glm);
    out.r.mode = RatioMode::known_one;
    return out;
  }

  out.m1 = fit_m1(ds, spec_or(cfg.m1, ds, fam), cfg.glm);
  out.m0 = fit_m0(ds, spec_or(cfg.m0, ds, fam), cfg.pool_controls, cfg.glm);
  out.m0_pooled = cfg.pool_controls;
  out.p = fit_treatment_ps(ds, spec_or(cfg.p, ds, Family::logit), cfg.glm);
  if (ds.n2() > 0) {
    out.pi = fit_selection_ps(ds, spec_or(cfg.pi, ds, Family::logit), cfg.glm);
    out.r = fit_variance_ratio(ds, out.m0, mode, spec_or(cfg.ratio, ds, Family::identity),
                               cfg.var_floor);
  } else {
    out.r.mode = RatioMode::zero;
    if (log) log->push_back("no external rows: selection propensity not fitted");
  }
  return out;
}

NuisanceSet baseline_nuisances(const CompositeDataset& ds, const NuisanceSet& full,
                               const NuisanceConfig& cfg) {
  NuisanceSet out = full;
  if (full.m0_pooled) {
    out.m0 = fit_m0(ds, full.m0.spec, false, cfg.glm);
  }
  out.m0_pooled = false;
  out.r = VarianceRatioModel{};
  out.r.mode = RatioMode::zero;
  return out;
}

NuisanceValues evaluate(const CompositeDataset& ds, const NuisanceSet& nuis, const EvalOptions& opts) {
  NuisanceValues v;
  const auto n = static_cast<Eigen::Index>(ds.n());
  v.fingerprint = nuis.fingerprint();

  auto mean_of = [&](const FittedGLM& m) {
    Eigen::VectorXd eta = design_matrix(m.spec, ds.x()) * m.coef;
    if (m.spec.family == Family::logit) eta = eta.unaryExpr([](double e) { return expit(e); });
    return eta;
  };

  v.has_m1 = nuis.m1.has_value();
  v.m1 = v.has_m1 ? mean_of(*nuis.m1) : Eigen::VectorXd::Constant(n, std::nan(""));
  v.m0 = mean_of(nuis.m0);

  TrimCounter pc, pic;
  v.has_p = nuis.p.has_value();
  if (v.has_p) {
    v.p = mean_of(*nuis.p);
    for (Eigen::Index i = 0; i < n; ++i) v.p(i) = trim_probability(v.p(i), opts.trim_eps, pc);
  } else {
    v.p = Eigen::VectorXd::Ones(n);
  }
  v.has_pi = nuis.pi.has_value();
  if (v.has_pi) {
    v.pi = mean_of(*nuis.pi);
    for (Eigen::Index i = 0; i < n; ++i) v.pi(i) = trim_probability(v.pi(i), opts.trim_eps, pic);
  } else {
    v.pi = Eigen::VectorXd::Ones(n);
  }
  v.p_trimmed = pc.count;
  v.pi_trimmed = pic.count;

  v.r.resize(n);
  switch (nuis.r.mode) {
    case RatioMode::known_one: v.r.setOnes(); break;
    case RatioMode::zero: v.r.setZero(); break;
    case RatioMode::constant: v.r.setConstant(nuis.r.params(0)); break;
    case RatioMode::loglinear:
      v.r = (design_matrix(nuis.r.spec, ds.x()) * nuis.r.params).array().exp();
      break;
  }

  if (nuis.outcome_kind == OutcomeKind::binary) {
    v.v1 = v.m0.array() * (1.0 - v.m0.array());
  } else if (nuis.r.v1_kind == VarianceRatioModel::V1Kind::constant) {
    v.v1 = Eigen::VectorXd::Constant(n, nuis.r.v1_scale);
  } else if (nuis.r.v1_kind == VarianceRatioModel::V1Kind::loglinear) {
    v.v1 = (design_matrix(nuis.r.spec, ds.x()) * nuis.r.v1_coef).array().exp() * nuis.r.v1_scale;
  }
  return v;
}

}  // namespace extctl
