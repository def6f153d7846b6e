#include "extctl/simlab.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "extctl/error.hpp"
#include "extctl/inference.hpp"
#include "extctl/parallel.hpp"

namespace extctl {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::i: return "i";
    case Scenario::ii: return "ii";
    case Scenario::iii: return "iii";
    case Scenario::iv: return "iv";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "i" || s == "1") return Scenario::i;
  if (s == "ii" || s == "2") return Scenario::ii;
  if (s == "iii" || s == "3") return Scenario::iii;
  if (s == "iv" || s == "4") return Scenario::iv;
  throw Error(ErrorCode::ConfigError, "unknown scenario '" + s + "'");
}

bool propensities_correct(Scenario s) { return s == Scenario::i || s == Scenario::iii; }
bool outcomes_correct(Scenario s) { return s == Scenario::i || s == Scenario::ii; }

std::vector<double> DgpParams::to_vector() const {
  return {d0, d1, d2, t0, t1, t2, y0, y1, y2, e0, e1, v1a, v1b, v0a, v0b, engagement};
}

DgpParams DgpParams::from_vector(const std::vector<double>& v) {
  if (v.size() != size) {
    throw Error(ErrorCode::ConfigError,
                "dgp_params needs " + std::to_string(size) + " values, got " + std::to_string(v.size()));
  }
  DgpParams p;
  p.d0 = v[0]; p.d1 = v[1]; p.d2 = v[2];
  p.t0 = v[3]; p.t1 = v[4]; p.t2 = v[5];
  p.y0 = v[6]; p.y1 = v[7]; p.y2 = v[8];
  p.e0 = v[9]; p.e1 = v[10];
  p.v1a = v[11]; p.v1b = v[12]; p.v0a = v[13]; p.v0b = v[14];
  p.engagement = v[15];
  return p;
}

namespace {

// sd of x2 / (1 + exp(x1)) for independent standard normals.
double second_component_scale() {
  static const double s = [] {
    const int m = 200000;
    const double lo = -12.0, hi = 12.0, h = (hi - lo) / m;
    double acc = 0.0;
    for (int k = 0; k <= m; ++k) {
      const double g = lo + h * k;
      const double w = (k == 0 || k == m) ? 0.5 : 1.0;
      const double f = 1.0 / (1.0 + std::exp(g));
      acc += w * std::exp(-0.5 * g * g) * f * f;
    }
    return std::sqrt(acc * h / std::sqrt(2.0 * M_PI));
  }();
  return s;
}

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct Arms {
  double zp1, zp2, zo1, zo2;
};

Arms arms(Scenario s, double x1, double x2) {
  const auto z = distort(x1, x2);
  Arms a{x1, x2, x1, x2};
  if (!propensities_correct(s)) {
    a.zp1 = z[0];
    a.zp2 = z[1];
  }
  if (!outcomes_correct(s)) {
    a.zo1 = z[0];
    a.zo2 = z[1];
  }
  return a;
}

constexpr std::uint64_t kOracleSeed = 999;

}  // namespace

std::array<double, 2> distort(double x1, double x2) {
  return {(x1 * x1 - 1.0) / std::sqrt(2.0), x2 / (1.0 + std::exp(x1)) / second_component_scale()};
}

Generated generate(const ScenarioConfig& cfg, std::uint64_t seed) {
  if (cfg.outcome_kind != OutcomeKind::continuous) {
    throw Error(ErrorCode::ConfigError, "the simulation lab generates continuous outcomes only");
  }
  if (cfg.n < 8) throw Error(ErrorCode::ConfigError, "simulation n must be at least 8");
  const auto& P = cfg.dgp;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);

  DatasetDraft draft;
  draft.covariate_names = {"x1", "x2"};
  draft.declared_kind = OutcomeKind::continuous;
  draft.rows.reserve(cfg.n);
  Eigen::VectorXd y0v(static_cast<Eigen::Index>(cfg.n));
  Eigen::VectorXd y1v(static_cast<Eigen::Index>(cfg.n));

  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double x1 = N(rng);
    const double x2 = N(rng);
    const double ud = U(rng);
    const double ut = U(rng);
    const double eps = N(rng);
    const auto a = arms(cfg.scenario, x1, x2);

    const int d = ud < logistic(P.d0 + P.d1 * a.zp1 + P.d2 * a.zp2) ? 1 : 0;
    const int t = d == 1 && ut < logistic(P.t0 + P.t1 * a.zp1 + P.t2 * a.zp2) ? 1 : 0;
    const double logv = d == 1 ? P.v1a + P.v1b * x1 : P.v0a + P.v0b * x1;
    double y0 = P.y0 + P.y1 * a.zo1 + P.y2 * a.zo2 + std::sqrt(std::exp(logv)) * eps;
    if (d == 0) y0 -= P.engagement * x1;
    const double y1 = y0 + P.e0 + P.e1 * a.zo1;

    Observation o;
    o.x = {x1, x2};
    o.d = d;
    o.t = t;
    o.y = t == 1 ? y1 : y0;
    draft.rows.push_back(std::move(o));
    y0v(static_cast<Eigen::Index>(i)) = y0;
    y1v(static_cast<Eigen::Index>(i)) = y1;
  }
  return Generated{CompositeDataset::build(std::move(draft)), y0v, y1v};
}

TrueEffects true_effects(const ScenarioConfig& cfg, std::size_t draws) {
  static std::mutex mu;
  static std::map<std::vector<double>, TrueEffects> cache;
  std::vector<double> key = cfg.dgp.to_vector();
  key.push_back(static_cast<double>(cfg.scenario));
  key.push_back(static_cast<double>(draws));
  {
    std::lock_guard<std::mutex> lk(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  const auto& P = cfg.dgp;
  std::mt19937_64 rng(kOracleSeed);
  std::normal_distribution<double> N(0.0, 1.0);
  // Rao-Blackwellized: average the effect weighted by pr(D | x) instead of
  // drawing D.
  double s_pi = 0, s_pie = 0, s_e = 0, s_e2 = 0, s_qi = 0, s_qie = 0;
  for (std::size_t k = 0; k < draws; ++k) {
    const double x1 = N(rng);
    const double x2 = N(rng);
    const auto a = arms(cfg.scenario, x1, x2);
    const double pi = logistic(P.d0 + P.d1 * a.zp1 + P.d2 * a.zp2);
    const double e = P.e0 + P.e1 * a.zo1;
    s_pi += pi;
    s_pie += pi * e;
    s_e += e;
    s_e2 += e * e;
    s_qi += 1.0 - pi;
    s_qie += (1.0 - pi) * e;
  }
  const double M = static_cast<double>(draws);
  TrueEffects te;
  te.draws = draws;
  te.q = s_pi / M;
  te.tau = s_pie / s_pi;
  te.xi = s_qie / s_qi;
  te.psi = s_e / M;
  te.se_psi = std::sqrt(std::max(0.0, s_e2 / M - te.psi * te.psi) / M);
  // Delta-method standard errors for the two ratios; a second pass replays
  // the same stream.
  {
    std::mt19937_64 r2(kOracleSeed);
    std::normal_distribution<double> N2(0.0, 1.0);
    double a_t = 0, a_x = 0;
    for (std::size_t k = 0; k < draws; ++k) {
      const double x1 = N2(r2);
      const double x2 = N2(r2);
      const auto a = arms(cfg.scenario, x1, x2);
      const double pi = logistic(P.d0 + P.d1 * a.zp1 + P.d2 * a.zp2);
      const double e = P.e0 + P.e1 * a.zo1;
      const double ut = pi * (e - te.tau);
      const double ux = (1.0 - pi) * (e - te.xi);
      a_t += ut * ut;
      a_x += ux * ux;
    }
    te.se_tau = std::sqrt(a_t / M) / (s_pi / M) / std::sqrt(M);
    te.se_xi = std::sqrt(a_x / M) / (s_qi / M) / std::sqrt(M);
  }
  std::lock_guard<std::mutex> lk(mu);
  cache.emplace(key, te);
  return te;
}

const std::vector<std::string>& all_estimator_ids() {
  static const std::vector<std::string> ids{"tau_full",  "tau_full_const", "tau_trial", "psi_full",
                                            "psi_trial", "xi_full",        "xi_trial"};
  return ids;
}

EstimatorId parse_estimator_id(const std::string& id) {
  if (id == "tau_full") return {id, Estimand::tau, Method::full_data, false};
  if (id == "tau_full_const") return {id, Estimand::tau, Method::full_data, true};
  if (id == "tau_trial") return {id, Estimand::tau, Method::trial_based, false};
  if (id == "psi_full") return {id, Estimand::psi, Method::full_data, false};
  if (id == "psi_trial") return {id, Estimand::psi, Method::trial_based, false};
  if (id == "xi_full") return {id, Estimand::xi, Method::full_data, false};
  if (id == "xi_trial") return {id, Estimand::xi, Method::trial_based, false};
  throw Error(ErrorCode::ConfigError, "unknown estimator id '" + id + "'");
}

namespace {

struct RepOut {
  bool ok = false;
  std::string message;
  std::vector<double> bias;
  std::vector<double> var;
  double gain = std::nan("");
  double exch_p = std::nan("");
  double lambda = 0.0;
  double lambda_w = 0.0;
};

RepOut run_replicate(const ScenarioConfig& cfg, const std::vector<EstimatorId>& ests,
                     const TrueEffects& truth, std::uint64_t seed) {
  RepOut out;
  try {
    const auto gen = generate(cfg, seed);
    const auto& ds = gen.data;
    const auto nuis = fit_nuisances(ds, cfg.analyst);

    bool need_base = false, need_const = false;
    for (const auto& e : ests) {
      need_base |= e.method == Method::trial_based;
      need_const |= e.constant_ratio;
    }
    std::optional<NuisanceSet> base, cnst;
    if (need_base) base = baseline_nuisances(ds, nuis, cfg.analyst);
    if (need_const) {
      cnst = nuis;
      cnst->r = fit_variance_ratio(ds, nuis.m0, RatioMode::constant,
                                   cfg.analyst.ratio ? *cfg.analyst.ratio : default_spec(ds, Family::identity),
                                   cfg.analyst.var_floor);
    }
    for (const auto& e : ests) {
      const NuisanceSet& ns = e.method == Method::trial_based ? *base : e.constant_ratio ? *cnst : nuis;
      const auto est = estimate(ds, ns, e.estimand, e.method);
      const auto ifv = influence_values(ds, ns, e.estimand, e.method, est.point);
      out.bias.push_back(est.point - truth.of(e.estimand));
      out.var.push_back(if_variance(ifv));
    }
    try {
      out.gain = efficiency_gain_analytic(ds, nuis);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoVarianceModel) throw;
    }
    out.exch_p = test_mean_exchangeability(ds, default_spec(ds, Family::identity)).p_value;
    BiasSpec bs;
    bs.bound = 1.0;
    const double b = cfg.dgp.engagement;
    bs.b = [b](std::span<const double> x) { return b * x[0]; };
    const auto bb = bias_bound(ds, nuis, bs);
    out.lambda = *bb.lambda_estimate;
    out.lambda_w = bb.mean_weight;
    out.ok = true;
  } catch (const Error& e) {
    out.ok = false;
    out.message = std::string(error_code_name(e.code())) + ": " + e.what();
  }
  return out;
}

struct Acc {
  std::size_t n = 0;
  double mean = 0.0, m2 = 0.0;  // Welford on the bias
  double sq = 0.0;              // sum of bias^2
  double var_sum = 0.0;
  std::size_t covered = 0;

  void add(double bias, double var, double crit) {
    ++n;
    const double delta = bias - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (bias - mean);
    sq += bias * bias;
    var_sum += var;
    if (std::abs(bias) <= crit * std::sqrt(var)) ++covered;
  }
};

std::vector<double> read_all(const MCResult& r) {
  if (!r.spill_file) return r.draws;
  std::ifstream in(*r.spill_file, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read spill file " + *r.spill_file);
  std::vector<double> v;
  double buf;
  while (in.read(reinterpret_cast<char*>(&buf), sizeof buf)) v.push_back(buf);
  return v;
}

std::size_t estimator_index(const MCResult& r, const std::string& id) {
  for (std::size_t k = 0; k < r.estimators.size(); ++k) {
    if (r.estimators[k] == id) return k;
  }
  throw Error(ErrorCode::ConfigError, "estimator '" + id + "' was not part of this run");
}

std::vector<double> column(const MCResult& r, const std::string& id, std::size_t which) {
  const auto k = estimator_index(r, id);
  const auto all = read_all(r);
  const std::size_t stride = 2 * r.estimators.size();
  std::vector<double> out;
  for (std::size_t off = 0; off + stride <= all.size(); off += stride) {
    const double v = all[off + 2 * k + which];
    if (!std::isnan(all[off + 2 * k])) out.push_back(v);
  }
  return out;
}

}  // namespace

const MCSummary& MCResult::summary(const std::string& estimator) const {
  for (const auto& s : summaries) {
    if (s.estimator == estimator) return s;
  }
  throw Error(ErrorCode::ConfigError, "no summary for estimator '" + estimator + "'");
}

std::vector<double> MCResult::bias_draws(const std::string& estimator) const {
  return column(*this, estimator, 0);
}

std::vector<double> MCResult::variance_draws(const std::string& estimator) const {
  return column(*this, estimator, 1);
}

std::vector<std::size_t> MCResult::successful_reps() const {
  std::vector<std::size_t> out;
  if (estimators.empty()) return out;
  const auto all = read_all(*this);
  const std::size_t stride = 2 * estimators.size();
  for (std::size_t off = 0, rep = 0; off + stride <= all.size(); off += stride, ++rep) {
    if (!std::isnan(all[off])) out.push_back(rep);
  }
  return out;
}

MCResult run_monte_carlo(const ScenarioConfig& cfg, const MCOptions& opts) {
  if (opts.reps < 1) throw Error(ErrorCode::ConfigError, "reps must be at least 1");
  std::vector<EstimatorId> ests;
  for (const auto& id : opts.estimators) ests.push_back(parse_estimator_id(id));
  if (ests.empty()) throw Error(ErrorCode::ConfigError, "no estimators requested");

  MCResult res;
  res.config = cfg;
  res.reps_requested = opts.reps;
  res.estimators = opts.estimators;
  res.truth = true_effects(cfg, opts.truth_draws);

  const boost::math::normal_distribution<double> Nd;
  const double crit = boost::math::quantile(Nd, 0.5 + opts.level / 2.0);
  const std::size_t E = ests.size();
  std::vector<Acc> acc(E);
  double gain_sum = 0.0;
  std::size_t gain_n = 0, rejections = 0, ok_n = 0;
  double lambda_sum = 0.0, lambda_w_sum = 0.0;

  const bool spill = opts.retain_draws && opts.reps * E > opts.draw_cap;
  std::ofstream spill_out;
  if (spill) {
    std::string path = opts.spill_path;
    if (path.empty()) {
      path = (std::filesystem::temp_directory_path() /
              ("extctl-mc-" + to_string(cfg.scenario) + "-" + std::to_string(opts.master_seed) + ".bin"))
                 .string();
    }
    spill_out.open(path, std::ios::binary | std::ios::trunc);
    if (!spill_out) throw Error(ErrorCode::IoError, "cannot open spill file " + path);
    res.spill_file = path;
  }

  constexpr std::size_t kChunk = 256;
  std::vector<RepOut> chunk;
  for (std::size_t start = 0; start < opts.reps; start += kChunk) {
    const std::size_t len = std::min(kChunk, opts.reps - start);
    chunk.assign(len, RepOut{});
    parallel_for(len, opts.jobs, [&](std::size_t j) {
      chunk[j] = run_replicate(cfg, ests, res.truth, derive_seed(opts.master_seed, start + j));
    });
    for (const auto& r : chunk) {
      std::vector<double> rec(2 * E, std::nan(""));
      if (r.ok) {
        ++ok_n;
        for (std::size_t k = 0; k < E; ++k) {
          acc[k].add(r.bias[k], r.var[k], crit);
          rec[2 * k] = r.bias[k];
          rec[2 * k + 1] = r.var[k];
        }
        if (!std::isnan(r.gain)) {
          gain_sum += r.gain;
          ++gain_n;
        }
        if (r.exch_p < 0.05) ++rejections;
        lambda_sum += r.lambda;
        lambda_w_sum += r.lambda_w;
      } else {
        ++res.failures;
        if (res.failure_messages.size() < 5) res.failure_messages.push_back(r.message);
      }
      if (!opts.retain_draws) continue;
      if (spill) {
        spill_out.write(reinterpret_cast<const char*>(rec.data()),
                        static_cast<std::streamsize>(rec.size() * sizeof(double)));
      } else {
        res.draws.insert(res.draws.end(), rec.begin(), rec.end());
      }
    }
  }

  if (static_cast<double>(res.failures) > opts.max_failure_rate * static_cast<double>(opts.reps) ||
      ok_n == 0) {
    Error e(ErrorCode::ReplicateFailure, std::to_string(res.failures) + " of " +
                                             std::to_string(opts.reps) + " replicates failed" +
                                             (res.failure_messages.empty() ? "" : "; first: " + res.failure_messages[0]));
    throw e;
  }

  for (std::size_t k = 0; k < E; ++k) {
    const auto& a = acc[k];
    MCSummary s;
    s.estimator = ests[k].id;
    s.estimand = ests[k].estimand;
    s.method = ests[k].method;
    s.reps = a.n;
    s.truth = res.truth.of(ests[k].estimand);
    s.mean_bias = a.mean;
    s.mean_estimate = s.truth + a.mean;
    const double R = static_cast<double>(a.n);
    if (a.n > 1) s.sd = std::sqrt(a.m2 / R);
    s.mse = a.mean * a.mean + a.m2 / R;
    s.coverage = static_cast<double>(a.covered) / R;
    s.mean_variance_estimate = a.var_sum / R;
    res.summaries.push_back(s);
  }
  if (gain_n > 0) res.mean_gain_analytic = gain_sum / static_cast<double>(gain_n);
  res.exchangeability_rejection_rate = static_cast<double>(rejections) / static_cast<double>(ok_n);
  res.mean_lambda = lambda_sum / static_cast<double>(ok_n);
  res.mean_lambda_weight = lambda_w_sum / static_cast<double>(ok_n);
  return res;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

void export_boxplot_data(std::ostream& out, const std::vector<MCResult>& runs,
                         const std::vector<std::string>& estimators) {
  out << "scenario,estimator,replicate,bias\n";
  for (const auto& run : runs) {
    const auto all = read_all(run);
    const std::size_t E = run.estimators.size();
    if (E == 0) continue;
    const auto& ids = estimators.empty() ? run.estimators : estimators;
    for (const auto& id : ids) {
      const auto k = estimator_index(run, id);
      for (std::size_t rep = 0; (rep + 1) * 2 * E <= all.size(); ++rep) {
        const double b = all[rep * 2 * E + 2 * k];
        if (std::isnan(b)) continue;
        out << to_string(run.config.scenario) << ',' << id << ',' << rep << ',' << shortest(b) << '\n';
      }
    }
  }
}

MCSummary constant_ratio_variant(const ScenarioConfig& cfg, std::size_t reps, std::uint64_t seed,
                                 int jobs) {
  MCOptions o;
  o.reps = reps;
  o.master_seed = seed;
  o.jobs = jobs;
  o.estimators = {"tau_full_const"};
  o.retain_draws = false;
  return run_monte_carlo(cfg, o).summaries.front();
}

}  // namespace extctl
