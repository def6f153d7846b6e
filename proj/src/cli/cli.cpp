#include "extctl/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "extctl/error.hpp"

namespace extctl {

namespace {

Error config_error(const std::string& msg) { return Error(ErrorCode::ConfigError, msg); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::string method_key(const std::string& m) {
  if (m == "full" || m == "full_data") return "full";
  if (m == "trial" || m == "trial_based") return "trial";
  if (m == "treated-only" || m == "treated_only") return "treated-only";
  throw config_error("unknown method '" + m + "' (expected full, trial or treated-only)");
}

std::vector<Scenario> parse_scenarios(const std::vector<std::string>& v) {
  std::vector<Scenario> out;
  for (const auto& s : v) {
    if (s == "all") {
      out = {Scenario::i, Scenario::ii, Scenario::iii, Scenario::iv};
    } else {
      out.push_back(scenario_from_string(s));
    }
  }
  if (out.empty()) throw config_error("no scenario given");
  return out;
}

std::vector<std::string> string_list(const Json& j, const char* key) {
  if (j.is_string()) return {j.get<std::string>()};
  if (!j.is_array()) throw config_error(std::string("'") + key + "' must be a string or a list");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw config_error(std::string("'") + key + "' entries must be strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(path + ": " + e.what());
  }
}

Schema schema_from_json(const Json& j) {
  Schema s;
  for (const auto& [k, v] : j.items()) {
    if (k == "y") s.y = v.get<std::string>();
    else if (k == "t") s.t = v.get<std::string>();
    else if (k == "d") s.d = v.get<std::string>();
    else if (k == "x") s.x = string_list(v, "x");
    else throw config_error("unknown schema key '" + k + "'");
  }
  return s;
}

std::string file_name(const std::string& path) {
  const auto pos = path.find_last_of('/');
  return pos == std::string::npos ? path : path.substr(pos + 1);
}

std::optional<ModelSpec> model_spec(const RunConfig& cfg, const char* role, Family fam,
                                    const std::vector<std::string>& names) {
  if (!cfg.models.contains(role)) return std::nullopt;
  return spec_from_json(cfg.models.at(role), fam, names);
}

NuisanceConfig nuisance_config(const RunConfig& cfg, const CompositeDataset& ds) {
  static const char* kRoles[] = {"m1", "m0", "p", "pi", "ratio", "exchangeability"};
  for (const auto& [k, v] : cfg.models.items()) {
    bool known = false;
    for (const char* r : kRoles) known |= k == r;
    if (!known) throw config_error("unknown model role '" + k + "'");
  }
  const auto& names = ds.covariate_names();
  const Family of = outcome_family(ds.outcome_kind());
  NuisanceConfig nc;
  nc.m1 = model_spec(cfg, "m1", of, names);
  nc.m0 = model_spec(cfg, "m0", of, names);
  nc.p = model_spec(cfg, "p", Family::logit, names);
  nc.pi = model_spec(cfg, "pi", Family::logit, names);
  nc.ratio = model_spec(cfg, "ratio", Family::identity, names);
  nc.ratio_mode = cfg.ratio;
  nc.pool_controls = cfg.pool_controls;
  nc.treated_only = cfg.method == "treated-only";
  return nc;
}

CompositeDataset load_input(const RunConfig& cfg, Json& input_info, std::vector<std::string>& warnings) {
  if (!cfg.input) throw config_error("--input is required");
  auto ds = load_csv(*cfg.input, cfg.schema, cfg.outcome);
  const auto report = validate(ds);
  warnings = report.warnings;
  input_info["file"] = file_name(*cfg.input);
  input_info["n"] = ds.n();
  input_info["n1"] = ds.n1();
  input_info["n2"] = ds.n2();
  input_info["q_hat"] = ds.q_hat();
  input_info["outcome_kind"] = to_string(ds.outcome_kind());
  input_info["covariates"] = ds.covariate_names();
  return ds;
}

Json common_settings(const RunConfig& cfg) {
  Json s;
  s["method"] = cfg.method;
  s["comparators"] = cfg.comparators;
  s["ratio"] = to_string(cfg.ratio);
  s["pool_controls"] = cfg.pool_controls;
  s["trim_eps"] = cfg.trim_eps;
  s["denom_eps"] = cfg.denom_eps;
  return s;
}

}  // namespace

void RunConfig::check() const {
  method_key(method);
  if (estimands.empty()) throw config_error("no estimand requested");
  if (method == "treated-only") {
    for (auto e : estimands) {
      if (e != Estimand::tau) throw config_error("treated-only mode estimates tau only");
    }
    if (!pool_controls) throw config_error("treated-only mode uses pooled controls");
  }
  if (method == "full" && !pool_controls) {
    throw config_error("full-data estimators need pooled controls (drop --no-pool or use --method trial)");
  }
  if (variance == VarianceMethod::bootstrap) {
    if (B && *B < 100) throw config_error("bootstrap needs B >= 100");
  } else if (B) {
    throw config_error("--B is only meaningful with --variance bootstrap");
  }
  if (!(level > 0.0 && level < 1.0)) throw config_error("level must be in (0, 1)");
  if (!(trim_eps > 0.0 && trim_eps < 0.5)) throw config_error("trim_eps must be in (0, 0.5)");
  if (!(denom_eps > 0.0)) throw config_error("denom_eps must be positive");
  if (reps < 1) throw config_error("reps must be at least 1");
  if (n < 8) throw config_error("n must be at least 8");
  if (jobs < 1) throw config_error("jobs must be at least 1");
  if (bias_bound && *bias_bound < 0) throw config_error("bias bound must be nonnegative");
  for (const auto& e : estimators) parse_estimator_id(e);
}

Schema parse_schema_arg(const std::string& arg) {
  if (arg.size() > 5 && arg.substr(arg.size() - 5) == ".json") return schema_from_json(read_json_file(arg));
  Schema s;
  for (const auto& kv : split(arg, ',')) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw config_error("schema entry '" + kv + "' is not key=column");
    const auto k = kv.substr(0, eq);
    const auto v = kv.substr(eq + 1);
    if (k == "y") s.y = v;
    else if (k == "t") s.t = v;
    else if (k == "d") s.d = v;
    else if (k == "x") s.x = split(v, ';');
    else throw config_error("unknown schema key '" + k + "'");
  }
  return s;
}

void apply_config_file(RunConfig& cfg, const Json& j) {
  if (!j.is_object()) throw config_error("config file must hold a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "command") cfg.command = v.get<std::string>();
      else if (k == "input") cfg.input = v.get<std::string>();
      else if (k == "schema") cfg.schema = v.is_string() ? parse_schema_arg(v.get<std::string>()) : schema_from_json(v);
      else if (k == "outcome") cfg.outcome = outcome_kind_from_string(v.get<std::string>());
      else if (k == "estimands" || k == "estimand") {
        cfg.estimands.clear();
        for (const auto& s : string_list(v, "estimand")) cfg.estimands.push_back(estimand_from_string(s));
      } else if (k == "method") cfg.method = method_key(v.get<std::string>());
      else if (k == "comparators") cfg.comparators = v.get<bool>();
      else if (k == "ratio") cfg.ratio = ratio_mode_from_string(v.get<std::string>());
      else if (k == "pool_controls") cfg.pool_controls = v.get<bool>();
      else if (k == "models") cfg.models = v;
      else if (k == "trim_eps") cfg.trim_eps = v.get<double>();
      else if (k == "denom_eps") cfg.denom_eps = v.get<double>();
      else if (k == "variance") cfg.variance = variance_method_from_string(v.get<std::string>());
      else if (k == "B") cfg.B = v.get<std::size_t>();
      else if (k == "stratify") cfg.stratify = v.get<bool>();
      else if (k == "null") cfg.null_value = v.get<double>();
      else if (k == "side") cfg.side = sidedness_from_string(v.get<std::string>());
      else if (k == "level") cfg.level = v.get<double>();
      else if (k == "bias_bound") cfg.bias_bound = v.get<double>();
      else if (k == "scenario" || k == "scenarios") cfg.scenarios = parse_scenarios(string_list(v, "scenario"));
      else if (k == "reps") cfg.reps = v.get<std::size_t>();
      else if (k == "n") cfg.n = v.get<std::size_t>();
      else if (k == "estimators") cfg.estimators = string_list(v, "estimators");
      else if (k == "boxplot_csv") cfg.boxplot_csv = v.get<std::string>();
      else if (k == "truth_draws") cfg.truth_draws = v.get<std::size_t>();
      else if (k == "dgp_params") cfg.dgp = DgpParams::from_vector(v.get<std::vector<double>>());
      else if (k == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (k == "jobs") cfg.jobs = v.get<int>();
      else if (k == "out") cfg.out = v.get<std::string>();
      else throw config_error("unknown config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config file: ") + e.what());
  }
}

Json cmd_estimate(const RunConfig& cfg, std::vector<std::string>& log) {
  Json doc;
  doc["command"] = "estimate";
  Json input;
  std::vector<std::string> warnings;
  const auto ds = load_input(cfg, input, warnings);
  doc["input"] = input;

  Json settings = common_settings(cfg);
  settings["estimands"] = Json::array();
  for (auto e : cfg.estimands) settings["estimands"].push_back(to_string(e));
  settings["variance"] = to_string(cfg.variance);
  const std::size_t B = cfg.B.value_or(500);
  if (cfg.variance == VarianceMethod::bootstrap) {
    settings["B"] = B;
    settings["stratify"] = cfg.stratify;
    settings["seed"] = cfg.seed;
  }
  settings["null"] = cfg.null_value;
  settings["side"] = to_string(cfg.side);
  settings["level"] = cfg.level;
  doc["settings"] = settings;

  const auto nc = nuisance_config(cfg, ds);
  EvalOptions eo{cfg.trim_eps, cfg.denom_eps};
  const auto nuis = fit_nuisances(ds, nc, &log);
  std::optional<NuisanceSet> base;

  std::vector<std::pair<Estimand, Method>> plan;
  for (auto e : cfg.estimands) {
    if (cfg.method == "treated-only") {
      plan.emplace_back(e, Method::treated_only);
    } else if (cfg.method == "trial") {
      plan.emplace_back(e, Method::trial_based);
    } else {
      plan.emplace_back(e, Method::full_data);
      if (cfg.comparators) plan.emplace_back(e, Method::trial_based);
    }
  }

  Json results = Json::array();
  for (const auto& [e, m] : plan) {
    if (m == Method::trial_based && !base) base = baseline_nuisances(ds, nuis, nc);
    const NuisanceSet& ns = m == Method::trial_based ? *base : nuis;
    const auto est = estimate(ds, ns, e, m, eo);
    Json row;
    if (cfg.variance == VarianceMethod::bootstrap) {
      EstimatorConfig ec{nc, e, m, eo};
      BootstrapOptions bo;
      bo.B = B;
      bo.seed = cfg.seed;
      bo.jobs = cfg.jobs;
      bo.stratify_by_source = cfg.stratify;
      bo.level = cfg.level;
      const auto br = bootstrap_variance(ds, ec, bo);
      auto ir = test(est, br.variance, cfg.null_value, cfg.side, cfg.level);
      ir.variance_method = VarianceMethod::bootstrap;
      row = to_json(ir);
      row["bootstrap"] = to_json(br);
    } else {
      const auto ifv = influence_values(ds, ns, e, m, est.point, eo);
      row = to_json(test(est, if_variance(ifv), cfg.null_value, cfg.side, cfg.level));
    }
    results.push_back(row);
  }
  doc["results"] = results;

  Json nj = to_json(nuis);
  if (base) nj["baseline_fingerprint"] = base->fingerprint();
  doc["nuisance"] = nj;

  Json eff;
  if (cfg.method != "treated-only" && ds.n2() > 0) {
    try {
      eff["gain_tau"] = efficiency_gain_analytic(ds, nuis, eo);
      eff["gap_psi"] = variance_gap_psi(ds, nuis, eo);
      eff["gap_xi"] = variance_gap_xi(ds, nuis, eo);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoVarianceModel) throw;
      eff = Json(nullptr);
      log.push_back("analytic efficiency gain skipped: " + std::string(e.what()));
    }
  } else {
    eff = Json(nullptr);
  }
  doc["efficiency"] = eff;
  doc["warnings"] = warnings;
  doc["log"] = log;
  return doc;
}

Json cmd_diagnose(const RunConfig& cfg, std::vector<std::string>& log) {
  Json doc;
  doc["command"] = "diagnose";
  Json input;
  std::vector<std::string> warnings;
  const auto ds = load_input(cfg, input, warnings);
  doc["input"] = input;
  Json settings = common_settings(cfg);
  settings["bias_bound"] = cfg.bias_bound ? Json(*cfg.bias_bound) : Json(nullptr);
  doc["settings"] = settings;
  doc["descriptives"] = to_json(summarize(ds));

  ModelSpec ex = default_spec(ds, outcome_family(ds.outcome_kind()));
  if (cfg.models.contains("exchangeability")) {
    ex = spec_from_json(cfg.models.at("exchangeability"), ex.family, ds.covariate_names());
  }
  doc["exchangeability"] = to_json(test_mean_exchangeability(ds, ex));

  const auto nc = nuisance_config(cfg, ds);
  EvalOptions eo{cfg.trim_eps, cfg.denom_eps};
  const auto nuis = fit_nuisances(ds, nc, &log);
  doc["overlap"] = to_json(overlap_diagnostics(ds, nuis, eo));
  if (cfg.bias_bound) {
    BiasSpec bs;
    bs.bound = *cfg.bias_bound;
    doc["bias_bound"] = to_json(bias_bound(ds, nuis, bs, eo));
  } else {
    doc["bias_bound"] = nullptr;
  }
  doc["nuisance"] = to_json(nuis);
  doc["warnings"] = warnings;
  doc["log"] = log;
  return doc;
}

Json cmd_simulate(const RunConfig& cfg, std::vector<std::string>& log) {
  Json doc;
  doc["command"] = "simulate";
  Json settings;
  Json sc = Json::array();
  for (auto s : cfg.scenarios) sc.push_back(to_string(s));
  settings["scenarios"] = sc;
  settings["reps"] = cfg.reps;
  settings["n"] = cfg.n;
  settings["seed"] = cfg.seed;
  settings["level"] = cfg.level;
  settings["ratio"] = to_string(cfg.ratio);
  settings["estimators"] = cfg.estimators;
  settings["truth_draws"] = cfg.truth_draws;
  settings["dgp_params"] = cfg.dgp.to_vector();
  doc["settings"] = settings;

  std::vector<MCResult> runs;
  Json rj = Json::array();
  for (auto s : cfg.scenarios) {
    ScenarioConfig sc_cfg;
    sc_cfg.scenario = s;
    sc_cfg.n = cfg.n;
    sc_cfg.dgp = cfg.dgp;
    sc_cfg.analyst.ratio_mode = cfg.ratio;
    MCOptions mo;
    mo.reps = cfg.reps;
    mo.master_seed = cfg.seed;
    mo.jobs = cfg.jobs;
    mo.estimators = cfg.estimators;
    mo.level = cfg.level;
    mo.retain_draws = cfg.boxplot_csv.has_value();
    mo.truth_draws = cfg.truth_draws;
    runs.push_back(run_monte_carlo(sc_cfg, mo));
    rj.push_back(to_json(runs.back()));
    if (runs.back().failures > 0) {
      log.push_back("scenario " + to_string(s) + ": " + std::to_string(runs.back().failures) +
                    " replicates failed and were excluded");
    }
  }
  doc["runs"] = rj;
  if (cfg.boxplot_csv) {
    std::ofstream f(*cfg.boxplot_csv, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + *cfg.boxplot_csv);
    std::vector<std::string> pick;
    for (const char* id : {"tau_full", "tau_full_const", "tau_trial"}) {
      for (const auto& e : cfg.estimators) {
        if (e == id) pick.push_back(e);
      }
    }
    export_boxplot_data(f, runs, pick.empty() ? cfg.estimators : pick);
    doc["boxplot_csv"] = file_name(*cfg.boxplot_csv);
  }
  doc["log"] = log;
  return doc;
}

namespace {

std::string fixed(double v, int prec) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(prec) << v;
  return o.str();
}

std::string label(const Json& est) {
  const auto e = est.at("estimand").get<std::string>();
  const auto m = est.at("method").get<std::string>();
  std::string base = e == "tau" ? "tau" : e == "psi" ? "psi" : "xi";
  if (m == "full_data") return base + " (full data)";
  if (m == "trial_based") return base + " (trial only)";
  return base + " (treated-only trial)";
}

void pad(std::ostringstream& o, const std::string& s, std::size_t w, bool right = true) {
  if (s.size() >= w) {
    o << s;
  } else if (right) {
    o << std::string(w - s.size(), ' ') << s;
  } else {
    o << s << std::string(w - s.size(), ' ');
  }
}

std::string num_or_dash(const Json& v, int prec) {
  return v.is_number() ? fixed(v.get<double>(), prec) : std::string("-");
}

}  // namespace

std::string render_report(const Json& doc) {
  if (!doc.is_object() || !doc.contains("command")) throw config_error("not a result document");
  const auto cmd = doc.at("command").get<std::string>();
  std::ostringstream o;
  if (cmd == "estimate") {
    const auto& in = doc.at("input");
    o << "Input " << in.at("file").get<std::string>() << ": n=" << in.at("n") << " (trial "
      << in.at("n1") << ", external " << in.at("n2") << "), outcome "
      << in.at("outcome_kind").get<std::string>() << "\n";
    const auto& s = doc.at("settings");
    o << "Variance: " << s.at("variance").get<std::string>() << "; test " << s.at("side").get<std::string>()
      << " against " << s.at("null") << "\n\n";
    pad(o, "Estimator", 28, false);
    pad(o, "Point x10^2", 13);
    pad(o, "Var x10^4", 12);
    pad(o, "p-value", 10);
    pad(o, "CI", 24);
    o << "\n";
    for (const auto& r : doc.at("results")) {
      pad(o, label(r.at("estimate")), 28, false);
      pad(o, fixed(r.at("estimate").at("point").get<double>() * 100.0, 2), 13);
      pad(o, fixed(r.at("variance").get<double>() * 1e4, 2), 12);
      pad(o, fixed(r.at("p_value").get<double>(), 3), 10);
      const auto& ci = r.at("ci");
      pad(o, "[" + fixed(ci[0].get<double>(), 4) + ", " + fixed(ci[1].get<double>(), 4) + "]", 24);
      o << "\n";
    }
    if (doc.contains("efficiency") && doc.at("efficiency").is_object()) {
      const auto& e = doc.at("efficiency");
      o << "\nAnalytic variance reduction (x n): tau " << num_or_dash(e.at("gain_tau"), 4) << ", psi "
        << num_or_dash(e.at("gap_psi"), 4) << ", xi " << num_or_dash(e.at("gap_xi"), 4) << "\n";
    }
    o << "Nuisance fingerprint: " << doc.at("nuisance").at("fingerprint").get<std::string>() << "\n";
  } else if (cmd == "simulate") {
    for (const auto& run : doc.at("runs")) {
      const auto& c = run.at("config");
      o << "Scenario " << c.at("scenario").get<std::string>() << " (n=" << c.at("n")
        << ", reps=" << run.at("reps_requested") << ", failures=" << run.at("failures") << ")\n";
      pad(o, "Estimator", 16, false);
      pad(o, "Truth", 9);
      pad(o, "Bias", 9);
      pad(o, "SD", 9);
      pad(o, "MSE", 9);
      pad(o, "Coverage", 10);
      o << "\n";
      for (const auto& s : run.at("summaries")) {
        pad(o, s.at("estimator").get<std::string>(), 16, false);
        pad(o, fixed(s.at("truth").get<double>(), 4), 9);
        pad(o, fixed(s.at("mean_bias").get<double>(), 4), 9);
        pad(o, num_or_dash(s.at("sd"), 4), 9);
        pad(o, fixed(s.at("mse").get<double>(), 4), 9);
        pad(o, fixed(s.at("coverage").get<double>(), 3), 10);
        o << "\n";
      }
      if (run.at("mean_gain_analytic").is_number()) {
        o << "Mean analytic efficiency gain: " << fixed(run.at("mean_gain_analytic").get<double>(), 4) << "\n";
      }
      o << "\n";
    }
  } else if (cmd == "diagnose") {
    const auto& ex = doc.at("exchangeability");
    o << "Mean exchangeability (interactions of d with covariates): chi2="
      << fixed(ex.at("statistic").get<double>(), 3) << " df=" << ex.at("df")
      << " p=" << fixed(ex.at("p_value").get<double>(), 3) << "\n";
    o << "Source main effect: " << fixed(ex.at("source_main_effect").at("coef").get<double>(), 4)
      << " (p=" << fixed(ex.at("source_main_effect").at("p_value").get<double>(), 3) << ")\n";
    const auto& ov = doc.at("overlap");
    o << "Overlap: " << ov.at("n_flagged") << " rows with pi*p near 1; trimmed p " << ov.at("p_trimmed")
      << ", pi " << ov.at("pi_trimmed") << "\n";
    for (const auto& n : ov.at("notes")) o << "  note: " << n.get<std::string>() << "\n";
    if (doc.at("bias_bound").is_object()) {
      o << "Bias bound |Lambda| <= " << num_or_dash(doc.at("bias_bound").at("lambda_abs_bound"), 4) << "\n";
    }
  } else {
    throw config_error("cannot render command '" + cmd + "'");
  }
  return o.str();
}

namespace {

struct Flags {
  std::string config, input, schema, outcome, method, ratio, variance, side, out, boxplot;
  std::vector<std::string> estimands, scenarios, estimators;
  std::size_t B = 0, reps = 0, n = 0, truth_draws = 0;
  double null_value = 0, level = 0, bias_bound = 0, trim_eps = 0, denom_eps = 0;
  std::uint64_t seed = 0;
  int jobs = 0;
  bool no_comparators = false, no_pool = false, stratify = false;
};

bool given(CLI::App* sub, const std::string& name) {
  auto* o = sub->get_option_no_throw(name);
  return o != nullptr && o->count() > 0;
}

void write_output(const RunConfig& cfg, const std::string& text, std::ostream& out) {
  if (cfg.out) {
    std::ofstream f(*cfg.out, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + *cfg.out);
    f << text;
    if (!f) throw Error(ErrorCode::IoError, "failed writing " + *cfg.out);
  } else {
    out << text;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Treatment-effect estimation for trials augmented with external controls"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* s) {
    s->add_option("--config", f.config, "JSON config file (command-line flags take precedence)");
    s->add_option("--seed", f.seed, "Master random seed");
    s->add_option("--jobs", f.jobs, "Worker threads");
    s->add_option("--out", f.out, "Write output here instead of stdout");
  };
  auto data = [&](CLI::App* s) {
    s->add_option("--input", f.input, "CSV file");
    s->add_option("--schema", f.schema, "Column map 'y=..,t=..,d=..,x=a;b' or a JSON file");
    s->add_option("--outcome", f.outcome, "binary or continuous (default: detected)");
    s->add_option("--ratio", f.ratio, "Variance ratio: known1, constant, loglinear");
    s->add_flag("--no-pool", f.no_pool, "Fit m0 on trial controls only");
    s->add_option("--trim-eps", f.trim_eps, "Propensity trimming bound");
    s->add_option("--denom-eps", f.denom_eps, "Weight denominator floor");
  };

  auto* est = app.add_subcommand("estimate", "Estimate tau, psi and xi from a CSV file");
  common(est);
  data(est);
  est->add_option("--estimand", f.estimands, "tau, psi, xi (repeatable)");
  est->add_option("--method", f.method, "full, trial or treated-only");
  est->add_flag("--no-comparators", f.no_comparators, "Skip the trial-based comparators");
  est->add_option("--variance", f.variance, "if or bootstrap");
  est->add_option("--B", f.B, "Bootstrap replicates");
  est->add_flag("--stratify", f.stratify, "Bootstrap within data sources");
  est->add_option("--null", f.null_value, "Null value");
  est->add_option("--side", f.side, "two_sided, greater or less");
  est->add_option("--level", f.level, "Confidence level");

  auto* dia = app.add_subcommand("diagnose", "Exchangeability test, overlap and bias bound");
  common(dia);
  data(dia);
  dia->add_option("--bias-bound", f.bias_bound, "Bound B on |b(x)|");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo study over the simulation scenarios");
  common(sim);
  sim->add_option("--scenario", f.scenarios, "i, ii, iii, iv or all (repeatable)");
  sim->add_option("--reps", f.reps, "Replicates per scenario");
  sim->add_option("--n", f.n, "Sample size");
  sim->add_option("--ratio", f.ratio, "Analyst variance-ratio mode");
  sim->add_option("--estimators", f.estimators, "Estimator ids (repeatable)");
  sim->add_option("--boxplot-csv", f.boxplot, "Write per-replicate biases here");
  sim->add_option("--truth-draws", f.truth_draws, "Oracle draws for the true effects");
  sim->add_option("--level", f.level, "Confidence level");

  auto* rep = app.add_subcommand("report", "Render a JSON result as text tables");
  rep->add_option("--input", f.input, "JSON produced by estimate, diagnose or simulate")->required();
  rep->add_option("--out", f.out, "Write output here instead of stdout");

  RunConfig cfg;
  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      throw config_error(e.what());
    }

    CLI::App* s = est->parsed() ? est : dia->parsed() ? dia : sim->parsed() ? sim : rep;
    cfg.command = s->get_name();

    if (s == rep) {
      cfg.out = f.out.empty() ? std::nullopt : std::optional<std::string>(f.out);
      write_output(cfg, render_report(read_json_file(f.input)), out);
      return 0;
    }

    // defaults < file < flags
    bool estimands_set = given(s, "--estimand");
    if (given(s, "--config")) {
      const auto file = read_json_file(f.config);
      apply_config_file(cfg, file);
      cfg.command = s->get_name();
      estimands_set |= file.contains("estimands") || file.contains("estimand");
    }
    if (given(s, "--input")) cfg.input = f.input;
    if (given(s, "--schema")) cfg.schema = parse_schema_arg(f.schema);
    if (given(s, "--outcome")) cfg.outcome = outcome_kind_from_string(f.outcome);
    if (given(s, "--ratio")) cfg.ratio = ratio_mode_from_string(f.ratio);
    if (given(s, "--no-pool")) cfg.pool_controls = false;
    if (given(s, "--trim-eps")) cfg.trim_eps = f.trim_eps;
    if (given(s, "--denom-eps")) cfg.denom_eps = f.denom_eps;
    if (given(s, "--estimand")) {
      cfg.estimands.clear();
      for (const auto& e : f.estimands) cfg.estimands.push_back(estimand_from_string(e));
    }
    if (given(s, "--method")) cfg.method = method_key(f.method);
    if (given(s, "--no-comparators")) cfg.comparators = false;
    if (given(s, "--variance")) cfg.variance = variance_method_from_string(f.variance);
    if (given(s, "--B")) cfg.B = f.B;
    if (given(s, "--stratify")) cfg.stratify = true;
    if (given(s, "--null")) cfg.null_value = f.null_value;
    if (given(s, "--side")) cfg.side = sidedness_from_string(f.side);
    if (given(s, "--level")) cfg.level = f.level;
    if (given(s, "--bias-bound")) cfg.bias_bound = f.bias_bound;
    if (given(s, "--scenario")) cfg.scenarios = parse_scenarios(f.scenarios);
    if (given(s, "--reps")) cfg.reps = f.reps;
    if (given(s, "--n")) cfg.n = f.n;
    if (given(s, "--estimators")) cfg.estimators = f.estimators;
    if (given(s, "--boxplot-csv")) cfg.boxplot_csv = f.boxplot;
    if (given(s, "--truth-draws")) cfg.truth_draws = f.truth_draws;
    if (given(s, "--seed")) cfg.seed = f.seed;
    if (given(s, "--jobs")) cfg.jobs = f.jobs;
    if (given(s, "--out")) cfg.out = f.out;
    // Only tau is defined for a treated-only trial.
    if (cfg.method == "treated-only" && !estimands_set) cfg.estimands = {Estimand::tau};
    cfg.check();

    std::vector<std::string> log;
    Json doc;
    if (s == est) doc = cmd_estimate(cfg, log);
    else if (s == dia) doc = cmd_diagnose(cfg, log);
    else doc = cmd_simulate(cfg, log);
    for (const auto& l : log) err << "extctl: " << l << "\n";
    write_output(cfg, doc.dump(2) + "\n", out);
    return 0;
  } catch (const Error& e) {
    Json j;
    j["error"] = to_json(e);
    out << j.dump(2) << "\n";
    err << "extctl: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    Json j;
    j["error"] = {{"code", "INTERNAL_ERROR"}, {"message", e.what()}};
    out << j.dump(2) << "\n";
    err << "extctl: internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace extctl
