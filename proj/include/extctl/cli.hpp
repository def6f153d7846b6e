#pragma once

// Command-line front end. `run_cli` is the whole program minus main() so the
// tests can drive it in-process.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "extctl/dataset.hpp"
#include "extctl/estimators.hpp"
#include "extctl/inference.hpp"
#include "extctl/nuisance.hpp"
#include "extctl/serialize.hpp"
#include "extctl/simlab.hpp"

namespace extctl {

struct RunConfig {
  std::string command;

  // data
  std::optional<std::string> input;
  Schema schema;
  std::optional<OutcomeKind> outcome;

  // estimation
  std::vector<Estimand> estimands{Estimand::tau, Estimand::psi, Estimand::xi};
  std::string method = "full";  // full | trial | treated-only
  bool comparators = true;      // with method=full, also report trial-based versions
  RatioMode ratio = RatioMode::loglinear;
  bool pool_controls = true;
  Json models = Json::object();  // optional per-nuisance specs: m1, m0, p, pi, ratio, exchangeability
  double trim_eps = 1e-3;
  double denom_eps = 1e-6;

  // inference
  VarianceMethod variance = VarianceMethod::influence_function;
  std::optional<std::size_t> B;
  bool stratify = false;
  double null_value = 0.0;
  Sidedness side = Sidedness::two_sided;
  double level = 0.95;
  std::optional<double> bias_bound;

  // simulation
  std::vector<Scenario> scenarios{Scenario::i};
  std::size_t reps = 1000;
  std::size_t n = 1000;
  std::vector<std::string> estimators = all_estimator_ids();
  std::optional<std::string> boxplot_csv;
  std::size_t truth_draws = 10'000'000;
  DgpParams dgp;

  std::uint64_t seed = 1;
  int jobs = 1;
  std::optional<std::string> out;

  // Cross-field checks; throws ConfigError.
  void check() const;
};

// Applies every key present in a config-file object.
void apply_config_file(RunConfig& cfg, const Json& j);

// Parses "y=col,t=col,d=col,x=a;b" or loads a JSON schema file.
Schema parse_schema_arg(const std::string& arg);

Json cmd_estimate(const RunConfig& cfg, std::vector<std::string>& log);
Json cmd_diagnose(const RunConfig& cfg, std::vector<std::string>& log);
Json cmd_simulate(const RunConfig& cfg, std::vector<std::string>& log);
// Renders a JSON document produced by one of the commands above.
std::string render_report(const Json& doc);

// Full program: parses argv, runs, writes JSON (or the report text) to --out
// or `out`, logs to `err`. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace extctl
