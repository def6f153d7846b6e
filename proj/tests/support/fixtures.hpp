#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "extctl/dataset.hpp"
#include "extctl/glm.hpp"
#include "extctl/nuisance.hpp"
#include "extctl/simlab.hpp"

namespace fx {

inline std::string data_path(const std::string& name) {
  return std::string(EXTCTL_TEST_DATA) + "/" + name;
}

inline std::string schema_path(const std::string& name) {
  return std::string(EXTCTL_SCHEMA_DIR) + "/" + name;
}

struct Row {
  int d, t;
  double y;
  std::vector<double> x;
};

inline extctl::CompositeDataset make(const std::vector<Row>& rows,
                                     std::vector<std::string> names = {}) {
  extctl::DatasetDraft draft;
  for (const auto& r : rows) draft.rows.push_back({r.y, r.x, r.t, r.d});
  if (names.empty() && !rows.empty()) {
    for (std::size_t j = 0; j < rows.front().x.size(); ++j) names.push_back("x" + std::to_string(j + 1));
  }
  draft.covariate_names = std::move(names);
  return extctl::CompositeDataset::build(std::move(draft));
}

// Composite datasets from the simulation DGP with seed-dependent
// coefficients, so the identity checks see varied fits.
inline extctl::CompositeDataset random_dataset(std::uint64_t seed, std::size_t n = 300) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  extctl::ScenarioConfig cfg;
  cfg.n = n;
  cfg.scenario = static_cast<extctl::Scenario>(seed % 4);
  cfg.dgp.d1 += u(rng);
  cfg.dgp.d2 += u(rng);
  cfg.dgp.t1 += u(rng);
  cfg.dgp.y1 += u(rng);
  cfg.dgp.e1 += u(rng);
  cfg.dgp.v1b += 0.3 * u(rng);
  cfg.dgp.v0b += 0.3 * u(rng);
  return extctl::generate(cfg, seed).data;
}

// Saturated specs for binary covariates: one indicator per cell.
inline extctl::ModelSpec spec(extctl::Family f, const std::vector<std::string>& terms,
                              const std::vector<std::string>& names = {}) {
  extctl::ModelSpec s;
  s.family = f;
  for (const auto& t : terms) s.terms.push_back(extctl::parse_term(t, names));
  return s;
}

inline extctl::NuisanceConfig saturated(const std::vector<std::string>& terms,
                                        extctl::RatioMode mode = extctl::RatioMode::constant) {
  using extctl::Family;
  extctl::NuisanceConfig c;
  c.m1 = spec(Family::identity, terms);
  c.m0 = spec(Family::identity, terms);
  c.p = spec(Family::logit, terms);
  c.pi = spec(Family::logit, terms);
  c.ratio = spec(Family::identity, terms);
  c.ratio_mode = mode;
  return c;
}

}  // namespace fx
