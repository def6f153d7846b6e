#pragma once

// Point estimators for the trial-population effect tau, the overall-population
// effect psi and the external-population effect xi, their influence
// functions, and the plug-in efficiency quantities.

#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "extctl/dataset.hpp"
#include "extctl/nuisance.hpp"

namespace extctl {

enum class Estimand { tau, psi, xi };
// trial_based: uses trial controls only (r == 0, unpooled m0).
enum class Method { trial_based, full_data, treated_only };

std::string to_string(Estimand e);
std::string to_string(Method m);
Estimand estimand_from_string(const std::string& s);
Method method_from_string(const std::string& s);

struct Estimate {
  Estimand estimand = Estimand::tau;
  Method method = Method::full_data;
  double point = 0.0;
  std::size_t n_used = 0;
  std::string nuisance_fingerprint;
  // Rows whose p or pi prediction was trimmed, plus rows whose weight
  // denominator hit the floor.
  std::size_t trim_count = 0;
};

struct IFVector {
  Eigen::VectorXd values;
  Estimand estimand = Estimand::tau;
  Method method = Method::full_data;
};

// W(x, d, t). The denominator is floored at denom_eps; `floored` is set when
// that happens.
double weight_W(double pi_x, double p_x, double r_x, int d, int t, double denom_eps = 1e-6,
                bool* floored = nullptr);

Estimate estimate_tau_trial(const CompositeDataset& ds, const NuisanceSet& nuis,
                            const EvalOptions& opts = {});
Estimate estimate_tau_full(const CompositeDataset& ds, const NuisanceSet& nuis,
                           const EvalOptions& opts = {});
Estimate estimate_tau_treated_only(const CompositeDataset& ds, const NuisanceSet& nuis,
                                   const EvalOptions& opts = {});
// method is full_data, or trial_based for the comparator (which expects
// nuisances from baseline_nuisances).
Estimate estimate_psi(const CompositeDataset& ds, const NuisanceSet& nuis, Method method,
                      const EvalOptions& opts = {});
Estimate estimate_xi(const CompositeDataset& ds, const NuisanceSet& nuis, Method method,
                     const EvalOptions& opts = {});

// Dispatches to the functions above.
Estimate estimate(const CompositeDataset& ds, const NuisanceSet& nuis, Estimand estimand,
                  Method method, const EvalOptions& opts = {});

IFVector influence_values(const CompositeDataset& ds, const NuisanceSet& nuis, Estimand estimand,
                          Method method, double point, const EvalOptions& opts = {});

// Mean of IF^2 at the matching point estimate.
double efficiency_bound_plugin(const CompositeDataset& ds, const NuisanceSet& nuis,
                               Estimand estimand, Method method, const EvalOptions& opts = {});

// Plug-in of the gap between the trial-only and full-data bounds for tau.
double efficiency_gain_analytic(const CompositeDataset& ds, const NuisanceSet& nuis,
                                const EvalOptions& opts = {});
double variance_gap_psi(const CompositeDataset& ds, const NuisanceSet& nuis,
                        const EvalOptions& opts = {});
double variance_gap_xi(const CompositeDataset& ds, const NuisanceSet& nuis,
                       const EvalOptions& opts = {});

}  // namespace extctl
