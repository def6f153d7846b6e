#pragma once

// JSON views of the library's result types. Key order is fixed so output is
// byte-stable.

#include <json.hpp>

#include "extctl/dataset.hpp"
#include "extctl/error.hpp"
#include "extctl/estimators.hpp"
#include "extctl/glm.hpp"
#include "extctl/inference.hpp"
#include "extctl/nuisance.hpp"
#include "extctl/simlab.hpp"

namespace extctl {

using Json = nlohmann::ordered_json;

Json to_json(const Error& e);
Json to_json(const ModelSpec& s);
Json to_json(const FittedGLM& m);
Json to_json(const VarianceRatioModel& r);
Json to_json(const NuisanceSet& n);
Json to_json(const ValidationReport& r);
Json to_json(const DescriptiveStats& s);
Json to_json(const Estimate& e);
Json to_json(const InferenceResult& r);
Json to_json(const BootstrapResult& b, bool include_draws = false);
Json to_json(const ExchangeabilityTest& t);
Json to_json(const BiasBound& b);
Json to_json(const Distribution& d);
Json to_json(const OverlapReport& r);
Json to_json(const TrueEffects& t);
Json to_json(const MCSummary& s);
Json to_json(const ScenarioConfig& c);
Json to_json(const MCResult& r);

// Reads a spec as either a list of term strings or
// {"terms": [...], "intercept": bool}. Family is supplied by the caller.
ModelSpec spec_from_json(const Json& j, Family family, const std::vector<std::string>& names = {});

}  // namespace extctl
