#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "gliv/diagnostics.hpp"
#include "gliv/dml.hpp"
#include "gliv/estimators.hpp"
#include "gliv/gmm.hpp"
#include "gliv/simulation.hpp"
#include "gliv/typeconfig.hpp"

namespace gliv {

inline constexpr const char* kVersion = "1.0.0";

using Json = nlohmann::ordered_json;

// {"treatments": [...], "instruments": [...], "types": [[...], ...]} with
// one inner list per type, listed by instrument.
Json config_to_json(const TypeConfig& config);
TypeConfig config_from_json(const Json& j);
// A preset name or a path to a JSON file.
TypeConfig load_config(const std::string& name_or_path);

struct RunManifest {
  std::string command;
  std::string config;
  std::string dataset;
  std::map<std::string, std::string> flags;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::string timestamp = "unspecified";
};

Json to_json(const RunManifest& m);
RunManifest manifest_from_json(const Json& j);
// Throws ValidationError when required manifest fields are missing or of
// the wrong type.
void validate_manifest(const Json& j);

Json to_json(const EstimateReport& r, const TypeConfig& config,
             bool include_influence = false);
Json to_json(const DerivedEstimate& d, const std::string& name);
Json to_json(const DmlResult& r, const TypeConfig& config);
Json to_json(const GmmResult& r);
Json to_json(const ImplicationReport& r, const ImplicationSummary& s,
             const TypeConfig& config, const Tolerance& tolerance);
Json to_json(const McSummary& s);

std::string format_estimates(const EstimateReport& r, const TypeConfig& config);
std::string format_implications(const ImplicationSummary& s);

}  // namespace gliv
