#include "gliv/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gliv/error.hpp"

namespace gliv {

namespace {

Json vec(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json mat(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(std::move(row));
  }
  return a;
}

}  // namespace

Json config_to_json(const TypeConfig& config) {
  Json types = Json::array();
  for (int s = 0; s < config.n_types(); ++s) {
    Json col = Json::array();
    for (int z = 0; z < config.n_instruments(); ++z) {
      col.push_back(config.treatment(config.take(z, s)));
    }
    types.push_back(std::move(col));
  }
  return Json{{"treatments", config.treatments()},
              {"instruments", config.instruments()},
              {"types", std::move(types)}};
}

TypeConfig config_from_json(const Json& j) {
  try {
    return TypeConfig(
        j.at("treatments").get<std::vector<std::string>>(),
        j.at("instruments").get<std::vector<std::string>>(),
        j.at("types").get<std::vector<std::vector<std::string>>>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed config JSON: ") + e.what());
  }
}

TypeConfig load_config(const std::string& name_or_path) {
  if (name_or_path == "main_example" || name_or_path == "binary_late" ||
      name_or_path == "main_example_without_s5") {
    return preset(name_or_path);
  }
  std::ifstream in(name_or_path);
  if (!in) {
    throw ValidationError("config '" + name_or_path +
                          "' is neither a preset nor a readable file");
  }
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config '" + name_or_path +
                          "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

Json to_json(const RunManifest& m) {
  Json flags = Json::object();
  for (const auto& [k, v] : m.flags) flags[k] = v;
  return Json{{"command", m.command},     {"config", m.config},
              {"dataset", m.dataset},     {"flags", std::move(flags)},
              {"seed", m.seed},           {"version", m.version},
              {"timestamp", m.timestamp}};
}

void validate_manifest(const Json& j) {
  if (!j.is_object()) throw ValidationError("manifest must be an object");
  for (const char* key : {"command", "config", "dataset", "version",
                          "timestamp"}) {
    if (!j.contains(key) || !j[key].is_string()) {
      throw ValidationError(std::string("manifest field '") + key +
                            "' missing or not a string");
    }
  }
  if (!j.contains("seed") || !j["seed"].is_number_unsigned()) {
    throw ValidationError("manifest field 'seed' missing or not an integer");
  }
  if (!j.contains("flags") || !j["flags"].is_object()) {
    throw ValidationError("manifest field 'flags' missing or not an object");
  }
  for (const auto& [k, v] : j["flags"].items()) {
    if (!v.is_string()) {
      throw ValidationError("manifest flag '" + k + "' is not a string");
    }
  }
}

RunManifest manifest_from_json(const Json& j) {
  validate_manifest(j);
  RunManifest m;
  m.command = j["command"].get<std::string>();
  m.config = j["config"].get<std::string>();
  m.dataset = j["dataset"].get<std::string>();
  m.seed = j["seed"].get<std::uint64_t>();
  m.version = j["version"].get<std::string>();
  m.timestamp = j["timestamp"].get<std::string>();
  for (const auto& [k, v] : j["flags"].items()) {
    m.flags[k] = v.get<std::string>();
  }
  return m;
}

Json to_json(const EstimateReport& r, const TypeConfig& config,
             bool include_influence) {
  Json params = Json::array();
  for (std::size_t j = 0; j < r.parameters.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    params.push_back({{"id", to_string(r.parameters[j], config)},
                      {"estimate", r.estimates(i)},
                      {"se", r.standard_errors(i)},
                      {"sigma", std::sqrt(std::max(0.0, r.bound(i, i)))}});
  }
  Json residual = Json::array();
  for (int t = 0; t < config.n_treatments(); ++t) {
    residual.push_back({{"id", "p:" + config.treatment(t) + ":0"},
                        {"estimate", r.residual_p0(t)},
                        {"residual", true}});
  }
  Json out{{"n", r.n},
           {"parameters", std::move(params)},
           {"covariance", mat(r.covariance)},
           {"covariance_convention", "covariance of the estimates = V / n"},
           {"residual", std::move(residual)},
           {"warnings", r.warnings}};
  if (include_influence) out["influence"] = mat(r.influence);
  return out;
}

Json to_json(const DerivedEstimate& d, const std::string& name) {
  return Json{{"name", name},
              {"estimate", d.estimate},
              {"se", d.standard_error},
              {"gradient", vec(d.gradient)}};
}

Json to_json(const DmlResult& r, const TypeConfig& config) {
  return Json{{"id", to_string(r.target, config)},
              {"estimate", r.estimate},
              {"variance", r.variance},
              {"se", r.standard_error},
              {"n", r.n}};
}

Json to_json(const GmmResult& r) {
  return Json{{"n", r.n},
              {"eta_hat", vec(r.eta_hat)},
              {"se", vec(r.standard_errors)},
              {"first_stage_eta", vec(r.first_stage_eta)},
              {"objective_value", r.objective_value},
              {"first_stage_objective", r.first_stage_objective},
              {"j_statistic", r.j_statistic},
              {"epsilon", r.epsilon},
              {"V_hat", mat(r.V_hat)},
              {"Gamma_hat", mat(r.Gamma_hat)},
              {"covariance", mat(r.covariance)},
              {"warnings", r.warnings}};
}

Json to_json(const ImplicationReport& r, const ImplicationSummary& s,
             const TypeConfig& config, const Tolerance& tolerance) {
  Json cells = Json::array();
  for (std::size_t c = 0; c < r.cell_x.size(); ++c) {
    cells.push_back({{"x", vec(r.cell_x[c].transpose())}, {"n", r.cell_n[c]}});
  }
  Json values = Json::array();
  for (const auto& v : r.values) {
    values.push_back({{"cell", v.cell},
                      {"t", config.treatment(v.t)},
                      {"k", v.k},
                      {"bin", r.bins.label(v.bin)},
                      {"q", v.q},
                      {"se", v.se},
                      {"violation", v.violation}});
  }
  Json eq = Json::array();
  for (const auto& e : r.equalities) {
    eq.push_back({{"cell", e.cell},
                   {"restriction", describe(config, r.restrictions[e.restriction])},
                   {"discrepancy", e.discrepancy},
                   {"se", e.se}});
  }
  Json flagged = Json::array();
  for (const auto& f : s.flagged) {
    flagged.push_back(
        {{"what", f.what}, {"magnitude", f.magnitude}, {"tolerance", f.tolerance}});
  }
  Json tol = tolerance.automatic
                 ? Json{{"mode", "auto"}, {"multiplier", tolerance.multiplier}}
                 : Json{{"mode", "fixed"}, {"value", tolerance.value}};
  return Json{
      {"note",
       "plug-in diagnostic with a heuristic tolerance; not a sized test"},
      {"pass", s.pass},
      {"checks", s.checks},
      {"max_violation", s.max_violation},
      {"max_discrepancy", s.max_discrepancy},
      {"tolerance", std::move(tol)},
      {"breakpoints", r.bins.breakpoints()},
      {"reduced_system", s.reduced_system},
      {"flagged", std::move(flagged)},
      {"cells", std::move(cells)},
      {"values", std::move(values)},
      {"equalities", std::move(eq)}};
}

Json to_json(const McSummary& s) {
  Json rows = Json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"id", r.name},
                    {"value", r.truth},
                    {"mean_bias", r.mean_bias},
                    {"median_bias", r.median_bias},
                    {"std_dev", r.std_dev},
                    {"rmse", r.rmse},
                    {"mean_se", r.mean_se},
                    {"sigma_mean", r.sigma_mean},
                    {"sigma_value", r.sigma_truth},
                    {"coverage95", r.coverage},
                    {"replications", r.replications}});
  }
  return Json{{"dgp", to_string(s.dgp.x_law)},
              {"n", s.dgp.n},
              {"seed", s.dgp.seed},
              {"success_to_z2", s.dgp.success_to_z2},
              {"requested", s.requested},
              {"failures", s.failures},
              {"failure_messages", s.failure_messages},
              {"rows", std::move(rows)}};
}

std::string format_estimates(const EstimateReport& r,
                             const TypeConfig& config) {
  std::ostringstream os;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-20s %12s %12s %12s\n", "Parameter",
                "Estimate", "Std. Error", "sigma");
  os << buf;
  for (std::size_t j = 0; j < r.parameters.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    std::snprintf(buf, sizeof buf, "%-20s %12.4f %12.4f %12.4f\n",
                  to_string(r.parameters[j], config).c_str(), r.estimates(i),
                  r.standard_errors(i),
                  std::sqrt(std::max(0.0, r.bound(i, i))));
    os << buf;
  }
  for (int t = 0; t < config.n_treatments(); ++t) {
    std::snprintf(buf, sizeof buf, "%-20s %12.4f %12s %12s\n",
                  ("p:" + config.treatment(t) + ":0").c_str(),
                  r.residual_p0(t), "(residual)", "");
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "n = %lld\n", static_cast<long long>(r.n));
  os << buf;
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
  return os.str();
}

std::string format_implications(const ImplicationSummary& s) {
  std::ostringstream os;
  os << "Plug-in check of the testable implications (heuristic tolerance, "
        "not a sized test)\n";
  os << "checks " << s.checks << ", flagged " << s.flagged.size()
     << ", max range violation " << s.max_violation
     << ", max equality discrepancy " << s.max_discrepancy << '\n';
  if (!s.reduced_system.empty()) {
    os << "non-redundant restrictions:\n";
    for (const auto& line : s.reduced_system) os << "  " << line << '\n';
  }
  for (const auto& f : s.flagged) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " (%.4g > %.4g)", f.magnitude, f.tolerance);
    os << "FLAG " << f.what << buf << '\n';
  }
  os << (s.pass ? "result: pass\n" : "result: implications violated\n");
  return os.str();
}

}  // namespace gliv
