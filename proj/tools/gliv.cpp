#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gliv/diagnostics.hpp"
#include "gliv/dml.hpp"
#include "gliv/error.hpp"
#include "gliv/estimators.hpp"
#include "gliv/gmm.hpp"
#include "gliv/report.hpp"
#include "gliv/simulation.hpp"

namespace {

using gliv::Json;

enum Exit { kOk = 0, kUnexpected = 1, kValidation = 2, kDegenerate = 3,
            kViolated = 4 };

struct Common {
  std::string config = "main_example";
  std::string data;
  std::string learner = "cells";
  double trim = gliv::kDefaultTrimFloor;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out;
  std::string timestamp = "unspecified";
  bool json = false;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw gliv::ValidationError("cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gliv::ValidationError("cannot write '" + path + "'");
  out << text;
  if (!out) throw gliv::ValidationError("failed writing '" + path + "'");
}

gliv::RunManifest manifest(const std::string& command, const Common& c,
                           std::map<std::string, std::string> flags) {
  gliv::RunManifest m;
  m.command = command;
  m.config = c.config;
  m.dataset = c.data;
  m.seed = c.seed;
  m.timestamp = c.timestamp;
  m.flags = std::move(flags);
  return m;
}

void emit(const Common& c, const gliv::RunManifest& m, Json report,
          const std::string& text) {
  Json doc{{"manifest", gliv::to_json(m)}, {"report", std::move(report)}};
  const std::string dumped = doc.dump(2) + "\n";
  if (!c.out.empty()) write_file(c.out, dumped);
  std::cout << (c.json ? dumped : text) << std::flush;
}

gliv::Dataset load_data(const Common& c, const gliv::TypeConfig& cfg) {
  if (c.data.empty()) throw gliv::ValidationError("--data is required");
  return gliv::read_csv_file(c.data, cfg);
}

std::vector<gliv::ParameterId> param_list(const std::string& text,
                                          const gliv::TypeConfig& cfg) {
  if (text == "lasf") return gliv::lasf_family(cfg);
  return gliv::parse_parameter_list(text, cfg);
}

void add_common(CLI::App* sub, Common& c, bool with_data) {
  sub->add_option("--config", c.config,
                  "Preset name (main_example, main_example_without_s5, "
                  "binary_late) or config JSON path")
      ->capture_default_str();
  if (with_data) sub->add_option("--data", c.data, "Dataset CSV (y,t,z,x1..)");
  sub->add_option("--seed", c.seed, "Master seed")
      ->envname("GLIV_SEED")
      ->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads")
      ->envname("GLIV_THREADS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--out", c.out, "Write the JSON report here");
  sub->add_option("--timestamp", c.timestamp,
                  "Timestamp recorded in the manifest")
      ->envname("GLIV_TIMESTAMP")
      ->capture_default_str();
  sub->add_flag("--json", c.json, "Print the JSON report instead of tables");
}

void add_nuisance(CLI::App* sub, Common& c) {
  sub->add_option("--learner", c.learner, "cells or series:<degree>")
      ->capture_default_str();
  sub->add_option("--trim", c.trim, "Propensity trimming floor")
      ->capture_default_str();
}

int run(const std::vector<std::string>& args);

void require_monotone(const gliv::TypeConfig& cfg) {
  if (auto v = gliv::find_monotonicity_violation(cfg)) {
    throw gliv::ValidationError(
        "configuration violates unordered monotonicity: " +
        gliv::describe(cfg, *v));
  }
}

int cmd_estimate(const Common& c, const std::string& params,
                 const std::string& influence_path) {
  const gliv::TypeConfig cfg = gliv::load_config(c.config);
  require_monotone(cfg);
  const gliv::Dataset data = load_data(c, cfg);
  const auto ids = gliv::with_companions(param_list(params, cfg));
  const gliv::LearnerSpec spec = gliv::LearnerSpec::parse(c.learner);
  const gliv::NuisanceFit nf = gliv::fit(data, cfg, spec, c.trim);
  const gliv::EstimateReport r = gliv::estimate(data, cfg, nf, ids);

  Json report = gliv::to_json(r, cfg);
  Json derived = Json::array();
  std::string text = gliv::format_estimates(r, cfg);
  for (int t = 0; t < cfg.n_treatments(); ++t) {
    for (int treated = 0; treated < 2; ++treated) {
      gliv::Functional phi;
      try {
        phi = treated ? gliv::switcher_lasf_treated(cfg, t)
                      : gliv::switcher_lasf(cfg, t);
      } catch (const gliv::ValidationError&) {
        continue;
      }
      bool present = true;
      for (const auto& id : phi.inputs) present = present && r.index_of(id);
      if (!present) continue;
      const gliv::DerivedEstimate d = gliv::derived_parameter(r, phi);
      derived.push_back(gliv::to_json(d, phi.name));
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-20s %12.4f %12.4f\n", phi.name.c_str(),
                    d.estimate, d.standard_error);
      text += buf;
    }
  }
  report["derived"] = std::move(derived);

  if (!influence_path.empty()) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t j = 0; j < r.parameters.size(); ++j) {
      os << (j ? "," : "") << gliv::to_string(r.parameters[j], cfg);
    }
    os << '\n';
    for (Eigen::Index i = 0; i < r.influence.rows(); ++i) {
      for (Eigen::Index j = 0; j < r.influence.cols(); ++j) {
        os << (j ? "," : "") << r.influence(i, j);
      }
      os << '\n';
    }
    write_file(influence_path, os.str());
  }
  emit(c, manifest("estimate", c,
                   {{"params", params},
                    {"learner", c.learner},
                    {"trim", num(c.trim)}}),
       std::move(report), text);
  return kOk;
}

int cmd_dml(const Common& c, const std::string& targets, int folds) {
  const gliv::TypeConfig cfg = gliv::load_config(c.config);
  require_monotone(cfg);
  const gliv::Dataset data = load_data(c, cfg);
  const auto ids = param_list(targets, cfg);
  for (const auto& id : ids) gliv::validate(id, cfg);
  const gliv::LearnerSpec spec = gliv::LearnerSpec::parse(c.learner);
  const gliv::CrossFitPlan plan = gliv::make_plan(data.size(), folds, c.seed);
  const gliv::PlugIn plug = gliv::cross_fit(
      data, cfg, plan, gliv::learner_fitter(cfg, spec, c.trim), c.threads);

  Json rows = Json::array();
  std::ostringstream text;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-20s %12s %12s %12s\n", "Parameter",
                "Estimate", "Std. Error", "sigma");
  text << buf;
  for (const auto& id : ids) {
    const gliv::DmlResult r = gliv::dml2_from_plugin(data, cfg, id, plug);
    rows.push_back(gliv::to_json(r, cfg));
    std::snprintf(buf, sizeof buf, "%-20s %12.4f %12.4f %12.4f\n",
                  gliv::to_string(id, cfg).c_str(), r.estimate,
                  r.standard_error, std::sqrt(std::max(0.0, r.variance)));
    text << buf;
  }
  text << "n = " << data.size() << ", folds = " << folds << '\n';
  Json report{{"n", data.size()},
              {"folds", folds},
              {"learner", spec.to_string()},
              {"estimates", std::move(rows)}};
  emit(c, manifest("dml", c,
                   {{"targets", targets},
                    {"folds", std::to_string(folds)},
                    {"learner", c.learner},
                    {"trim", num(c.trim)}}),
       std::move(report), text.str());
  return kOk;
}

int cmd_gmm(const Common& c, const std::string& spec_path, double epsilon) {
  const gliv::TypeConfig cfg = gliv::load_config(c.config);
  require_monotone(cfg);
  const gliv::Dataset data = load_data(c, cfg);
  if (spec_path.empty()) throw gliv::ValidationError("--spec is required");
  const gliv::MomentSpec spec =
      gliv::parse_moment_spec(read_file(spec_path), cfg, data);
  const gliv::NuisanceFit nf =
      gliv::fit(data, cfg, gliv::LearnerSpec::parse(c.learner), c.trim);
  const gliv::GmmResult r = gliv::estimate_gmm(data, cfg, nf, spec, epsilon);

  std::ostringstream text;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-8s %12s %12s\n", "eta", "Estimate",
                "Std. Error");
  text << buf;
  for (Eigen::Index j = 0; j < r.eta_hat.size(); ++j) {
    std::snprintf(buf, sizeof buf, "eta[%ld] %12.6f %12.6f\n",
                  static_cast<long>(j), r.eta_hat(j), r.standard_errors(j));
    text << buf;
  }
  std::snprintf(buf, sizeof buf, "J = %.6g, objective = %.6g, epsilon = %.6g\n",
                r.j_statistic, r.objective_value, r.epsilon);
  text << buf;
  for (const auto& w : r.warnings) text << "warning: " << w << '\n';
  emit(c, manifest("gmm", c,
                   {{"spec", spec_path},
                    {"epsilon", num(epsilon)},
                    {"learner", c.learner},
                    {"trim", num(c.trim)}}),
       gliv::to_json(r), text.str());
  return kOk;
}

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw gliv::ValidationError("not a number: '" + item + "'");
    }
  }
  return out;
}

gliv::Tolerance parse_tolerance(const std::string& text) {
  gliv::Tolerance tol;
  if (text == "auto") return tol;
  tol.automatic = false;
  const auto v = parse_numbers(text);
  if (v.size() != 1 || !(v[0] >= 0.0)) {
    throw gliv::ValidationError("--tolerance must be 'auto' or a number >= 0");
  }
  tol.value = v[0];
  return tol;
}

int cmd_test(const Common& c, int bins, const std::string& breakpoints,
             const std::string& tolerance) {
  const gliv::TypeConfig cfg = gliv::load_config(c.config);
  const gliv::Dataset data = load_data(c, cfg);
  const gliv::Tolerance tol = parse_tolerance(tolerance);
  const gliv::BinGrid grid = breakpoints.empty()
                                 ? gliv::quantile_bins(data.y, bins)
                                 : gliv::BinGrid(parse_numbers(breakpoints));
  const gliv::NuisanceFit nf = gliv::fit(data, cfg, {}, c.trim);
  const gliv::ImplicationReport rep =
      gliv::q_kernel_estimates(data, cfg, nf, grid);
  const gliv::ImplicationSummary s = gliv::check_implications(rep, cfg, tol);
  std::map<std::string, std::string> flags{{"tolerance", tolerance},
                                           {"trim", num(c.trim)}};
  if (breakpoints.empty()) {
    flags["bins"] = std::to_string(bins);
  } else {
    flags["breakpoints"] = breakpoints;
  }
  emit(c, manifest("test-implications", c, std::move(flags)),
       gliv::to_json(rep, s, cfg, tol), gliv::format_implications(s));
  return s.pass ? kOk : kViolated;
}

struct SimArgs {
  std::string dgp = "discrete";
  std::int64_t n = 3000;
  int reps = 100;
  std::string targets = "beta:t1:1,beta:t2:1,beta:t3:1";
  std::string estimator = "cep";
  std::string learner;
  int folds = 5;
  std::string success_to = "z2";
  double defier_share = 0.0;
  std::uint64_t replication = 0;
};

gliv::DgpSpec dgp_of(const Common& c, const SimArgs& a) {
  gliv::DgpSpec d;
  d.x_law = gliv::parse_x_law(a.dgp);
  d.n = a.n;
  d.seed = c.seed;
  if (a.success_to != "z1" && a.success_to != "z2") {
    throw gliv::ValidationError("--success-to must be z1 or z2");
  }
  d.success_to_z2 = a.success_to == "z2";
  d.defier_share = a.defier_share;
  d.validate();
  return d;
}

int cmd_simulate(const Common& c, const SimArgs& a) {
  const gliv::DgpSpec dgp = dgp_of(c, a);
  const gliv::TypeConfig cfg = gliv::main_example();
  const auto ids = param_list(a.targets, cfg);
  gliv::McOptions opt;
  if (a.estimator == "cep") {
    opt.estimator = gliv::McEstimator::Cep;
  } else if (a.estimator == "dml") {
    opt.estimator = gliv::McEstimator::Dml;
  } else {
    throw gliv::ValidationError("--estimator must be cep or dml");
  }
  if (!a.learner.empty()) opt.learner = gliv::LearnerSpec::parse(a.learner);
  opt.trim_floor = c.trim;
  opt.folds = a.folds;
  opt.threads = c.threads;
  const gliv::McSummary s = gliv::run_monte_carlo(dgp, a.reps, ids, opt);
  Common mc = c;
  mc.config = "main_example";
  emit(mc, manifest("simulate", mc,
                    {{"dgp", a.dgp},
                     {"n", std::to_string(a.n)},
                     {"reps", std::to_string(a.reps)},
                     {"targets", a.targets},
                     {"estimator", a.estimator},
                     {"learner", a.learner},
                     {"folds", std::to_string(a.folds)},
                     {"success-to", a.success_to},
                     {"defier-share", num(a.defier_share)},
                     {"trim", num(c.trim)}}),
       gliv::to_json(s), gliv::format_table(s));
  return kOk;
}

int cmd_generate(const Common& c, const SimArgs& a) {
  const gliv::DgpSpec dgp = dgp_of(c, a);
  const gliv::SimulatedSample sample =
      gliv::generate_sample(dgp, a.replication);
  std::ostringstream os;
  gliv::write_csv(os, sample.data, gliv::main_example());
  if (c.out.empty()) {
    std::cout << os.str() << std::flush;
  } else {
    write_file(c.out, os.str());
  }
  return kOk;
}

int cmd_replay(const std::string& path, const std::string& out, bool json,
               const std::string& threads) {
  Json doc;
  try {
    doc = Json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw gliv::ValidationError("'" + path + "' is not valid JSON: " +
                                e.what());
  }
  if (!doc.contains("manifest")) {
    throw gliv::ValidationError("'" + path + "' has no manifest");
  }
  const gliv::RunManifest m = gliv::manifest_from_json(doc["manifest"]);
  std::vector<std::string> args{m.command, "--config", m.config, "--seed",
                                std::to_string(m.seed), "--timestamp",
                                m.timestamp};
  if (!m.dataset.empty()) {
    args.push_back("--data");
    args.push_back(m.dataset);
  }
  for (const auto& [k, v] : m.flags) {
    if (v.empty()) continue;
    args.push_back("--" + k);
    args.push_back(v);
  }
  if (!out.empty()) {
    args.push_back("--out");
    args.push_back(out);
  }
  if (!threads.empty()) {
    args.push_back("--threads");
    args.push_back(threads);
  }
  if (json) args.push_back("--json");
  return run(args);
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Local IV estimation with unordered multi-valued treatments", "gliv"};
  app.set_version_flag("--version", gliv::kVersion);
  app.require_subcommand(1);

  Common c;
  std::string params = "lasf";
  std::string influence;
  auto* est = app.add_subcommand("estimate", "CEP estimates with efficient SEs");
  add_common(est, c, true);
  add_nuisance(est, c);
  est->add_option("--params", params,
                  "Comma-separated ids (p:t:k, q:t':t:k, beta:t:k, "
                  "gamma:t':t:k) or 'lasf'")
      ->capture_default_str();
  est->add_option("--influence", influence,
                  "Write per-observation influence values (CSV)");

  std::string targets = "lasf";
  int folds = 5;
  auto* dml = app.add_subcommand("dml", "Cross-fitted DML2 estimates");
  add_common(dml, c, true);
  add_nuisance(dml, c);
  dml->add_option("--targets", targets, "Parameter ids or 'lasf'")
      ->capture_default_str();
  dml->add_option("--folds", folds, "Number of folds L")->capture_default_str();

  std::string spec_path;
  double epsilon = 0.0;
  auto* gmm = app.add_subcommand("gmm", "Two-step GMM on pseudo-outcome moments");
  add_common(gmm, c, true);
  add_nuisance(gmm, c);
  gmm->add_option("--spec", spec_path, "MomentSpec JSON file");
  gmm->add_option("--epsilon", epsilon,
                  "Jacobian step; 0 selects n^(-1/4)")
      ->capture_default_str();

  int bins = 10;
  std::string breakpoints;
  std::string tolerance = "auto";
  auto* test = app.add_subcommand(
      "test-implications", "Plug-in check of the model's testable implications");
  add_common(test, c, true);
  test->add_option("--trim", c.trim, "Propensity trimming floor")
      ->capture_default_str();
  auto* bins_opt = test->add_option("--bins", bins, "Quantile bins of Y")
                       ->check(CLI::PositiveNumber)
                       ->capture_default_str();
  test->add_option("--breakpoints", breakpoints,
                   "Comma-separated interior breakpoints")
      ->excludes(bins_opt);
  test->add_option("--tolerance", tolerance, "auto or a fixed value")
      ->capture_default_str();

  SimArgs sa;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo study");
  add_common(sim, c, false);
  sim->add_option("--dgp", sa.dgp, "continuous or discrete")
      ->capture_default_str();
  sim->add_option("--n", sa.n, "Sample size")->capture_default_str();
  sim->add_option("--reps", sa.reps, "Replications")->capture_default_str();
  sim->add_option("--targets", sa.targets, "Parameter ids or 'lasf'")
      ->capture_default_str();
  sim->add_option("--estimator", sa.estimator, "cep or dml")
      ->capture_default_str();
  sim->add_option("--learner", sa.learner,
                  "cells or series:<degree>; default by X law");
  sim->add_option("--folds", sa.folds, "DML folds")->capture_default_str();
  sim->add_option("--trim", c.trim, "Propensity trimming floor")
      ->capture_default_str();
  sim->add_option("--success-to", sa.success_to,
                  "Instrument taken on Bernoulli success (z1 or z2)")
      ->capture_default_str();
  sim->add_option("--defier-share", sa.defier_share,
                  "Share of units replaced by defiers")
      ->capture_default_str();

  auto* gen = app.add_subcommand("generate", "Write one simulated sample as CSV");
  add_common(gen, c, false);
  gen->add_option("--dgp", sa.dgp, "continuous or discrete")
      ->capture_default_str();
  gen->add_option("--n", sa.n, "Sample size")->capture_default_str();
  gen->add_option("--replication", sa.replication, "Replication index")
      ->capture_default_str();
  gen->add_option("--success-to", sa.success_to,
                  "Instrument taken on Bernoulli success (z1 or z2)")
      ->capture_default_str();
  gen->add_option("--defier-share", sa.defier_share,
                  "Share of units replaced by defiers")
      ->capture_default_str();

  std::string replay_path;
  std::string replay_out;
  std::string replay_threads;
  bool replay_json = false;
  auto* rep = app.add_subcommand("replay", "Rerun the command in a report manifest");
  rep->add_option("report", replay_path, "JSON report")->required();
  rep->add_option("--out", replay_out, "Write the JSON report here");
  rep->add_option("--threads", replay_threads, "Worker threads");
  rep->add_flag("--json", replay_json, "Print the JSON report");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*est) return cmd_estimate(c, params, influence);
    if (*dml) return cmd_dml(c, targets, folds);
    if (*gmm) return cmd_gmm(c, spec_path, epsilon);
    if (*test) return cmd_test(c, bins, breakpoints, tolerance);
    if (*sim) return cmd_simulate(c, sa);
    if (*gen) return cmd_generate(c, sa);
    if (*rep) return cmd_replay(replay_path, replay_out, replay_json,
                                replay_threads);
  } catch (const gliv::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const gliv::EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << '\n';
    return kDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << '\n';
    return kUnexpected;
  }
  return kUnexpected;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}
