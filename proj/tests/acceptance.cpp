// Prints one PASS/FAIL line per acceptance criterion. argv[1] is the CLI.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "gliv/diagnostics.hpp"
#include "gliv/dml.hpp"
#include "gliv/estimators.hpp"
#include "gliv/gmm.hpp"
#include "gliv/simulation.hpp"
#include "oracles.hpp"

using namespace gliv;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("AC%-2d %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0,
                double d = 0, double e = 0, double g = 0) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a, b, c, d, e, g);
  return buf;
}

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Dataset dgp2(std::int64_t n, std::uint64_t seed, double defiers = 0.0) {
  DgpSpec d;
  d.n = n;
  d.seed = seed;
  d.defier_share = defiers;
  return generate(d);
}

void table4(const McSummary& s) {
  const McRow& b1 = s.rows[0];
  const McRow& b2 = s.rows[1];
  const McRow& b3 = s.rows[2];
  const bool ok1 = s.failures == 0 && std::abs(b1.mean_bias) <= 0.015 &&
                   within(b1.std_dev, 0.042, 0.058) &&
                   within(b2.std_dev, 0.062, 0.088) &&
                   within(b3.std_dev, 0.040, 0.056);
  report(1, ok1,
         fmt("bias(t1)=%.4f std(t1)=%.4f std(t2)=%.4f std(t3)=%.4f "
             "failed reps=%.0f",
             b1.mean_bias, b1.std_dev, b2.std_dev, b3.std_dev, s.failures));

  const bool ok2 = std::abs(b1.sigma_mean - 2.75) <= 0.15 &&
                   std::abs(b2.sigma_mean - 4.12) <= 0.25 &&
                   std::abs(b3.sigma_mean - 2.59) <= 0.15;
  report(2, ok2,
         fmt("sigma-hat means %.4f %.4f %.4f", b1.sigma_mean, b2.sigma_mean,
             b3.sigma_mean));

  bool ok3 = true;
  double r[3];
  for (int j = 0; j < 3; ++j) {
    r[j] = s.rows[j].std_dev / s.rows[j].mean_se;
    ok3 = ok3 && within(r[j], 0.9, 1.1);
  }
  report(3, ok3, fmt("std / mean SE = %.4f %.4f %.4f", r[0], r[1], r[2]));
}

void binary_oracle() {
  const TypeConfig cfg = binary_late();
  const Dataset d = oracle::binary_late_sample(5000, 2024);
  const oracle::CellTable tab(d, 2, 2);
  const std::vector<ParameterId> ids{
      ParameterId::beta(1, 1), ParameterId::beta(0, 1),
      ParameterId::gamma(1, 1, 1), ParameterId::gamma(1, 0, 1)};
  const EstimateReport r = estimate(d, cfg, fit(d, cfg, {}), ids);
  const double e1 = std::abs(r.estimates(0) - r.estimates(1) - oracle::wald(tab));
  const double e2 = std::abs(r.estimates(2) - r.estimates(3) -
                             oracle::treated_wald(tab));
  report(4, e1 <= 1e-10 && e2 <= 1e-10,
         fmt("|beta diff - Wald|=%.2e |gamma diff - treated Wald|=%.2e", e1, e2));
}

void eif_identities() {
  const TypeConfig cfg = main_example();
  const Dataset d = dgp2(3000, 505);
  const EstimateReport r =
      estimate(d, cfg, fit(d, cfg, {}), with_companions(lasf_family(cfg)));
  const double mean = r.influence.colwise().mean().cwiseAbs().maxCoeff();
  const double id = std::abs(r.at(ParameterId::p(0, 1)) +
                             r.at(ParameterId::p(1, 1)) -
                             r.at(ParameterId::p(2, 1)));
  report(5, mean <= 1e-10 && id <= 1e-12,
         fmt("max |mean Psi|=%.2e |p11+p21-p31|=%.2e over %.0f parameters",
             mean, id, static_cast<double>(r.parameters.size())));
}

void gmm_reduction() {
  const TypeConfig cfg = main_example();
  const Dataset d = dgp2(3000, 606);
  const NuisanceFit f = fit(d, cfg, {});
  const std::vector<ParameterId> ids{ParameterId::beta(0, 1),
                                     ParameterId::beta(2, 1)};
  const EstimateReport r = estimate(d, cfg, f, with_companions(ids));

  const MomentSpec one = parse_moment_spec(
      R"({"moments":[{"t":"t1","k":1}],"bounds":[[-5,5]]})", cfg, d);
  const GmmResult g1 = estimate_gmm(d, cfg, f, one);
  const double de = std::abs(g1.eta_hat(0) - r.estimates(0));
  const double dse = std::abs(g1.standard_errors(0) - r.standard_errors(0));

  const MomentSpec two = parse_moment_spec(
      R"({"moments":[{"t":"t1","k":1},{"t":"t3","k":1}],"bounds":[[-5,5]]})",
      cfg, d);
  const GmmResult g2 = estimate_gmm(d, cfg, f, two);
  Eigen::Vector2d p, level;
  p << r.at(ParameterId::p(0, 1)), r.at(ParameterId::p(2, 1));
  level << r.estimates(0) * p(0), r.estimates(1) * p(1);
  const Eigen::Matrix2d W = g2.V_hat.inverse();
  const double gls = p.dot(W * level) / p.dot(W * p);
  const double dg = std::abs(g2.eta_hat(0) - gls);

  const MomentSystem sys(d, cfg, f, two);
  const double eps = g2.epsilon;
  const double dgam =
      (gamma_hat(sys, g2.eta_hat, eps) - gamma_hat(sys, g2.eta_hat, eps / 2))
          .cwiseAbs()
          .maxCoeff();
  report(6, de <= 1e-6 && dse <= 1e-6 && dg <= 1e-6 && dgam <= 1e-10,
         fmt("|eta-beta|=%.2e |se diff|=%.2e |eta-GLS|=%.2e |dGamma|=%.2e", de,
             dse, dg, dgam));
}

void dml_agreement() {
  const TypeConfig cfg = main_example();
  const Dataset d = dgp2(3000, 707);
  const ParameterId b = ParameterId::beta(0, 1);
  const double cep =
      estimate(d, cfg, fit(d, cfg, {}), std::vector{b}).estimates(0);
  const DmlResult dml = dml2(d, cfg, b, make_plan(d.size(), 5, 707), LearnerSpec{});
  const double gap = std::abs(dml.estimate - cep);

  DgpSpec spec;
  spec.n = 3000;
  spec.seed = 7;
  McOptions opt;
  opt.estimator = McEstimator::Dml;
  opt.folds = 5;
  const McSummary s = run_monte_carlo(spec, 1000, std::vector{b}, opt);
  const double cov = s.rows[0].coverage;
  report(7, gap <= 0.01 && within(cov, 0.93, 0.97) && s.failures == 0,
         fmt("|DML - CEP|=%.4f coverage=%.3f over %.0f reps", gap, cov,
             static_cast<double>(s.rows[0].replications)));
}

void penrose() {
  double worst = 0.0;
  for (const TypeConfig& c :
       {main_example(), binary_late(), main_example_without_s5()}) {
    for (int t = 0; t < c.n_treatments(); ++t) {
      const Eigen::MatrixXd b = build_response_matrix(c, t);
      worst = std::max(worst, oracle::penrose_residual(b, pseudoinverse(b)));
    }
  }
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 200; ++rep) {
    const TypeConfig c = oracle::build(oracle::random_monotone_config(rng));
    for (int t = 0; t < c.n_treatments(); ++t) {
      const Eigen::MatrixXd b = build_response_matrix(c, t);
      worst = std::max(worst, oracle::penrose_residual(b, pseudoinverse(b)));
    }
  }
  Eigen::MatrixXd expect(5, 2);
  expect << 0, 0, 0, 0, 0, 1, 0.5, -0.5, 0.5, -0.5;
  const double disp =
      (pseudoinverse(build_response_matrix(main_example(), 2)) - expect)
          .cwiseAbs()
          .maxCoeff();
  report(8, worst <= 1e-10 && disp <= 1e-15,
         fmt("max Penrose residual=%.2e |B+_t3 - display|=%.2e", worst, disp));
}

void diagnostics_power() {
  const TypeConfig cfg = main_example();
  int clean_pass = 0, dirty_fail = 0;
  for (int rep = 0; rep < 200; ++rep) {
    for (double share : {0.0, 0.1}) {
      DgpSpec d;
      d.n = 3000;
      d.seed = 909;
      d.defier_share = share;
      const Dataset data = generate_sample(d, rep).data;
      const NuisanceFit f = fit(data, cfg, {});
      const ImplicationReport r =
          q_kernel_estimates(data, cfg, f, quantile_bins(data.y, 10));
      const bool pass = check_implications(r, cfg, {}).pass;
      if (share == 0.0 && pass) ++clean_pass;
      if (share > 0.0 && !pass) ++dirty_fail;
    }
  }
  report(9, clean_pass >= 190 && dirty_fail >= 190,
         fmt("clean pass %.0f/200, defier fail %.0f/200", clean_pass,
             dirty_fail));
}

int run(const std::string& cli, const std::string& args, const fs::path& out) {
  const std::string cmd = cli + " " + args + " >" + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism(const std::string& cli) {
  const fs::path dir =
      fs::temp_directory_path() / ("gliv_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const auto p = [&](const std::string& n) { return (dir / n).string(); };
  {
    std::ofstream(dir / "spec.json")
        << R"({"moments":[{"t":"t1","k":1},{"t":"t1","k":1,"kind":"quantile","tau":0.5}],"bounds":[[-5,5]]})";
  }
  run(cli, "generate --n 3000 --seed 11 --out " + p("data.csv"), dir / "g.txt");
  const std::string data = " --data " + p("data.csv");
  const std::vector<std::string> commands{
      "generate --n 2000 --seed 12 --dgp continuous",
      "estimate --seed 3" + data,
      "estimate --learner series:4 --seed 3" + data,
      "dml --folds 5 --seed 4" + data,
      "gmm --spec " + p("spec.json") + data,
      "test-implications --bins 8" + data,
      "simulate --n 1000 --reps 20 --seed 5",
      "simulate --n 1000 --reps 10 --estimator dml --seed 6"};
  int identical = 0;
  std::string broken;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    std::vector<std::string> outputs;
    for (const char* threads : {"1", "1", "4"}) {
      const fs::path rep = dir / ("r" + std::to_string(outputs.size()) + ".json");
      const fs::path log = dir / "log.txt";
      std::string args = commands[c] + " --threads " + threads;
      if (commands[c].rfind("generate", 0) != 0) args += " --out " + rep.string();
      const int code = run(cli, args, log);
      std::string text = slurp(log);
      if (fs::exists(rep)) text += slurp(rep);
      fs::remove(rep);
      outputs.push_back(std::to_string(code) + "\n" + text);
    }
    if (outputs[0] == outputs[1] && outputs[0] == outputs[2]) {
      ++identical;
    } else {
      broken += " [" + commands[c] + "]";
    }
  }
  fs::remove_all(dir);
  report(10, identical == static_cast<int>(commands.size()),
         fmt("%.0f/%.0f commands byte-identical across runs and thread counts",
             identical, static_cast<double>(commands.size())) +
             broken);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path to gliv>\n");
    return 2;
  }
  const auto t0 = std::chrono::steady_clock::now();
  try {
    DgpSpec spec;
    spec.n = 3000;
    spec.seed = 2000;
    const std::vector<ParameterId> targets{ParameterId::beta(0, 1),
                                           ParameterId::beta(1, 1),
                                           ParameterId::beta(2, 1)};
    table4(run_monte_carlo(spec, 2000, targets));
    binary_oracle();
    eif_identities();
    gmm_reduction();
    dml_agreement();
    penrose();
    diagnostics_power();
    determinism(argv[1]);
  } catch (const std::exception& e) {
    std::printf("aborted: %s\n", e.what());
    return 1;
  }
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  std::printf("%d criteria failed, %.1f s\n", failures, secs);
  return failures == 0 ? 0 : 1;
}
