#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gliv/dataset.hpp"
#include "gliv/estimators.hpp"
#include "gliv/nuisance.hpp"
#include "gliv/typeconfig.hpp"

namespace gliv {

enum class XLaw { ContinuousUniform, DiscreteFive };

XLaw parse_x_law(std::string_view text);  // "continuous" | "discrete"
std::string to_string(XLaw law);

// Three treatments, two instruments, types s1..s5 of main_example().
// X ~ U(0.5, 0.7) or uniform on {0.5, 0.55, 0.6, 0.65, 0.7};
// S from Binomial(4, X) with 0..4 -> s1, s2, s4, s5, s3; Z ~ Bernoulli(X).
// With `defier_share` > 0 that fraction of units is replaced by a defier
// type taking t1 at z1 and t3 at z2, with Y_t1 ~ N(X + 4.4, 1), Y_t3 ~ N(X, 1).
struct DgpSpec {
  XLaw x_law = XLaw::DiscreteFive;
  std::int64_t n = 3000;
  std::uint64_t seed = 1;
  bool success_to_z2 = true;
  double defier_share = 0.0;

  void validate() const;
};

inline constexpr int kDefierType = 5;

struct SimulatedSample {
  Dataset data;
  std::vector<int> types;  // 0..4 for s1..s5, kDefierType for defiers
};

// Every draw is a pure function of (seed, replication, variable, row).
SimulatedSample generate_sample(const DgpSpec& dgp, std::uint64_t replication);
Dataset generate(const DgpSpec& dgp);

// Type probabilities P(S = s_j | X = x), j = 0..4.
Eigen::Matrix<double, 5, 1> type_probabilities(double x);

// Population values of the DGP (defier share included) for p, q, beta and
// gamma; exact enumeration over the discrete law, adaptive Gauss-Kronrod
// quadrature over the uniform law.
double true_value(const DgpSpec& dgp, const ParameterId& id);
std::map<ParameterId, double> true_values(const DgpSpec& dgp,
                                          std::span<const ParameterId> ids);
// Variance of the efficient influence function, E[Psi^2].
double variance_bound(const DgpSpec& dgp, const ParameterId& id);

// Nuisances computed from the DGP itself.
std::shared_ptr<const NuisanceModel> oracle_model(
    const DgpSpec& dgp, double trim_floor = kDefaultTrimFloor);

enum class McEstimator { Cep, Dml };

struct McOptions {
  McEstimator estimator = McEstimator::Cep;
  std::optional<LearnerSpec> learner;  // default: cells / series:3 by X law
  double trim_floor = kDefaultTrimFloor;
  int folds = 5;
  int threads = 1;
};

struct McRow {
  ParameterId target;
  std::string name;
  double truth = 0.0;
  double mean_bias = 0.0;
  double median_bias = 0.0;
  double std_dev = 0.0;  // 1/R normalisation, so rmse^2 = bias^2 + std^2
  double rmse = 0.0;
  double mean_se = 0.0;
  double sigma_mean = 0.0;   // mean of sqrt(n) * SE
  double sigma_truth = 0.0;  // sqrt(variance_bound)
  double coverage = 0.0;     // share of 95% intervals covering truth
  int replications = 0;
};

struct McSummary {
  DgpSpec dgp;
  int requested = 0;
  int failures = 0;
  std::vector<std::string> failure_messages;  // first few
  std::vector<McRow> rows;
  // Stored per-replication draws (successful replications only).
  std::vector<std::vector<double>> estimates;  // [target][rep]
  std::vector<std::vector<double>> ses;
};

McSummary run_monte_carlo(const DgpSpec& dgp, int reps,
                          std::span<const ParameterId> targets,
                          const McOptions& options = {});

// Plain-text table: parameter, law, value, mean bias, median bias, std
// deviation, RMSE, then plug-in sigma rows.
std::string format_table(const McSummary& summary);

}  // namespace gliv
