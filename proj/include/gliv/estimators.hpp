#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gliv/dataset.hpp"
#include "gliv/nuisance.hpp"
#include "gliv/typeconfig.hpp"

namespace gliv {

// Estimands built on the (t, k) type cells:
//   P     p_{t,k}       = P(S in Sigma_{t,k})
//   Q     q_{t',t,k}    = P(T = t', S in Sigma_{t,k})
//   Beta  beta_{t,k}    = E[Y_t | S in Sigma_{t,k}]
//   Gamma gamma_{t',t,k} = E[Y_t | T = t', S in Sigma_{t,k}]
enum class ParamKind { P, Q, Beta, Gamma };

struct ParameterId {
  ParamKind kind = ParamKind::P;
  int t_prime = -1;  // Q and Gamma only
  int t = 0;
  int k = 1;

  static ParameterId p(int t, int k) { return {ParamKind::P, -1, t, k}; }
  static ParameterId q(int tp, int t, int k) { return {ParamKind::Q, tp, t, k}; }
  static ParameterId beta(int t, int k) { return {ParamKind::Beta, -1, t, k}; }
  static ParameterId gamma(int tp, int t, int k) {
    return {ParamKind::Gamma, tp, t, k};
  }

  bool weighted() const {
    return kind == ParamKind::Q || kind == ParamKind::Gamma;
  }
  // p for beta, q for gamma; the parameter itself otherwise.
  ParameterId companion() const;

  friend bool operator==(const ParameterId&, const ParameterId&) = default;
  friend auto operator<=>(const ParameterId&, const ParameterId&) = default;
};

// Text form: p:t:k, q:t':t:k, beta:t:k, gamma:t':t:k (labels from config).
ParameterId parse_parameter(std::string_view text, const TypeConfig& config);
std::vector<ParameterId> parse_parameter_list(std::string_view text,
                                              const TypeConfig& config);
std::string to_string(const ParameterId& id, const TypeConfig& config);
// Throws ValidationError when the indices are out of range, Sigma_{t,k} is
// empty or the instrument set W does not exist.
void validate(const ParameterId& id, const TypeConfig& config);

// The LASF / LASF-T family: beta_{t,k} for every nonempty Sigma_{t,k}, then
// gamma_{t,t,k} for the switcher levels k < N_Z.
std::vector<ParameterId> lasf_family(const TypeConfig& config);
// Appends p_{t,k} / q_{t',t,k} for every beta / gamma lacking one.
std::vector<ParameterId> with_companions(std::span<const ParameterId> ids);

// b~_{t,k} together with the instrument set weighting treated parameters.
struct Contraction {
  int t = 0;
  Eigen::RowVectorXd btilde;
  std::optional<std::vector<int>> w;  // set for Q / Gamma

  double pi_w(const PlugIn& plug, Eigen::Index i) const;
  bool in_w(int z) const;
};

Contraction contraction(const TypeConfig& config, const ParameterId& id);

// Orthogonal (efficient-influence) building blocks per observation:
//   outcome   = b~ (zeta (iota Y 1{T=t} - I) w + I v)
//   treatment = b~ (zeta (iota 1{T=t} - P) w + P v)
// with (w, v) = (1, 1) for unweighted contractions and (pi_W, 1{Z in W})
// for weighted ones.
struct OrthogonalScores {
  Eigen::VectorXd outcome;
  Eigen::VectorXd treatment;
};

OrthogonalScores orthogonal_scores(const Dataset& data, const PlugIn& plug,
                                   const Contraction& c);

// Plug-in CEP averages (1/n) sum_i b~ . P_Z(X_i) [pi_W(X_i)] and the same
// with I_Z.
double mean_treatment_term(const PlugIn& plug, const Contraction& c);
double mean_outcome_term(const PlugIn& plug, const Contraction& c);

inline constexpr double kDegenerateThreshold = 1e-10;

double estimate_p(const Dataset& data, const TypeConfig& config,
                  const PlugIn& plug, int t, int k);
double estimate_q(const Dataset& data, const TypeConfig& config,
                  const PlugIn& plug, int t_prime, int t, int k);
double estimate_beta(const Dataset& data, const TypeConfig& config,
                     const PlugIn& plug, int t, int k);
double estimate_gamma(const Dataset& data, const TypeConfig& config,
                      const PlugIn& plug, int t_prime, int t, int k);
double estimate_parameter(const Dataset& data, const TypeConfig& config,
                          const PlugIn& plug, const ParameterId& id);

using EstimateTable = std::map<ParameterId, double>;

// Column j holds Psi_{params[j]} at each observation, with the nuisances and
// `estimates` plugged in. Beta / gamma columns need their p / q companion in
// `estimates`.
Eigen::MatrixXd influence_values(const Dataset& data, const TypeConfig& config,
                                 const PlugIn& plug,
                                 std::span<const ParameterId> params,
                                 const EstimateTable& estimates);

// Uncentered outer-product average (1/n) sum_i Psi_i Psi_i'.
Eigen::MatrixXd covariance(const Eigen::MatrixXd& influence);

struct EstimateReport {
  std::vector<ParameterId> parameters;
  Eigen::VectorXd estimates;
  Eigen::MatrixXd influence;        // n x K
  Eigen::MatrixXd bound;            // V_kappa estimate, K x K
  Eigen::MatrixXd covariance;       // of the estimate vector: bound / n
  Eigen::VectorXd standard_errors;  // sqrt(bound_ii / n)
  Eigen::Index n = 0;
  // 1 - sum_{k>=1} p_{t,k} per treatment; p_{t,0} has no direct formula.
  Eigen::VectorXd residual_p0;
  std::vector<std::string> warnings;

  std::optional<Eigen::Index> index_of(const ParameterId& id) const;
  double at(const ParameterId& id) const;
};

// CEP estimates, influence functions and covariance for `params`. Rejects
// non-monotone configurations. Overidentifying restrictions are listed in
// `warnings` and are not imposed.
EstimateReport estimate(const Dataset& data, const TypeConfig& config,
                        const PlugIn& plug, std::span<const ParameterId> params);
EstimateReport estimate(const Dataset& data, const TypeConfig& config,
                        const NuisanceModel& model,
                        std::span<const ParameterId> params);

// Smooth function phi of reported parameters.
struct Functional {
  std::string name;
  std::vector<ParameterId> inputs;
  std::function<double(const Eigen::VectorXd&)> value;
  // Optional; central differences with step 1e-6 (1 + |x_i|) otherwise.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
};

struct DerivedEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
  Eigen::VectorXd gradient;
  Eigen::VectorXd influence;  // n
};

DerivedEstimate derived_parameter(const EstimateReport& report,
                                  const Functional& phi);

Functional identity_functional(const ParameterId& id, const TypeConfig& config);
// beta_t: LASF over the t-switchers (levels 1..N_Z-1).
Functional switcher_lasf(const TypeConfig& config, int t);
// gamma_t: treated t-switchers, weighted by p_{t,k}.
Functional switcher_lasf_treated(const TypeConfig& config, int t);
// beta_target - sum_o beta_o p_o / sum_o p_o.
Functional lasf_contrast(const TypeConfig& config, Cell target,
                         std::vector<Cell> others);
// gamma_{t,t,k} - sum_o gamma_{t,o} q_{t,o} / sum_o q_{t,o}, treated at the
// target's treatment.
Functional lasf_treated_contrast(const TypeConfig& config, Cell target,
                                 std::vector<Cell> others);

}  // namespace gliv
