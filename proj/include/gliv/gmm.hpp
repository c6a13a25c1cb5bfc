#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gliv/dataset.hpp"
#include "gliv/nuisance.hpp"
#include "gliv/optimize.hpp"
#include "gliv/typeconfig.hpp"

namespace gliv {

enum class MomentKind { Mean, Quantile, Custom };

// One moment m_j(Y*_{t,k}, eta) on the pseudo-outcome of cell (t, k).
//   Mean      y - a'eta
//   Quantile  1{y <= a'eta} - tau
//   Custom    user function (library only)
// A Mean moment with `treated_at` set targets Y_t | T = t', S in Sigma_{t,k}.
struct MomentEntry {
  int t = 0;
  int k = 1;
  MomentKind kind = MomentKind::Mean;
  double tau = 0.5;
  Eigen::VectorXd selector;  // a_j, length d_eta
  int treated_at = -1;       // t' for the W-weighted variant, -1 otherwise
  std::function<double(double, const Eigen::VectorXd&)> custom;

  double evaluate(double y, const Eigen::VectorXd& eta) const;
};

struct MomentSpec {
  std::vector<MomentEntry> moments;
  Box bounds;

  int n_moments() const { return static_cast<int>(moments.size()); }
  int dim() const { return static_cast<int>(bounds.dim()); }
  // Throws ValidationError on bad levels, tau, selectors, bounds, J < d or
  // a missing W-set.
  void validate(const TypeConfig& config) const;
};

// Accepts either a list of moments or {"moments": [...], "bounds": [[lo,
// hi], ...]}. Moment fields: t, k, kind ("mean" | "quantile"), tau,
// selector, treated_at (optional treatment label). Without bounds each
// coordinate gets the observed outcome range widened by 10% per side.
MomentSpec parse_moment_spec(const std::string& json_text,
                             const TypeConfig& config, const Dataset& data);

// Evaluates Psi_m and the sample moment vector G_n for a fitted nuisance
// model. DiscreteCells fits use per-cell aggregates (sorted outcomes for
// quantile moments), so G_n(eta) costs O(cells log n) instead of O(n).
class MomentSystem {
 public:
  MomentSystem(const Dataset& data, const TypeConfig& config,
               const NuisanceFit& fit, MomentSpec spec);
  ~MomentSystem();
  MomentSystem(MomentSystem&&) noexcept;

  const MomentSpec& spec() const { return spec_; }
  Eigen::Index n() const { return data_->size(); }

  // n x J matrix of Psi_m at eta.
  Eigen::MatrixXd psi(const Eigen::VectorXd& eta) const;
  // Column means of psi(eta).
  Eigen::VectorXd moments(const Eigen::VectorXd& eta) const;
  // (1/n) sum_i b~_j . m-hat_j(X_i, eta) [pi_W(X_i)] per moment.
  Eigen::VectorXd projected_means(const Eigen::VectorXd& eta) const;
  // n x N_Z nuisance m-hat_{j,t_j,z}(X_i, eta) at the training rows.
  Eigen::MatrixXd nuisance(int j, const Eigen::VectorXd& eta) const;

 private:
  struct Impl;
  const Dataset* data_;
  MomentSpec spec_;
  std::unique_ptr<Impl> impl_;
};

Eigen::MatrixXd psi_m_values(const Dataset& data, const TypeConfig& config,
                             const NuisanceFit& fit, const MomentSpec& spec,
                             const Eigen::VectorXd& eta);

struct WeightMatrix {
  Eigen::MatrixXd weight;  // V^{-1} or its pseudoinverse
  bool pseudo = false;
};

WeightMatrix weight_from(const Eigen::MatrixXd& V);

// First stage: minimize G'G.
MultiStartResult gmm_first_stage(const MomentSystem& system,
                                 const OptimOptions& options = {});
// Outer-product average of Psi_m at eta.
Eigen::MatrixXd estimate_V(const MomentSystem& system,
                           const Eigen::VectorXd& eta);
// Second stage: minimize G' W G, with `warm_start` added to the start set.
MultiStartResult gmm_second_stage(const MomentSystem& system,
                                  const Eigen::MatrixXd& weight,
                                  const Eigen::VectorXd& warm_start,
                                  const OptimOptions& options = {});
// Numerical Jacobian of projected_means; one-sided at the box boundary.
Eigen::MatrixXd gamma_hat(const MomentSystem& system,
                          const Eigen::VectorXd& eta, double epsilon);
// (Gamma' W Gamma)^{-1}: the asymptotic variance of sqrt(n)(eta - eta0).
// Throws EstimationError when Gamma lacks full column rank.
Eigen::MatrixXd gmm_covariance(const Eigen::MatrixXd& Gamma,
                               const Eigen::MatrixXd& weight);

struct GmmResult {
  Eigen::VectorXd eta_hat;
  Eigen::VectorXd first_stage_eta;
  Eigen::MatrixXd V_hat;           // J x J, at the first-stage estimate
  Eigen::MatrixXd Gamma_hat;       // J x d
  Eigen::MatrixXd bound;           // (Gamma' V^{-1} Gamma)^{-1}
  Eigen::MatrixXd covariance;      // bound / n
  Eigen::VectorXd standard_errors;
  double objective_value = 0.0;    // G' W G at eta_hat
  double first_stage_objective = 0.0;
  double j_statistic = 0.0;        // n * objective_value
  double epsilon = 0.0;
  Eigen::Index n = 0;
  std::vector<std::string> warnings;
};

// Two-step optimally weighted GMM. epsilon <= 0 selects n^{-1/4}.
GmmResult estimate_gmm(const Dataset& data, const TypeConfig& config,
                       const NuisanceFit& fit, const MomentSpec& spec,
                       double epsilon = 0.0, const OptimOptions& options = {});

}  // namespace gliv
