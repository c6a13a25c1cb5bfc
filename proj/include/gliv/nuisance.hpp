#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "gliv/dataset.hpp"
#include "gliv/typeconfig.hpp"

namespace gliv {

enum class ModelKind { DiscreteCells, PolynomialSeries };

struct LearnerSpec {
  ModelKind kind = ModelKind::DiscreteCells;
  int degree = 0;  // PolynomialSeries only

  // "cells" or "series:<degree>".
  static LearnerSpec parse(std::string_view text);
  std::string to_string() const;
};

inline constexpr double kDefaultTrimFloor = 0.01;

// Conditional expectations evaluated at a block of covariate rows:
//   pi(i, z)      = P(Z = z | X_i)
//   h_t[t](i, z)  = E[1{Z = z} 1{T = t} | X_i]
//   h_y[t](i, z)  = E[1{Z = z} Y 1{T = t} | X_i]
struct NuisanceValues {
  Eigen::MatrixXd pi;
  std::vector<Eigen::MatrixXd> h_t;
  std::vector<Eigen::MatrixXd> h_y;
};

// Evaluation contract shared by every learner (and by oracle nuisances in
// tests and simulations).
class NuisanceModel {
 public:
  explicit NuisanceModel(double trim_floor);
  virtual ~NuisanceModel() = default;

  virtual NuisanceValues evaluate(const Eigen::MatrixXd& x) const = 0;
  double trim_floor() const { return trim_floor_; }

 private:
  double trim_floor_;
};

// Ratios the estimators consume, per observation: trimmed propensities,
// P_{t,z} = h_t / pi and I_{t,z} = h_y / pi. `pi_raw` keeps the untrimmed
// propensities for pi_W weights.
struct PlugIn {
  Eigen::MatrixXd pi;
  Eigen::MatrixXd pi_raw;
  std::vector<Eigen::MatrixXd> P;
  std::vector<Eigen::MatrixXd> I;

  Eigen::Index size() const { return pi.rows(); }
};

PlugIn plug_in(const NuisanceValues& values, double trim_floor);
PlugIn plug_in(const NuisanceModel& model, const Eigen::MatrixXd& x);

struct NuisanceVectors {
  Eigen::VectorXd P;   // P_{t,z}(x), instrument order
  Eigen::VectorXd I;   // I_{t,z}(x)
  Eigen::VectorXd pi;  // trimmed propensities
};

NuisanceVectors eval_vectors(const NuisanceModel& model,
                             const Eigen::VectorXd& x, int t);

// Linear smoother trained on a covariate sample: conditional means of any
// per-observation target given X.
class Smoother {
 public:
  virtual ~Smoother() = default;
  virtual Eigen::Index n_train() const = 0;
  // One coefficient column per target column (targets: n_train x m).
  virtual Eigen::MatrixXd fit(const Eigen::MatrixXd& targets) const = 0;
  virtual Eigen::MatrixXd predict(const Eigen::MatrixXd& coef,
                                  const Eigen::MatrixXd& x) const = 0;
  virtual Eigen::MatrixXd predict_train(const Eigen::MatrixXd& coef) const = 0;
};

// Cell means over exactly repeated covariate vectors (after rounding each
// coordinate to 12 significant digits).
class CellSmoother final : public Smoother {
 public:
  explicit CellSmoother(const Eigen::MatrixXd& x);

  Eigen::Index n_train() const override {
    return static_cast<Eigen::Index>(row_cell_.size());
  }
  Eigen::MatrixXd fit(const Eigen::MatrixXd& targets) const override;
  Eigen::MatrixXd predict(const Eigen::MatrixXd& coef,
                          const Eigen::MatrixXd& x) const override;
  Eigen::MatrixXd predict_train(const Eigen::MatrixXd& coef) const override;

  int n_cells() const { return static_cast<int>(counts_.size()); }
  int cell_of_row(Eigen::Index i) const { return row_cell_[i]; }
  const std::vector<int>& row_cells() const { return row_cell_; }
  int count(int cell) const { return counts_[cell]; }
  const Eigen::RowVectorXd& representative(int cell) const {
    return reps_[cell];
  }
  // Throws EstimationError for covariate vectors outside the training cells.
  int locate(const Eigen::RowVectorXd& x) const;
  static std::string key(const Eigen::RowVectorXd& x);

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<int> row_cell_;
  std::vector<int> counts_;
  std::vector<Eigen::RowVectorXd> reps_;
};

// Least-squares projection on all monomials of the standardized covariates
// with total degree <= `degree`.
class SeriesSmoother final : public Smoother {
 public:
  // Throws EstimationError when the design is rank deficient.
  SeriesSmoother(const Eigen::MatrixXd& x, int degree);

  Eigen::Index n_train() const override { return basis_.rows(); }
  Eigen::MatrixXd fit(const Eigen::MatrixXd& targets) const override;
  Eigen::MatrixXd predict(const Eigen::MatrixXd& coef,
                          const Eigen::MatrixXd& x) const override;
  Eigen::MatrixXd predict_train(const Eigen::MatrixXd& coef) const override;

  Eigen::MatrixXd basis(const Eigen::MatrixXd& x) const;

 private:
  int degree_;
  Eigen::RowVectorXd mean_;
  Eigen::RowVectorXd scale_;
  std::vector<std::vector<int>> exponents_;
  Eigen::MatrixXd basis_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
};

// Fitted nuisance functions of one learner on one sample.
class NuisanceFit final : public NuisanceModel {
 public:
  NuisanceFit(const Dataset& data, const TypeConfig& config,
              const LearnerSpec& spec, double trim_floor);

  NuisanceValues evaluate(const Eigen::MatrixXd& x) const override;
  // Values at the training rows (no cell lookups or basis rebuilds).
  const NuisanceValues& training_values() const { return train_values_; }

  const LearnerSpec& spec() const { return spec_; }
  const Smoother& smoother() const { return *smoother_; }
  // Non-null only for DiscreteCells fits.
  const CellSmoother* cells() const { return cells_; }
  int n_treatments() const { return n_t_; }
  int n_instruments() const { return n_z_; }

  // Point evaluations.
  double pi(const Eigen::VectorXd& x, int z) const;
  double h_t(const Eigen::VectorXd& x, int t, int z) const;
  double h_y(const Eigen::VectorXd& x, int t, int z) const;

 private:
  NuisanceValues unpack(const Eigen::MatrixXd& raw) const;

  LearnerSpec spec_;
  int n_t_;
  int n_z_;
  std::shared_ptr<const Smoother> smoother_;
  const CellSmoother* cells_ = nullptr;
  Eigen::MatrixXd coef_;
  NuisanceValues train_values_;
};

// Fits pi, h_t and h_y with the requested learner. DiscreteCells requires
// every covariate cell to contain each instrument level.
NuisanceFit fit(const Dataset& data, const TypeConfig& config,
                const LearnerSpec& spec, double trim_floor = kDefaultTrimFloor);

}  // namespace gliv
