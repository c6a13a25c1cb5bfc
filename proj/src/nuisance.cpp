#include "gliv/nuisance.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "gliv/error.hpp"

namespace gliv {

LearnerSpec LearnerSpec::parse(std::string_view text) {
  if (text == "cells") return {ModelKind::DiscreteCells, 0};
  constexpr std::string_view prefix = "series:";
  if (text.substr(0, prefix.size()) == prefix) {
    const std::string deg(text.substr(prefix.size()));
    char* end = nullptr;
    const long d = std::strtol(deg.c_str(), &end, 10);
    if (!deg.empty() && end == deg.c_str() + deg.size() && d >= 0 && d <= 50) {
      return {ModelKind::PolynomialSeries, static_cast<int>(d)};
    }
  }
  throw ValidationError("unknown learner '" + std::string(text) +
                        "' (expected cells or series:<degree>)");
}

std::string LearnerSpec::to_string() const {
  if (kind == ModelKind::DiscreteCells) return "cells";
  return "series:" + std::to_string(degree);
}

NuisanceModel::NuisanceModel(double trim_floor) : trim_floor_(trim_floor) {
  if (!(trim_floor >= 0.0 && trim_floor < 1.0)) {
    throw ValidationError("trim floor must lie in [0, 1)");
  }
}

PlugIn plug_in(const NuisanceValues& values, double trim_floor) {
  PlugIn out;
  out.pi_raw = values.pi;
  out.pi = values.pi.cwiseMax(trim_floor);
  out.P.reserve(values.h_t.size());
  out.I.reserve(values.h_y.size());
  for (std::size_t t = 0; t < values.h_t.size(); ++t) {
    out.P.push_back(values.h_t[t].cwiseQuotient(out.pi));
    out.I.push_back(values.h_y[t].cwiseQuotient(out.pi));
  }
  return out;
}

PlugIn plug_in(const NuisanceModel& model, const Eigen::MatrixXd& x) {
  return plug_in(model.evaluate(x), model.trim_floor());
}

NuisanceVectors eval_vectors(const NuisanceModel& model,
                             const Eigen::VectorXd& x, int t) {
  const PlugIn p = plug_in(model, x.transpose());
  if (t < 0 || t >= static_cast<int>(p.P.size())) {
    throw ValidationError("treatment index out of range");
  }
  return {p.P[t].row(0).transpose(), p.I[t].row(0).transpose(),
          p.pi.row(0).transpose()};
}

// ---------------------------------------------------------------------------
// CellSmoother

std::string CellSmoother::key(const Eigen::RowVectorXd& x) {
  std::string k;
  char buf[40];
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    // 12 significant digits; "+0" and "-0" collapse.
    const double v = x(j) == 0.0 ? 0.0 : x(j);
    std::snprintf(buf, sizeof buf, "%.11e|", v);
    k += buf;
  }
  return k;
}

CellSmoother::CellSmoother(const Eigen::MatrixXd& x) {
  row_cell_.resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::RowVectorXd row = x.row(i);
    auto [it, inserted] =
        index_.try_emplace(key(row), static_cast<int>(counts_.size()));
    if (inserted) {
      counts_.push_back(0);
      reps_.push_back(row);
    }
    row_cell_[i] = it->second;
    ++counts_[it->second];
  }
}

Eigen::MatrixXd CellSmoother::fit(const Eigen::MatrixXd& targets) const {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_cells(), targets.cols());
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    sums.row(row_cell_[i]) += targets.row(i);
  }
  for (int c = 0; c < n_cells(); ++c) sums.row(c) /= counts_[c];
  return sums;
}

int CellSmoother::locate(const Eigen::RowVectorXd& x) const {
  auto it = index_.find(key(x));
  if (it == index_.end()) {
    std::ostringstream os;
    os << "covariate cell x=(" << x << ") has no training observations";
    throw EstimationError(os.str());
  }
  return it->second;
}

Eigen::MatrixXd CellSmoother::predict(const Eigen::MatrixXd& coef,
                                      const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(x.rows(), coef.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out.row(i) = coef.row(locate(x.row(i)));
  }
  return out;
}

Eigen::MatrixXd CellSmoother::predict_train(const Eigen::MatrixXd& coef) const {
  Eigen::MatrixXd out(n_train(), coef.cols());
  for (Eigen::Index i = 0; i < n_train(); ++i) {
    out.row(i) = coef.row(row_cell_[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// SeriesSmoother

namespace {

void enumerate_exponents(int dim, int budget, std::vector<int>& current,
                         std::vector<std::vector<int>>& out) {
  if (static_cast<int>(current.size()) == dim) {
    out.push_back(current);
    return;
  }
  for (int e = 0; e <= budget; ++e) {
    current.push_back(e);
    enumerate_exponents(dim, budget - e, current, out);
    current.pop_back();
  }
}

}  // namespace

SeriesSmoother::SeriesSmoother(const Eigen::MatrixXd& x, int degree)
    : degree_(degree) {
  if (x.rows() < 1) throw EstimationError("series fit needs observations");
  mean_ = x.colwise().mean();
  scale_.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double sd = std::sqrt(
        (x.col(j).array() - mean_(j)).square().sum() / x.rows());
    scale_(j) = sd > 0 ? sd : 1.0;
  }
  std::vector<int> current;
  enumerate_exponents(static_cast<int>(x.cols()), degree_, current,
                      exponents_);
  basis_ = basis(x);
  qr_.compute(basis_);
  if (qr_.rank() < basis_.cols()) {
    throw EstimationError("rank-deficient series design: " +
                          std::to_string(basis_.cols()) + " basis terms, rank " +
                          std::to_string(qr_.rank()));
  }
}

Eigen::MatrixXd SeriesSmoother::basis(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd u =
      (x.rowwise() - mean_).array().rowwise() / scale_.array();
  Eigen::MatrixXd b(x.rows(), static_cast<Eigen::Index>(exponents_.size()));
  for (std::size_t c = 0; c < exponents_.size(); ++c) {
    Eigen::VectorXd col = Eigen::VectorXd::Ones(x.rows());
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
      for (int e = 0; e < exponents_[c][j]; ++e) {
        col = col.cwiseProduct(u.col(j));
      }
    }
    b.col(static_cast<Eigen::Index>(c)) = col;
  }
  return b;
}

Eigen::MatrixXd SeriesSmoother::fit(const Eigen::MatrixXd& targets) const {
  return qr_.solve(targets);
}

Eigen::MatrixXd SeriesSmoother::predict(const Eigen::MatrixXd& coef,
                                        const Eigen::MatrixXd& x) const {
  return basis(x) * coef;
}

Eigen::MatrixXd SeriesSmoother::predict_train(
    const Eigen::MatrixXd& coef) const {
  return basis_ * coef;
}

// ---------------------------------------------------------------------------
// NuisanceFit

NuisanceFit::NuisanceFit(const Dataset& data, const TypeConfig& config,
                         const LearnerSpec& spec, double trim_floor)
    : NuisanceModel(trim_floor),
      spec_(spec),
      n_t_(config.n_treatments()),
      n_z_(config.n_instruments()) {
  validate(data, config);
  const Eigen::Index n = data.size();

  if (spec.kind == ModelKind::DiscreteCells) {
    auto cells = std::make_shared<CellSmoother>(data.x);
    std::vector<int> seen(static_cast<std::size_t>(cells->n_cells()) * n_z_, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      ++seen[static_cast<std::size_t>(cells->cell_of_row(i)) * n_z_ +
             data.z[i]];
    }
    for (int c = 0; c < cells->n_cells(); ++c) {
      for (int z = 0; z < n_z_; ++z) {
        if (seen[static_cast<std::size_t>(c) * n_z_ + z] == 0) {
          std::ostringstream os;
          os << "empty instrument cell: covariate cell x=("
             << cells->representative(c) << ") has no observation with Z="
             << config.instrument(z);
          throw EstimationError(os.str());
        }
      }
    }
    cells_ = cells.get();
    smoother_ = std::move(cells);
  } else {
    smoother_ = std::make_shared<SeriesSmoother>(data.x, spec.degree);
  }

  // Columns: pi_z | h_t(t, z) | h_y(t, z).
  const Eigen::Index block = static_cast<Eigen::Index>(n_t_) * n_z_;
  Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(n, n_z_ + 2 * block);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int z = data.z[i];
    const Eigen::Index tz = static_cast<Eigen::Index>(data.t[i]) * n_z_ + z;
    targets(i, z) = 1.0;
    targets(i, n_z_ + tz) = 1.0;
    targets(i, n_z_ + block + tz) = data.y(i);
  }
  coef_ = smoother_->fit(targets);
  train_values_ = unpack(smoother_->predict_train(coef_));
}

NuisanceValues NuisanceFit::unpack(const Eigen::MatrixXd& raw) const {
  const Eigen::Index n = raw.rows();
  const Eigen::Index block = static_cast<Eigen::Index>(n_t_) * n_z_;
  NuisanceValues v;
  v.pi = raw.leftCols(n_z_);
  if (spec_.kind == ModelKind::PolynomialSeries) {
    v.pi = v.pi.cwiseMax(trim_floor());
    const Eigen::VectorXd total = v.pi.rowwise().sum();
    v.pi = v.pi.array().colwise() / total.array();
  }
  v.h_t.reserve(n_t_);
  v.h_y.reserve(n_t_);
  for (int t = 0; t < n_t_; ++t) {
    v.h_t.push_back(raw.block(0, n_z_ + static_cast<Eigen::Index>(t) * n_z_,
                              n, n_z_));
    v.h_y.push_back(raw.block(
        0, n_z_ + block + static_cast<Eigen::Index>(t) * n_z_, n, n_z_));
  }
  return v;
}

NuisanceValues NuisanceFit::evaluate(const Eigen::MatrixXd& x) const {
  return unpack(smoother_->predict(coef_, x));
}

double NuisanceFit::pi(const Eigen::VectorXd& x, int z) const {
  return evaluate(x.transpose()).pi(0, z);
}

double NuisanceFit::h_t(const Eigen::VectorXd& x, int t, int z) const {
  return evaluate(x.transpose()).h_t.at(t)(0, z);
}

double NuisanceFit::h_y(const Eigen::VectorXd& x, int t, int z) const {
  return evaluate(x.transpose()).h_y.at(t)(0, z);
}

NuisanceFit fit(const Dataset& data, const TypeConfig& config,
                const LearnerSpec& spec, double trim_floor) {
  return NuisanceFit(data, config, spec, trim_floor);
}

}  // namespace gliv
