#include "gliv/gmm.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "gliv/error.hpp"
#include "gliv/estimators.hpp"

namespace gliv {

double MomentEntry::evaluate(double y, const Eigen::VectorXd& eta) const {
  switch (kind) {
    case MomentKind::Mean: return y - selector.dot(eta);
    case MomentKind::Quantile: return (y <= selector.dot(eta) ? 1.0 : 0.0) - tau;
    case MomentKind::Custom: return custom(y, eta);
  }
  return 0.0;
}

void MomentSpec::validate(const TypeConfig& config) const {
  bounds.validate();
  if (moments.empty()) throw ValidationError("moment spec has no moments");
  if (n_moments() < dim()) {
    throw ValidationError("moment spec has J=" + std::to_string(n_moments()) +
                          " moments for d=" + std::to_string(dim()) +
                          " parameters");
  }
  for (std::size_t j = 0; j < moments.size(); ++j) {
    const MomentEntry& m = moments[j];
    const std::string where = "moment " + std::to_string(j + 1) + ": ";
    gliv::validate(ParameterId::p(m.t, m.k), config);
    if (m.kind == MomentKind::Quantile && !(m.tau > 0.0 && m.tau < 1.0)) {
      throw ValidationError(where + "quantile level must lie in (0, 1)");
    }
    if (m.kind == MomentKind::Custom && !m.custom) {
      throw ValidationError(where + "custom moment without a function");
    }
    if (m.kind != MomentKind::Custom && m.selector.size() != dim()) {
      throw ValidationError(where + "selector length must equal d=" +
                            std::to_string(dim()));
    }
    if (m.treated_at >= 0) {
      if (m.kind != MomentKind::Mean) {
        throw ValidationError(where + "only mean moments take treated_at");
      }
      gliv::validate(ParameterId::q(m.treated_at, m.t, m.k), config);
    }
  }
}

MomentSpec parse_moment_spec(const std::string& json_text,
                             const TypeConfig& config, const Dataset& data) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("moment spec is not valid JSON: ") +
                          e.what());
  }
  const json* list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("moments")) {
      throw ValidationError("moment spec object needs a 'moments' list");
    }
    list = &doc["moments"];
  }
  if (!list->is_array() || list->empty()) {
    throw ValidationError("moment spec must list at least one moment");
  }

  MomentSpec spec;
  Eigen::Index d = -1;
  try {
    for (const auto& item : *list) {
      MomentEntry m;
      m.t = config.treatment_index(item.at("t").get<std::string>());
      m.k = item.at("k").get<int>();
      const std::string kind = item.value("kind", std::string("mean"));
      if (kind == "mean") {
        m.kind = MomentKind::Mean;
      } else if (kind == "quantile") {
        m.kind = MomentKind::Quantile;
        m.tau = item.at("tau").get<double>();
      } else {
        throw ValidationError("unknown moment kind '" + kind +
                              "' (custom moments are library-only)");
      }
      std::vector<double> sel =
          item.contains("selector") ? item["selector"].get<std::vector<double>>()
                                    : std::vector<double>{1.0};
      m.selector = Eigen::Map<Eigen::VectorXd>(
          sel.data(), static_cast<Eigen::Index>(sel.size()));
      if (d < 0) d = m.selector.size();
      if (item.contains("treated_at")) {
        m.treated_at =
            config.treatment_index(item["treated_at"].get<std::string>());
      }
      spec.moments.push_back(std::move(m));
    }
    if (doc.is_object() && doc.contains("bounds")) {
      const auto b = doc["bounds"].get<std::vector<std::vector<double>>>();
      spec.bounds.lower.resize(static_cast<Eigen::Index>(b.size()));
      spec.bounds.upper.resize(static_cast<Eigen::Index>(b.size()));
      for (std::size_t j = 0; j < b.size(); ++j) {
        if (b[j].size() != 2) {
          throw ValidationError("each bound must be a [lower, upper] pair");
        }
        spec.bounds.lower(static_cast<Eigen::Index>(j)) = b[j][0];
        spec.bounds.upper(static_cast<Eigen::Index>(j)) = b[j][1];
      }
    } else {
      const double lo = data.y.minCoeff();
      const double hi = data.y.maxCoeff();
      const double pad = std::max(0.1 * (hi - lo), 1e-6);
      spec.bounds.lower = Eigen::VectorXd::Constant(d, lo - pad);
      spec.bounds.upper = Eigen::VectorXd::Constant(d, hi + pad);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed moment spec: ") + e.what());
  }
  spec.validate(config);
  return spec;
}

// ---------------------------------------------------------------------------

struct MomentSystem::Impl {
  const Dataset* data = nullptr;
  const NuisanceFit* fit = nullptr;
  int n_z = 0;
  std::vector<Contraction> con;
  PlugIn plug;  // training rows

  // DiscreteCells aggregates.
  const CellSmoother* cells = nullptr;
  int n_cells = 0;
  Eigen::VectorXd n_c;        // C
  Eigen::MatrixXd n_cz;       // C x N_Z
  Eigen::MatrixXd pi_trim;    // C x N_Z
  Eigen::MatrixXd pi_raw;     // C x N_Z
  struct Group {
    Eigen::MatrixXd count;    // C x N_Z, rows with T = t_j
    Eigen::MatrixXd sum_y;
    std::vector<std::vector<double>> sorted;  // (c * N_Z + z) -> sorted Y
    std::vector<std::vector<int>> rows;       // only for custom moments
  };
  std::vector<Group> groups;  // per moment

  Eigen::MatrixXd cell_sums(const MomentEntry& m, const Group& g,
                            const Eigen::VectorXd& eta) const {
    Eigen::MatrixXd s(n_cells, n_z);
    const double a = m.kind == MomentKind::Custom ? 0.0 : m.selector.dot(eta);
    for (int c = 0; c < n_cells; ++c) {
      for (int z = 0; z < n_z; ++z) {
        const std::size_t key = static_cast<std::size_t>(c) * n_z + z;
        switch (m.kind) {
          case MomentKind::Mean:
            s(c, z) = g.sum_y(c, z) - g.count(c, z) * a;
            break;
          case MomentKind::Quantile: {
            const auto& v = g.sorted[key];
            const auto below = std::upper_bound(v.begin(), v.end(), a) - v.begin();
            s(c, z) = static_cast<double>(below) - m.tau * g.count(c, z);
            break;
          }
          case MomentKind::Custom: {
            double acc = 0.0;
            for (int i : g.rows[key]) acc += m.custom(data->y(i), eta);
            s(c, z) = acc;
            break;
          }
        }
      }
    }
    return s;
  }
};

MomentSystem::MomentSystem(const Dataset& data, const TypeConfig& config,
                           const NuisanceFit& fit, MomentSpec spec)
    : data_(&data), spec_(std::move(spec)), impl_(std::make_unique<Impl>()) {
  spec_.validate(config);
  if (fit.training_values().pi.rows() != data.size()) {
    throw ValidationError("nuisance fit was trained on a different sample");
  }
  Impl& im = *impl_;
  im.data = &data;
  im.fit = &fit;
  im.n_z = config.n_instruments();
  for (const auto& m : spec_.moments) {
    im.con.push_back(contraction(
        config, m.treated_at >= 0 ? ParameterId::q(m.treated_at, m.t, m.k)
                                  : ParameterId::p(m.t, m.k)));
  }
  im.plug = plug_in(fit.training_values(), fit.trim_floor());

  im.cells = fit.cells();
  if (!im.cells) return;
  const CellSmoother& cs = *im.cells;
  const int C = cs.n_cells();
  const int nz = im.n_z;
  im.n_cells = C;
  im.n_c = Eigen::VectorXd::Zero(C);
  im.n_cz = Eigen::MatrixXd::Zero(C, nz);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    im.n_c(cs.cell_of_row(i)) += 1.0;
    im.n_cz(cs.cell_of_row(i), data.z[i]) += 1.0;
  }
  im.pi_raw = im.n_cz.array().colwise() / im.n_c.array();
  im.pi_trim = im.pi_raw.cwiseMax(fit.trim_floor());

  for (const auto& m : spec_.moments) {
    Impl::Group g;
    g.count = Eigen::MatrixXd::Zero(C, nz);
    g.sum_y = Eigen::MatrixXd::Zero(C, nz);
    g.sorted.resize(static_cast<std::size_t>(C) * nz);
    if (m.kind == MomentKind::Custom) g.rows.resize(g.sorted.size());
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      if (data.t[i] != m.t) continue;
      const int c = cs.cell_of_row(i);
      const int z = data.z[i];
      g.count(c, z) += 1.0;
      g.sum_y(c, z) += data.y(i);
      const std::size_t key = static_cast<std::size_t>(c) * nz + z;
      if (m.kind == MomentKind::Quantile) g.sorted[key].push_back(data.y(i));
      if (m.kind == MomentKind::Custom) {
        g.rows[key].push_back(static_cast<int>(i));
      }
    }
    for (auto& v : g.sorted) std::sort(v.begin(), v.end());
    im.groups.push_back(std::move(g));
  }
}

MomentSystem::~MomentSystem() = default;
MomentSystem::MomentSystem(MomentSystem&&) noexcept = default;

Eigen::MatrixXd MomentSystem::nuisance(int j, const Eigen::VectorXd& eta) const {
  const Impl& im = *impl_;
  const MomentEntry& m = spec_.moments.at(static_cast<std::size_t>(j));
  const Eigen::Index n = data_->size();
  if (im.cells) {
    const Eigen::MatrixXd s =
        im.cell_sums(m, im.groups[static_cast<std::size_t>(j)], eta);
    const Eigen::MatrixXd mhat =
        (s.array().colwise() / im.n_c.array()) / im.pi_trim.array();
    Eigen::MatrixXd out(n, im.n_z);
    for (Eigen::Index i = 0; i < n; ++i) {
      out.row(i) = mhat.row(im.cells->cell_of_row(i));
    }
    return out;
  }
  Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(n, im.n_z);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data_->t[i] == m.t) targets(i, data_->z[i]) = m.evaluate(data_->y(i), eta);
  }
  const Smoother& sm = im.fit->smoother();
  return sm.predict_train(sm.fit(targets)).cwiseQuotient(im.plug.pi);
}

Eigen::MatrixXd MomentSystem::psi(const Eigen::VectorXd& eta) const {
  const Impl& im = *impl_;
  const Eigen::Index n = data_->size();
  Eigen::MatrixXd out(n, spec_.n_moments());
  for (int j = 0; j < spec_.n_moments(); ++j) {
    const MomentEntry& m = spec_.moments[static_cast<std::size_t>(j)];
    const Contraction& c = im.con[static_cast<std::size_t>(j)];
    const Eigen::MatrixXd mhat = nuisance(j, eta);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int z = data_->z[i];
      const double own =
          data_->t[i] == m.t ? m.evaluate(data_->y(i), eta) : 0.0;
      double corr = c.btilde(z) / im.plug.pi(i, z) * (own - mhat(i, z));
      double base = c.btilde.dot(mhat.row(i));
      if (c.w) {
        corr *= c.pi_w(im.plug, i);
        base *= c.in_w(z) ? 1.0 : 0.0;
      }
      out(i, j) = corr + base;
    }
  }
  return out;
}

Eigen::VectorXd MomentSystem::moments(const Eigen::VectorXd& eta) const {
  const Impl& im = *impl_;
  if (!im.cells) return psi(eta).colwise().mean().transpose();
  const auto n = static_cast<double>(data_->size());
  Eigen::VectorXd G(spec_.n_moments());
  for (int j = 0; j < spec_.n_moments(); ++j) {
    const MomentEntry& m = spec_.moments[static_cast<std::size_t>(j)];
    const Contraction& c = im.con[static_cast<std::size_t>(j)];
    const Eigen::MatrixXd s =
        im.cell_sums(m, im.groups[static_cast<std::size_t>(j)], eta);
    double total = 0.0;
    for (int cell = 0; cell < im.n_cells; ++cell) {
      double w = 1.0;
      double base = im.n_c(cell);
      if (c.w) {
        w = 0.0;
        base = 0.0;
        for (int z : *c.w) {
          w += im.pi_raw(cell, z);
          base += im.n_cz(cell, z);
        }
      }
      double corr = 0.0;
      double proj = 0.0;
      for (int z = 0; z < im.n_z; ++z) {
        const double mhat = s(cell, z) / im.n_c(cell) / im.pi_trim(cell, z);
        corr += c.btilde(z) / im.pi_trim(cell, z) *
                (s(cell, z) - im.n_cz(cell, z) * mhat);
        proj += c.btilde(z) * mhat;
      }
      total += w * corr + base * proj;
    }
    G(j) = total / n;
  }
  return G;
}

Eigen::VectorXd MomentSystem::projected_means(const Eigen::VectorXd& eta) const {
  const Impl& im = *impl_;
  const Eigen::Index n = data_->size();
  Eigen::VectorXd out(spec_.n_moments());
  for (int j = 0; j < spec_.n_moments(); ++j) {
    const Contraction& c = im.con[static_cast<std::size_t>(j)];
    const Eigen::MatrixXd mhat = nuisance(j, eta);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double v = c.btilde.dot(mhat.row(i));
      if (c.w) v *= c.pi_w(im.plug, i);
      total += v;
    }
    out(j) = total / static_cast<double>(n);
  }
  return out;
}

Eigen::MatrixXd psi_m_values(const Dataset& data, const TypeConfig& config,
                             const NuisanceFit& fit, const MomentSpec& spec,
                             const Eigen::VectorXd& eta) {
  return MomentSystem(data, config, fit, spec).psi(eta);
}

WeightMatrix weight_from(const Eigen::MatrixXd& V) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(V);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 0.0);
  const double cutoff = 1e-12 * std::max(top, 1e-300);
  WeightMatrix w;
  w.pseudo = top == 0.0 || ev.minCoeff() <= cutoff;
  Eigen::VectorXd inv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    inv(i) = ev(i) > cutoff && top > 0.0 ? 1.0 / ev(i) : 0.0;
  }
  w.weight = es.eigenvectors() * inv.asDiagonal() *
             es.eigenvectors().transpose();
  return w;
}

MultiStartResult gmm_first_stage(const MomentSystem& system,
                                 const OptimOptions& options) {
  auto f = [&](const Eigen::VectorXd& eta) {
    return system.moments(eta).squaredNorm();
  };
  return minimize(f, system.spec().bounds, options);
}

Eigen::MatrixXd estimate_V(const MomentSystem& system,
                           const Eigen::VectorXd& eta) {
  const Eigen::MatrixXd p = system.psi(eta);
  return p.transpose() * p / static_cast<double>(p.rows());
}

MultiStartResult gmm_second_stage(const MomentSystem& system,
                                  const Eigen::MatrixXd& weight,
                                  const Eigen::VectorXd& warm_start,
                                  const OptimOptions& options) {
  auto f = [&](const Eigen::VectorXd& eta) {
    const Eigen::VectorXd g = system.moments(eta);
    return g.dot(weight * g);
  };
  return minimize(f, system.spec().bounds, options, {warm_start});
}

Eigen::MatrixXd gamma_hat(const MomentSystem& system,
                          const Eigen::VectorXd& eta, double epsilon) {
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  const Box& box = system.spec().bounds;
  const Eigen::Index d = box.dim();
  Eigen::MatrixXd G(system.spec().n_moments(), d);
  for (Eigen::Index l = 0; l < d; ++l) {
    Eigen::VectorXd up = eta;
    Eigen::VectorXd down = eta;
    const bool room_up = eta(l) + epsilon <= box.upper(l);
    const bool room_down = eta(l) - epsilon >= box.lower(l);
    double width = 2.0 * epsilon;
    if (room_up && room_down) {
      up(l) += epsilon;
      down(l) -= epsilon;
    } else if (room_up) {
      up(l) += epsilon;
      width = epsilon;
    } else if (room_down) {
      down(l) -= epsilon;
      width = epsilon;
    } else {
      up(l) = box.upper(l);
      down(l) = box.lower(l);
      width = box.upper(l) - box.lower(l);
    }
    G.col(l) = (system.projected_means(up) - system.projected_means(down)) /
               width;
  }
  return G;
}

Eigen::MatrixXd gmm_covariance(const Eigen::MatrixXd& Gamma,
                               const Eigen::MatrixXd& weight) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Gamma);
  qr.setThreshold(1e-10);
  if (qr.rank() < Gamma.cols()) {
    throw EstimationError(
        "Gamma-hat has rank " + std::to_string(qr.rank()) + " < d=" +
        std::to_string(Gamma.cols()) +
        "; the moment Jacobian must have full column rank for identification");
  }
  const Eigen::MatrixXd M = Gamma.transpose() * weight * Gamma;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  if (!lu.isInvertible()) {
    throw EstimationError("Gamma' W Gamma is singular under the chosen "
                          "weighting");
  }
  const Eigen::MatrixXd inv = lu.inverse();
  return (inv + inv.transpose()) / 2.0;
}

GmmResult estimate_gmm(const Dataset& data, const TypeConfig& config,
                       const NuisanceFit& fit, const MomentSpec& spec,
                       double epsilon, const OptimOptions& options) {
  if (auto v = find_monotonicity_violation(config)) {
    throw ValidationError("configuration violates unordered monotonicity: " +
                          describe(config, *v));
  }
  const MomentSystem system(data, config, fit, spec);
  GmmResult r;
  r.n = data.size();
  r.epsilon = epsilon > 0.0 ? epsilon
                            : std::pow(static_cast<double>(r.n), -0.25);

  const MultiStartResult first = gmm_first_stage(system, options);
  r.first_stage_eta = first.best.x;
  r.first_stage_objective = first.best.value;
  if (first.start_spread == 0.0) {
    r.warnings.push_back(
        "first-stage objective is constant over the start grid; the moments "
        "may not identify eta");
  }

  r.V_hat = estimate_V(system, r.first_stage_eta);
  const WeightMatrix w = weight_from(r.V_hat);
  if (w.pseudo) {
    r.warnings.push_back("V-hat is singular; using pseudoinverse weighting");
  }
  const MultiStartResult second =
      gmm_second_stage(system, w.weight, r.first_stage_eta, options);
  r.eta_hat = second.best.x;
  r.objective_value = std::max(0.0, second.best.value);
  r.j_statistic = static_cast<double>(r.n) * r.objective_value;

  r.Gamma_hat = gamma_hat(system, r.eta_hat, r.epsilon);
  r.bound = gmm_covariance(r.Gamma_hat, w.weight);
  r.covariance = r.bound / static_cast<double>(r.n);
  r.standard_errors = r.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return r;
}

}  // namespace gliv
