#include "gliv/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gliv/error.hpp"

namespace gliv {

BinGrid::BinGrid(std::vector<double> breakpoints)
    : breakpoints_(std::move(breakpoints)) {
  for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
    if (!std::isfinite(breakpoints_[i])) {
      throw ValidationError("bin breakpoints must be finite");
    }
    if (i > 0 && !(breakpoints_[i - 1] < breakpoints_[i])) {
      throw ValidationError("bin breakpoints must be strictly increasing");
    }
  }
}

int BinGrid::bin_of(double y) const {
  return static_cast<int>(
      std::upper_bound(breakpoints_.begin(), breakpoints_.end(), y) -
      breakpoints_.begin());
}

std::string BinGrid::label(int bin) const {
  if (bin == kWholeRange) return "all";
  std::ostringstream os;
  os.precision(6);
  if (bin == 0) {
    os << "(-inf,";
  } else {
    os << "[" << breakpoints_[bin - 1] << ",";
  }
  if (bin == n_bins() - 1) {
    os << "inf)";
  } else {
    os << breakpoints_[bin] << ")";
  }
  return os.str();
}

BinGrid quantile_bins(const Eigen::VectorXd& y, int count) {
  if (count < 1) throw ValidationError("bin count must be positive");
  if (y.size() < 1) throw ValidationError("no outcomes to bin");
  std::vector<double> v(y.data(), y.data() + y.size());
  std::sort(v.begin(), v.end());
  std::vector<double> bp;
  const auto n = v.size();
  for (int j = 1; j < count; ++j) {
    const auto idx = static_cast<std::size_t>(
        static_cast<double>(j) * static_cast<double>(n) / count);
    const double b = v[std::min(idx, n - 1)];
    if (b > v.front() && (bp.empty() || b > bp.back())) bp.push_back(b);
  }
  return BinGrid(std::move(bp));
}

ImplicationReport q_kernel_estimates(const Dataset& data,
                                     const TypeConfig& config,
                                     const NuisanceFit& fit,
                                     const BinGrid& bins) {
  const CellSmoother* cells = fit.cells();
  if (!cells) {
    throw EstimationError("implication checks need a DiscreteCells fit");
  }
  if (cells->n_train() != data.size()) {
    throw ValidationError("nuisance fit was trained on a different sample");
  }
  const int C = cells->n_cells();
  const int nz = config.n_instruments();
  const int nt = config.n_treatments();
  const int nb = bins.n_bins();

  // counts[((c * nz + z) * nt + t) * nb + b]
  std::vector<double> counts(static_cast<std::size_t>(C) * nz * nt * nb, 0.0);
  Eigen::MatrixXd n_cz = Eigen::MatrixXd::Zero(C, nz);
  Eigen::VectorXd n_c = Eigen::VectorXd::Zero(C);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const int c = cells->cell_of_row(i);
    const int z = data.z[i];
    n_c(c) += 1.0;
    n_cz(c, z) += 1.0;
    const std::size_t key =
        ((static_cast<std::size_t>(c) * nz + z) * nt + data.t[i]) * nb +
        bins.bin_of(data.y(i));
    counts[key] += 1.0;
  }
  auto share = [&](int c, int z, int t, int b) {
    double cnt = 0.0;
    const std::size_t base =
        ((static_cast<std::size_t>(c) * nz + z) * nt + t) * nb;
    if (b == kWholeRange) {
      for (int k = 0; k < nb; ++k) cnt += counts[base + k];
    } else {
      cnt = counts[base + b];
    }
    const double pi = std::max(n_cz(c, z) / n_c(c), fit.trim_floor());
    return cnt / n_c(c) / pi;
  };

  ImplicationReport r;
  r.bins = bins;
  for (int c = 0; c < C; ++c) {
    r.cell_x.push_back(cells->representative(c));
    r.cell_n.push_back(static_cast<int>(n_c(c)));
  }

  for (int c = 0; c < C; ++c) {
    for (int t = 0; t < nt; ++t) {
      const TypePartition part = partition(config, t);
      for (int k = 1; k <= nz; ++k) {
        if (part[k].empty()) continue;
        const Eigen::RowVectorXd bt = btilde(config, t, k);
        for (int b = kWholeRange; b < nb; ++b) {
          KernelValue v{c, t, k, b, 0.0, 0.0, 0.0};
          double var = 0.0;
          for (int z = 0; z < nz; ++z) {
            const double f = share(c, z, t, b);
            v.q += bt(z) * f;
            const double fc = std::clamp(f, 0.0, 1.0);
            var += bt(z) * bt(z) * fc * (1.0 - fc) / n_cz(c, z);
          }
          v.se = std::sqrt(var);
          v.violation = std::max({-v.q, v.q - 1.0, 0.0});
          r.values.push_back(v);
        }
      }
    }
  }

  for (auto& rest : find_equality_restrictions(config)) {
    if (rest.holds_identically) continue;
    r.restrictions.push_back(std::move(rest));
  }
  for (std::size_t ri = 0; ri < r.restrictions.size(); ++ri) {
    const EqualityRestriction& rest = r.restrictions[ri];
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(nt, nz);
    for (const Cell& cl : rest.lhs) L.row(cl.t) += btilde(config, cl.t, cl.k);
    for (const Cell& cl : rest.rhs) L.row(cl.t) -= btilde(config, cl.t, cl.k);
    for (int c = 0; c < C; ++c) {
      EqualityValue e{c, static_cast<int>(ri), 0.0, 0.0};
      double var = 0.0;
      for (int z = 0; z < nz; ++z) {
        double m1 = 0.0;
        double m2 = 0.0;
        for (int t = 0; t < nt; ++t) {
          const double f = share(c, z, t, kWholeRange);
          e.discrepancy += L(t, z) * f;
          const double fc = std::clamp(f, 0.0, 1.0);
          m1 += L(t, z) * fc;
          m2 += L(t, z) * L(t, z) * fc;
        }
        var += std::max(0.0, m2 - m1 * m1) / n_cz(c, z);
      }
      e.se = std::sqrt(var);
      r.equalities.push_back(e);
    }
  }
  return r;
}

namespace {

std::string cell_text(const ImplicationReport& r, int c) {
  std::ostringstream os;
  os.precision(6);
  os << "x=(";
  for (Eigen::Index j = 0; j < r.cell_x[c].size(); ++j) {
    if (j) os << ",";
    os << r.cell_x[c](j);
  }
  os << ")";
  return os.str();
}

}  // namespace

ImplicationSummary check_implications(const ImplicationReport& report,
                                      const TypeConfig& config,
                                      const Tolerance& tolerance) {
  constexpr double slack = 1e-12;
  ImplicationSummary s;
  auto tol_for = [&](double se) {
    return tolerance.automatic ? tolerance.multiplier * se : tolerance.value;
  };
  for (const KernelValue& v : report.values) {
    ++s.checks;
    s.max_violation = std::max(s.max_violation, v.violation);
    const double tol = tol_for(v.se);
    if (v.violation > tol + slack) {
      std::ostringstream os;
      os << cell_text(report, v.cell) << " Q[" << config.treatment(v.t) << ","
         << v.k << "] B=" << report.bins.label(v.bin) << " = " << v.q;
      s.flagged.push_back({os.str(), v.violation, tol});
    }
  }
  for (const EqualityValue& e : report.equalities) {
    ++s.checks;
    const double mag = std::abs(e.discrepancy);
    s.max_discrepancy = std::max(s.max_discrepancy, mag);
    const double tol = tol_for(e.se);
    if (mag > tol + slack) {
      std::ostringstream os;
      os << cell_text(report, e.cell) << " "
         << describe(config, report.restrictions[e.restriction])
         << " off by " << e.discrepancy;
      s.flagged.push_back({os.str(), mag, tol});
    }
  }
  s.pass = s.flagged.empty();
  s.reduced_system = reduced_inequalities(config);
  return s;
}

std::vector<std::string> reduced_inequalities(const TypeConfig& config) {
  std::vector<std::string> out;
  const int nz = config.n_instruments();
  for (int t = 0; t < config.n_treatments(); ++t) {
    const TypePartition part = partition(config, t);
    const std::string& tl = config.treatment(t);
    for (int k = 1; k <= nz; ++k) {
      if (part[k].empty()) continue;
      const Eigen::RowVectorXd bt = btilde(config, t, k);
      std::vector<int> plus;
      std::vector<int> minus;
      bool other = false;
      for (int z = 0; z < nz; ++z) {
        if (std::abs(bt(z)) < 1e-12) continue;
        if (std::abs(bt(z) - 1.0) < 1e-12) {
          plus.push_back(z);
        } else if (std::abs(bt(z) + 1.0) < 1e-12) {
          minus.push_back(z);
        } else {
          other = true;
        }
      }
      if (bt.minCoeff() > -1e-12 && bt.sum() < 1.0 + 1e-12) continue;
      if (!other && plus.size() == 1 && minus.size() == 1) {
        out.push_back("P(Y in B, T=" + tl + " | Z=" +
                      config.instrument(plus[0]) + ", X) >= P(Y in B, T=" +
                      tl + " | Z=" + config.instrument(minus[0]) + ", X)");
        continue;
      }
      std::ostringstream os;
      os << "0 <= (";
      for (int z = 0; z < nz; ++z) {
        if (z) os << ", ";
        os << bt(z);
      }
      os << ") . P(Y in B, T=" << tl << " | Z, X) <= 1";
      out.push_back(os.str());
    }
  }
  for (const auto& r : find_equality_restrictions(config)) {
    if (r.holds_identically) continue;
    out.push_back("over all outcomes: " + describe(config, r));
  }
  return out;
}

}  // namespace gliv
