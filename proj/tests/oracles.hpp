#pragma once

// Reference computations coded directly from the model definitions; they
// share no code with the library beyond the Dataset container.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gliv/dataset.hpp"
#include "gliv/typeconfig.hpp"

namespace oracle {

inline double penrose_residual(const Eigen::MatrixXd& m,
                               const Eigen::MatrixXd& p) {
  const double a = (m * p * m - m).cwiseAbs().maxCoeff();
  const double b = (p * m * p - p).cwiseAbs().maxCoeff();
  const Eigen::MatrixXd mp = m * p;
  const Eigen::MatrixXd pm = p * m;
  const double c = (mp - mp.transpose()).cwiseAbs().maxCoeff();
  const double d = (pm - pm.transpose()).cwiseAbs().maxCoeff();
  return std::max({a, b, c, d});
}

// No 2x2 submatrix equal to a permutation matrix.
inline bool lonesum(const Eigen::MatrixXi& b) {
  for (int r1 = 0; r1 < b.rows(); ++r1)
    for (int r2 = r1 + 1; r2 < b.rows(); ++r2)
      for (int c1 = 0; c1 < b.cols(); ++c1)
        for (int c2 = c1 + 1; c2 < b.cols(); ++c2) {
          const int a = b(r1, c1), x = b(r1, c2), y = b(r2, c1), d = b(r2, c2);
          if (a == d && x == y && a != x) return false;
        }
  return true;
}

struct RawConfig {
  std::vector<std::string> treatments;
  std::vector<std::string> instruments;
  std::vector<std::vector<std::string>> types;
};

inline Eigen::MatrixXi indicator(const RawConfig& c, const std::string& t) {
  Eigen::MatrixXi b(c.instruments.size(), c.types.size());
  for (std::size_t s = 0; s < c.types.size(); ++s)
    for (std::size_t z = 0; z < c.instruments.size(); ++z)
      b(z, s) = c.types[s][z] == t ? 1 : 0;
  return b;
}

inline bool monotone(const RawConfig& c) {
  for (const auto& t : c.treatments)
    if (!lonesum(indicator(c, t))) return false;
  return true;
}

// Rejection sampler over distinct random types.
inline RawConfig random_monotone_config(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nz_d(2, 3), nt_d(2, 4);
  for (;;) {
    RawConfig c;
    const int nz = nz_d(rng);
    const int nt = nt_d(rng);
    for (int t = 0; t < nt; ++t) c.treatments.push_back("t" + std::to_string(t));
    for (int z = 0; z < nz; ++z) c.instruments.push_back("z" + std::to_string(z));
    std::uniform_int_distribution<int> ns_d(1, 6), pick(0, nt - 1);
    const int ns = ns_d(rng);
    std::set<std::vector<std::string>> seen;
    for (int s = 0; s < ns * 3 && static_cast<int>(c.types.size()) < ns; ++s) {
      std::vector<std::string> type;
      for (int z = 0; z < nz; ++z) type.push_back(c.treatments[pick(rng)]);
      if (seen.insert(type).second) c.types.push_back(type);
    }
    if (monotone(c)) return c;
  }
}

inline gliv::TypeConfig build(const RawConfig& c) {
  return gliv::TypeConfig(c.treatments, c.instruments, c.types);
}

// Within-cell sample moments of a discrete-covariate dataset.
struct CellTable {
  int nz = 0;
  int nt = 0;
  std::vector<std::vector<double>> keys;
  std::vector<double> n_c;
  std::vector<std::vector<double>> n_cz;
  // [c][z][t]
  std::vector<std::vector<std::vector<double>>> count_t;
  std::vector<std::vector<std::vector<double>>> sum_y;
  std::vector<int> cell;
  double n = 0.0;

  CellTable(const gliv::Dataset& d, int nz_, int nt_) : nz(nz_), nt(nt_) {
    std::map<std::vector<double>, int> index;
    n = static_cast<double>(d.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      std::vector<double> key;
      for (Eigen::Index j = 0; j < d.x.cols(); ++j) key.push_back(d.x(i, j));
      auto it = index.find(key);
      int c;
      if (it == index.end()) {
        c = static_cast<int>(keys.size());
        index[key] = c;
        keys.push_back(key);
        n_c.push_back(0.0);
        n_cz.emplace_back(nz, 0.0);
        count_t.emplace_back(nz, std::vector<double>(nt, 0.0));
        sum_y.emplace_back(nz, std::vector<double>(nt, 0.0));
      } else {
        c = it->second;
      }
      cell.push_back(c);
      const int z = d.z[i];
      const int t = d.t[i];
      n_c[c] += 1;
      n_cz[c][z] += 1;
      count_t[c][z][t] += 1;
      sum_y[c][z][t] += d.y(i);
    }
  }

  int cells() const { return static_cast<int>(keys.size()); }
  double weight(int c) const { return n_c[c] / n; }
  double pi(int c, int z) const { return n_cz[c][z] / n_c[c]; }
  // P(T = t | Z = z, X) and E[Y 1{T = t} | Z = z, X]
  double P(int c, int z, int t) const { return count_t[c][z][t] / n_cz[c][z]; }
  double I(int c, int z, int t) const { return sum_y[c][z][t] / n_cz[c][z]; }
  double EY(int c, int z) const {
    double s = 0.0;
    for (int t = 0; t < nt; ++t) s += sum_y[c][z][t];
    return s / n_cz[c][z];
  }
};

// sum_c w_c bt . v_c(z)
template <class F>
double contract(const CellTable& tab, const std::vector<double>& bt, F&& v) {
  double s = 0.0;
  for (int c = 0; c < tab.cells(); ++c) {
    double inner = 0.0;
    for (int z = 0; z < tab.nz; ++z) inner += bt[z] * v(c, z);
    s += tab.weight(c) * inner;
  }
  return s;
}

inline double p_hat(const CellTable& tab, const std::vector<double>& bt,
                    int t) {
  return contract(tab, bt, [&](int c, int z) { return tab.P(c, z, t); });
}

inline double beta_hat(const CellTable& tab, const std::vector<double>& bt,
                       int t) {
  return contract(tab, bt, [&](int c, int z) { return tab.I(c, z, t); }) /
         p_hat(tab, bt, t);
}

// Weighted by pi_W(x) = sum_{z in W} pi_z(x).
inline double gamma_hat(const CellTable& tab, const std::vector<double>& bt,
                        int t, const std::vector<int>& w) {
  auto piw = [&](int c) {
    double s = 0.0;
    for (int z : w) s += tab.pi(c, z);
    return s;
  };
  const double num = contract(
      tab, bt, [&](int c, int z) { return tab.I(c, z, t) * piw(c); });
  const double den = contract(
      tab, bt, [&](int c, int z) { return tab.P(c, z, t) * piw(c); });
  return num / den;
}

// Binary design with instruments (z0, z1) and treatments (t0, t1):
// conditional Wald ratio E[E[Y|z1,X] - E[Y|z0,X]] / E[P(t1|z1,X) - P(t1|z0,X)].
inline double wald(const CellTable& tab) {
  double num = 0.0, den = 0.0;
  for (int c = 0; c < tab.cells(); ++c) {
    num += tab.weight(c) * (tab.EY(c, 1) - tab.EY(c, 0));
    den += tab.weight(c) * (tab.P(c, 1, 1) - tab.P(c, 0, 1));
  }
  return num / den;
}

// The same contrast on the treated: both averages weighted by P(Z = z1 | X).
inline double treated_wald(const CellTable& tab) {
  double num = 0.0, den = 0.0;
  for (int c = 0; c < tab.cells(); ++c) {
    const double w = tab.weight(c) * tab.pi(c, 1);
    num += w * (tab.EY(c, 1) - tab.EY(c, 0));
    den += w * (tab.P(c, 1, 1) - tab.P(c, 0, 1));
  }
  return num / den;
}

// Per-observation efficient influence value of beta for contraction bt.
inline Eigen::VectorXd beta_influence(const gliv::Dataset& d,
                                      const CellTable& tab,
                                      const std::vector<double>& bt, int t) {
  const double p = p_hat(tab, bt, t);
  const double beta = beta_hat(tab, bt, t);
  Eigen::VectorXd psi(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const int c = tab.cell[i];
    double a = 0.0, b = 0.0;
    for (int z = 0; z < tab.nz; ++z) {
      const double ind = d.z[i] == z ? 1.0 : 0.0;
      const double took = d.t[i] == t ? 1.0 : 0.0;
      a += bt[z] * (ind / tab.pi(c, z) * (d.y(i) * took - tab.I(c, z, t)) +
                    tab.I(c, z, t));
      b += bt[z] * (ind / tab.pi(c, z) * (took - tab.P(c, z, t)) +
                    tab.P(c, z, t));
    }
    psi(i) = (a - beta * b) / p;
  }
  return psi;
}

// Binary LATE sample with a five-point covariate: always-takers, compliers
// and never-takers with x-dependent shares; Y_t1 - Y_t0 differs by type.
inline gliv::Dataset binary_late_sample(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> e(0.0, 1.0);
  const double xs[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
  gliv::Dataset d;
  d.y.resize(n);
  d.x.resize(n, 1);
  d.t.resize(n);
  d.z.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = xs[std::min(4, static_cast<int>(u(rng) * 5))];
    const double ua = u(rng);
    const int type = ua < 0.2 + 0.1 * x ? 0 : (ua < 0.75 ? 1 : 2);
    const int z = u(rng) < 0.3 + 0.4 * x ? 1 : 0;
    int t;
    if (type == 0) t = 1;
    else if (type == 2) t = 0;
    else t = z;
    const double y0 = x + 0.5 * type + e(rng);
    const double y1 = y0 + 1.0 + x * (type == 1 ? 0.7 : 0.2) + 0.5 * e(rng);
    d.x(i, 0) = x;
    d.z[i] = z;
    d.t[i] = t;
    d.y(i) = t == 1 ? y1 : y0;
  }
  return d;
}

// P(S = s_j | x) for the simulation design: Binomial(4, x) values
// 0..4 map to s1, s2, s4, s5, s3.
inline std::vector<double> type_law(double x) {
  const int to_type[5] = {0, 1, 3, 4, 2};
  std::vector<double> p(5, 0.0);
  for (int v = 0; v <= 4; ++v) {
    double c = 1.0;
    for (int j = 0; j < v; ++j) c = c * (4 - j) / (j + 1);
    p[to_type[v]] = c * std::pow(x, v) * std::pow(1.0 - x, 4 - v);
  }
  return p;
}

}  // namespace oracle
