#include "gliv/typeconfig.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>

#include "gliv/error.hpp"

namespace gliv {

namespace {

std::optional<int> index_of(const std::vector<std::string>& labels,
                            std::string_view label) {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) return std::nullopt;
  return static_cast<int>(it - labels.begin());
}

void require_distinct(const std::vector<std::string>& labels,
                      const char* what) {
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!seen.insert(l).second) {
      throw ValidationError(std::string("duplicate ") + what + " label '" + l +
                            "'");
    }
  }
}

}  // namespace

TypeConfig::TypeConfig(std::vector<std::string> treatments,
                       std::vector<std::string> instruments,
                       const std::vector<std::vector<std::string>>& types)
    : treatments_(std::move(treatments)), instruments_(std::move(instruments)) {
  if (treatments_.size() < 2) {
    throw ValidationError("type configuration needs at least 2 treatments");
  }
  if (instruments_.size() < 2) {
    throw ValidationError("type configuration needs at least 2 instruments");
  }
  if (types.empty()) {
    throw ValidationError("type configuration needs at least 1 type");
  }
  require_distinct(treatments_, "treatment");
  require_distinct(instruments_, "instrument");

  const int nz = n_instruments();
  types_.resize(nz, static_cast<Eigen::Index>(types.size()));
  for (std::size_t j = 0; j < types.size(); ++j) {
    if (static_cast<int>(types[j].size()) != nz) {
      throw ValidationError("type " + std::to_string(j + 1) + " has " +
                            std::to_string(types[j].size()) +
                            " entries, expected one per instrument (" +
                            std::to_string(nz) + ")");
    }
    for (int z = 0; z < nz; ++z) {
      auto t = index_of(treatments_, types[j][z]);
      if (!t) {
        throw ValidationError("type " + std::to_string(j + 1) +
                              " references unknown treatment '" +
                              types[j][z] + "'");
      }
      types_(z, static_cast<Eigen::Index>(j)) = *t;
    }
  }
  for (Eigen::Index a = 0; a < types_.cols(); ++a) {
    for (Eigen::Index b = a + 1; b < types_.cols(); ++b) {
      if (types_.col(a) == types_.col(b)) {
        throw ValidationError("types " + std::to_string(a + 1) + " and " +
                              std::to_string(b + 1) + " are identical");
      }
    }
  }
}

std::optional<int> TypeConfig::find_treatment(std::string_view label) const {
  return index_of(treatments_, label);
}

std::optional<int> TypeConfig::find_instrument(std::string_view label) const {
  return index_of(instruments_, label);
}

int TypeConfig::treatment_index(std::string_view label) const {
  if (auto t = find_treatment(label)) return *t;
  throw ValidationError("unknown treatment label '" + std::string(label) + "'");
}

int TypeConfig::instrument_index(std::string_view label) const {
  if (auto z = find_instrument(label)) return *z;
  throw ValidationError("unknown instrument label '" + std::string(label) +
                        "'");
}

TypeConfig main_example() {
  return TypeConfig({"t1", "t2", "t3"}, {"z1", "z2"},
                    {{"t1", "t1"},
                     {"t2", "t2"},
                     {"t3", "t3"},
                     {"t3", "t1"},
                     {"t3", "t2"}});
}

TypeConfig main_example_without_s5() {
  return TypeConfig({"t1", "t2", "t3"}, {"z1", "z2"},
                    {{"t1", "t1"}, {"t2", "t2"}, {"t3", "t3"}, {"t3", "t1"}});
}

TypeConfig binary_late() {
  return TypeConfig({"t0", "t1"}, {"z0", "z1"},
                    {{"t1", "t1"}, {"t0", "t1"}, {"t0", "t0"}});
}

TypeConfig preset(std::string_view name) {
  if (name == "main_example") return main_example();
  if (name == "binary_late") return binary_late();
  if (name == "main_example_without_s5") return main_example_without_s5();
  throw ValidationError("unknown preset '" + std::string(name) +
                        "' (expected main_example, binary_late or "
                        "main_example_without_s5)");
}

Eigen::MatrixXd build_response_matrix(const TypeConfig& config, int t) {
  if (t < 0 || t >= config.n_treatments()) {
    throw ValidationError("treatment index " + std::to_string(t) +
                          " out of range");
  }
  return (config.types().array() == t).cast<double>().matrix();
}

std::optional<MonotonicityViolation> find_monotonicity_violation(
    const TypeConfig& config) {
  const int nz = config.n_instruments();
  const int ns = config.n_types();
  for (int t = 0; t < config.n_treatments(); ++t) {
    const Eigen::MatrixXd b = build_response_matrix(config, t);
    for (int r1 = 0; r1 < nz; ++r1) {
      for (int r2 = r1 + 1; r2 < nz; ++r2) {
        for (int c1 = 0; c1 < ns; ++c1) {
          for (int c2 = c1 + 1; c2 < ns; ++c2) {
            const bool identity = b(r1, c1) == 1 && b(r1, c2) == 0 &&
                                  b(r2, c1) == 0 && b(r2, c2) == 1;
            const bool anti = b(r1, c1) == 0 && b(r1, c2) == 1 &&
                              b(r2, c1) == 1 && b(r2, c2) == 0;
            if (identity || anti) return MonotonicityViolation{t, r1, r2, c1, c2};
          }
        }
      }
    }
  }
  return std::nullopt;
}

bool check_unordered_monotonicity(const TypeConfig& config) {
  return !find_monotonicity_violation(config).has_value();
}

Eigen::MatrixXd pseudoinverse(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return Eigen::MatrixXd(m.cols(), m.rows());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU |
                                               Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = 1e-12 * std::max(1.0, sv.size() ? sv(0) : 0.0);
  Eigen::MatrixXd inv_sigma = Eigen::MatrixXd::Zero(m.cols(), m.rows());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) inv_sigma(i, i) = 1.0 / sv(i);
  }
  return svd.matrixV() * inv_sigma * svd.matrixU().transpose();
}

TypePartition partition(const TypeConfig& config, int t) {
  const Eigen::MatrixXd b = build_response_matrix(config, t);
  TypePartition out;
  out.treatment = t;
  out.cells.resize(config.n_instruments() + 1);
  for (int s = 0; s < config.n_types(); ++s) {
    const int count = static_cast<int>(b.col(s).sum());
    out.cells[count].push_back(s);
  }
  return out;
}

Eigen::RowVectorXd type_indicator(const TypeConfig& config, int t, int k) {
  if (k < 0 || k > config.n_instruments()) {
    throw ValidationError("level k=" + std::to_string(k) +
                          " out of range 0.." +
                          std::to_string(config.n_instruments()));
  }
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(config.n_types());
  const TypePartition part = partition(config, t);
  for (int s : part[k]) b(s) = 1.0;
  return b;
}

Eigen::RowVectorXd btilde(const TypeConfig& config, int t, int k) {
  if (k < 1 || k > config.n_instruments()) {
    throw ValidationError("level k=" + std::to_string(k) +
                          " out of range 1.." +
                          std::to_string(config.n_instruments()));
  }
  return type_indicator(config, t, k) *
         pseudoinverse(build_response_matrix(config, t));
}

std::optional<std::vector<int>> w_set(const TypeConfig& config, int t_prime,
                                      int t, int k) {
  if (t_prime < 0 || t_prime >= config.n_treatments()) {
    throw ValidationError("treatment index out of range");
  }
  const TypePartition part = partition(config, t);
  const auto& sigma = part[k];
  if (sigma.empty()) {
    throw ValidationError("Sigma_{" + config.treatment(t) + "," +
                          std::to_string(k) + "} is empty");
  }
  std::optional<std::vector<int>> common;
  for (int s : sigma) {
    std::vector<int> w;
    for (int z = 0; z < config.n_instruments(); ++z) {
      if (config.take(z, s) == t_prime) w.push_back(z);
    }
    if (!common) {
      common = std::move(w);
    } else if (*common != w) {
      return std::nullopt;
    }
  }
  return common;
}

namespace {

// sum_lhs b~ P - sum_rhs b~ P is constant on the simplex sum_t P_{t,z} = 1
// iff its coefficient on P_{t,z} does not depend on t; it then equals the
// sum of those coefficients, which must vanish.
bool follows_from_simplex(const TypeConfig& config,
                          const std::vector<Cell>& lhs,
                          const std::vector<Cell>& rhs) {
  Eigen::MatrixXd coef =
      Eigen::MatrixXd::Zero(config.n_treatments(), config.n_instruments());
  for (const Cell& c : lhs) coef.row(c.t) += btilde(config, c.t, c.k);
  for (const Cell& c : rhs) coef.row(c.t) -= btilde(config, c.t, c.k);
  constexpr double tol = 1e-9;
  for (int t = 1; t < coef.rows(); ++t) {
    if ((coef.row(t) - coef.row(0)).cwiseAbs().maxCoeff() > tol) return false;
  }
  return std::abs(coef.row(0).sum()) <= tol;
}

}  // namespace

std::vector<EqualityRestriction> find_equality_restrictions(
    const TypeConfig& config) {
  if (config.n_types() > 64) {
    throw ValidationError("restriction search supports at most 64 types");
  }
  std::vector<Cell> cells;
  std::vector<std::uint64_t> masks;
  std::vector<EqualityRestriction> out;
  for (int t = 0; t < config.n_treatments(); ++t) {
    const TypePartition part = partition(config, t);
    for (int k = 1; k <= config.n_instruments(); ++k) {
      if (part[k].empty()) {
        out.push_back({{Cell{t, k}}, {}, true});
        continue;
      }
      std::uint64_t m = 0;
      for (int s : part[k]) m |= std::uint64_t{1} << s;
      cells.push_back({t, k});
      masks.push_back(m);
    }
  }
  const int nc = static_cast<int>(cells.size());
  if (nc > 24) {
    throw ValidationError("restriction search supports at most 24 cells");
  }

  // Families of pairwise-disjoint cells, keyed by the union of their types.
  std::map<std::uint64_t, std::vector<std::uint32_t>> families;
  for (std::uint32_t f = 1; f < (std::uint32_t{1} << nc); ++f) {
    std::uint64_t uni = 0;
    bool disjoint = true;
    for (int c = 0; c < nc && disjoint; ++c) {
      if (!(f >> c & 1U)) continue;
      if (uni & masks[c]) disjoint = false;
      uni |= masks[c];
    }
    if (disjoint) families[uni].push_back(f);
  }
  auto union_of = [&](std::uint32_t f) {
    std::uint64_t u = 0;
    for (int c = 0; c < nc; ++c) {
      if (f >> c & 1U) u |= masks[c];
    }
    return u;
  };
  auto is_minimal = [&](std::uint32_t a, std::uint32_t b) {
    for (std::uint32_t ga = a;; ga = (ga - 1) & a) {
      if (ga != 0) {
        for (std::uint32_t gb = b; gb != 0; gb = (gb - 1) & b) {
          if ((ga != a || gb != b) && union_of(ga) == union_of(gb)) {
            return false;
          }
        }
      }
      if (ga == 0) break;
    }
    return true;
  };
  auto to_cells = [&](std::uint32_t f) {
    std::vector<Cell> v;
    for (int c = 0; c < nc; ++c) {
      if (f >> c & 1U) v.push_back(cells[c]);
    }
    return v;
  };

  for (const auto& [uni, fams] : families) {
    for (std::size_t i = 0; i < fams.size(); ++i) {
      for (std::size_t j = i + 1; j < fams.size(); ++j) {
        const std::uint32_t a = fams[i];
        const std::uint32_t b = fams[j];
        if (a & b) continue;
        if (!is_minimal(a, b)) continue;
        // Larger side on the left reads like the usual "sum = total" form.
        auto lhs = to_cells(a);
        auto rhs = to_cells(b);
        if (lhs.size() < rhs.size()) std::swap(lhs, rhs);
        const bool trivial = follows_from_simplex(config, lhs, rhs);
        out.push_back({std::move(lhs), std::move(rhs), trivial});
      }
    }
  }
  return out;
}

std::string describe(const TypeConfig& config, const EqualityRestriction& r) {
  auto side = [&](const std::vector<Cell>& cs) {
    if (cs.empty()) return std::string("0");
    std::string s;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (i) s += " + ";
      s += "p[" + config.treatment(cs[i].t) + "," + std::to_string(cs[i].k) +
           "]";
    }
    return s;
  };
  return side(r.lhs) + " = " + side(r.rhs);
}

std::string describe(const TypeConfig& config,
                     const MonotonicityViolation& v) {
  std::ostringstream os;
  const Eigen::MatrixXd b = build_response_matrix(config, v.treatment);
  os << "B_" << config.treatment(v.treatment)
     << " is not lonesum: rows (" << config.instrument(v.row_a) << ","
     << config.instrument(v.row_b) << ") x type columns (" << v.col_a + 1
     << "," << v.col_b + 1 << ") form [[" << b(v.row_a, v.col_a) << ","
     << b(v.row_a, v.col_b) << "],[" << b(v.row_b, v.col_a) << ","
     << b(v.row_b, v.col_b) << "]]";
  return os.str();
}

}  // namespace gliv
