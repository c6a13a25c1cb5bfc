#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace gliv {

// Known type support of the model. A type is the vector of treatments an
// individual would take under each instrument value; the support is stored
// as an N_Z x N_S matrix of treatment indices (column j is type s_j).
class TypeConfig {
 public:
  // Throws ValidationError when labels repeat, a type references an unknown
  // treatment, two types coincide, or N_Z < 2 / N_T < 2 / N_S < 1.
  // `types[j]` is the j-th type, listed by instrument.
  TypeConfig(std::vector<std::string> treatments,
             std::vector<std::string> instruments,
             const std::vector<std::vector<std::string>>& types);

  int n_treatments() const { return static_cast<int>(treatments_.size()); }
  int n_instruments() const { return static_cast<int>(instruments_.size()); }
  int n_types() const { return static_cast<int>(types_.cols()); }

  const std::vector<std::string>& treatments() const { return treatments_; }
  const std::vector<std::string>& instruments() const { return instruments_; }
  const std::string& treatment(int t) const { return treatments_.at(t); }
  const std::string& instrument(int z) const { return instruments_.at(z); }

  // Index lookups; throw ValidationError naming the label when unknown.
  int treatment_index(std::string_view label) const;
  int instrument_index(std::string_view label) const;
  std::optional<int> find_treatment(std::string_view label) const;
  std::optional<int> find_instrument(std::string_view label) const;

  // Treatment index taken by type `s` under instrument `z`.
  int take(int z, int s) const { return types_(z, s); }
  const Eigen::MatrixXi& types() const { return types_; }

 private:
  std::vector<std::string> treatments_;
  std::vector<std::string> instruments_;
  Eigen::MatrixXi types_;
};

// Main three-treatment / two-instrument example (types s1..s5).
TypeConfig main_example();
// Main example with the fifth type removed; carries an overidentifying
// restriction.
TypeConfig main_example_without_s5();
// Binary LATE design: always-taker, complier, never-taker.
TypeConfig binary_late();
// Throws ValidationError for unknown names.
TypeConfig preset(std::string_view name);

// A 2x2 submatrix of B_t equal to a permutation matrix.
struct MonotonicityViolation {
  int treatment;
  int row_a, row_b;  // instrument indices
  int col_a, col_b;  // type indices
};

std::optional<MonotonicityViolation> find_monotonicity_violation(
    const TypeConfig& config);
bool check_unordered_monotonicity(const TypeConfig& config);

// B_t: entry (z, s) is 1 iff type s takes treatment t under instrument z.
Eigen::MatrixXd build_response_matrix(const TypeConfig& config, int t);

// Moore-Penrose inverse through SVD; singular values below 1e-12 (relative
// to max(1, largest singular value)) are treated as zero.
Eigen::MatrixXd pseudoinverse(const Eigen::MatrixXd& m);

// cells[k] lists the type indices in which t appears exactly k times,
// k = 0..N_Z.
struct TypePartition {
  int treatment = 0;
  std::vector<std::vector<int>> cells;

  const std::vector<int>& operator[](int k) const { return cells.at(k); }
};

TypePartition partition(const TypeConfig& config, int t);

// 0/1 indicator row of the types in Sigma_{t,k} (length N_S).
Eigen::RowVectorXd type_indicator(const TypeConfig& config, int t, int k);

// b_{t,k} B_t^+ (length N_Z). Throws ValidationError unless 1 <= k <= N_Z.
Eigen::RowVectorXd btilde(const TypeConfig& config, int t, int k);

// Instrument set W with: every type in Sigma_{t,k} takes t_prime exactly at
// the instruments in W. Returns nullopt when the types disagree. Throws
// ValidationError when Sigma_{t,k} is empty.
std::optional<std::vector<int>> w_set(const TypeConfig& config, int t_prime,
                                      int t, int k);

// Identified probability cell p_{t,k} (k >= 1).
struct Cell {
  int t = 0;
  int k = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

// sum_{lhs} p = sum_{rhs} p. An empty rhs means the lhs cells are empty
// subsets of the support and their probabilities vanish.
struct EqualityRestriction {
  std::vector<Cell> lhs;
  std::vector<Cell> rhs;
  // True when the relation follows from sum_t P(T = t | Z, X) = 1 alone, so
  // every observable distribution satisfies it.
  bool holds_identically = false;
};

// Exact set-union coincidences among the Sigma_{t,k} (k >= 1), reported as
// minimal relations between disjoint unions with no shared cells, plus one
// "p = 0" relation per empty cell.
std::vector<EqualityRestriction> find_equality_restrictions(
    const TypeConfig& config);

std::string describe(const TypeConfig& config, const EqualityRestriction& r);
std::string describe(const TypeConfig& config,
                     const MonotonicityViolation& v);

}  // namespace gliv
