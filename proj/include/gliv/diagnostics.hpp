#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gliv/dataset.hpp"
#include "gliv/nuisance.hpp"
#include "gliv/typeconfig.hpp"

namespace gliv {

// Outcome bins from interior breakpoints b_1 < ... < b_m: (-inf, b_1),
// [b_1, b_2), ..., [b_m, inf).
class BinGrid {
 public:
  BinGrid() = default;
  // Throws ValidationError unless strictly increasing and finite.
  explicit BinGrid(std::vector<double> breakpoints);

  int n_bins() const { return static_cast<int>(breakpoints_.size()) + 1; }
  int bin_of(double y) const;
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  std::string label(int bin) const;

 private:
  std::vector<double> breakpoints_;
};

// `count` equal-probability bins of the pooled outcome (tied quantiles are
// merged, so fewer bins may result).
BinGrid quantile_bins(const Eigen::VectorXd& y, int count);

inline constexpr int kWholeRange = -1;

// Q(x, (B, Sigma_{t,k})) = b~_{t,k} . g_{t,Z}(x) with
// g_{t,z}(x) = P(Y in B, T = t | Z = z, X = x); bin kWholeRange is B = all
// outcomes.
struct KernelValue {
  int cell = 0;
  int t = 0;
  int k = 1;
  int bin = kWholeRange;
  double q = 0.0;
  double se = 0.0;         // binomial plug-in approximation
  double violation = 0.0;  // max(-q, q - 1, 0)
};

// Identified equality restriction evaluated on one covariate cell over the
// whole outcome range.
struct EqualityValue {
  int cell = 0;
  int restriction = 0;  // index into `restrictions`
  double discrepancy = 0.0;  // lhs - rhs
  double se = 0.0;
};

struct ImplicationReport {
  BinGrid bins;
  std::vector<Eigen::RowVectorXd> cell_x;
  std::vector<int> cell_n;
  std::vector<KernelValue> values;
  std::vector<EqualityRestriction> restrictions;
  std::vector<EqualityValue> equalities;
};

// Requires a DiscreteCells fit on `data`.
ImplicationReport q_kernel_estimates(const Dataset& data,
                                     const TypeConfig& config,
                                     const NuisanceFit& fit,
                                     const BinGrid& bins);

struct Tolerance {
  bool automatic = true;
  double value = 0.0;       // fixed tolerance when not automatic
  double multiplier = 3.0;  // automatic: multiplier x plug-in SE
};

struct Flag {
  std::string what;
  double magnitude = 0.0;
  double tolerance = 0.0;
};

struct ImplicationSummary {
  bool pass = true;
  int checks = 0;
  double max_violation = 0.0;
  double max_discrepancy = 0.0;
  std::vector<Flag> flagged;
  std::vector<std::string> reduced_system;
};

ImplicationSummary check_implications(const ImplicationReport& report,
                                      const TypeConfig& config,
                                      const Tolerance& tolerance);

// The non-redundant inequalities behind the range checks: b~ = e_a - e_b
// reads P(Y in B, T = t | Z = a, X) >= P(Y in B, T = t | Z = b, X); checks
// that hold for any distribution are dropped. Testable equality
// restrictions follow.
std::vector<std::string> reduced_inequalities(const TypeConfig& config);

}  // namespace gliv
