#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace gliv {

using Objective = std::function<double(const Eigen::VectorXd&)>;

// Compact box; points outside are projected onto it before evaluation.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index dim() const { return lower.size(); }
  Eigen::VectorXd center() const { return (lower + upper) / 2.0; }
  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }
  // Throws ValidationError unless finite with lower < upper.
  void validate() const;
};

struct OptimOptions {
  double tolerance = 1e-9;  // simplex diameter / bracket width
  int max_evaluations = 10000;
};

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

// Nelder-Mead with standard coefficients (1, 2, 1/2, 1/2). Non-finite
// objective values count as +inf.
OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& start,
                        const Box& box, const OptimOptions& options = {});

// Golden-section search on [lo, hi].
OptimResult golden_section(const std::function<double(double)>& f, double lo,
                           double hi, const OptimOptions& options = {});

// 5^min(d,3) interior grid points plus the box center (plus `extra` starts),
// one Nelder-Mead run each; the best result is kept. In one dimension the
// winner is refined by golden section and moved to the middle of the flat
// stretch of minimal objective around it. Throws EstimationError when the
// objective is non-finite at every start.
struct MultiStartResult {
  OptimResult best;
  std::vector<OptimResult> runs;
  double start_spread = 0.0;  // max - min objective over the starts
};

MultiStartResult minimize(const Objective& f, const Box& box,
                          const OptimOptions& options = {},
                          const std::vector<Eigen::VectorXd>& extra = {});

std::vector<Eigen::VectorXd> start_grid(const Box& box);

}  // namespace gliv
