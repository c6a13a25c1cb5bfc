#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "gliv/dataset.hpp"
#include "gliv/estimators.hpp"
#include "gliv/nuisance.hpp"
#include "gliv/typeconfig.hpp"

namespace gliv {

struct CrossFitPlan {
  int folds = 0;
  std::uint64_t seed = 0;
  std::vector<int> assignment;  // fold index per observation

  std::vector<int> members(int fold) const;
  std::vector<int> complement(int fold) const;
};

// Seeded shuffle of 0..n-1 dealt round-robin into L folds (sizes differ by
// at most one). Requires L >= 2 and n >= 2L.
CrossFitPlan make_plan(std::int64_t n, int folds, std::uint64_t seed);

// Produces the nuisance model for one fold from its training complement.
using FoldFitter = std::function<std::shared_ptr<const NuisanceModel>(
    const Dataset& train, int fold)>;

FoldFitter learner_fitter(const TypeConfig& config, const LearnerSpec& spec,
                          double trim_floor);
// Ignores the training split and returns `model` for every fold.
FoldFitter fixed_fitter(std::shared_ptr<const NuisanceModel> model);

struct DmlResult {
  ParameterId target;
  double estimate = 0.0;
  double variance = 0.0;        // V-check; Var(estimate) ~ variance / n
  double standard_error = 0.0;  // sqrt(variance / n)
  double denominator = 0.0;     // pooled p-check / q-check for ratios
  Eigen::VectorXd influence;    // plugged-in Psi per observation
  Eigen::Index n = 0;
};

// DML2: nuisances fit on each fold's complement and evaluated on the fold;
// the pooled orthogonal-score equation is solved over all observations.
// `threads` only affects wall time.
DmlResult dml2(const Dataset& data, const TypeConfig& config,
               const ParameterId& target, const CrossFitPlan& plan,
               const FoldFitter& fitter, int threads = 1);
DmlResult dml2(const Dataset& data, const TypeConfig& config,
               const ParameterId& target, const CrossFitPlan& plan,
               const LearnerSpec& spec, double trim_floor = kDefaultTrimFloor,
               int threads = 1);

DmlResult dml2_beta(const Dataset& data, const TypeConfig& config, int t,
                    int k, const CrossFitPlan& plan, const LearnerSpec& spec,
                    double trim_floor = kDefaultTrimFloor);

// Cross-fitted plug-in values for every observation; several targets can
// share one set of fold fits.
PlugIn cross_fit(const Dataset& data, const TypeConfig& config,
                 const CrossFitPlan& plan, const FoldFitter& fitter,
                 int threads = 1);
DmlResult dml2_from_plugin(const Dataset& data, const TypeConfig& config,
                           const ParameterId& target, const PlugIn& plug);

}  // namespace gliv
