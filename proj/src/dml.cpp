#include "gliv/dml.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "gliv/error.hpp"
#include "gliv/parallel.hpp"
#include "gliv/rng.hpp"

namespace gliv {

std::vector<int> CrossFitPlan::members(int fold) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == fold) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> CrossFitPlan::complement(int fold) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != fold) out.push_back(static_cast<int>(i));
  }
  return out;
}

CrossFitPlan make_plan(std::int64_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw ValidationError("cross-fitting needs at least 2 folds");
  if (n < 2 * static_cast<std::int64_t>(folds)) {
    throw ValidationError("cross-fitting with " + std::to_string(folds) +
                          " folds needs at least " +
                          std::to_string(2 * folds) + " observations");
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 gen(seed);
  shuffle(order, gen);
  CrossFitPlan plan;
  plan.folds = folds;
  plan.seed = seed;
  plan.assignment.resize(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    plan.assignment[order[pos]] = static_cast<int>(pos % folds);
  }
  return plan;
}

FoldFitter learner_fitter(const TypeConfig& config, const LearnerSpec& spec,
                          double trim_floor) {
  return [config, spec, trim_floor](const Dataset& train, int) {
    return std::shared_ptr<const NuisanceModel>(
        std::make_shared<NuisanceFit>(train, config, spec, trim_floor));
  };
}

FoldFitter fixed_fitter(std::shared_ptr<const NuisanceModel> model) {
  return [model](const Dataset&, int) { return model; };
}

PlugIn cross_fit(const Dataset& data, const TypeConfig& config,
                 const CrossFitPlan& plan, const FoldFitter& fitter,
                 int threads) {
  validate(data, config);
  if (static_cast<Eigen::Index>(plan.assignment.size()) != data.size()) {
    throw ValidationError("cross-fit plan does not match the dataset size");
  }
  const Eigen::Index n = data.size();
  const int nt = config.n_treatments();
  const int nz = config.n_instruments();
  PlugIn out;
  out.pi = Eigen::MatrixXd(n, nz);
  out.pi_raw = Eigen::MatrixXd(n, nz);
  out.P.assign(nt, Eigen::MatrixXd(n, nz));
  out.I.assign(nt, Eigen::MatrixXd(n, nz));

  std::vector<PlugIn> parts(plan.folds);
  std::vector<std::vector<int>> rows(plan.folds);
  parallel_for(plan.folds, threads, [&](std::int64_t l) {
    const int fold = static_cast<int>(l);
    rows[fold] = plan.members(fold);
    const std::vector<int> train = plan.complement(fold);
    try {
      const auto model = fitter(data.subset(train), fold);
      Eigen::MatrixXd x(static_cast<Eigen::Index>(rows[fold].size()),
                        data.dim());
      for (std::size_t r = 0; r < rows[fold].size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = data.x.row(rows[fold][r]);
      }
      parts[fold] = plug_in(*model, x);
    } catch (const DegeneracyError&) {
      throw;
    } catch (const EstimationError& e) {
      throw EstimationError("fold " + std::to_string(fold + 1) + ": " +
                            e.what());
    }
  });

  for (int fold = 0; fold < plan.folds; ++fold) {
    for (std::size_t r = 0; r < rows[fold].size(); ++r) {
      const auto i = static_cast<Eigen::Index>(rows[fold][r]);
      const auto src = static_cast<Eigen::Index>(r);
      out.pi.row(i) = parts[fold].pi.row(src);
      out.pi_raw.row(i) = parts[fold].pi_raw.row(src);
      for (int t = 0; t < nt; ++t) {
        out.P[t].row(i) = parts[fold].P[t].row(src);
        out.I[t].row(i) = parts[fold].I[t].row(src);
      }
    }
  }
  return out;
}

DmlResult dml2_from_plugin(const Dataset& data, const TypeConfig& config,
                           const ParameterId& target, const PlugIn& plug) {
  if (auto v = find_monotonicity_violation(config)) {
    throw ValidationError("configuration violates unordered monotonicity: " +
                          describe(config, *v));
  }
  const OrthogonalScores s =
      orthogonal_scores(data, plug, contraction(config, target));
  const auto n = static_cast<double>(data.size());
  DmlResult r;
  r.target = target;
  r.n = data.size();
  if (target.kind == ParamKind::P || target.kind == ParamKind::Q) {
    r.estimate = s.treatment.sum() / n;
    r.influence = s.treatment.array() - r.estimate;
  } else {
    const double den = s.treatment.sum() / n;
    if (std::abs(den) < kDegenerateThreshold) {
      throw DegeneracyError("degenerate subpopulation: cross-fitted " +
                            to_string(target.companion(), config) + " = " +
                            std::to_string(den));
    }
    r.denominator = den;
    r.estimate = s.outcome.sum() / s.treatment.sum();
    r.influence = (s.outcome - r.estimate * s.treatment) / den;
  }
  r.variance = r.influence.squaredNorm() / n;
  r.standard_error = std::sqrt(r.variance / n);
  return r;
}

DmlResult dml2(const Dataset& data, const TypeConfig& config,
               const ParameterId& target, const CrossFitPlan& plan,
               const FoldFitter& fitter, int threads) {
  validate(target, config);
  return dml2_from_plugin(data, config, target,
                          cross_fit(data, config, plan, fitter, threads));
}

DmlResult dml2(const Dataset& data, const TypeConfig& config,
               const ParameterId& target, const CrossFitPlan& plan,
               const LearnerSpec& spec, double trim_floor, int threads) {
  return dml2(data, config, target, plan,
              learner_fitter(config, spec, trim_floor), threads);
}

DmlResult dml2_beta(const Dataset& data, const TypeConfig& config, int t,
                    int k, const CrossFitPlan& plan, const LearnerSpec& spec,
                    double trim_floor) {
  return dml2(data, config, ParameterId::beta(t, k), plan, spec, trim_floor);
}

}  // namespace gliv
