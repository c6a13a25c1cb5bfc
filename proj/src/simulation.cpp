#include "gliv/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "gliv/dml.hpp"
#include "gliv/error.hpp"
#include "gliv/parallel.hpp"
#include "gliv/rng.hpp"

namespace gliv {

XLaw parse_x_law(std::string_view text) {
  if (text == "continuous") return XLaw::ContinuousUniform;
  if (text == "discrete") return XLaw::DiscreteFive;
  throw ValidationError("unknown DGP '" + std::string(text) +
                        "' (expected continuous or discrete)");
}

std::string to_string(XLaw law) {
  return law == XLaw::ContinuousUniform ? "continuous" : "discrete";
}

void DgpSpec::validate() const {
  if (n < 1) throw ValidationError("sample size must be at least 1");
  if (!(defier_share >= 0.0 && defier_share < 1.0)) {
    throw ValidationError("defier share must lie in [0, 1)");
  }
}

namespace {

constexpr double kDiscreteX[5] = {0.5, 0.55, 0.6, 0.65, 0.7};
// Binomial value -> type index (s1, s2, s4, s5, s3).
constexpr int kValueToType[5] = {0, 1, 3, 4, 2};

enum Stream : std::uint64_t {
  kX = 1, kS, kZ, kDefier, kXi, kXi1, kXi2, kXi3
};

double normal_quantile(double u) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, u);
}

// Treatment taken by each type under (z1, z2); row kDefierType is the defier.
constexpr int kTake[6][2] = {{0, 0}, {1, 1}, {2, 2}, {2, 0}, {2, 1}, {0, 2}};

// Mean offsets of (Y_t1, Y_t2, Y_t3) over X, and their variances.
constexpr double kMeanShift[6][3] = {{0.5, 0.3, 0.1}, {0.3, 0.5, 0.1},
                                     {0.1, 0.1, 0.1}, {0.4, 0.2, 0.0},
                                     {0.2, 0.4, 0.0}, {4.4, 0.2, 0.0}};
constexpr double kVariance[6] = {2.0, 2.0, 2.0, 1.0, 1.0, 1.0};

struct Component {
  double prob;
  int type;
};

std::vector<Component> components(const DgpSpec& dgp, double x) {
  const auto tp = type_probabilities(x);
  std::vector<Component> out;
  for (int s = 0; s < 5; ++s) out.push_back({(1.0 - dgp.defier_share) * tp(s), s});
  if (dgp.defier_share > 0.0) out.push_back({dgp.defier_share, kDefierType});
  return out;
}

Eigen::Vector2d instrument_probs(const DgpSpec& dgp, double x) {
  return dgp.success_to_z2 ? Eigen::Vector2d(1.0 - x, x)
                           : Eigen::Vector2d(x, 1.0 - x);
}

template <class F>
double expect_x(const DgpSpec& dgp, F&& f) {
  if (dgp.x_law == XLaw::DiscreteFive) {
    double s = 0.0;
    for (double x : kDiscreteX) s += f(x);
    return s / 5.0;
  }
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 61>::integrate(f, 0.5, 0.7, 15, 1e-13) / 0.2;
}

bool in_sigma(const std::vector<int>& sigma, int type) {
  return std::find(sigma.begin(), sigma.end(), type) != sigma.end();
}

struct Target {
  std::vector<int> sigma;
  std::optional<std::vector<int>> w;
  int t;
};

Target resolve(const ParameterId& id) {
  static const TypeConfig config = main_example();
  validate(id, config);
  Target tg;
  tg.sigma = partition(config, id.t)[id.k];
  tg.t = id.t;
  if (id.weighted()) tg.w = w_set(config, id.t_prime, id.t, id.k);
  return tg;
}

double pi_w(const Target& tg, const Eigen::Vector2d& pi) {
  double s = 0.0;
  for (int z : *tg.w) s += pi(z);
  return s;
}

// E[1{S in Sigma} weight(X)] and E[1{S in Sigma} weight(X) E[Y_t | S, X]].
std::pair<double, double> moments_of(const DgpSpec& dgp, const Target& tg) {
  auto mass = [&](double x) {
    const double w = tg.w ? pi_w(tg, instrument_probs(dgp, x)) : 1.0;
    double m = 0.0;
    for (const auto& c : components(dgp, x)) {
      if (in_sigma(tg.sigma, c.type)) m += c.prob * w;
    }
    return m;
  };
  auto first = [&](double x) {
    const double w = tg.w ? pi_w(tg, instrument_probs(dgp, x)) : 1.0;
    double m = 0.0;
    for (const auto& c : components(dgp, x)) {
      if (in_sigma(tg.sigma, c.type)) {
        m += c.prob * w * (x + kMeanShift[c.type][tg.t]);
      }
    }
    return m;
  };
  return {expect_x(dgp, mass), expect_x(dgp, first)};
}

class OracleModel final : public NuisanceModel {
 public:
  OracleModel(DgpSpec dgp, double floor) : NuisanceModel(floor), dgp_(dgp) {}

  NuisanceValues evaluate(const Eigen::MatrixXd& x) const override {
    const Eigen::Index n = x.rows();
    NuisanceValues v;
    v.pi.resize(n, 2);
    v.h_t.assign(3, Eigen::MatrixXd::Zero(n, 2));
    v.h_y.assign(3, Eigen::MatrixXd::Zero(n, 2));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double xi = x(i, 0);
      const Eigen::Vector2d pi = instrument_probs(dgp_, xi);
      v.pi.row(i) = pi.transpose();
      for (const auto& c : components(dgp_, xi)) {
        for (int z = 0; z < 2; ++z) {
          const int t = kTake[c.type][z];
          v.h_t[t](i, z) += pi(z) * c.prob;
          v.h_y[t](i, z) += pi(z) * c.prob * (xi + kMeanShift[c.type][t]);
        }
      }
    }
    return v;
  }

 private:
  DgpSpec dgp_;
};

}  // namespace

Eigen::Matrix<double, 5, 1> type_probabilities(double x) {
  Eigen::Matrix<double, 5, 1> p;
  const double binom[5] = {1, 4, 6, 4, 1};
  for (int j = 0; j < 5; ++j) {
    p(kValueToType[j]) =
        binom[j] * std::pow(x, j) * std::pow(1.0 - x, 4 - j);
  }
  return p;
}

SimulatedSample generate_sample(const DgpSpec& dgp,
                                std::uint64_t replication) {
  dgp.validate();
  const auto n = static_cast<Eigen::Index>(dgp.n);
  SimulatedSample out;
  Dataset& d = out.data;
  d.y.resize(n);
  d.x.resize(n, 1);
  d.t.resize(static_cast<std::size_t>(n));
  d.z.resize(static_cast<std::size_t>(n));
  out.types.resize(static_cast<std::size_t>(n));
  auto uniform = [&](Stream s, Eigen::Index i) {
    return to_unit_open(hash_key(dgp.seed, replication, s,
                                 static_cast<std::uint64_t>(i)));
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ux = uniform(kX, i);
    const double x = dgp.x_law == XLaw::DiscreteFive
                         ? kDiscreteX[std::min(4, static_cast<int>(ux * 5.0))]
                         : 0.5 + 0.2 * ux;

    const double us = uniform(kS, i);
    int value = 4;
    double cdf = 0.0;
    const double binom[5] = {1, 4, 6, 4, 1};
    for (int j = 0; j < 5; ++j) {
      cdf += binom[j] * std::pow(x, j) * std::pow(1.0 - x, 4 - j);
      if (us < cdf) {
        value = j;
        break;
      }
    }
    int type = kValueToType[value];
    if (dgp.defier_share > 0.0 && uniform(kDefier, i) < dgp.defier_share) {
      type = kDefierType;
    }

    const bool success = uniform(kZ, i) < x;
    const int z = success == dgp.success_to_z2 ? 1 : 0;

    const double xi = 0.1 + normal_quantile(uniform(kXi, i));
    const double xi1 = x + normal_quantile(uniform(kXi1, i));
    const double xi2 = x + 0.2 + normal_quantile(uniform(kXi2, i));
    const double xi3 = x + 0.4 + normal_quantile(uniform(kXi3, i));
    double y[3];
    switch (type) {
      case 0: y[0] = xi3 + xi; y[1] = xi2 + xi; y[2] = xi1 + xi; break;
      case 1: y[0] = xi2 + xi; y[1] = xi3 + xi; y[2] = xi1 + xi; break;
      case 2: y[0] = y[1] = y[2] = xi1 + xi; break;
      case 3: y[0] = xi3; y[1] = xi2; y[2] = xi1; break;
      case 4: y[0] = xi2; y[1] = xi3; y[2] = xi1; break;
      default: y[0] = xi3 + 4.0; y[1] = xi2; y[2] = xi1; break;
    }
    const int t = kTake[type][z];
    d.x(i, 0) = x;
    d.z[static_cast<std::size_t>(i)] = z;
    d.t[static_cast<std::size_t>(i)] = t;
    d.y(i) = y[t];
    out.types[static_cast<std::size_t>(i)] = type;
  }
  return out;
}

Dataset generate(const DgpSpec& dgp) { return generate_sample(dgp, 0).data; }

double true_value(const DgpSpec& dgp, const ParameterId& id) {
  const Target tg = resolve(id);
  const auto [mass, first] = moments_of(dgp, tg);
  if (id.kind == ParamKind::P || id.kind == ParamKind::Q) return mass;
  return first / mass;
}

std::map<ParameterId, double> true_values(const DgpSpec& dgp,
                                          std::span<const ParameterId> ids) {
  std::map<ParameterId, double> out;
  for (const auto& id : ids) out[id] = true_value(dgp, id);
  return out;
}

double variance_bound(const DgpSpec& dgp, const ParameterId& id) {
  static const TypeConfig config = main_example();
  const Target tg = resolve(id);
  const Eigen::RowVectorXd bt = btilde(config, id.t, id.k);
  const bool ratio = id.kind == ParamKind::Beta || id.kind == ParamKind::Gamma;
  const double theta = true_value(dgp, id);
  const double denom = ratio ? true_value(dgp, id.companion()) : 1.0;

  auto integrand = [&](double x) {
    const Eigen::Vector2d pi = instrument_probs(dgp, x);
    const double w = tg.w ? pi_w(tg, pi) : 1.0;
    Eigen::Vector2d r = Eigen::Vector2d::Zero();
    Eigen::Vector2d r2 = Eigen::Vector2d::Zero();
    for (const auto& c : components(dgp, x)) {
      for (int z = 0; z < 2; ++z) {
        if (kTake[c.type][z] != tg.t) continue;
        if (ratio) {
          const double dev = x + kMeanShift[c.type][tg.t] - theta;
          r(z) += c.prob * dev;
          r2(z) += c.prob * (kVariance[c.type] + dev * dev);
        } else {
          r(z) += c.prob;
          r2(z) += c.prob;
        }
      }
    }
    double v = 0.0;
    for (int z = 0; z < 2; ++z) {
      v += bt(z) * bt(z) * w * w * (r2(z) - r(z) * r(z)) / pi(z);
    }
    const double proj = bt.dot(r.transpose());
    if (!tg.w) {
      const double centred = ratio ? proj : proj - theta;
      v += centred * centred;
    } else {
      // E over Z of (proj 1{Z in W} - c)^2 with c = 0 for ratios, q else.
      const double c = ratio ? 0.0 : theta;
      v += w * proj * proj - 2.0 * c * w * proj + c * c;
    }
    return v;
  };
  return expect_x(dgp, integrand) / (denom * denom);
}

std::shared_ptr<const NuisanceModel> oracle_model(const DgpSpec& dgp,
                                                  double trim_floor) {
  return std::make_shared<OracleModel>(dgp, trim_floor);
}

McSummary run_monte_carlo(const DgpSpec& dgp, int reps,
                          std::span<const ParameterId> targets,
                          const McOptions& options) {
  dgp.validate();
  if (reps < 2) throw ValidationError("Monte Carlo needs at least 2 reps");
  if (targets.empty()) throw ValidationError("no Monte Carlo targets");
  const TypeConfig config = main_example();
  for (const auto& id : targets) validate(id, config);
  const LearnerSpec learner = options.learner.value_or(
      dgp.x_law == XLaw::DiscreteFive
          ? LearnerSpec{ModelKind::DiscreteCells, 0}
          : LearnerSpec{ModelKind::PolynomialSeries, 3});
  const std::size_t K = targets.size();

  struct RepResult {
    bool ok = false;
    std::string error;
    std::vector<double> est;
    std::vector<double> se;
  };
  std::vector<RepResult> results(static_cast<std::size_t>(reps));

  parallel_for(reps, options.threads, [&](std::int64_t r) {
    RepResult& out = results[static_cast<std::size_t>(r)];
    try {
      const Dataset data =
          generate_sample(dgp, static_cast<std::uint64_t>(r)).data;
      out.est.resize(K);
      out.se.resize(K);
      if (options.estimator == McEstimator::Cep) {
        const NuisanceFit nf(data, config, learner, options.trim_floor);
        const EstimateReport rep = estimate(
            data, config, plug_in(nf.training_values(), nf.trim_floor()),
            targets);
        for (std::size_t j = 0; j < K; ++j) {
          out.est[j] = rep.estimates(static_cast<Eigen::Index>(j));
          out.se[j] = rep.standard_errors(static_cast<Eigen::Index>(j));
        }
      } else {
        const CrossFitPlan plan = make_plan(
            data.size(), options.folds,
            hash_key(dgp.seed, static_cast<std::uint64_t>(r), 0xf01d));
        const PlugIn plug = cross_fit(
            data, config, plan,
            learner_fitter(config, learner, options.trim_floor), 1);
        for (std::size_t j = 0; j < K; ++j) {
          const DmlResult d = dml2_from_plugin(data, config, targets[j], plug);
          out.est[j] = d.estimate;
          out.se[j] = d.standard_error;
        }
      }
      out.ok = true;
    } catch (const EstimationError& e) {
      out.error = e.what();
    }
  });

  McSummary s;
  s.dgp = dgp;
  s.requested = reps;
  s.estimates.assign(K, {});
  s.ses.assign(K, {});
  for (const auto& r : results) {
    if (!r.ok) {
      ++s.failures;
      if (s.failure_messages.size() < 5) s.failure_messages.push_back(r.error);
      continue;
    }
    for (std::size_t j = 0; j < K; ++j) {
      s.estimates[j].push_back(r.est[j]);
      s.ses[j].push_back(r.se[j]);
    }
  }

  const double root_n = std::sqrt(static_cast<double>(dgp.n));
  for (std::size_t j = 0; j < K; ++j) {
    McRow row;
    row.target = targets[j];
    row.name = to_string(targets[j], config);
    row.truth = true_value(dgp, targets[j]);
    row.sigma_truth = std::sqrt(variance_bound(dgp, targets[j]));
    const auto& e = s.estimates[j];
    const auto& se = s.ses[j];
    row.replications = static_cast<int>(e.size());
    if (!e.empty()) {
      const double R = static_cast<double>(e.size());
      double mean = 0.0;
      for (double v : e) mean += v;
      mean /= R;
      double var = 0.0;
      double mse = 0.0;
      int covered = 0;
      double se_sum = 0.0;
      for (std::size_t i = 0; i < e.size(); ++i) {
        var += (e[i] - mean) * (e[i] - mean);
        mse += (e[i] - row.truth) * (e[i] - row.truth);
        se_sum += se[i];
        if (std::abs(e[i] - row.truth) <= 1.959963984540054 * se[i]) ++covered;
      }
      std::vector<double> sorted = e;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t m = sorted.size();
      const double median = m % 2 ? sorted[m / 2]
                                  : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
      row.mean_bias = mean - row.truth;
      row.median_bias = median - row.truth;
      row.std_dev = std::sqrt(var / R);
      row.rmse = std::sqrt(mse / R);
      row.mean_se = se_sum / R;
      row.sigma_mean = row.mean_se * root_n;
      row.coverage = covered / R;
    }
    s.rows.push_back(row);
  }
  return s;
}

std::string format_table(const McSummary& summary) {
  std::ostringstream os;
  char buf[256];
  const std::string law = to_string(summary.dgp.x_law);
  std::snprintf(buf, sizeof buf, "%-18s %-11s %8s %10s %12s %14s %10s\n",
                "Parameter", "P_X", "Value", "Mean Bias", "Median Bias",
                "Std Deviation", "Root MSE");
  os << buf;
  for (const auto& r : summary.rows) {
    std::snprintf(buf, sizeof buf,
                  "%-18s %-11s %8.4f %10.4f %12.4f %14.4f %10.4f\n",
                  r.name.c_str(), law.c_str(), r.truth, r.mean_bias,
                  r.median_bias, r.std_dev, r.rmse);
    os << buf;
  }
  for (const auto& r : summary.rows) {
    std::snprintf(buf, sizeof buf,
                  "%-18s %-11s %8.4f %10.4f %12s %14s %10s\n",
                  ("sigma " + r.name).c_str(), law.c_str(), r.sigma_truth,
                  r.sigma_mean - r.sigma_truth, "", "", "");
    os << buf;
  }
  std::snprintf(buf, sizeof buf,
                "replications %d, failures %d, n %lld, seed %llu\n",
                summary.requested - summary.failures, summary.failures,
                static_cast<long long>(summary.dgp.n),
                static_cast<unsigned long long>(summary.dgp.seed));
  os << buf;
  return os.str();
}

}  // namespace gliv
