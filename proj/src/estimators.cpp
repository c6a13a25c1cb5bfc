#include "gliv/estimators.hpp"

#include <cmath>
#include <set>

#include "gliv/error.hpp"

namespace gliv {

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos
                                         ? std::string_view::npos
                                         : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

int parse_level(const std::string& s, std::string_view text) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ValidationError("bad level in parameter '" + std::string(text) + "'");
  }
  return static_cast<int>(v);
}

std::string label(const ParameterId& id, const TypeConfig& config) {
  return to_string(id, config);
}

}  // namespace

ParameterId ParameterId::companion() const {
  switch (kind) {
    case ParamKind::Beta: return p(t, k);
    case ParamKind::Gamma: return q(t_prime, t, k);
    default: return *this;
  }
}

ParameterId parse_parameter(std::string_view text, const TypeConfig& config) {
  const auto f = split(text, ':');
  ParameterId id;
  if ((f[0] == "p" || f[0] == "beta") && f.size() == 3) {
    id.kind = f[0] == "p" ? ParamKind::P : ParamKind::Beta;
    id.t = config.treatment_index(f[1]);
    id.k = parse_level(f[2], text);
  } else if ((f[0] == "q" || f[0] == "gamma") && f.size() == 4) {
    id.kind = f[0] == "q" ? ParamKind::Q : ParamKind::Gamma;
    id.t_prime = config.treatment_index(f[1]);
    id.t = config.treatment_index(f[2]);
    id.k = parse_level(f[3], text);
  } else {
    throw ValidationError("cannot parse parameter '" + std::string(text) +
                          "' (expected p:t:k, q:t':t:k, beta:t:k or "
                          "gamma:t':t:k)");
  }
  validate(id, config);
  return id;
}

std::vector<ParameterId> parse_parameter_list(std::string_view text,
                                              const TypeConfig& config) {
  std::vector<ParameterId> out;
  for (const auto& item : split(text, ',')) {
    if (item.empty()) continue;
    out.push_back(parse_parameter(item, config));
  }
  if (out.empty()) throw ValidationError("empty parameter list");
  return out;
}

std::string to_string(const ParameterId& id, const TypeConfig& config) {
  static const char* names[] = {"p", "q", "beta", "gamma"};
  std::string s = names[static_cast<int>(id.kind)];
  if (id.weighted()) s += ":" + config.treatment(id.t_prime);
  return s + ":" + config.treatment(id.t) + ":" + std::to_string(id.k);
}

void validate(const ParameterId& id, const TypeConfig& config) {
  if (id.t < 0 || id.t >= config.n_treatments()) {
    throw ValidationError("parameter treatment index out of range");
  }
  if (id.weighted() &&
      (id.t_prime < 0 || id.t_prime >= config.n_treatments())) {
    throw ValidationError("parameter treated-status index out of range");
  }
  if (id.k < 1 || id.k > config.n_instruments()) {
    throw ValidationError("level k=" + std::to_string(id.k) +
                          " outside 1.." +
                          std::to_string(config.n_instruments()));
  }
  if (partition(config, id.t)[id.k].empty()) {
    throw ValidationError("Sigma[" + config.treatment(id.t) + "," +
                          std::to_string(id.k) +
                          "] is empty; " + label(id, config) +
                          " is not defined");
  }
  if (id.weighted() && !w_set(config, id.t_prime, id.t, id.k)) {
    throw ValidationError("W-set does not exist for (" +
                          config.treatment(id.t_prime) + "," +
                          config.treatment(id.t) + "," +
                          std::to_string(id.k) + ")");
  }
}

std::vector<ParameterId> lasf_family(const TypeConfig& config) {
  std::vector<ParameterId> out;
  for (int t = 0; t < config.n_treatments(); ++t) {
    const TypePartition part = partition(config, t);
    for (int k = 1; k <= config.n_instruments(); ++k) {
      if (!part[k].empty()) out.push_back(ParameterId::beta(t, k));
    }
  }
  for (int t = 0; t < config.n_treatments(); ++t) {
    const TypePartition part = partition(config, t);
    for (int k = 1; k < config.n_instruments(); ++k) {
      if (!part[k].empty()) out.push_back(ParameterId::gamma(t, t, k));
    }
  }
  return out;
}

std::vector<ParameterId> with_companions(std::span<const ParameterId> ids) {
  std::vector<ParameterId> out(ids.begin(), ids.end());
  std::set<ParameterId> have(ids.begin(), ids.end());
  for (const auto& id : ids) {
    const ParameterId c = id.companion();
    if (have.insert(c).second) out.push_back(c);
  }
  return out;
}

double Contraction::pi_w(const PlugIn& plug, Eigen::Index i) const {
  double s = 0.0;
  for (int z : *w) s += plug.pi_raw(i, z);
  return s;
}

bool Contraction::in_w(int z) const {
  for (int v : *w) {
    if (v == z) return true;
  }
  return false;
}

Contraction contraction(const TypeConfig& config, const ParameterId& id) {
  validate(id, config);
  Contraction c;
  c.t = id.t;
  c.btilde = btilde(config, id.t, id.k);
  if (id.weighted()) c.w = w_set(config, id.t_prime, id.t, id.k);
  return c;
}

OrthogonalScores orthogonal_scores(const Dataset& data, const PlugIn& plug,
                                   const Contraction& c) {
  const Eigen::Index n = data.size();
  const Eigen::MatrixXd& P = plug.P[c.t];
  const Eigen::MatrixXd& I = plug.I[c.t];
  OrthogonalScores s{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int z = data.z[i];
    const double treated = data.t[i] == c.t ? 1.0 : 0.0;
    const double bz = c.btilde(z) / plug.pi(i, z);
    double corr_y = bz * (data.y(i) * treated - I(i, z));
    double corr_t = bz * (treated - P(i, z));
    double base_y = c.btilde.dot(I.row(i));
    double base_t = c.btilde.dot(P.row(i));
    if (c.w) {
      const double pw = c.pi_w(plug, i);
      const double inside = c.in_w(z) ? 1.0 : 0.0;
      corr_y *= pw;
      corr_t *= pw;
      base_y *= inside;
      base_t *= inside;
    }
    s.outcome(i) = corr_y + base_y;
    s.treatment(i) = corr_t + base_t;
  }
  return s;
}

namespace {

double mean_term(const PlugIn& plug, const Contraction& c,
                 const Eigen::MatrixXd& m) {
  const Eigen::Index n = plug.size();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = c.btilde.dot(m.row(i));
    if (c.w) v *= c.pi_w(plug, i);
    sum += v;
  }
  return sum / static_cast<double>(n);
}

void check_sizes(const Dataset& data, const TypeConfig& config,
                 const PlugIn& plug) {
  if (plug.size() != data.size() ||
      static_cast<int>(plug.P.size()) != config.n_treatments() ||
      plug.pi.cols() != config.n_instruments()) {
    throw ValidationError("nuisance values do not match the dataset/config");
  }
}

double denominator(const Dataset& data, const TypeConfig& config,
                   const PlugIn& plug, const ParameterId& ratio) {
  const ParameterId base = ratio.companion();
  const double d = mean_term(plug, contraction(config, base), plug.P[base.t]);
  (void)data;
  if (std::abs(d) < kDegenerateThreshold) {
    throw DegeneracyError("degenerate subpopulation: " +
                          to_string(base, config) + " = " + std::to_string(d) +
                          " so " + to_string(ratio, config) +
                          " is not estimable");
  }
  return d;
}

}  // namespace

double mean_treatment_term(const PlugIn& plug, const Contraction& c) {
  return mean_term(plug, c, plug.P[c.t]);
}

double mean_outcome_term(const PlugIn& plug, const Contraction& c) {
  return mean_term(plug, c, plug.I[c.t]);
}

double estimate_parameter(const Dataset& data, const TypeConfig& config,
                          const PlugIn& plug, const ParameterId& id) {
  check_sizes(data, config, plug);
  const Contraction c = contraction(config, id);
  switch (id.kind) {
    case ParamKind::P:
    case ParamKind::Q:
      return mean_treatment_term(plug, c);
    case ParamKind::Beta:
    case ParamKind::Gamma: {
      const double d = denominator(data, config, plug, id);
      return mean_outcome_term(plug, c) / d;
    }
  }
  return 0.0;
}

double estimate_p(const Dataset& data, const TypeConfig& config,
                  const PlugIn& plug, int t, int k) {
  return estimate_parameter(data, config, plug, ParameterId::p(t, k));
}

double estimate_q(const Dataset& data, const TypeConfig& config,
                  const PlugIn& plug, int t_prime, int t, int k) {
  return estimate_parameter(data, config, plug, ParameterId::q(t_prime, t, k));
}

double estimate_beta(const Dataset& data, const TypeConfig& config,
                     const PlugIn& plug, int t, int k) {
  return estimate_parameter(data, config, plug, ParameterId::beta(t, k));
}

double estimate_gamma(const Dataset& data, const TypeConfig& config,
                      const PlugIn& plug, int t_prime, int t, int k) {
  return estimate_parameter(data, config, plug,
                            ParameterId::gamma(t_prime, t, k));
}

Eigen::MatrixXd influence_values(const Dataset& data, const TypeConfig& config,
                                 const PlugIn& plug,
                                 std::span<const ParameterId> params,
                                 const EstimateTable& estimates) {
  check_sizes(data, config, plug);
  Eigen::MatrixXd out(data.size(), static_cast<Eigen::Index>(params.size()));
  auto lookup = [&](const ParameterId& id) {
    auto it = estimates.find(id);
    if (it == estimates.end()) {
      throw ValidationError("influence function needs an estimate of " +
                            to_string(id, config));
    }
    return it->second;
  };
  for (std::size_t j = 0; j < params.size(); ++j) {
    const ParameterId& id = params[j];
    const OrthogonalScores s =
        orthogonal_scores(data, plug, contraction(config, id));
    const auto col = static_cast<Eigen::Index>(j);
    if (id.kind == ParamKind::P || id.kind == ParamKind::Q) {
      out.col(col) = s.treatment.array() - lookup(id);
    } else {
      const double v = lookup(id);
      const double d = lookup(id.companion());
      if (std::abs(d) < kDegenerateThreshold) {
        throw DegeneracyError("degenerate subpopulation for " +
                              to_string(id, config));
      }
      out.col(col) = (s.outcome - v * s.treatment) / d;
    }
  }
  return out;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& influence) {
  if (influence.rows() < 1) throw ValidationError("no influence values");
  return influence.transpose() * influence /
         static_cast<double>(influence.rows());
}

std::optional<Eigen::Index> EstimateReport::index_of(
    const ParameterId& id) const {
  for (std::size_t j = 0; j < parameters.size(); ++j) {
    if (parameters[j] == id) return static_cast<Eigen::Index>(j);
  }
  return std::nullopt;
}

double EstimateReport::at(const ParameterId& id) const {
  const auto j = index_of(id);
  if (!j) throw ValidationError("parameter not in report");
  return estimates(*j);
}

EstimateReport estimate(const Dataset& data, const TypeConfig& config,
                        const PlugIn& plug,
                        std::span<const ParameterId> params) {
  if (auto v = find_monotonicity_violation(config)) {
    throw ValidationError("configuration violates unordered monotonicity: " +
                          describe(config, *v));
  }
  check_sizes(data, config, plug);
  if (params.empty()) throw ValidationError("no parameters requested");

  EstimateTable table;
  for (const auto& id : with_companions(params)) {
    table[id] = estimate_parameter(data, config, plug, id);
  }

  EstimateReport r;
  r.parameters.assign(params.begin(), params.end());
  r.n = data.size();
  r.estimates.resize(static_cast<Eigen::Index>(params.size()));
  for (std::size_t j = 0; j < params.size(); ++j) {
    r.estimates(static_cast<Eigen::Index>(j)) = table.at(params[j]);
  }
  r.influence = influence_values(data, config, plug, params, table);
  r.bound = covariance(r.influence);
  r.covariance = r.bound / static_cast<double>(r.n);
  r.standard_errors = r.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();

  r.residual_p0.resize(config.n_treatments());
  for (int t = 0; t < config.n_treatments(); ++t) {
    const TypePartition part = partition(config, t);
    double total = 0.0;
    for (int k = 1; k <= config.n_instruments(); ++k) {
      if (part[k].empty()) continue;
      total += mean_treatment_term(
          plug, contraction(config, ParameterId::p(t, k)));
    }
    r.residual_p0(t) = 1.0 - total;
  }

  for (const auto& restriction : find_equality_restrictions(config)) {
    if (restriction.holds_identically) continue;
    r.warnings.push_back("overidentifying restriction not imposed: " +
                         describe(config, restriction));
  }
  return r;
}

EstimateReport estimate(const Dataset& data, const TypeConfig& config,
                        const NuisanceModel& model,
                        std::span<const ParameterId> params) {
  return estimate(data, config, plug_in(model, data.x), params);
}

DerivedEstimate derived_parameter(const EstimateReport& report,
                                  const Functional& phi) {
  const auto m = static_cast<Eigen::Index>(phi.inputs.size());
  Eigen::VectorXd x(m);
  Eigen::MatrixXd psi(report.n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto idx = report.index_of(phi.inputs[j]);
    if (!idx) {
      throw ValidationError("functional '" + phi.name +
                            "' needs a parameter missing from the report");
    }
    x(j) = report.estimates(*idx);
    psi.col(j) = report.influence.col(*idx);
  }

  DerivedEstimate out;
  out.estimate = phi.value(x);
  if (phi.gradient) {
    out.gradient = phi.gradient(x);
  } else {
    out.gradient.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double h = 1e-6 * (1.0 + std::abs(x(j)));
      Eigen::VectorXd up = x;
      Eigen::VectorXd down = x;
      up(j) += h;
      down(j) -= h;
      out.gradient(j) = (phi.value(up) - phi.value(down)) / (2.0 * h);
    }
  }
  if (out.gradient.size() != m || !out.gradient.allFinite() ||
      !std::isfinite(out.estimate)) {
    throw EstimationError("functional '" + phi.name +
                          "' has a non-finite value or gradient");
  }
  out.influence = psi * out.gradient;
  out.standard_error = std::sqrt(out.influence.squaredNorm() /
                                 static_cast<double>(report.n) /
                                 static_cast<double>(report.n));
  return out;
}

Functional identity_functional(const ParameterId& id,
                               const TypeConfig& config) {
  Functional f;
  f.name = to_string(id, config);
  f.inputs = {id};
  f.value = [](const Eigen::VectorXd& x) { return x(0); };
  f.gradient = [](const Eigen::VectorXd&) {
    return Eigen::VectorXd::Ones(1).eval();
  };
  return f;
}

namespace {

// sum_j v_j w_j / sum_j w_j with inputs ordered (v_1..v_m, w_1..w_m).
Functional weighted_average(std::string name, std::vector<ParameterId> values,
                            std::vector<ParameterId> weights) {
  const auto m = static_cast<Eigen::Index>(values.size());
  Functional f;
  f.name = std::move(name);
  f.inputs = std::move(values);
  f.inputs.insert(f.inputs.end(), weights.begin(), weights.end());
  f.value = [m](const Eigen::VectorXd& x) {
    return x.head(m).dot(x.tail(m)) / x.tail(m).sum();
  };
  f.gradient = [m](const Eigen::VectorXd& x) {
    const double total = x.tail(m).sum();
    const double avg = x.head(m).dot(x.tail(m)) / total;
    Eigen::VectorXd g(2 * m);
    g.head(m) = x.tail(m) / total;
    g.tail(m) = (x.head(m).array() - avg) / total;
    return g;
  };
  return f;
}

Functional minus(const ParameterId& target, Functional avg) {
  Functional f;
  f.name = std::move(avg.name);
  f.inputs = {target};
  f.inputs.insert(f.inputs.end(), avg.inputs.begin(), avg.inputs.end());
  auto value = avg.value;
  auto gradient = avg.gradient;
  f.value = [value](const Eigen::VectorXd& x) {
    return x(0) - value(x.tail(x.size() - 1));
  };
  f.gradient = [gradient](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(x.size());
    g(0) = 1.0;
    g.tail(x.size() - 1) = -gradient(x.tail(x.size() - 1));
    return g;
  };
  return f;
}

std::vector<int> switcher_levels(const TypeConfig& config, int t) {
  const TypePartition part = partition(config, t);
  std::vector<int> ks;
  for (int k = 1; k < config.n_instruments(); ++k) {
    if (!part[k].empty()) ks.push_back(k);
  }
  if (ks.empty()) {
    throw ValidationError("treatment " + config.treatment(t) +
                          " has no switcher types");
  }
  return ks;
}

}  // namespace

Functional switcher_lasf(const TypeConfig& config, int t) {
  std::vector<ParameterId> b;
  std::vector<ParameterId> p;
  for (int k : switcher_levels(config, t)) {
    b.push_back(ParameterId::beta(t, k));
    p.push_back(ParameterId::p(t, k));
  }
  return weighted_average("beta[" + config.treatment(t) + "]", std::move(b),
                          std::move(p));
}

Functional switcher_lasf_treated(const TypeConfig& config, int t) {
  std::vector<ParameterId> g;
  std::vector<ParameterId> q;
  for (int k : switcher_levels(config, t)) {
    g.push_back(ParameterId::gamma(t, t, k));
    q.push_back(ParameterId::q(t, t, k));
  }
  return weighted_average("gamma[" + config.treatment(t) + "]", std::move(g),
                          std::move(q));
}

Functional lasf_contrast(const TypeConfig& config, Cell target,
                         std::vector<Cell> others) {
  if (others.empty()) throw ValidationError("contrast needs comparison cells");
  std::vector<ParameterId> b;
  std::vector<ParameterId> p;
  for (const Cell& c : others) {
    b.push_back(ParameterId::beta(c.t, c.k));
    p.push_back(ParameterId::p(c.t, c.k));
  }
  const ParameterId head = ParameterId::beta(target.t, target.k);
  Functional avg = weighted_average(
      "contrast " + to_string(head, config), std::move(b), std::move(p));
  return minus(head, std::move(avg));
}

Functional lasf_treated_contrast(const TypeConfig& config, Cell target,
                                 std::vector<Cell> others) {
  if (others.empty()) throw ValidationError("contrast needs comparison cells");
  std::vector<ParameterId> g;
  std::vector<ParameterId> q;
  for (const Cell& c : others) {
    g.push_back(ParameterId::gamma(target.t, c.t, c.k));
    q.push_back(ParameterId::q(target.t, c.t, c.k));
  }
  const ParameterId head = ParameterId::gamma(target.t, target.t, target.k);
  Functional avg = weighted_average(
      "contrast " + to_string(head, config), std::move(g), std::move(q));
  return minus(head, std::move(avg));
}

}  // namespace gliv
