#include "gliv/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gliv/error.hpp"

namespace gliv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe(const Objective& f, const Eigen::VectorXd& x) {
  const double v = f(x);
  return std::isfinite(v) ? v : kInf;
}

}  // namespace

void Box::validate() const {
  if (lower.size() != upper.size() || lower.size() < 1) {
    throw ValidationError("parameter bounds have inconsistent dimensions");
  }
  for (Eigen::Index j = 0; j < lower.size(); ++j) {
    if (!std::isfinite(lower(j)) || !std::isfinite(upper(j)) ||
        !(lower(j) < upper(j))) {
      throw ValidationError("parameter bounds must be finite with lower < "
                            "upper (coordinate " +
                            std::to_string(j + 1) + ")");
    }
  }
}

OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& start,
                        const Box& box, const OptimOptions& options) {
  const Eigen::Index d = box.dim();
  std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(d + 1));
  std::vector<double> fv(v.size());
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    return safe(f, x);
  };

  v[0] = box.clamp(start);
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::VectorXd p = v[0];
    const double step = 0.1 * (box.upper(j) - box.lower(j));
    p(j) = p(j) + step <= box.upper(j) ? p(j) + step : p(j) - step;
    v[static_cast<std::size_t>(j + 1)] = box.clamp(p);
  }
  for (std::size_t i = 0; i < v.size(); ++i) fv[i] = eval(v[i]);

  std::vector<std::size_t> order(v.size());
  bool converged = false;
  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];

    double diameter = 0.0;
    for (const auto& p : v) diameter = std::max(diameter, (p - v[best]).norm());
    if (diameter <= options.tolerance) {
      converged = true;
      break;
    }
    if (evals >= options.max_evaluations) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i != worst) centroid += v[i];
    }
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd xr = box.clamp(centroid + (centroid - v[worst]));
    const double fr = eval(xr);
    if (fr < fv[best]) {
      const Eigen::VectorXd xe =
          box.clamp(centroid + 2.0 * (centroid - v[worst]));
      const double fe = eval(xe);
      if (fe < fr) {
        v[worst] = xe;
        fv[worst] = fe;
      } else {
        v[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      v[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    const Eigen::VectorXd xc =
        outside ? box.clamp(centroid + 0.5 * (xr - centroid))
                : box.clamp(centroid + 0.5 * (v[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : fv[worst])) {
      v[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i == best) continue;
      v[i] = box.clamp(v[best] + 0.5 * (v[i] - v[best]));
      fv[i] = eval(v[i]);
    }
  }

  const auto it = std::min_element(fv.begin(), fv.end());
  OptimResult r;
  r.x = v[static_cast<std::size_t>(it - fv.begin())];
  r.value = *it;
  r.evaluations = evals;
  r.converged = converged;
  return r;
}

OptimResult golden_section(const std::function<double(double)>& f, double lo,
                           double hi, const OptimOptions& options) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  int evals = 0;
  auto eval = [&](double x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : kInf;
  };
  double a = lo;
  double b = hi;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = eval(c);
  double fd = eval(d);
  double best_x = fc <= fd ? c : d;
  double best_f = std::min(fc, fd);
  while (b - a > options.tolerance && evals < options.max_evaluations) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = eval(c);
      if (fc < best_f) {
        best_f = fc;
        best_x = c;
      }
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = eval(d);
      if (fd < best_f) {
        best_f = fd;
        best_x = d;
      }
    }
  }
  OptimResult r;
  r.x = Eigen::VectorXd::Constant(1, best_x);
  r.value = best_f;
  r.evaluations = evals;
  r.converged = b - a <= options.tolerance;
  return r;
}

std::vector<Eigen::VectorXd> start_grid(const Box& box) {
  const Eigen::Index d = box.dim();
  const int axes = static_cast<int>(std::min<Eigen::Index>(d, 3));
  int count = 1;
  for (int a = 0; a < axes; ++a) count *= 5;
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(static_cast<std::size_t>(count) + 1);
  for (int p = 0; p < count; ++p) {
    Eigen::VectorXd x(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      int digit = p;
      for (Eigen::Index s = 0; s < j % 3; ++s) digit /= 5;
      // Coordinates beyond the third reuse a digit with a rotation.
      const int level = (digit % 5 + static_cast<int>(j / 3)) % 5;
      x(j) = box.lower(j) +
             (level + 1) / 6.0 * (box.upper(j) - box.lower(j));
    }
    pts.push_back(x);
  }
  pts.push_back(box.center());
  return pts;
}

namespace {

// Middle of the contiguous stretch around x where f stays <= fx.
double flat_center(const std::function<double(double)>& f, double x, double fx,
                   double lo, double hi) {
  auto edge = [&](double dir, double limit) {
    const double span = std::abs(limit - x);
    if (span == 0.0) return x;
    double good = 0.0;
    double bad = -1.0;
    for (double step = 1e-12 * (1.0 + std::abs(x)); step < span; step *= 2.0) {
      if (f(x + dir * step) <= fx) {
        good = step;
      } else {
        bad = step;
        break;
      }
    }
    if (bad < 0.0) {
      if (f(limit) <= fx) return limit;
      bad = span;
    }
    while (bad - good > 1e-12 * (1.0 + std::abs(x))) {
      const double mid = 0.5 * (good + bad);
      if (f(x + dir * mid) <= fx) {
        good = mid;
      } else {
        bad = mid;
      }
    }
    return x + dir * good;
  };
  const double left = edge(-1.0, lo);
  const double right = edge(1.0, hi);
  const double mid = 0.5 * (left + right);
  return f(mid) <= fx ? mid : x;
}

}  // namespace

MultiStartResult minimize(const Objective& f, const Box& box,
                          const OptimOptions& options,
                          const std::vector<Eigen::VectorXd>& extra) {
  box.validate();
  std::vector<Eigen::VectorXd> starts = start_grid(box);
  for (const auto& e : extra) starts.push_back(box.clamp(e));

  MultiStartResult out;
  double lo_val = kInf;
  double hi_val = -kInf;
  bool any = false;
  for (const auto& s : starts) {
    const double v0 = safe(f, s);
    if (std::isfinite(v0)) {
      lo_val = std::min(lo_val, v0);
      hi_val = std::max(hi_val, v0);
    }
    OptimResult r = nelder_mead(f, s, box, options);
    if (std::isfinite(r.value)) {
      if (!any || r.value < out.best.value) out.best = r;
      any = true;
    }
    out.runs.push_back(std::move(r));
  }
  if (!any) {
    throw EstimationError("objective is not finite at any optimizer start");
  }
  out.start_spread = hi_val - lo_val;

  if (box.dim() == 1) {
    const double lo = box.lower(0);
    const double hi = box.upper(0);
    auto f1 = [&](double t) {
      return safe(f, Eigen::VectorXd::Constant(1, t));
    };
    const double h = (hi - lo) / 6.0;
    const double x = out.best.x(0);
    OptimResult g =
        golden_section(f1, std::max(lo, x - h), std::min(hi, x + h), options);
    if (g.value < out.best.value) {
      g.evaluations += out.best.evaluations;
      out.best = g;
    }
    const double c = flat_center(f1, out.best.x(0), out.best.value, lo, hi);
    out.best.x(0) = c;
    out.best.value = f1(c);
  }
  return out;
}

}  // namespace gliv
