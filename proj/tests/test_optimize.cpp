#include <doctest.h>

#include <cmath>
#include <limits>

#include "gliv/error.hpp"
#include "gliv/optimize.hpp"

using namespace gliv;

namespace {

Box box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
  Box b;
  b.lower = Eigen::Map<const Eigen::VectorXd>(lo.begin(), lo.size());
  b.upper = Eigen::Map<const Eigen::VectorXd>(hi.begin(), hi.size());
  return b;
}

}  // namespace

TEST_CASE("box validation") {
  CHECK_THROWS_AS(box({1.0}, {0.0}).validate(), ValidationError);
  CHECK_THROWS_AS(box({0.0}, {INFINITY}).validate(), ValidationError);
  CHECK_NOTHROW(box({0.0, -1.0}, {1.0, 1.0}).validate());
  CHECK(start_grid(box({0.0}, {1.0})).size() == 6);
  CHECK(start_grid(box({0.0, 0.0}, {1.0, 1.0})).size() == 26);
  CHECK(start_grid(box({0, 0, 0, 0}, {1, 1, 1, 1})).size() == 126);
}

TEST_CASE("golden section") {
  const auto r = golden_section([](double x) { return (x - 0.3) * (x - 0.3); },
                                -2.0, 5.0);
  CHECK(r.x(0) == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(r.converged);
}

TEST_CASE("nelder-mead on a quadratic and the Rosenbrock valley") {
  const Box b = box({-5, -5}, {5, 5});
  Eigen::VectorXd start(2);
  start << -1.2, 1.0;
  const auto quad = [](const Eigen::VectorXd& x) {
    return (x(0) - 1.0) * (x(0) - 1.0) + 3 * (x(1) + 2.0) * (x(1) + 2.0);
  };
  const auto r = nelder_mead(quad, start, b);
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.x(1) == doctest::Approx(-2.0).epsilon(1e-4));

  const auto rosen = [](const Eigen::VectorXd& x) {
    return 100 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1 - x(0), 2);
  };
  const auto m = minimize(rosen, b);
  CHECK(m.best.value < 1e-8);
  CHECK(m.best.x(0) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("minimum on the boundary stays in the box") {
  const Box b = box({0, 0}, {1, 1});
  const auto f = [](const Eigen::VectorXd& x) { return x(0) + x(1); };
  const auto m = minimize(f, b);
  CHECK(m.best.x.minCoeff() >= 0.0);
  CHECK(m.best.value < 1e-6);
}

TEST_CASE("multi-start picks the global minimum") {
  const Box b = box({-3}, {3});
  const auto f = [](const Eigen::VectorXd& x) {
    return std::pow(x(0) * x(0) - 4.0, 2) + x(0);
  };
  const auto m = minimize(f, b);
  CHECK(m.best.x(0) < 0.0);
  CHECK(m.start_spread > 0.0);
}

TEST_CASE("flat minimum is centred") {
  const Box b = box({-5}, {5});
  const auto f = [](const Eigen::VectorXd& x) {
    return std::max(0.0, std::abs(x(0) - 1.0) - 0.5);
  };
  const auto m = minimize(f, b);
  CHECK(m.best.x(0) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("non-finite objective") {
  const Box b = box({0}, {1});
  const auto nan = [](const Eigen::VectorXd&) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(minimize(nan, b), EstimationError);
  const auto half = [](const Eigen::VectorXd& x) {
    return x(0) < 0.5 ? INFINITY : (x(0) - 0.7) * (x(0) - 0.7);
  };
  CHECK(minimize(half, b).best.x(0) == doctest::Approx(0.7).epsilon(1e-4));
}
