#include <doctest.h>

#include "gliv/error.hpp"
#include "gliv/nuisance.hpp"
#include "gliv/simulation.hpp"
#include "oracles.hpp"

using namespace gliv;

namespace {

class FixedModel final : public NuisanceModel {
 public:
  FixedModel(double floor, Eigen::RowVector2d pi, Eigen::RowVector2d ht)
      : NuisanceModel(floor), pi_(pi), ht_(ht) {}
  NuisanceValues evaluate(const Eigen::MatrixXd& x) const override {
    NuisanceValues v;
    const Eigen::Index n = x.rows();
    v.pi = pi_.replicate(n, 1);
    v.h_t = {ht_.replicate(n, 1), (pi_ - ht_).replicate(n, 1)};
    v.h_y = {2.0 * ht_.replicate(n, 1), Eigen::MatrixXd::Zero(n, 2)};
    return v;
  }

 private:
  Eigen::RowVector2d pi_, ht_;
};

Dataset one_cell() {
  Dataset d;
  d.y = Eigen::VectorXd::LinSpaced(8, 1.0, 8.0);
  d.x = Eigen::MatrixXd::Constant(8, 1, 0.3);
  d.z = {0, 0, 0, 0, 1, 1, 1, 1};
  d.t = {1, 1, 1, 1, 0, 0, 0, 0};
  return d;
}

}  // namespace

TEST_CASE("learner spec parsing") {
  CHECK(LearnerSpec::parse("cells").kind == ModelKind::DiscreteCells);
  const LearnerSpec s = LearnerSpec::parse("series:3");
  CHECK(s.kind == ModelKind::PolynomialSeries);
  CHECK(s.degree == 3);
  CHECK(s.to_string() == "series:3");
  CHECK_THROWS_AS(LearnerSpec::parse("kernel"), ValidationError);
  CHECK_THROWS_AS(LearnerSpec::parse("series:x"), ValidationError);
  CHECK_THROWS_AS(LearnerSpec::parse("series:"), ValidationError);
}

TEST_CASE("cell means on a single cell") {
  const TypeConfig cfg = binary_late();
  const Dataset d = one_cell();
  const NuisanceFit f = fit(d, cfg, {});
  Eigen::VectorXd x(1);
  x << 0.3;
  const NuisanceVectors v1 = eval_vectors(f, x, 1);
  CHECK(v1.P(0) == doctest::Approx(1.0));
  CHECK(v1.P(1) == doctest::Approx(0.0));
  const NuisanceVectors v0 = eval_vectors(f, x, 0);
  CHECK(v0.P(0) == doctest::Approx(0.0));
  CHECK(v0.P(1) == doctest::Approx(1.0));
  CHECK(v0.I(1) == doctest::Approx((5.0 + 6 + 7 + 8) / 4));
  CHECK(f.pi(x, 0) == doctest::Approx(0.5));
}

TEST_CASE("missing instrument level in a cell is an estimation error") {
  Dataset d = one_cell();
  d.x(7, 0) = 0.9;
  d.z[6] = 0;  // cell 0.3 keeps both levels
  d.x(6, 0) = 0.9;  // cell 0.9 now has z = 0 and z = 1
  CHECK_NOTHROW(fit(d, binary_late(), {}));
  d.z[7] = 0;  // cell 0.9 only has z = 0
  CHECK_THROWS_AS(fit(d, binary_late(), {}), EstimationError);
}

TEST_CASE("division uses trimmed propensities") {
  const FixedModel m(0.05, {0.01, 0.99}, {0.005, 0.4});
  Eigen::VectorXd x(1);
  x << 0.0;
  const NuisanceVectors v = eval_vectors(m, x, 0);
  CHECK(v.pi(0) == doctest::Approx(0.05));
  CHECK(v.P(0) == doctest::Approx(0.005 / 0.05));
  CHECK(v.I(0) == doctest::Approx(0.01 / 0.05));

  const FixedModel half(0.01, {0.5, 0.5}, {0.1, 0.4});
  const NuisanceVectors h = eval_vectors(half, x, 0);
  CHECK(h.P(0) == doctest::Approx(0.2));
  CHECK(h.P(1) == doctest::Approx(0.8));
  const PlugIn plug = plug_in(m, Eigen::MatrixXd::Zero(3, 1));
  CHECK(plug.pi_raw(0, 0) == doctest::Approx(0.01));
  CHECK(plug.pi(0, 0) == doctest::Approx(0.05));
}

TEST_CASE("cell fits on a simulated sample") {
  DgpSpec dgp;
  dgp.n = 100000;
  dgp.seed = 21;
  const Dataset d = generate(dgp);
  const TypeConfig cfg = main_example();
  const NuisanceFit f = fit(d, cfg, {});
  for (double x : {0.5, 0.55, 0.6, 0.65, 0.7}) {
    Eigen::VectorXd xv(1);
    xv << x;
    CHECK(std::abs(f.pi(xv, 1) - x) < 0.02);
    const auto law = oracle::type_law(x);
    // t1 is taken by s1 at both instruments and by s4 at z2
    const NuisanceVectors v = eval_vectors(f, xv, 0);
    CHECK(std::abs(v.P(0) - law[0]) < 0.02);
    CHECK(std::abs(v.P(1) - (law[0] + law[3])) < 0.02);
  }

  // simplex and exact moment identities within cells
  const NuisanceValues& tv = f.training_values();
  for (Eigen::Index i = 0; i < d.size(); i += 997) {
    for (int z = 0; z < 2; ++z) {
      double s = 0.0;
      for (int t = 0; t < 3; ++t) s += tv.h_t[t](i, z);
      CHECK(s == doctest::Approx(tv.pi(i, z)).epsilon(1e-12));
    }
  }
  const CellSmoother* cells = f.cells();
  REQUIRE(cells);
  for (int t = 0; t < 3; ++t) {
    for (int z = 0; z < 2; ++z) {
      std::vector<double> resid(cells->n_cells(), 0.0);
      for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d.z[i] != z) continue;
        const double I = tv.h_y[t](i, z) / tv.pi(i, z);
        resid[cells->cell_of_row(i)] += (d.t[i] == t ? d.y(i) : 0.0) - I;
      }
      for (double r : resid) CHECK(std::abs(r) < 1e-8);
    }
  }
}

TEST_CASE("constant outcome scales h_t") {
  DgpSpec dgp;
  dgp.n = 2000;
  Dataset d = generate(dgp);
  d.y.setConstant(3.0);
  const NuisanceFit f = fit(d, main_example(), {});
  const NuisanceValues& v = f.training_values();
  for (int t = 0; t < 3; ++t) {
    CHECK((v.h_y[t] - 3.0 * v.h_t[t]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("saturated series reproduces cell means") {
  DgpSpec dgp;
  dgp.n = 3000;
  dgp.seed = 4;
  const Dataset d = generate(dgp);
  const TypeConfig cfg = main_example();
  const NuisanceFit cells = fit(d, cfg, {});
  const NuisanceFit series = fit(d, cfg, LearnerSpec::parse("series:4"));
  const NuisanceValues& a = cells.training_values();
  const NuisanceValues& b = series.training_values();
  CHECK((a.pi - b.pi).cwiseAbs().maxCoeff() < 1e-8);
  for (int t = 0; t < 3; ++t) {
    CHECK((a.h_t[t] - b.h_t[t]).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((a.h_y[t] - b.h_y[t]).cwiseAbs().maxCoeff() < 1e-8);
  }
  CHECK_THROWS_AS(fit(d, cfg, LearnerSpec::parse("series:6")),
                  EstimationError);
}

TEST_CASE("series propensities stay on the trimmed simplex") {
  DgpSpec dgp;
  dgp.x_law = XLaw::ContinuousUniform;
  dgp.n = 3000;
  const Dataset d = generate(dgp);
  const NuisanceFit f = fit(d, main_example(), LearnerSpec::parse("series:3"),
                            0.05);
  const PlugIn p = plug_in(f, d.x);
  CHECK(p.pi.minCoeff() >= 0.05);
  for (Eigen::Index i = 0; i < p.pi_raw.rows(); ++i) {
    CHECK(p.pi_raw.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("csv round trip and label validation") {
  const TypeConfig cfg = main_example();
  DgpSpec dgp;
  dgp.n = 25;
  const Dataset d = generate(dgp);
  std::stringstream ss;
  write_csv(ss, d, cfg);
  const Dataset back = read_csv(ss, cfg);
  CHECK(back.y == d.y);
  CHECK(back.t == d.t);
  CHECK(back.z == d.z);
  CHECK(back.x == d.x);

  std::stringstream bad("y,t,z,x1\n1.0,t9,z1,0.5\n");
  try {
    read_csv(bad, cfg);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("t9") != std::string::npos);
  }
  std::stringstream nan("y,t,z,x1\nnan,t1,z1,0.5\n");
  CHECK_THROWS_AS(read_csv(nan, cfg), ValidationError);
  std::stringstream header("a,b\n");
  CHECK_THROWS_AS(read_csv(header, cfg), ValidationError);
}
