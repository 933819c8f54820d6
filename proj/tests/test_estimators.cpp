#include "qrfuse/estimators.hpp"
#include "qrfuse/io.hpp"
#include "qrfuse/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

using namespace qrfuse;

namespace {

/// Location-scale instance with continuous noise; unique LP optima a.s.
Dataset make_instance(Rng& rng, int t_count, int k_count, double x_lo = 0.0,
                      double x_hi = 1.0) {
  Eigen::MatrixXd x(t_count, k_count);
  for (int t = 0; t < t_count; ++t)
    for (int j = 0; j < k_count; ++j) x(t, j) = x_lo + (x_hi - x_lo) * rng.uniform();
  Eigen::VectorXd y(t_count);
  for (int t = 0; t < t_count; ++t) {
    double loc = 1.0, scale = 0.5;
    for (int j = 0; j < k_count; ++j) {
      loc += x(t, j);
      scale += 0.2 * std::fabs(x(t, j));
    }
    y(t) = loc + scale * rng.normal();
  }
  return Dataset(std::move(x), std::move(y));
}

/// Columns symmetric around zero with max exactly +1 and min exactly -1,
/// so the adaptive rows collapse to the pure shrinkage form.
Dataset make_symmetric_instance(Rng& rng, int t_half, int k_count) {
  const int t_count = 2 * t_half;
  Eigen::MatrixXd x(t_count, k_count);
  for (int j = 0; j < k_count; ++j) {
    double peak = 0.0;
    for (int i = 0; i < t_half; ++i) {
      const double v = 0.05 + 0.95 * rng.uniform();
      x(2 * i, j) = v;
      x(2 * i + 1, j) = -v;
      peak = std::max(peak, v);
    }
    x.col(j) /= peak;
  }
  Eigen::VectorXd y(t_count);
  for (int t = 0; t < t_count; ++t)
    y(t) = 1.0 + x.row(t).sum() + (0.4 + 0.1 * std::fabs(x(t, 0))) * rng.normal();
  return Dataset(std::move(x), std::move(y));
}

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

double slope_spread(const QuantileFit& f) {
  double spread = 0.0;
  for (Eigen::Index j = 0; j < f.beta.rows(); ++j)
    spread = std::max(spread, f.beta.row(j).maxCoeff() - f.beta.row(j).minCoeff());
  return spread;
}

const TauGrid kGrid5 = TauGrid::equispaced(0.1, 0.9, 0.2);

}  // namespace

TEST_CASE("EstimatorConfig validation") {
  CHECK_NOTHROW(EstimatorConfig::qr().validate());
  CHECK_NOTHROW(EstimatorConfig::gncqr(0.0).validate());
  CHECK_NOTHROW(EstimatorConfig::flqr(2.5).validate());
  CHECK_THROWS_AS((EstimatorConfig{EstimatorKind::GNCQR, {}, {}}.validate()),
                  std::invalid_argument);
  CHECK_THROWS_AS((EstimatorConfig{EstimatorKind::QR, 1.0, {}}.validate()),
                  std::invalid_argument);
  CHECK_THROWS_AS((EstimatorConfig{EstimatorKind::FLQR, {}, -1.0}.validate()),
                  std::invalid_argument);
  CHECK_THROWS_AS((EstimatorConfig{EstimatorKind::BRW, {}, 1.0}.validate()),
                  std::invalid_argument);
}

TEST_CASE("adaptive non-crossing row coefficients") {
  // one column spanning [0,1] with mean 1/2
  Eigen::MatrixXd x(3, 1);
  x << 0.0, 0.5, 1.0;
  const Dataset ds(x, Eigen::VectorXd::Zero(3));

  SECTION("alpha=1 recovers the worst-case constraint gamma0 >= gamma-") {
    const NonCrossingRow row = build_constraint_row(ds, 1.0, 2);
    CHECK(row.plus(0) == 1.0);
    CHECK(row.minus(0) == 1.0);
    CHECK(row.plus(1) == Catch::Approx(0.0).margin(1e-15));
    CHECK(row.minus(1) == Catch::Approx(1.0));
  }
  SECTION("alpha=0 pins monotonicity at the column mean") {
    const NonCrossingRow row = build_constraint_row(ds, 0.0, 2);
    CHECK(row.plus(1) == Catch::Approx(0.5));
    CHECK(row.minus(1) == Catch::Approx(0.5));
  }
  SECTION("symmetric [-1,1] column turns the row into pure shrinkage") {
    Eigen::MatrixXd xs(3, 1);
    xs << -1.0, 0.0, 1.0;
    const Dataset sym(xs, Eigen::VectorXd::Zero(3));
    for (double alpha : {0.5, 1.0, 4.0}) {
      const NonCrossingRow row = build_constraint_row(sym, alpha, 3);
      // gamma0 - alpha*gamma+ - alpha*gamma- >= 0, i.e. gamma0/alpha bounds
      // the total variation of the step
      CHECK(row.plus(1) == Catch::Approx(-alpha));
      CHECK(row.minus(1) == Catch::Approx(alpha));
    }
  }
  SECTION("contract errors") {
    CHECK_THROWS_AS(build_constraint_row(ds, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(build_constraint_row(ds, -0.5, 2), std::invalid_argument);
    Eigen::MatrixXd xc = Eigen::MatrixXd::Constant(3, 1, 2.0);
    const Dataset constant(xc, Eigen::VectorXd::Zero(3));
    CHECK_THROWS_AS(build_constraint_row(constant, 1.0, 2), DataError);
  }
}

TEST_CASE("canonicalize keeps one side of each split") {
  GammaSolution g;
  g.plus = Eigen::MatrixXd::Zero(1, 2);
  g.minus = Eigen::MatrixXd::Zero(1, 2);
  g.plus(0, 0) = 3.0;
  g.minus(0, 0) = 1.0;
  const GammaSolution c = canonicalize(g);
  CHECK(c.plus(0, 0) == 2.0);
  CHECK(c.minus(0, 0) == 0.0);
  CHECK(c.plus(0, 1) == 0.0);
  CHECK(c.minus(0, 1) == 0.0);

  Rng rng(5);
  GammaSolution r;
  r.plus = Eigen::MatrixXd::Zero(3, 4);
  r.minus = Eigen::MatrixXd::Zero(3, 4);
  for (int j = 0; j < 3; ++j)
    for (int q = 0; q < 4; ++q) {
      r.plus(j, q) = rng.uniform() * 2.0;
      r.minus(j, q) = rng.uniform() * 2.0;
    }
  const GammaSolution rc = canonicalize(r);
  CHECK(max_abs_diff(rc.values(), r.values()) < 1e-12);
  for (int j = 0; j < 3; ++j)
    for (int q = 0; q < 4; ++q)
      CHECK(std::min(rc.plus(j, q), rc.minus(j, q)) <= 1e-9);
}

TEST_CASE("sort_quantiles rearranges rows ascending") {
  Eigen::MatrixXd m(1, 3);
  m << 2.0, 1.5, 3.0;
  const Eigen::MatrixXd s = sort_quantiles(m);
  CHECK(s(0, 0) == 1.5);
  CHECK(s(0, 1) == 2.0);
  CHECK(s(0, 2) == 3.0);

  Eigen::MatrixXd mono(1, 3);
  mono << -1.0, 0.0, 5.0;
  CHECK(sort_quantiles(mono) == mono);

  Rng rng(17);
  Eigen::MatrixXd rnd(6, 5);
  for (int t = 0; t < 6; ++t)
    for (int q = 0; q < 5; ++q) rnd(t, q) = rng.normal();
  const Eigen::MatrixXd sorted = sort_quantiles(rnd);
  for (int t = 0; t < 6; ++t) {
    std::vector<double> expect(5), got(5);
    for (int q = 0; q < 5; ++q) {
      expect[static_cast<std::size_t>(q)] = rnd(t, q);
      got[static_cast<std::size_t>(q)] = sorted(t, q);
    }
    std::sort(expect.begin(), expect.end());
    CHECK(std::is_sorted(got.begin(), got.end()));
    CHECK(got == expect);  // same multiset per row
  }
}

TEST_CASE("intercept-only median fit") {
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 9.0;
  const Dataset ds(Eigen::MatrixXd(3, 0), y);
  const QuantileFit f = fit(ds, TauGrid({0.5}), EstimatorConfig::qr());
  REQUIRE(f.status == LpStatus::Optimal);
  CHECK(f.xi(0) == Catch::Approx(2.0));
  CHECK(f.objective == Catch::Approx(4.0));
  CHECK(f.crossing_rate == 0.0);
}

TEST_CASE("fit invariants: cumulative sums, objective, split residue") {
  Rng rng(31);
  const Dataset ds = make_instance(rng, 50, 2);
  for (const auto& cfg :
       {EstimatorConfig::qr(), EstimatorConfig::brw(), EstimatorConfig::gncqr(2.0),
        EstimatorConfig::flqr(0.5), EstimatorConfig::cqr()}) {
    const QuantileFit f = fit(ds, kGrid5, cfg);
    REQUIRE(f.status == LpStatus::Optimal);
    // coefficients reconstruct from the difference variables
    const Eigen::MatrixXd gamma = f.gamma.values();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(3);
    for (int q = 0; q < 5; ++q) {
      acc += gamma.col(q);
      CHECK(std::fabs(f.xi(q) - acc(0)) < 1e-9);
      CHECK(std::fabs(f.beta(0, q) - acc(1)) < 1e-9);
      CHECK(std::fabs(f.beta(1, q) - acc(2)) < 1e-9);
    }
    // objective equals the recomputed total tick loss
    const Eigen::MatrixXd fitted = fitted_quantiles(f, ds.x());
    double obj = 0.0;
    for (int q = 0; q < 5; ++q)
      for (int t = 0; t < 50; ++t)
        obj += tick_loss(ds.y()(t) - fitted(t, q), kGrid5[static_cast<std::size_t>(q)]);
    CHECK(f.objective == Catch::Approx(obj).epsilon(1e-7));
    // non-negative splits with at most one active side
    CHECK(f.gamma.plus.minCoeff() >= -1e-9);
    CHECK(f.gamma.minus.minCoeff() >= -1e-9);
    CHECK(f.gamma.plus.cwiseMin(f.gamma.minus).maxCoeff() <= 1e-9);
  }
}

TEST_CASE("GNCQR at alpha=0 reproduces plain quantile regression") {
  Rng rng(41);
  for (int rep = 0; rep < 5; ++rep) {
    const Dataset ds = make_instance(rng, 60, 3);
    const QuantileFit qr = fit(ds, kGrid5, EstimatorConfig::qr());
    const QuantileFit g0 = fit(ds, kGrid5, EstimatorConfig::gncqr(0.0));
    CHECK(max_abs_diff(qr.beta, g0.beta) < 1e-6);
    CHECK((qr.xi - g0.xi).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("FLQR at lambda=0 reproduces plain quantile regression") {
  Rng rng(43);
  const Dataset ds = make_instance(rng, 50, 2);
  const QuantileFit qr = fit(ds, kGrid5, EstimatorConfig::qr());
  const QuantileFit fl = fit(ds, kGrid5, EstimatorConfig::flqr(0.0));
  CHECK(max_abs_diff(qr.beta, fl.beta) < 1e-6);
  CHECK((qr.xi - fl.xi).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("joint QR equals independent per-quantile fits") {
  Rng rng(47);
  const Dataset ds = make_instance(rng, 40, 2);
  const QuantileFit joint = fit(ds, kGrid5, EstimatorConfig::qr());
  for (std::size_t q = 0; q < kGrid5.size(); ++q) {
    const QuantileFit single = fit(ds, TauGrid({kGrid5[q]}), EstimatorConfig::qr());
    CHECK(std::fabs(joint.xi(static_cast<Eigen::Index>(q)) - single.xi(0)) < 1e-8);
    CHECK((joint.beta.col(static_cast<Eigen::Index>(q)) - single.beta.col(0))
              .cwiseAbs()
              .maxCoeff() < 1e-8);
  }
}

TEST_CASE("non-crossing holds in-sample for BRW and GNCQR alpha >= 1") {
  Rng rng(53);
  for (int rep = 0; rep < 4; ++rep) {
    const Dataset ds = make_instance(rng, 45, 3, -2.0, 3.0);
    for (double alpha : {1.0, 2.0, 10.0}) {
      const QuantileFit f = fit(ds, kGrid5, EstimatorConfig::gncqr(alpha));
      REQUIRE(f.status == LpStatus::Optimal);
      const Eigen::MatrixXd fitted = fitted_quantiles(f, ds.x());
      for (int t = 0; t < 45; ++t)
        for (int q = 0; q + 1 < 5; ++q)
          CHECK(fitted(t, q + 1) >= fitted(t, q) - 1e-8);
      CHECK(f.crossing_rate == 0.0);
    }
    const QuantileFit brw = fit(ds, kGrid5, EstimatorConfig::brw());
    const Eigen::MatrixXd fitted = fitted_quantiles(brw, ds.x());
    for (int t = 0; t < 45; ++t)
      for (int q = 0; q + 1 < 5; ++q)
        CHECK(fitted(t, q + 1) >= fitted(t, q) - 1e-8);
  }
}

TEST_CASE("BRW is the alpha=1 member of the family") {
  Rng rng(59);
  const Dataset ds = make_instance(rng, 40, 2);
  const QuantileFit brw = fit(ds, kGrid5, EstimatorConfig::brw());
  const QuantileFit g1 = fit(ds, kGrid5, EstimatorConfig::gncqr(1.0));
  CHECK(max_abs_diff(brw.beta, g1.beta) < 1e-12);
  CHECK((brw.xi - g1.xi).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("in-sample loss is non-decreasing as the constraint tightens") {
  Rng rng(61);
  const Dataset ds = make_instance(rng, 50, 2);
  double prev = -1.0;
  for (double alpha : {0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 25.0, 1e3, 1e6}) {
    const QuantileFit f = fit(ds, kGrid5, EstimatorConfig::gncqr(alpha));
    REQUIRE(f.status == LpStatus::Optimal);
    CHECK(f.objective >= prev - 1e-7);
    prev = f.objective;
  }
}

TEST_CASE("pure-shrinkage feasibility on symmetric data") {
  Rng rng(67);
  const Dataset ds = make_symmetric_instance(rng, 25, 2);
  for (double alpha : {0.5, 1.0, 5.0}) {
    const QuantileFit f = fit(ds, kGrid5, EstimatorConfig::gncqr(alpha));
    REQUIRE(f.status == LpStatus::Optimal);
    const Eigen::MatrixXd gamma0 = f.gamma.values();
    for (int q = 1; q < 5; ++q) {
      double total = 0.0;
      for (int j = 1; j <= 2; ++j)
        total += f.gamma.plus(j, q) + f.gamma.minus(j, q);
      CHECK(total <= gamma0(0, q) / alpha + 1e-8);
    }
  }
}

TEST_CASE("large alpha approaches pooled slopes and the direct pooled fit") {
  Rng rng(71);
  const Dataset ds = make_instance(rng, 50, 2);
  const QuantileFit big = fit(ds, kGrid5, EstimatorConfig::gncqr(1e6));
  REQUIRE(big.status == LpStatus::Optimal);
  CHECK(slope_spread(big) <= 1e-3);
  const QuantileFit cqr = fit(ds, kGrid5, EstimatorConfig::cqr());
  REQUIRE(cqr.status == LpStatus::Optimal);
  CHECK(slope_spread(cqr) == 0.0);
  CHECK(cqr.objective <= big.objective + 1e-4);

  double prev = std::numeric_limits<double>::infinity();
  for (double alpha : {1.0, 10.0, 100.0, 1e4, 1e6}) {
    const QuantileFit f = fit(ds, kGrid5, EstimatorConfig::gncqr(alpha));
    const double spread = slope_spread(f);
    CHECK(spread <= prev + 1e-6);
    prev = spread;
  }
}

TEST_CASE("rescaling equivariance") {
  Rng rng(73);
  const Dataset ds = make_instance(rng, 40, 2, -1.0, 4.0);

  SECTION("plain quantile regression is affine-equivariant") {
    const QuantileFit raw = fit(ds, kGrid5, EstimatorConfig::qr());
    const RescaledFit via_unit = fit_rescaled(ds, kGrid5, EstimatorConfig::qr());
    const Eigen::MatrixXd f1 = fitted_quantiles(raw, ds.x());
    const Eigen::MatrixXd f2 = fitted_quantiles(via_unit.original, ds.x());
    CHECK(max_abs_diff(f1, f2) < 1e-7 * (1.0 + f1.cwiseAbs().maxCoeff()));
  }
  SECTION("the general-domain constraint matches the unit-domain original") {
    const QuantileFit raw = fit(ds, kGrid5, EstimatorConfig::brw());
    const RescaledFit unit = fit_rescaled(ds, kGrid5, EstimatorConfig::brw());
    CHECK(max_abs_diff(raw.beta, unit.original.beta) < 1e-6);
    CHECK((raw.xi - unit.original.xi).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("constant columns are rejected for constrained estimators only") {
  Eigen::MatrixXd x(6, 2);
  x << 1, 5, 2, 5, 3, 5, 4, 5, 5, 5, 6, 5;
  Eigen::VectorXd y(6);
  y << 1, 3, 2, 5, 4, 6;
  const Dataset ds(x, y);
  CHECK_THROWS_AS(fit(ds, kGrid5, EstimatorConfig::brw()), DataError);
  CHECK_THROWS_AS(fit(ds, kGrid5, EstimatorConfig::gncqr(0.5)), DataError);
  CHECK_NOTHROW(fit(ds, TauGrid({0.5}), EstimatorConfig::qr()));
}

TEST_CASE("iteration limit surfaces through the fit status") {
  Rng rng(79);
  const Dataset ds = make_instance(rng, 30, 2);
  LpOptions opt;
  opt.max_iter = 3;
  const QuantileFit f = fit(ds, kGrid5, EstimatorConfig::qr(), opt);
  CHECK(f.status == LpStatus::IterationLimit);
}

TEST_CASE("crossing rate counts observations with any inversion") {
  Eigen::MatrixXd fitted(3, 3);
  fitted << 1, 2, 3,  // monotone
      2, 1, 3,        // crossed
      1, 1, 1;        // flat is fine
  CHECK(crossing_rate(fitted) == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("fit serialization") {
  Rng rng(83);
  const Dataset ds = make_instance(rng, 25, 2);
  const QuantileFit f = fit(ds, TauGrid({0.25, 0.5, 0.75}), EstimatorConfig::gncqr(1.5));

  const nlohmann::json j = to_json(f);
  CHECK(j["taus"].size() == 3);
  CHECK(j["xi"].size() == 3);
  CHECK(j["beta"].size() == 3);     // per quantile
  CHECK(j["beta"][0].size() == 2);  // slopes
  CHECK(j["estimator"]["kind"] == "GNCQR");
  CHECK(j["estimator"]["alpha"] == 1.5);
  CHECK(j.contains("objective"));
  CHECK(j.contains("crossing_rate"));

  std::ostringstream os;
  write_coefficients_csv(f, {"a", "b"}, os);
  const std::string csv = os.str();
  CHECK(csv.rfind("tau,variable,coefficient\n", 0) == 0);
  // header + 3 taus x (intercept + 2 slopes)
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 9);
  CHECK(csv.find(",intercept,") != std::string::npos);
  CHECK(csv.find(",a,") != std::string::npos);
}
