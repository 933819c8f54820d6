#include "qrfuse/selection.hpp"
#include "qrfuse/rng.hpp"
#include "qrfuse/simulate.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

using namespace qrfuse;

namespace {

const TauGrid kGrid5 = TauGrid::equispaced(0.1, 0.9, 0.2);

Dataset make_instance(Rng& rng, int t_count, int k_count) {
  Eigen::MatrixXd x(t_count, k_count);
  for (int t = 0; t < t_count; ++t)
    for (int j = 0; j < k_count; ++j) x(t, j) = rng.uniform();
  Eigen::VectorXd y(t_count);
  for (int t = 0; t < t_count; ++t)
    y(t) = 1.0 + x.row(t).sum() + (0.5 + 0.3 * x(t, 0)) * rng.normal();
  return Dataset(std::move(x), std::move(y));
}

/// Mean validation tick loss of a fixed estimator over the same folds the
/// grid search uses; the reference for candidate scoring.
double reference_cv_loss(const Dataset& ds, const TauGrid& grid,
                         const EstimatorConfig& cfg, const CvPlan& plan,
                         std::uint64_t seed) {
  const auto folds = cv_folds(static_cast<int>(ds.rows()), plan, seed);
  double total = 0.0;
  long count = 0;
  for (const auto& f : folds) {
    const QuantileFit fitted = fit(ds.subset(f.train), grid, cfg);
    for (int t : f.validate) {
      for (std::size_t q = 0; q < grid.size(); ++q) {
        double pred = fitted.xi(static_cast<Eigen::Index>(q));
        for (Eigen::Index j = 0; j < ds.cols(); ++j)
          pred += ds.x()(t, j) * fitted.beta(j, static_cast<Eigen::Index>(q));
        total += tick_loss(ds.y()(t) - pred, grid[q]);
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace

TEST_CASE("make_grid builds linear plus log-spaced candidates") {
  SECTION("wide grid") {
    const HyperGrid g = make_grid(100, 1.0, 200, 6.0);
    REQUIRE(g.values.size() == 300);  // linear block stops short of 1 = 10^0
    CHECK(g.values.front() == 0.0);
    CHECK(std::find(g.values.begin(), g.values.end(), 1.0) != g.values.end());
    CHECK(g.values.back() == 1e6);
  }
  SECTION("empirical grid tops out at 1000") {
    const HyperGrid g = make_grid(100, 1.0, 100, 3.0);
    CHECK(g.values.back() == 1000.0);
    CHECK(g.values.front() == 0.0);
  }
  SECTION("degenerate counts") {
    const HyperGrid g = make_grid(1, 1.0, 1, 0.0);
    CHECK(g.values == std::vector<double>{0.0, 1.0});
  }
  SECTION("invalid ranges") {
    CHECK_THROWS_AS(make_grid(0, 1.0, 10, 3.0), std::invalid_argument);
    CHECK_THROWS_AS(make_grid(10, 0.0, 10, 3.0), std::invalid_argument);
    CHECK_THROWS_AS(make_grid(10, 1.0, 10, -1.0), std::invalid_argument);
  }
}

TEST_CASE("cv_folds splits the sample into contiguous blocks") {
  SECTION("plain 5-fold on 10 points") {
    const auto folds = cv_folds(10, CvPlan{5, 0, false});
    REQUIRE(folds.size() == 5);
    CHECK(folds[0].validate == std::vector<int>{0, 1});
    CHECK(folds[0].train == std::vector<int>{2, 3, 4, 5, 6, 7, 8, 9});
  }
  SECTION("gap h=1 removes block neighbours from training") {
    const auto folds = cv_folds(10, CvPlan{5, 1, false});
    CHECK(folds[1].validate == std::vector<int>{2, 3});
    CHECK(folds[1].train == std::vector<int>{0, 5, 6, 7, 8, 9});
  }
  SECTION("oversized gap empties a training set") {
    CHECK_THROWS_AS(cv_folds(10, CvPlan{2, 5, false}), std::invalid_argument);
  }
  SECTION("plan validation") {
    CHECK_THROWS_AS(cv_folds(10, CvPlan{1, 0, false}), std::invalid_argument);
    CHECK_THROWS_AS(cv_folds(10, CvPlan{11, 0, false}), std::invalid_argument);
    CHECK_THROWS_AS(cv_folds(10, CvPlan{5, -1, false}), std::invalid_argument);
  }
  SECTION("validation blocks partition the sample exactly once") {
    for (bool shuffled : {false, true}) {
      for (int t_count : {10, 23, 57}) {
        const auto folds = cv_folds(t_count, CvPlan{5, 1, shuffled}, 99);
        std::multiset<int> seen;
        for (const auto& f : folds) seen.insert(f.validate.begin(), f.validate.end());
        REQUIRE(seen.size() == static_cast<std::size_t>(t_count));
        int expect = 0;
        for (int v : std::set<int>(seen.begin(), seen.end())) CHECK(v == expect++);
      }
    }
  }
  SECTION("shuffling is deterministic in the seed") {
    const auto a = cv_folds(20, CvPlan{4, 0, true}, 7);
    const auto b = cv_folds(20, CvPlan{4, 0, true}, 7);
    const auto c = cv_folds(20, CvPlan{4, 0, true}, 8);
    CHECK(a[0].validate == b[0].validate);
    CHECK(a[0].validate != c[0].validate);
  }
}

TEST_CASE("grid_search scores candidates by out-of-sample tick loss") {
  Rng rng(101);
  const Dataset ds = make_instance(rng, 60, 2);
  const CvPlan plan{5, 0, true};

  SECTION("a single zero candidate scores like plain quantile regression") {
    const GridSearchResult res =
        grid_search(ds, kGrid5, EstimatorKind::GNCQR, HyperGrid{{0.0}}, plan, 11);
    CHECK(res.best_value == 0.0);
    const double qr_loss = reference_cv_loss(ds, kGrid5, EstimatorConfig::qr(), plan, 11);
    CHECK(std::fabs(res.oos_loss[0] - qr_loss) < 1e-9);
  }
  SECTION("ties break toward the smaller hyperparameter") {
    // Both penalties saturate (every slope step shrinks to exactly zero),
    // so the candidates score identically and the smaller one wins.
    const GridSearchResult res = grid_search(
        ds, kGrid5, EstimatorKind::FLQR, HyperGrid{{1e6, 1e7}}, plan, 11);
    REQUIRE(res.oos_loss[0] == res.oos_loss[1]);
    CHECK(res.best_index == 0);
    CHECK(res.best_value == 1e6);
  }
  SECTION("profile bookkeeping and in-sample monotonicity") {
    const HyperGrid grid{{0.0, 0.5, 1.0, 10.0, 1000.0}};
    const GridSearchResult res =
        grid_search(ds, kGrid5, EstimatorKind::GNCQR, grid, plan, 11, 2);
    REQUIRE(res.candidates.size() == 5);
    REQUIRE(res.oos_loss.size() == 5);
    for (int failed : res.n_failed_folds) CHECK(failed == 0);
    for (std::size_t c = 1; c < res.candidates.size(); ++c)
      CHECK(res.in_sample_loss[c] >= res.in_sample_loss[c - 1] - 1e-9);
    CHECK(res.best_index >= 0);
  }
  SECTION("estimators without hyperparameters are rejected") {
    CHECK_THROWS_AS(grid_search(ds, kGrid5, EstimatorKind::QR, HyperGrid{{0.0}},
                                plan, 11),
                    std::invalid_argument);
  }
  SECTION("every candidate failing is an error") {
    LpOptions tiny;
    tiny.max_iter = 2;
    CHECK_THROWS_AS(grid_search(ds, kGrid5, EstimatorKind::GNCQR,
                                HyperGrid{{0.0, 1.0}}, plan, 11, 1, tiny),
                    FitError);
  }
  SECTION("job count does not change results") {
    const HyperGrid grid{{0.0, 1.0, 100.0}};
    const GridSearchResult a =
        grid_search(ds, kGrid5, EstimatorKind::GNCQR, grid, plan, 11, 1);
    const GridSearchResult b =
        grid_search(ds, kGrid5, EstimatorKind::GNCQR, grid, plan, 11, 4);
    CHECK(a.best_index == b.best_index);
    for (std::size_t c = 0; c < grid.values.size(); ++c)
      CHECK(a.oos_loss[c] == b.oos_loss[c]);
  }
}

TEST_CASE("heteroskedastic sparse design selects an interior constraint scale") {
  // Covariates 5..10 carry no signal, so some shrinkage helps out of sample
  // and extreme shrinkage hurts: the profile dips in the interior.
  const Replication rep = draw(DgpSpec::y2(), 100, 20240521);
  const auto [scaled, map] = scale_to_unit(rep.data);
  const HyperGrid grid{{0.0, 0.25, 0.5, 1.0, 4.0, 100.0, 1e4, 1e6}};
  const GridSearchResult res = grid_search(scaled, kGrid5, EstimatorKind::GNCQR,
                                           grid, CvPlan{10, 0, true}, 77, 4);
  REQUIRE(res.best_index >= 0);
  CHECK(res.best_value > 0.0);
  CHECK(res.best_value < 1e6);
  CHECK(res.oos_loss[static_cast<std::size_t>(res.best_index)] <= res.oos_loss.front());
  CHECK(res.oos_loss[static_cast<std::size_t>(res.best_index)] <= res.oos_loss.back());
}

TEST_CASE("FLQR grid search runs end to end") {
  Rng rng(103);
  const Dataset ds = make_instance(rng, 50, 3);
  const GridSearchResult res =
      grid_search(ds, kGrid5, EstimatorKind::FLQR, HyperGrid{{0.0, 0.1, 10.0}},
                  CvPlan{5, 0, true}, 13, 2);
  REQUIRE(res.best_index >= 0);
  for (std::size_t c = 1; c < res.candidates.size(); ++c)
    CHECK(res.in_sample_loss[c] >= res.in_sample_loss[c - 1] - 1e-9);
}
