#pragma once

#include "qrfuse/core.hpp"
#include "qrfuse/estimators.hpp"
#include "qrfuse/parallel.hpp"
#include "qrfuse/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace qrfuse {

/// Ordered candidate hyperparameters (alpha or lambda).
struct HyperGrid {
  std::vector<double> values;

  void validate() const {
    if (values.empty()) throw std::invalid_argument("HyperGrid: empty");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!(std::isfinite(values[i]) && values[i] >= 0.0))
        throw std::invalid_argument("HyperGrid: values must be finite and >= 0");
      if (i > 0 && !(values[i] > values[i - 1]))
        throw std::invalid_argument("HyperGrid: values must strictly increase");
    }
  }
};

/// Candidate grid: n_linear equispaced points on [0, linear_hi), then n_log
/// powers of ten with exponents equispaced on [0, log_exp_hi]. Duplicates
/// are merged; 0 and 1 are present exactly.
inline HyperGrid make_grid(int n_linear, double linear_hi, int n_log,
                           double log_exp_hi) {
  if (n_linear < 1 || n_log < 1)
    throw std::invalid_argument("make_grid: counts must be >= 1");
  if (!(linear_hi > 0.0) || log_exp_hi < 0.0)
    throw std::invalid_argument("make_grid: invalid ranges");
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(n_linear + n_log));
  for (int i = 0; i < n_linear; ++i)
    v.push_back(linear_hi * static_cast<double>(i) / static_cast<double>(n_linear));
  for (int i = 0; i < n_log; ++i) {
    const double e = n_log == 1 ? 0.0
                                : log_exp_hi * static_cast<double>(i) /
                                      static_cast<double>(n_log - 1);
    v.push_back(std::pow(10.0, e));
  }
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  HyperGrid g{std::move(v)};
  g.validate();
  return g;
}

/// Blocked cross-validation plan. Validation blocks are contiguous index
/// ranges partitioning the sample; h trims that many neighbours on each side
/// of a block out of its training set (h = 0 is plain k-fold). Shuffled
/// ordering permutes rows once up front, for cross-section data.
struct CvPlan {
  int fold_count = 10;
  int h = 0;
  bool shuffled = false;

  void validate(int t_count) const {
    if (fold_count < 2) throw std::invalid_argument("CvPlan: fold_count must be >= 2");
    if (fold_count > t_count)
      throw std::invalid_argument("CvPlan: fold_count exceeds sample size");
    if (h < 0) throw std::invalid_argument("CvPlan: h must be >= 0");
  }
};

struct CvFold {
  std::vector<int> train;
  std::vector<int> validate;
};

/// Splits 1..T into folds per the plan. Throws if the gap empties some
/// fold's training set.
inline std::vector<CvFold> cv_folds(int t_count, const CvPlan& plan,
                                    std::uint64_t seed = 0) {
  plan.validate(t_count);
  std::vector<int> order(static_cast<std::size_t>(t_count));
  for (int i = 0; i < t_count; ++i) order[static_cast<std::size_t>(i)] = i;
  if (plan.shuffled) {
    Rng rng(mix_seed(seed, 0x626c6f636bULL));
    order = rng.permutation(t_count);
  }
  const int base = t_count / plan.fold_count;
  const int extra = t_count % plan.fold_count;
  std::vector<CvFold> folds;
  folds.reserve(static_cast<std::size_t>(plan.fold_count));
  int start = 0;
  for (int f = 0; f < plan.fold_count; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    const int stop = start + size;  // [start, stop) are validation positions
    CvFold fold;
    for (int i = start; i < stop; ++i) fold.validate.push_back(order[static_cast<std::size_t>(i)]);
    const int lo = start - plan.h;
    const int hi = stop + plan.h;  // positions [lo, hi) are excluded
    for (int i = 0; i < t_count; ++i)
      if (i < lo || i >= hi) fold.train.push_back(order[static_cast<std::size_t>(i)]);
    if (fold.train.empty())
      throw std::invalid_argument("cv_folds: empty training set for fold " +
                                  std::to_string(f + 1));
    folds.push_back(std::move(fold));
    start = stop;
  }
  return folds;
}

/// Per-candidate profile of a grid search; losses are mean tick loss over
/// all validation predictions and quantiles. A candidate whose fit fails on
/// any fold (or whose LP hits the iteration limit) is recorded as missing.
struct GridSearchResult {
  std::vector<double> candidates;
  std::vector<double> in_sample_loss;  // NaN when the full-data fit failed
  std::vector<double> oos_loss;        // NaN when any fold failed
  std::vector<int> n_failed_folds;
  int best_index = -1;
  double best_value = std::numeric_limits<double>::quiet_NaN();
};

namespace selection_detail {

inline EstimatorConfig config_for(EstimatorKind kind, double value) {
  switch (kind) {
    case EstimatorKind::GNCQR: return EstimatorConfig::gncqr(value);
    case EstimatorKind::FLQR: return EstimatorConfig::flqr(value);
    default:
      throw std::invalid_argument(
          "grid_search: estimator has no hyperparameter");
  }
}

/// Total tick loss of a fit's predictions on held-out rows.
inline double validation_loss(const QuantileFit& fit, const Dataset& full,
                              const std::vector<int>& rows,
                              const TauGrid& grid) {
  double loss = 0.0;
  for (int t : rows) {
    for (std::size_t q = 0; q < grid.size(); ++q) {
      double pred = fit.xi(static_cast<Eigen::Index>(q));
      for (Eigen::Index j = 0; j < full.cols(); ++j)
        pred += full.x()(t, j) * fit.beta(j, static_cast<Eigen::Index>(q));
      loss += tick_loss(full.y()(t) - pred, grid[q]);
    }
  }
  return loss;
}

}  // namespace selection_detail

/// Cross-validated grid search. Returns the candidate minimizing mean
/// out-of-sample tick loss (ties go to the smaller hyperparameter) together
/// with the full in/out-of-sample profile. Fold training sets are distinct
/// Dataset objects, so constraint statistics are fold-local.
inline GridSearchResult grid_search(const Dataset& ds, const TauGrid& grid,
                                    EstimatorKind kind, const HyperGrid& hgrid,
                                    const CvPlan& plan, std::uint64_t seed,
                                    int jobs = 1, const LpOptions& lp = {}) {
  hgrid.validate();
  const auto folds = cv_folds(static_cast<int>(ds.rows()), plan, seed);
  const int n_cand = static_cast<int>(hgrid.values.size());
  const int n_folds = static_cast<int>(folds.size());

  std::vector<Dataset> train_sets;
  train_sets.reserve(folds.size());
  for (const auto& f : folds) train_sets.push_back(ds.subset(f.train));

  GridSearchResult res;
  res.candidates = hgrid.values;
  res.in_sample_loss.assign(static_cast<std::size_t>(n_cand),
                            std::numeric_limits<double>::quiet_NaN());
  res.oos_loss.assign(static_cast<std::size_t>(n_cand),
                      std::numeric_limits<double>::quiet_NaN());
  res.n_failed_folds.assign(static_cast<std::size_t>(n_cand), 0);

  // Task grid: per candidate, n_folds fold fits plus one full-data fit.
  std::vector<double> fold_loss(static_cast<std::size_t>(n_cand * n_folds), 0.0);
  std::vector<char> fold_ok(static_cast<std::size_t>(n_cand * n_folds), 0);
  std::vector<double> full_loss(static_cast<std::size_t>(n_cand),
                                std::numeric_limits<double>::quiet_NaN());
  const int tasks = n_cand * (n_folds + 1);
  parallel_for(tasks, jobs, [&](int task) {
    const int c = task / (n_folds + 1);
    const int f = task % (n_folds + 1);
    const EstimatorConfig cfg =
        selection_detail::config_for(kind, hgrid.values[static_cast<std::size_t>(c)]);
    try {
      if (f == n_folds) {
        const QuantileFit fit_full = fit(ds, grid, cfg, lp);
        if (fit_full.status == LpStatus::Optimal)
          full_loss[static_cast<std::size_t>(c)] =
              fit_full.objective /
              (static_cast<double>(ds.rows()) * static_cast<double>(grid.size()));
      } else {
        const QuantileFit fit_fold = fit(train_sets[static_cast<std::size_t>(f)], grid, cfg, lp);
        if (fit_fold.status != LpStatus::Optimal) return;
        fold_loss[static_cast<std::size_t>(c * n_folds + f)] =
            selection_detail::validation_loss(fit_fold, ds,
                                              folds[static_cast<std::size_t>(f)].validate, grid);
        fold_ok[static_cast<std::size_t>(c * n_folds + f)] = 1;
      }
    } catch (const FitError&) {
      // recorded as missing below
    }
  });

  int n_valid = 0;
  for (int c = 0; c < n_cand; ++c) {
    res.in_sample_loss[static_cast<std::size_t>(c)] = full_loss[static_cast<std::size_t>(c)];
    double total = 0.0;
    long count = 0;
    int failed = 0;
    for (int f = 0; f < n_folds; ++f) {
      if (!fold_ok[static_cast<std::size_t>(c * n_folds + f)]) {
        ++failed;
        continue;
      }
      total += fold_loss[static_cast<std::size_t>(c * n_folds + f)];
      count += static_cast<long>(folds[static_cast<std::size_t>(f)].validate.size()) *
               static_cast<long>(grid.size());
    }
    res.n_failed_folds[static_cast<std::size_t>(c)] = failed;
    if (failed == 0 && count > 0) {
      res.oos_loss[static_cast<std::size_t>(c)] = total / static_cast<double>(count);
      ++n_valid;
    }
  }
  if (n_valid == 0)
    throw FitError("grid_search: every candidate failed");

  for (int c = 0; c < n_cand; ++c) {
    const double v = res.oos_loss[static_cast<std::size_t>(c)];
    if (std::isnan(v)) continue;
    if (res.best_index < 0 || v < res.oos_loss[static_cast<std::size_t>(res.best_index)]) {
      res.best_index = c;
      res.best_value = res.candidates[static_cast<std::size_t>(c)];
    }
  }
  return res;
}

}  // namespace qrfuse
