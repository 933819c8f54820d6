#pragma once

#include "qrfuse/core.hpp"
#include "qrfuse/estimators.hpp"
#include "qrfuse/metrics.hpp"
#include "qrfuse/parallel.hpp"
#include "qrfuse/selection.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qrfuse {

/// Time-indexed table: regressors and response share row indices; labels
/// are carried for output files.
struct SeriesTable {
  std::vector<std::string> dates;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> x_names;
  std::string y_name = "y";

  Eigen::Index rows() const { return y.size(); }
};

/// Aligns regressors at t with the target at t+h; the last h rows are
/// dropped. Each output row is stamped with its target date.
inline SeriesTable build_target_pairs(const SeriesTable& raw, int h) {
  if (h < 0) throw std::invalid_argument("build_target_pairs: h must be >= 0");
  if (raw.rows() < h + 2)
    throw std::invalid_argument("build_target_pairs: series too short for h=" +
                                std::to_string(h));
  const Eigen::Index n = raw.rows() - h;
  SeriesTable out;
  out.x = raw.x.topRows(n);
  out.y = raw.y.segment(h, n);
  out.x_names = raw.x_names;
  out.y_name = raw.y_name;
  out.dates.resize(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < n; ++t)
    out.dates[static_cast<std::size_t>(t)] =
        raw.dates.empty() ? std::to_string(t + h) : raw.dates[static_cast<std::size_t>(t + h)];
  return out;
}

/// How the hyperparameter is chosen along the rolling exercise.
enum class SelectionMode {
  None,        // estimator has no hyperparameter
  Fixed,       // user-supplied value, held throughout
  SelectOnce,  // hv-block CV on the first window, then held fixed
  SelectEvery  // re-selected every `every` windows
};

struct HyperPolicy {
  SelectionMode mode = SelectionMode::None;
  double fixed_value = 0.0;
  HyperGrid grid;
  int every = 0;
  int cv_fold_count = 5;
};

struct RollingConfig {
  int window = 50;
  int horizon = 1;
  TauGrid taus = TauGrid::equispaced(0.05, 0.95, 0.05);
  EstimatorKind kind = EstimatorKind::QR;
  HyperPolicy policy;
  int jobs = 1;
  LpOptions lp;
};

struct WindowForecast {
  int pair_index = 0;  // row of the pairs table being forecast
  std::string date;
  double realized = 0.0;
  Eigen::VectorXd raw;     // as fitted
  Eigen::VectorXd sorted;  // rearranged ascending
  double hyper = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string error;
};

struct RollingResult {
  std::vector<WindowForecast> windows;
  int n_failed = 0;
};

namespace forecast_detail {

inline EstimatorConfig make_config(EstimatorKind kind, double hyper) {
  switch (kind) {
    case EstimatorKind::GNCQR: return EstimatorConfig::gncqr(hyper);
    case EstimatorKind::FLQR: return EstimatorConfig::flqr(hyper);
    case EstimatorKind::QR: return EstimatorConfig::qr();
    case EstimatorKind::BRW: return EstimatorConfig::brw();
    case EstimatorKind::CQR: return EstimatorConfig::cqr();
  }
  throw std::logic_error("unreachable");
}

}  // namespace forecast_detail

/// Rolling-window quantile forecasts: for each window of `window`
/// consecutive pairs, fit on the window and predict the grid at the next
/// pair's regressors. Emits raw and sorted forecasts. With a selection
/// policy, hv-block CV (gap = horizon) runs at the scheduled windows and the
/// chosen value carries forward; selection points run serially, window fits
/// in parallel.
inline RollingResult rolling_forecast(const SeriesTable& pairs,
                                      const RollingConfig& cfg,
                                      std::uint64_t seed = 0) {
  const int n_pairs = static_cast<int>(pairs.rows());
  const int n_windows = n_pairs - cfg.window;
  if (cfg.window < 2)
    throw std::invalid_argument("rolling_forecast: window too small");
  if (n_windows < 1)
    throw std::invalid_argument("rolling_forecast: not enough pairs for one window");

  const bool has_hyper =
      cfg.kind == EstimatorKind::GNCQR || cfg.kind == EstimatorKind::FLQR;
  if (has_hyper && cfg.policy.mode == SelectionMode::None)
    throw std::invalid_argument("rolling_forecast: estimator needs a hyperparameter policy");

  auto window_data = [&](int w) {
    Eigen::MatrixXd x(cfg.window, pairs.x.cols());
    Eigen::VectorXd y(cfg.window);
    for (int i = 0; i < cfg.window; ++i) {
      x.row(i) = pairs.x.row(w + i);
      y(i) = pairs.y(w + i);
    }
    return Dataset(std::move(x), std::move(y));
  };

  // Resolve the hyperparameter path first.
  std::vector<double> hyper(static_cast<std::size_t>(n_windows),
                            std::numeric_limits<double>::quiet_NaN());
  if (has_hyper) {
    switch (cfg.policy.mode) {
      case SelectionMode::Fixed:
        for (auto& v : hyper) v = cfg.policy.fixed_value;
        break;
      case SelectionMode::SelectOnce:
      case SelectionMode::SelectEvery: {
        const int every = cfg.policy.mode == SelectionMode::SelectOnce
                              ? n_windows
                              : std::max(1, cfg.policy.every);
        double current = std::numeric_limits<double>::quiet_NaN();
        for (int w = 0; w < n_windows; ++w) {
          if (w % every == 0) {
            CvPlan plan;
            plan.fold_count = cfg.policy.cv_fold_count;
            plan.h = cfg.horizon;
            plan.shuffled = false;
            const GridSearchResult gs =
                grid_search(window_data(w), cfg.taus, cfg.kind, cfg.policy.grid,
                            plan, mix_seed(seed, static_cast<std::uint64_t>(w)),
                            cfg.jobs, cfg.lp);
            current = gs.best_value;
          }
          hyper[static_cast<std::size_t>(w)] = current;
        }
        break;
      }
      case SelectionMode::None:
        break;
    }
  }

  RollingResult result;
  result.windows.assign(static_cast<std::size_t>(n_windows), WindowForecast{});
  parallel_for(n_windows, cfg.jobs, [&](int w) {
    WindowForecast& out = result.windows[static_cast<std::size_t>(w)];
    const int target = w + cfg.window;
    out.pair_index = target;
    out.date = pairs.dates.empty() ? std::to_string(target)
                                   : pairs.dates[static_cast<std::size_t>(target)];
    out.realized = pairs.y(target);
    out.hyper = hyper[static_cast<std::size_t>(w)];
    try {
      const EstimatorConfig est = forecast_detail::make_config(
          cfg.kind, has_hyper ? hyper[static_cast<std::size_t>(w)] : 0.0);
      const QuantileFit f = fit(window_data(w), cfg.taus, est, cfg.lp);
      if (f.status != LpStatus::Optimal) {
        out.error = std::string("LP ") + to_string(f.status);
        return;
      }
      const Eigen::MatrixXd pred =
          fitted_quantiles(f, pairs.x.row(target));
      out.raw = pred.row(0).transpose();
      out.sorted = sort_quantiles(pred).row(0).transpose();
      out.ok = true;
    } catch (const FitError& e) {
      out.error = e.what();
    }
  });
  for (const auto& w : result.windows)
    if (!w.ok) ++result.n_failed;
  return result;
}

/// Forecast-evaluation summary for one estimator run.
struct ExerciseScores {
  double crps_unsorted = 0.0, center_unsorted = 0.0, left_unsorted = 0.0;
  double crps_sorted = 0.0, center_sorted = 0.0, left_sorted = 0.0;
  double log_score_sorted = 0.0;
  int n_scored = 0;
  int n_failed = 0;
};

/// Scores a rolling run: quantile-weighted CRPS under all three weighting
/// schemes for raw and sorted forecasts, plus the mean log score of the
/// sorted forecasts. Failed windows are skipped and counted.
inline ExerciseScores score_exercise(const RollingResult& run,
                                     const TauGrid& grid) {
  std::vector<const WindowForecast*> ok;
  for (const auto& w : run.windows)
    if (w.ok) ok.push_back(&w);
  ExerciseScores s;
  s.n_failed = run.n_failed;
  s.n_scored = static_cast<int>(ok.size());
  if (ok.empty()) return s;

  const Eigen::Index q_count = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd qs_raw(static_cast<Eigen::Index>(ok.size()), q_count);
  Eigen::MatrixXd qs_sorted(static_cast<Eigen::Index>(ok.size()), q_count);
  const bool with_log = grid.size() >= 2;  // density needs two knots
  double log_sum = 0.0;
  for (std::size_t i = 0; i < ok.size(); ++i) {
    qs_raw.row(static_cast<Eigen::Index>(i)) =
        quantile_score(ok[i]->realized, ok[i]->raw, grid).transpose();
    qs_sorted.row(static_cast<Eigen::Index>(i)) =
        quantile_score(ok[i]->realized, ok[i]->sorted, grid).transpose();
    if (with_log) log_sum += log_score(ok[i]->realized, ok[i]->sorted, grid);
  }
  s.crps_unsorted = qwcrps(qs_raw, grid, WeightScheme::Uniform);
  s.center_unsorted = qwcrps(qs_raw, grid, WeightScheme::Center);
  s.left_unsorted = qwcrps(qs_raw, grid, WeightScheme::Left);
  s.crps_sorted = qwcrps(qs_sorted, grid, WeightScheme::Uniform);
  s.center_sorted = qwcrps(qs_sorted, grid, WeightScheme::Center);
  s.left_sorted = qwcrps(qs_sorted, grid, WeightScheme::Left);
  s.log_score_sorted = with_log ? log_sum / static_cast<double>(ok.size())
                                : std::numeric_limits<double>::quiet_NaN();
  return s;
}

}  // namespace qrfuse
