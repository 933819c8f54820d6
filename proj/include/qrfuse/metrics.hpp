#pragma once

#include "qrfuse/core.hpp"
#include "qrfuse/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qrfuse {

/// Which interquantile slope differences are truly non-zero: entry (j, q)
/// covers variable j+1 and the step from grid level q+1 to q+2. Derived
/// analytically from the generating process, never from data.
struct SelectionTruth {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> nonzero;  // K x (Q-1)

  Eigen::Index variables() const { return nonzero.rows(); }
  Eigen::Index steps() const { return nonzero.cols(); }
};

/// Density-region weighting for quantile-score aggregation.
enum class WeightScheme { Uniform, Center, Left };

inline const char* to_string(WeightScheme s) {
  switch (s) {
    case WeightScheme::Uniform: return "uniform";
    case WeightScheme::Center: return "center";
    case WeightScheme::Left: return "left";
  }
  return "?";
}

/// Weight function evaluated at a quantile level. Uniform is flat (each
/// level ends up carrying total weight 1/Q after quadrature), Center peaks
/// at the median, Left emphasises the lower tail.
inline double scheme_weight(WeightScheme s, double tau) {
  switch (s) {
    case WeightScheme::Uniform: return 1.0;
    case WeightScheme::Center: return tau * (1.0 - tau);
    case WeightScheme::Left: return (1.0 - tau) * (1.0 - tau);
  }
  return 0.0;
}

struct RmiseResult {
  std::vector<double> mean;       // x100, per quantile level
  std::vector<double> std_error;  // x100, per quantile level
};

/// Root mean integrated squared error across replications, scaled by 100.
/// Inputs are per-replication matrices (evaluation points x quantiles) of
/// estimated and true quantile values; per replication the ISE is a mean
/// over evaluation points, and the report averages the per-replication
/// roots with their standard error.
inline RmiseResult rmise(const std::vector<Eigen::MatrixXd>& estimated,
                         const std::vector<Eigen::MatrixXd>& truth) {
  if (estimated.size() != truth.size())
    throw std::invalid_argument("rmise: replication count mismatch");
  const std::size_t n = estimated.size();
  if (n < 2) throw std::invalid_argument("rmise: needs at least 2 replications");
  const Eigen::Index q_count = estimated.front().cols();
  RmiseResult out;
  out.mean.assign(static_cast<std::size_t>(q_count), 0.0);
  out.std_error.assign(static_cast<std::size_t>(q_count), 0.0);
  std::vector<std::vector<double>> roots(static_cast<std::size_t>(q_count),
                                         std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < n; ++r) {
    if (estimated[r].rows() != truth[r].rows() ||
        estimated[r].cols() != truth[r].cols() || estimated[r].cols() != q_count)
      throw std::invalid_argument("rmise: dimension mismatch");
    for (Eigen::Index q = 0; q < q_count; ++q) {
      const double ise =
          (estimated[r].col(q) - truth[r].col(q)).squaredNorm() /
          static_cast<double>(estimated[r].rows());
      roots[static_cast<std::size_t>(q)][r] = std::sqrt(ise);
    }
  }
  for (Eigen::Index q = 0; q < q_count; ++q) {
    const auto& v = roots[static_cast<std::size_t>(q)];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(n - 1);
    out.mean[static_cast<std::size_t>(q)] = 100.0 * mean;
    out.std_error[static_cast<std::size_t>(q)] =
        100.0 * std::sqrt(var / static_cast<double>(n));
  }
  return out;
}

struct TprTnr {
  double tpr = 0.0;
  std::optional<double> tnr;  // absent when the truth has no zero entries
};

/// Detection rates pooled over replications: a slope difference counts as
/// detected when |gamma+ - gamma-| exceeds tol.
inline TprTnr tpr_tnr(const std::vector<GammaSolution>& fits,
                      const SelectionTruth& truth, double tol = 1e-4) {
  if (!(tol > 0.0)) throw std::invalid_argument("tpr_tnr: tol must be > 0");
  long true_total = 0, true_detected = 0;
  long false_total = 0, false_undetected = 0;
  for (const auto& g : fits) {
    const Eigen::MatrixXd gamma = g.values();
    if (gamma.rows() != truth.variables() + 1 ||
        gamma.cols() != truth.steps() + 1)
      throw std::invalid_argument("tpr_tnr: dimension mismatch");
    for (Eigen::Index j = 0; j < truth.variables(); ++j) {
      for (Eigen::Index q = 0; q < truth.steps(); ++q) {
        const bool detected = std::fabs(gamma(j + 1, q + 1)) > tol;
        if (truth.nonzero(j, q)) {
          ++true_total;
          if (detected) ++true_detected;
        } else {
          ++false_total;
          if (!detected) ++false_undetected;
        }
      }
    }
  }
  TprTnr out;
  out.tpr = true_total == 0
                ? 0.0
                : static_cast<double>(true_detected) / static_cast<double>(true_total);
  if (false_total > 0)
    out.tnr = static_cast<double>(false_undetected) / static_cast<double>(false_total);
  return out;
}

/// Per-quantile tick loss of a realization against its forecast quantiles.
inline Eigen::VectorXd quantile_score(double y, const Eigen::VectorXd& forecast,
                                      const TauGrid& grid) {
  if (static_cast<std::size_t>(forecast.size()) != grid.size())
    throw std::invalid_argument("quantile_score: dimension mismatch");
  Eigen::VectorXd out(forecast.size());
  for (Eigen::Index q = 0; q < forecast.size(); ++q)
    out(q) = tick_loss(y - forecast(q), grid[static_cast<std::size_t>(q)]);
  return out;
}

/// Quantile-weighted CRPS: per period (1/Q) sum_q w(tau_q) QS_{t,q},
/// averaged over periods. With the uniform scheme this is exactly the mean
/// quantile score.
inline double qwcrps(const Eigen::MatrixXd& scores, const TauGrid& grid,
                     WeightScheme scheme) {
  if (static_cast<std::size_t>(scores.cols()) != grid.size())
    throw std::invalid_argument("qwcrps: dimension mismatch");
  if (scores.rows() == 0) return 0.0;
  const double q_count = static_cast<double>(grid.size());
  double total = 0.0;
  for (Eigen::Index t = 0; t < scores.rows(); ++t) {
    double period = 0.0;
    for (Eigen::Index q = 0; q < scores.cols(); ++q)
      period += scheme_weight(scheme, grid[static_cast<std::size_t>(q)]) * scores(t, q);
    total += period / q_count;
  }
  return total / static_cast<double>(scores.rows());
}

/// Log density at y under the piecewise-linear CDF through the sorted
/// forecast quantiles. Bin density is (tau_{q+1}-tau_q)/(f_{q+1}-f_q);
/// outside the forecast range the nearest bin's density applies; densities
/// are floored at 1e-10 (a zero-width bin containing y reports the floor).
inline double log_score(double y, const Eigen::VectorXd& sorted_forecast,
                        const TauGrid& grid) {
  const Eigen::Index q_count = sorted_forecast.size();
  if (static_cast<std::size_t>(q_count) != grid.size() || q_count < 2)
    throw std::invalid_argument("log_score: needs >= 2 quantiles");
  for (Eigen::Index q = 0; q + 1 < q_count; ++q)
    if (sorted_forecast(q + 1) < sorted_forecast(q))
      throw std::invalid_argument("log_score: forecasts must be sorted");
  constexpr double kFloor = 1e-10;
  auto bin_density = [&](Eigen::Index q) {
    const double width = sorted_forecast(q + 1) - sorted_forecast(q);
    if (!(width > 0.0)) return kFloor;
    const double dens = (grid[static_cast<std::size_t>(q + 1)] - grid[static_cast<std::size_t>(q)]) / width;
    return std::max(dens, kFloor);
  };
  Eigen::Index bin = q_count - 2;
  if (y < sorted_forecast(0)) {
    bin = 0;
  } else {
    for (Eigen::Index q = 0; q + 1 < q_count; ++q) {
      if (y >= sorted_forecast(q) && y <= sorted_forecast(q + 1)) {
        bin = q;
        break;
      }
    }
  }
  return std::log(bin_density(bin));
}

}  // namespace qrfuse
