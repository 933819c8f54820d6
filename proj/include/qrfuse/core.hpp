#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qrfuse {

/// Input-data problem (malformed table, degenerate column, ...).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An estimator failed to produce a usable solution.
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ColumnStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

/// Design matrix plus response. Immutable after construction; per-column
/// statistics are computed once here and reused by every constraint builder,
/// so subsetting (e.g. a CV fold) yields fold-local statistics.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd x, Eigen::VectorXd y)
      : x_(std::move(x)), y_(std::move(y)) {
    if (x_.rows() != y_.size())
      throw DataError("Dataset: X has " + std::to_string(x_.rows()) +
                      " rows but y has " + std::to_string(y_.size()));
    if (x_.rows() < 1) throw DataError("Dataset: needs at least one row");
    if (!x_.allFinite() || !y_.allFinite())
      throw DataError("Dataset: non-finite entries");
    stats_.resize(static_cast<std::size_t>(x_.cols()));
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      stats_[static_cast<std::size_t>(j)] = {x_.col(j).minCoeff(),
                                             x_.col(j).mean(),
                                             x_.col(j).maxCoeff()};
    }
    if (x_.rows() < x_.cols() + 1)
      warnings_.push_back("fewer observations than parameters (T < K+1); "
                          "the fit may be degenerate");
  }

  const Eigen::MatrixXd& x() const { return x_; }
  const Eigen::VectorXd& y() const { return y_; }
  Eigen::Index rows() const { return x_.rows(); }
  Eigen::Index cols() const { return x_.cols(); }
  const std::vector<ColumnStats>& column_stats() const { return stats_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Row subset with statistics recomputed on the subset.
  Dataset subset(const std::vector<int>& rows) const {
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(rows.size()), x_.cols());
    Eigen::VectorXd ys(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      xs.row(static_cast<Eigen::Index>(i)) = x_.row(rows[i]);
      ys(static_cast<Eigen::Index>(i)) = y_(rows[i]);
    }
    return Dataset(std::move(xs), std::move(ys));
  }

  /// Throws if some column is constant (max == min), naming the column.
  void require_varying_columns() const {
    for (std::size_t j = 0; j < stats_.size(); ++j) {
      if (!(stats_[j].max > stats_[j].min))
        throw DataError("column " + std::to_string(j + 1) +
                        " is constant (min == max == " +
                        std::to_string(stats_[j].min) + ")");
    }
  }

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  std::vector<ColumnStats> stats_;
  std::vector<std::string> warnings_;
};

/// Strictly increasing quantile levels in (0,1).
class TauGrid {
 public:
  explicit TauGrid(std::vector<double> taus) : taus_(std::move(taus)) {
    if (taus_.empty()) throw std::invalid_argument("TauGrid: empty");
    for (std::size_t q = 0; q < taus_.size(); ++q) {
      if (!(taus_[q] > 0.0 && taus_[q] < 1.0))
        throw std::invalid_argument("TauGrid: levels must lie in (0,1)");
      if (q > 0 && !(taus_[q] > taus_[q - 1]))
        throw std::invalid_argument("TauGrid: levels must strictly increase");
    }
  }

  /// Grid start, start+step, ..., up to stop (inclusive within rounding).
  static TauGrid equispaced(double start, double stop, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("TauGrid: step must be > 0");
    std::vector<double> taus;
    for (double t = start; t <= stop + 1e-12; t += step) taus.push_back(t);
    return TauGrid(std::move(taus));
  }

  std::size_t size() const { return taus_.size(); }
  double operator[](std::size_t q) const { return taus_[q]; }
  const std::vector<double>& values() const { return taus_; }

 private:
  std::vector<double> taus_;
};

/// Per-column affine rescaling x~_j = (x_j - shift_j) / scale_j, scale_j > 0.
struct AffineMap {
  std::vector<double> shift;
  std::vector<double> scale;

  std::size_t size() const { return shift.size(); }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    check(x.cols());
    Eigen::MatrixXd out = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      out.col(j) = (x.col(j).array() - shift[static_cast<std::size_t>(j)]) /
                   scale[static_cast<std::size_t>(j)];
    return out;
  }

  Eigen::MatrixXd invert(const Eigen::MatrixXd& x_scaled) const {
    check(x_scaled.cols());
    Eigen::MatrixXd out = x_scaled;
    for (Eigen::Index j = 0; j < x_scaled.cols(); ++j)
      out.col(j) = x_scaled.col(j).array() * scale[static_cast<std::size_t>(j)] +
                   shift[static_cast<std::size_t>(j)];
    return out;
  }

  void check(Eigen::Index cols) const {
    if (static_cast<std::size_t>(cols) != shift.size())
      throw std::invalid_argument("AffineMap: dimension mismatch");
  }
};

/// Asymmetric absolute loss u * (tau - 1{u<0}); the objective kernel of
/// quantile regression and the quantile score of a forecast residual.
inline double tick_loss(double u, double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::domain_error("tick_loss: tau must lie in (0,1)");
  return u >= 0.0 ? tau * u : (tau - 1.0) * u;
}

/// Min-max rescaling of every column onto [0,1]. Requires varying columns.
inline std::pair<Dataset, AffineMap> scale_to_unit(const Dataset& ds) {
  ds.require_varying_columns();
  AffineMap map;
  map.shift.resize(static_cast<std::size_t>(ds.cols()));
  map.scale.resize(static_cast<std::size_t>(ds.cols()));
  for (Eigen::Index j = 0; j < ds.cols(); ++j) {
    const auto& s = ds.column_stats()[static_cast<std::size_t>(j)];
    map.shift[static_cast<std::size_t>(j)] = s.min;
    map.scale[static_cast<std::size_t>(j)] = s.max - s.min;
  }
  return {Dataset(map.apply(ds.x()), ds.y()), map};
}

/// Transports coefficients estimated on rescaled data back to the original
/// scale. Layout: coef[0] is the intercept, coef[1..K] the slopes. Fitted
/// values are unchanged: x~' b~ + xi~ == x' b + xi.
inline Eigen::VectorXd inverse_transform_coefficients(
    const Eigen::VectorXd& coef_scaled, const AffineMap& map) {
  if (static_cast<std::size_t>(coef_scaled.size()) != map.size() + 1)
    throw std::invalid_argument(
        "inverse_transform_coefficients: expected intercept plus one slope "
        "per mapped column");
  Eigen::VectorXd out(coef_scaled.size());
  double intercept = coef_scaled(0);
  for (std::size_t j = 0; j < map.size(); ++j) {
    out(static_cast<Eigen::Index>(j) + 1) = coef_scaled(static_cast<Eigen::Index>(j) + 1) / map.scale[j];
    intercept -= coef_scaled(static_cast<Eigen::Index>(j) + 1) * map.shift[j] / map.scale[j];
  }
  out(0) = intercept;
  return out;
}

/// Evaluates the fitted quantile surface: entry (t,q) = xi_q + x_t' beta_q.
/// xi has length Q, beta is K x Q.
inline Eigen::MatrixXd fitted_quantiles(const Eigen::MatrixXd& x,
                                        const Eigen::VectorXd& xi,
                                        const Eigen::MatrixXd& beta) {
  if (x.cols() != beta.rows() || xi.size() != beta.cols())
    throw std::invalid_argument("fitted_quantiles: dimension mismatch");
  Eigen::MatrixXd out = x * beta;
  out.rowwise() += xi.transpose();
  return out;
}

}  // namespace qrfuse
