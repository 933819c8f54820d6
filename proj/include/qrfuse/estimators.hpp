#pragma once

#include "qrfuse/core.hpp"
#include "qrfuse/lp.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace qrfuse {

enum class EstimatorKind { QR, BRW, GNCQR, FLQR, CQR };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::QR: return "QR";
    case EstimatorKind::BRW: return "BRW";
    case EstimatorKind::GNCQR: return "GNCQR";
    case EstimatorKind::FLQR: return "FLQR";
    case EstimatorKind::CQR: return "CQR";
  }
  return "?";
}

inline std::optional<EstimatorKind> parse_estimator_kind(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
    return static_cast<char>(std::toupper(c));
  });
  if (s == "QR") return EstimatorKind::QR;
  if (s == "BRW") return EstimatorKind::BRW;
  if (s == "GNCQR") return EstimatorKind::GNCQR;
  if (s == "FLQR") return EstimatorKind::FLQR;
  if (s == "CQR") return EstimatorKind::CQR;
  return std::nullopt;
}

/// Estimator choice plus its hyperparameter: the constraint scale alpha for
/// GNCQR, the interquantile shrinkage weight lambda for FLQR. The other
/// estimators take no hyperparameter.
struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::QR;
  std::optional<double> alpha;
  std::optional<double> lambda;

  static EstimatorConfig qr() { return {EstimatorKind::QR, {}, {}}; }
  static EstimatorConfig brw() { return {EstimatorKind::BRW, {}, {}}; }
  static EstimatorConfig cqr() { return {EstimatorKind::CQR, {}, {}}; }
  static EstimatorConfig gncqr(double a) { return {EstimatorKind::GNCQR, a, {}}; }
  static EstimatorConfig flqr(double l) { return {EstimatorKind::FLQR, {}, l}; }

  void validate() const {
    const bool want_alpha = kind == EstimatorKind::GNCQR;
    const bool want_lambda = kind == EstimatorKind::FLQR;
    if (alpha.has_value() != want_alpha)
      throw std::invalid_argument(want_alpha
                                      ? "GNCQR requires alpha"
                                      : "alpha is only valid for GNCQR");
    if (lambda.has_value() != want_lambda)
      throw std::invalid_argument(want_lambda
                                      ? "FLQR requires lambda"
                                      : "lambda is only valid for FLQR");
    if (alpha && !(std::isfinite(*alpha) && *alpha >= 0.0))
      throw std::invalid_argument("alpha must be finite and >= 0");
    if (lambda && !(std::isfinite(*lambda) && *lambda >= 0.0))
      throw std::invalid_argument("lambda must be finite and >= 0");
  }

  std::string describe() const {
    std::ostringstream os;
    os << to_string(kind);
    if (alpha) os << "(alpha=" << *alpha << ")";
    if (lambda) os << "(lambda=" << *lambda << ")";
    return os.str();
  }
};

/// Interquantile coefficient differences split into non-negative parts.
/// Row j=0 is the intercept difference; rows 1..K the slope differences;
/// column q holds the step from level q-1 to q (column 0 is the level at
/// the first quantile).
struct GammaSolution {
  Eigen::MatrixXd plus;   // (K+1) x Q
  Eigen::MatrixXd minus;  // (K+1) x Q

  Eigen::MatrixXd values() const { return plus - minus; }
};

/// Rewrites each split as (max(g,0), max(-g,0)) so at most one part is
/// non-zero. Cumulative sums (and therefore coefficients) are unchanged,
/// and every adaptive non-crossing row remains satisfied: lowering both
/// parts by their common minimum can only raise the row's slack.
inline GammaSolution canonicalize(const GammaSolution& g) {
  GammaSolution out;
  out.plus = (g.plus - g.minus).cwiseMax(0.0);
  out.minus = (g.minus - g.plus).cwiseMax(0.0);
  return out;
}

/// Joint fit across the quantile grid.
struct QuantileFit {
  std::vector<double> taus;
  Eigen::VectorXd xi;    // Q intercepts
  Eigen::MatrixXd beta;  // K x Q slopes
  GammaSolution gamma;
  double objective = 0.0;  // total tick loss over observations and quantiles
  EstimatorConfig estimator;
  double crossing_rate = 0.0;
  LpStatus status = LpStatus::Optimal;
  long lp_iterations = 0;
};

/// One adaptive non-crossing row for quantile index q (1-based, q >= 2), in
/// the form sum_j (plus[j] * gamma_plus[j] - minus[j] * gamma_minus[j]) >= 0
/// over that quantile's own differences. Index 0 is the intercept pair
/// (coefficients 1); slope coefficients shift the column mean toward the
/// column minimum (positive part) or maximum (negative part) as alpha grows.
struct NonCrossingRow {
  Eigen::VectorXd plus;
  Eigen::VectorXd minus;
};

inline NonCrossingRow build_constraint_row(const Dataset& ds, double alpha,
                                           int q) {
  if (q < 2) throw std::invalid_argument("build_constraint_row: q must be >= 2");
  if (!(alpha >= 0.0)) throw std::invalid_argument("build_constraint_row: alpha must be >= 0");
  ds.require_varying_columns();
  const Eigen::Index k = ds.cols();
  NonCrossingRow row;
  row.plus.resize(k + 1);
  row.minus.resize(k + 1);
  row.plus(0) = 1.0;
  row.minus(0) = 1.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto& s = ds.column_stats()[static_cast<std::size_t>(j)];
    row.plus(j + 1) = s.mean - alpha * (s.mean - s.min);
    row.minus(j + 1) = s.mean + alpha * (s.max - s.mean);
  }
  return row;
}

/// Sorts each row ascending: the rearrangement step that restores
/// monotonicity of fitted quantiles observation by observation.
inline Eigen::MatrixXd sort_quantiles(const Eigen::MatrixXd& fitted) {
  Eigen::MatrixXd out = fitted;
  std::vector<double> row(static_cast<std::size_t>(out.cols()));
  for (Eigen::Index t = 0; t < out.rows(); ++t) {
    for (Eigen::Index q = 0; q < out.cols(); ++q) row[static_cast<std::size_t>(q)] = out(t, q);
    std::sort(row.begin(), row.end());
    for (Eigen::Index q = 0; q < out.cols(); ++q) out(t, q) = row[static_cast<std::size_t>(q)];
  }
  return out;
}

/// Fraction of observations whose fitted quantiles decrease somewhere along
/// the grid by more than 1e-8.
inline double crossing_rate(const Eigen::MatrixXd& fitted) {
  if (fitted.rows() == 0 || fitted.cols() < 2) return 0.0;
  Eigen::Index crossed = 0;
  for (Eigen::Index t = 0; t < fitted.rows(); ++t) {
    for (Eigen::Index q = 0; q + 1 < fitted.cols(); ++q) {
      if (fitted(t, q + 1) < fitted(t, q) - 1e-8) {
        ++crossed;
        break;
      }
    }
  }
  return static_cast<double>(crossed) / static_cast<double>(fitted.rows());
}

namespace fit_detail {

/// Variable layout of the joint program. All estimators share the residual
/// split u+/u- per (t,q); the coefficient blocks differ: CQR pools slopes
/// across quantiles.
struct Layout {
  int t_count, k_count, q_count;
  bool shared_slopes;
  int n_gamma;

  Layout(int t, int k, int q, bool shared)
      : t_count(t), k_count(k), q_count(q), shared_slopes(shared) {
    n_gamma = shared ? 2 * q_count + 2 * k_count
                     : 2 * (k_count + 1) * q_count;
  }

  int gp(int j, int q) const {
    if (!shared_slopes) return 2 * (q * (k_count + 1) + j);
    return j == 0 ? 2 * q : 2 * q_count + 2 * (j - 1);
  }
  int gm(int j, int q) const { return gp(j, q) + 1; }
  int up(int t, int q) const { return n_gamma + 2 * (q * t_count + t); }
  int um(int t, int q) const { return up(t, q) + 1; }
  int total() const { return n_gamma + 2 * t_count * q_count; }
};

inline LpProblem build_program(const Dataset& ds, const TauGrid& grid,
                               const EstimatorConfig& cfg) {
  const int t_count = static_cast<int>(ds.rows());
  const int k_count = static_cast<int>(ds.cols());
  const int q_count = static_cast<int>(grid.size());
  const Layout lay(t_count, k_count, q_count,
                   cfg.kind == EstimatorKind::CQR);

  LpProblem p;
  p.n = lay.total();
  p.c.assign(static_cast<std::size_t>(p.n), 0.0);
  for (int q = 0; q < q_count; ++q) {
    const double tau = grid[static_cast<std::size_t>(q)];
    for (int t = 0; t < t_count; ++t) {
      p.c[static_cast<std::size_t>(lay.up(t, q))] = tau;
      p.c[static_cast<std::size_t>(lay.um(t, q))] = 1.0 - tau;
    }
  }
  if (cfg.kind == EstimatorKind::FLQR) {
    // Interquantile shrinkage on slope differences; the first quantile's
    // level and all intercept steps stay unpenalized.
    const double lambda = *cfg.lambda;
    for (int q = 1; q < q_count; ++q)
      for (int j = 1; j <= k_count; ++j) {
        p.c[static_cast<std::size_t>(lay.gp(j, q))] += lambda;
        p.c[static_cast<std::size_t>(lay.gm(j, q))] += lambda;
      }
  }

  // Residual identities: y_t = xi_q + x_t' beta_q + u+ - u-, with the
  // coefficients accumulated from the difference variables.
  for (int q = 0; q < q_count; ++q) {
    for (int t = 0; t < t_count; ++t) {
      SparseRow row;
      if (!lay.shared_slopes) {
        for (int r = 0; r <= q; ++r) {
          for (int j = 0; j <= k_count; ++j) {
            const double x = j == 0 ? 1.0 : ds.x()(t, j - 1);
            row.push(lay.gp(j, r), x);
            row.push(lay.gm(j, r), -x);
          }
        }
      } else {
        for (int r = 0; r <= q; ++r) {
          row.push(lay.gp(0, r), 1.0);
          row.push(lay.gm(0, r), -1.0);
        }
        for (int j = 1; j <= k_count; ++j) {
          const double x = ds.x()(t, j - 1);
          row.push(lay.gp(j, 0), x);
          row.push(lay.gm(j, 0), -x);
        }
      }
      row.push(lay.up(t, q), 1.0);
      row.push(lay.um(t, q), -1.0);
      p.a_eq.push_back(std::move(row));
      p.b_eq.push_back(ds.y()(t));
    }
  }

  if (cfg.kind == EstimatorKind::BRW || cfg.kind == EstimatorKind::GNCQR) {
    const double alpha = cfg.kind == EstimatorKind::BRW ? 1.0 : *cfg.alpha;
    for (int q = 1; q < q_count; ++q) {
      const NonCrossingRow nc = build_constraint_row(ds, alpha, q + 1);
      SparseRow row;  // flipped into <= 0 form
      for (int j = 0; j <= k_count; ++j) {
        row.push(lay.gp(j, q), -nc.plus(j));
        row.push(lay.gm(j, q), nc.minus(j));
      }
      p.a_ub.push_back(std::move(row));
      p.b_ub.push_back(0.0);
    }
  }
  return p;
}

}  // namespace fit_detail

/// Solves the joint quantile program for the configured estimator and
/// reconstructs coefficients from the canonicalized difference variables.
/// Infeasible or unbounded programs raise FitError; hitting the iteration
/// limit is reported through the returned status instead of silently
/// degraded coefficients.
inline QuantileFit fit(const Dataset& ds, const TauGrid& grid,
                       const EstimatorConfig& cfg,
                       const LpOptions& lp_opt = {}) {
  cfg.validate();
  if (cfg.kind == EstimatorKind::BRW || cfg.kind == EstimatorKind::GNCQR)
    ds.require_varying_columns();

  const int t_count = static_cast<int>(ds.rows());
  const int k_count = static_cast<int>(ds.cols());
  const int q_count = static_cast<int>(grid.size());
  const fit_detail::Layout lay(t_count, k_count, q_count,
                               cfg.kind == EstimatorKind::CQR);

  const LpProblem p = fit_detail::build_program(ds, grid, cfg);
  const LpSolution sol = solve(p, lp_opt);
  if (sol.status == LpStatus::Infeasible || sol.status == LpStatus::Unbounded)
    throw FitError(cfg.describe() + ": LP " + to_string(sol.status) + " (T=" +
                   std::to_string(t_count) + ", K=" + std::to_string(k_count) +
                   ", Q=" + std::to_string(q_count) + ")");

  GammaSolution g;
  g.plus = Eigen::MatrixXd::Zero(k_count + 1, q_count);
  g.minus = Eigen::MatrixXd::Zero(k_count + 1, q_count);
  for (int q = 0; q < q_count; ++q) {
    for (int j = 0; j <= k_count; ++j) {
      if (lay.shared_slopes && j > 0 && q > 0) continue;
      g.plus(j, q) = sol.z[static_cast<std::size_t>(lay.gp(j, q))];
      g.minus(j, q) = sol.z[static_cast<std::size_t>(lay.gm(j, q))];
    }
  }
  g = canonicalize(g);

  QuantileFit out;
  out.taus = grid.values();
  out.estimator = cfg;
  out.status = sol.status;
  out.lp_iterations = sol.iterations;
  out.gamma = g;
  out.xi.resize(q_count);
  out.beta.resize(k_count, q_count);
  const Eigen::MatrixXd gamma = g.values();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(k_count + 1);
  for (int q = 0; q < q_count; ++q) {
    acc += gamma.col(q);
    out.xi(q) = acc(0);
    for (int j = 0; j < k_count; ++j) out.beta(j, q) = acc(j + 1);
  }

  const Eigen::MatrixXd fitted = fitted_quantiles(ds.x(), out.xi, out.beta);
  double obj = 0.0;
  for (int q = 0; q < q_count; ++q)
    for (int t = 0; t < t_count; ++t)
      obj += tick_loss(ds.y()(t) - fitted(t, q), grid[static_cast<std::size_t>(q)]);
  out.objective = obj;
  out.crossing_rate = crossing_rate(fitted);
  return out;
}

/// Fitted surface at new covariates.
inline Eigen::MatrixXd fitted_quantiles(const QuantileFit& fit,
                                        const Eigen::MatrixXd& x) {
  return fitted_quantiles(x, fit.xi, fit.beta);
}

/// Result of fitting on min-max rescaled data: coefficients are reported on
/// the original scale, while the difference variables (used for selection
/// diagnostics) stay on the unit scale.
struct RescaledFit {
  QuantileFit scaled;    // as estimated on [0,1] columns
  QuantileFit original;  // coefficients transported back
  AffineMap map;
};

inline RescaledFit fit_rescaled(const Dataset& ds, const TauGrid& grid,
                                const EstimatorConfig& cfg,
                                const LpOptions& lp_opt = {}) {
  auto [scaled_ds, map] = scale_to_unit(ds);
  RescaledFit out;
  out.map = map;
  out.scaled = fit(scaled_ds, grid, cfg, lp_opt);
  out.original = out.scaled;
  for (int q = 0; q < static_cast<int>(grid.size()); ++q) {
    Eigen::VectorXd coef(ds.cols() + 1);
    coef(0) = out.scaled.xi(q);
    coef.tail(ds.cols()) = out.scaled.beta.col(q);
    const Eigen::VectorXd orig = inverse_transform_coefficients(coef, map);
    out.original.xi(q) = orig(0);
    out.original.beta.col(q) = orig.tail(ds.cols());
  }
  return out;
}

}  // namespace qrfuse
