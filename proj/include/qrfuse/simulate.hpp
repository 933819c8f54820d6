#pragma once

#include "qrfuse/core.hpp"
#include "qrfuse/estimators.hpp"
#include "qrfuse/metrics.hpp"
#include "qrfuse/parallel.hpp"
#include "qrfuse/rng.hpp"
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

/// Location-scale generating process
///   y = beta0 + beta'x + (theta0 + theta_eff(eps)'x) eps,
///   x_k ~ U(0,1), eps ~ N(0,1),
/// where theta_eff = theta plus theta_gated on draws with |eps| >= gate_z.
/// The gated block lets chosen variables move only the tails.
struct DgpSpec {
  std::string name;
  int k_count = 0;
  double beta0 = 1.0;
  double theta0 = 1.0;
  Eigen::VectorXd beta;
  Eigen::VectorXd theta;        // always-active scale slopes
  Eigen::VectorXd theta_gated;  // added beyond the gate
  double gate_z = 0.0;          // 0 disables the gate

  bool gated() const { return gate_z > 0.0 && (theta_gated.array() != 0.0).any(); }

  static DgpSpec y1() {
    DgpSpec d;
    d.name = "y1";
    d.k_count = 4;
    d.beta = Eigen::VectorXd::Ones(4);
    d.theta = Eigen::VectorXd::Constant(4, 0.1);
    d.theta_gated = Eigen::VectorXd::Zero(4);
    return d;
  }
  static DgpSpec y2() {
    DgpSpec d;
    d.name = "y2";
    d.k_count = 10;
    d.beta = Eigen::VectorXd::Zero(10);
    d.beta.head(4).setOnes();
    d.theta = Eigen::VectorXd::Zero(10);
    d.theta.head(4).setConstant(0.1);
    d.theta_gated = Eigen::VectorXd::Zero(10);
    return d;
  }
  static DgpSpec y3() {
    DgpSpec d;
    d.name = "y3";
    d.k_count = 7;
    d.beta = Eigen::VectorXd::Ones(7);
    d.theta = Eigen::VectorXd::Zero(7);
    d.theta.head(3).setOnes();
    d.theta_gated = Eigen::VectorXd::Zero(7);
    return d;
  }
  /// Like y2 but variables 5-8 carry scale only beyond the 0.9 noise
  /// quantile, so their quantile variation lives in the tails.
  static DgpSpec y4() {
    DgpSpec d;
    d.name = "y4";
    d.k_count = 10;
    d.beta = Eigen::VectorXd::Zero(10);
    d.beta.head(4).setOnes();
    d.theta = Eigen::VectorXd::Zero(10);
    d.theta.head(4).setConstant(0.1);
    d.theta_gated = Eigen::VectorXd::Zero(10);
    d.theta_gated.segment(4, 4).setConstant(0.1);
    d.gate_z = normal_quantile(0.9);
    return d;
  }

  static std::optional<DgpSpec> by_name(const std::string& name) {
    if (name == "y1") return y1();
    if (name == "y2") return y2();
    if (name == "y3") return y3();
    if (name == "y4") return y4();
    return std::nullopt;
  }
};

/// One simulated dataset plus fresh evaluation points for integrated-error
/// scoring; reproducible from (spec, T, seed).
struct Replication {
  std::uint64_t seed = 0;
  Dataset data;
  Eigen::MatrixXd eval_points;
};

inline Replication draw(const DgpSpec& dgp, int t_count, std::uint64_t seed,
                        int n_eval = 1000) {
  Rng rng(mix_seed(seed, 1));
  Eigen::MatrixXd x(t_count, dgp.k_count);
  for (int t = 0; t < t_count; ++t)
    for (int j = 0; j < dgp.k_count; ++j) x(t, j) = rng.uniform();
  Eigen::VectorXd y(t_count);
  for (int t = 0; t < t_count; ++t) {
    const double eps = rng.normal();
    Eigen::VectorXd theta_eff = dgp.theta;
    if (dgp.gate_z > 0.0 && std::fabs(eps) >= dgp.gate_z)
      theta_eff += dgp.theta_gated;
    const double scale = dgp.theta0 + theta_eff.dot(x.row(t));
    y(t) = dgp.beta0 + dgp.beta.dot(x.row(t)) + scale * eps;
  }
  Rng rng_eval(mix_seed(seed, 2));
  Eigen::MatrixXd pts(n_eval, dgp.k_count);
  for (int i = 0; i < n_eval; ++i)
    for (int j = 0; j < dgp.k_count; ++j) pts(i, j) = rng_eval.uniform();
  return Replication{seed, Dataset(std::move(x), std::move(y)), std::move(pts)};
}

/// Whether the gated block is active at quantile level tau: the gate fires
/// for |eps| at or beyond the 0.9 noise quantile, i.e. tau <= 0.1 or
/// tau >= 0.9 (boundaries included).
inline bool gate_active_at(const DgpSpec& dgp, double tau) {
  if (!(dgp.gate_z > 0.0)) return false;
  const double p = normal_cdf(dgp.gate_z);  // 0.9
  return tau <= (1.0 - p) + 1e-12 || tau >= p - 1e-12;
}

/// True conditional quantile g_tau(x) = beta0 + beta'x + sigma(x) z_tau with
/// sigma(x) = theta0 + theta_eff(tau)'x.
inline double true_quantile(const DgpSpec& dgp, const Eigen::VectorXd& x,
                            double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::domain_error("true_quantile: tau must lie in (0,1)");
  if (x.size() != dgp.k_count)
    throw std::invalid_argument("true_quantile: dimension mismatch");
  Eigen::VectorXd theta_eff = dgp.theta;
  if (gate_active_at(dgp, tau)) theta_eff += dgp.theta_gated;
  const double scale = dgp.theta0 + theta_eff.dot(x);
  return dgp.beta0 + dgp.beta.dot(x) + scale * normal_quantile(tau);
}

/// True slope of variable j (1-based) at level tau.
inline double true_slope(const DgpSpec& dgp, int j, double tau) {
  double th = dgp.theta(j - 1);
  if (gate_active_at(dgp, tau)) th += dgp.theta_gated(j - 1);
  return dgp.beta(j - 1) + th * normal_quantile(tau);
}

/// Analytic selection truth: entry (j, q) is true when the slope of
/// variable j+1 changes between adjacent grid levels q+1 and q+2.
inline SelectionTruth selection_truth(const DgpSpec& dgp, const TauGrid& grid) {
  SelectionTruth truth;
  truth.nonzero.resize(dgp.k_count, static_cast<Eigen::Index>(grid.size()) - 1);
  for (int j = 1; j <= dgp.k_count; ++j) {
    for (std::size_t q = 1; q < grid.size(); ++q) {
      const double diff = true_slope(dgp, j, grid[q]) - true_slope(dgp, j, grid[q - 1]);
      truth.nonzero(j - 1, static_cast<Eigen::Index>(q) - 1) = std::fabs(diff) > 1e-12;
    }
  }
  return truth;
}

/// One estimator entry in an experiment: either a fixed hyperparameter or a
/// grid to cross-validate per replication.
struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::QR;
  std::optional<double> fixed_hyper;
  std::optional<HyperGrid> hypergrid;

  bool needs_selection() const {
    return (kind == EstimatorKind::GNCQR || kind == EstimatorKind::FLQR) &&
           !fixed_hyper.has_value();
  }
  std::string label() const { return to_string(kind); }
};

struct ExperimentConfig {
  DgpSpec dgp;
  int t_count = 100;
  TauGrid taus = TauGrid::equispaced(0.1, 0.9, 0.2);
  std::vector<EstimatorSpec> estimators;
  int n_reps = 500;
  std::uint64_t seed = 0;
  int jobs = 1;
  int cv_fold_count = 10;
  int n_eval = 1000;
  double detect_tol = 1e-4;
  LpOptions lp;
};

struct EstimatorResult {
  std::string estimator;
  std::vector<double> rmise;     // per quantile level, x100
  std::vector<double> rmise_se;  // per quantile level, x100
  TprTnr rates;
  int n_failed = 0;
  double mean_selected_hyper = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentResult {
  std::vector<double> taus;
  std::vector<EstimatorResult> estimators;
  SelectionTruth truth;
  int n_reps = 0;
};

/// Monte Carlo driver: per replication draw, rescale columns onto [0,1],
/// cross-validate hyperparameters where requested, fit every estimator, and
/// pool integrated-error and selection metrics. Replications run in
/// parallel; reductions are by replication index, so results do not depend
/// on the job count.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const int n_est = static_cast<int>(cfg.estimators.size());
  const int q_count = static_cast<int>(cfg.taus.size());
  if (n_est == 0) throw std::invalid_argument("run_experiment: no estimators");

  struct RepOutcome {
    std::vector<char> ok;
    std::vector<Eigen::MatrixXd> estimated;  // per estimator, n_eval x Q
    std::vector<GammaSolution> gamma;
    std::vector<double> hyper;
  };
  std::vector<RepOutcome> reps(static_cast<std::size_t>(cfg.n_reps));
  std::vector<Eigen::MatrixXd> truth_surface(static_cast<std::size_t>(cfg.n_reps));

  parallel_for(cfg.n_reps, cfg.jobs, [&](int r) {
    const std::uint64_t rep_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(r) + 10);
    const Replication rep = draw(cfg.dgp, cfg.t_count, rep_seed, cfg.n_eval);
    auto [scaled, map] = scale_to_unit(rep.data);

    Eigen::MatrixXd truth(rep.eval_points.rows(), q_count);
    for (Eigen::Index i = 0; i < rep.eval_points.rows(); ++i)
      for (int q = 0; q < q_count; ++q)
        truth(i, q) = true_quantile(cfg.dgp, rep.eval_points.row(i).transpose(),
                                    cfg.taus[static_cast<std::size_t>(q)]);
    truth_surface[static_cast<std::size_t>(r)] = std::move(truth);

    RepOutcome& out = reps[static_cast<std::size_t>(r)];
    out.ok.assign(static_cast<std::size_t>(n_est), 0);
    out.estimated.resize(static_cast<std::size_t>(n_est));
    out.gamma.resize(static_cast<std::size_t>(n_est));
    out.hyper.assign(static_cast<std::size_t>(n_est),
                     std::numeric_limits<double>::quiet_NaN());
    for (int e = 0; e < n_est; ++e) {
      const EstimatorSpec& spec = cfg.estimators[static_cast<std::size_t>(e)];
      try {
        EstimatorConfig est;
        if (spec.kind == EstimatorKind::GNCQR || spec.kind == EstimatorKind::FLQR) {
          double value;
          if (spec.fixed_hyper) {
            value = *spec.fixed_hyper;
          } else {
            if (!spec.hypergrid)
              throw std::invalid_argument("run_experiment: " + spec.label() +
                                          " needs a hypergrid or fixed value");
            CvPlan plan;
            plan.fold_count = cfg.cv_fold_count;
            plan.h = 0;
            plan.shuffled = true;
            const GridSearchResult gs =
                grid_search(scaled, cfg.taus, spec.kind, *spec.hypergrid, plan,
                            mix_seed(rep_seed, static_cast<std::uint64_t>(e) + 100), 1, cfg.lp);
            value = gs.best_value;
          }
          out.hyper[static_cast<std::size_t>(e)] = value;
          est = spec.kind == EstimatorKind::GNCQR ? EstimatorConfig::gncqr(value)
                                                  : EstimatorConfig::flqr(value);
        } else {
          est.kind = spec.kind;
        }
        const QuantileFit f = fit(scaled, cfg.taus, est, cfg.lp);
        if (f.status != LpStatus::Optimal) continue;
        out.gamma[static_cast<std::size_t>(e)] = f.gamma;
        // Transport coefficients back to the original scale and evaluate on
        // the fresh points.
        Eigen::VectorXd xi = f.xi;
        Eigen::MatrixXd beta = f.beta;
        for (int q = 0; q < q_count; ++q) {
          Eigen::VectorXd coef(cfg.dgp.k_count + 1);
          coef(0) = f.xi(q);
          coef.tail(cfg.dgp.k_count) = f.beta.col(q);
          const Eigen::VectorXd orig = inverse_transform_coefficients(coef, map);
          xi(q) = orig(0);
          beta.col(q) = orig.tail(cfg.dgp.k_count);
        }
        out.estimated[static_cast<std::size_t>(e)] =
            fitted_quantiles(rep.eval_points, xi, beta);
        out.ok[static_cast<std::size_t>(e)] = 1;
      } catch (const FitError&) {
        // replication recorded as failed for this estimator
      }
    }
  });

  ExperimentResult result;
  result.taus = cfg.taus.values();
  result.truth = selection_truth(cfg.dgp, cfg.taus);
  result.n_reps = cfg.n_reps;
  for (int e = 0; e < n_est; ++e) {
    EstimatorResult er;
    er.estimator = cfg.estimators[static_cast<std::size_t>(e)].label();
    std::vector<Eigen::MatrixXd> est, tru;
    std::vector<GammaSolution> gammas;
    double hyper_sum = 0.0;
    int hyper_n = 0;
    for (int r = 0; r < cfg.n_reps; ++r) {
      const RepOutcome& out = reps[static_cast<std::size_t>(r)];
      if (!out.ok[static_cast<std::size_t>(e)]) {
        ++er.n_failed;
        continue;
      }
      est.push_back(out.estimated[static_cast<std::size_t>(e)]);
      tru.push_back(truth_surface[static_cast<std::size_t>(r)]);
      gammas.push_back(out.gamma[static_cast<std::size_t>(e)]);
      if (!std::isnan(out.hyper[static_cast<std::size_t>(e)])) {
        hyper_sum += out.hyper[static_cast<std::size_t>(e)];
        ++hyper_n;
      }
    }
    if (est.size() >= 2) {
      const RmiseResult rm = rmise(est, tru);
      er.rmise = rm.mean;
      er.rmise_se = rm.std_error;
    }
    if (!gammas.empty()) er.rates = tpr_tnr(gammas, result.truth, cfg.detect_tol);
    if (hyper_n > 0) er.mean_selected_hyper = hyper_sum / hyper_n;
    result.estimators.push_back(std::move(er));
  }
  return result;
}

}  // namespace qrfuse
