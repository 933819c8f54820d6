#pragma once

#include "qrfuse/estimators.hpp"
#include "qrfuse/forecast.hpp"
#include "qrfuse/selection.hpp"
#include "qrfuse/simulate.hpp"

#include <json.hpp>

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace qrfuse {

/// Full-precision decimal formatting so re-reads round-trip.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline nlohmann::json to_json(const EstimatorConfig& cfg) {
  nlohmann::json j;
  j["kind"] = to_string(cfg.kind);
  if (cfg.alpha) j["alpha"] = *cfg.alpha;
  if (cfg.lambda) j["lambda"] = *cfg.lambda;
  return j;
}

/// Fit as JSON: beta is stored column-major by quantile (one array of slope
/// coefficients per grid level).
inline nlohmann::json to_json(const QuantileFit& fit) {
  nlohmann::json j;
  j["taus"] = fit.taus;
  j["xi"] = std::vector<double>(fit.xi.data(), fit.xi.data() + fit.xi.size());
  nlohmann::json beta = nlohmann::json::array();
  for (Eigen::Index q = 0; q < fit.beta.cols(); ++q) {
    std::vector<double> col(static_cast<std::size_t>(fit.beta.rows()));
    for (Eigen::Index k = 0; k < fit.beta.rows(); ++k) col[static_cast<std::size_t>(k)] = fit.beta(k, q);
    beta.push_back(col);
  }
  j["beta"] = beta;
  j["objective"] = fit.objective;
  j["estimator"] = to_json(fit.estimator);
  j["crossing_rate"] = fit.crossing_rate;
  j["status"] = to_string(fit.status);
  return j;
}

/// Tidy coefficient table (tau, variable, coefficient) for profile plots.
inline void write_coefficients_csv(const QuantileFit& fit,
                                   const std::vector<std::string>& x_names,
                                   std::ostream& os) {
  os << "tau,variable,coefficient\n";
  for (std::size_t q = 0; q < fit.taus.size(); ++q) {
    os << fmt(fit.taus[q]) << ",intercept," << fmt(fit.xi(static_cast<Eigen::Index>(q))) << "\n";
    for (Eigen::Index k = 0; k < fit.beta.rows(); ++k) {
      const std::string name = k < static_cast<Eigen::Index>(x_names.size())
                                   ? x_names[static_cast<std::size_t>(k)]
                                   : "x" + std::to_string(k + 1);
      os << fmt(fit.taus[q]) << "," << name << ","
         << fmt(fit.beta(k, static_cast<Eigen::Index>(q))) << "\n";
    }
  }
}

/// Grid-search profile rows behind hyperparameter plots.
inline void write_cv_profile_csv(const GridSearchResult& res, std::ostream& os) {
  os << "candidate,in_sample_loss,oos_loss,n_failed_folds\n";
  for (std::size_t c = 0; c < res.candidates.size(); ++c) {
    os << fmt(res.candidates[c]) << "," << fmt(res.in_sample_loss[c]) << ","
       << fmt(res.oos_loss[c]) << "," << res.n_failed_folds[c] << "\n";
  }
}

inline nlohmann::json to_json(const GridSearchResult& res) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t c = 0; c < res.candidates.size(); ++c) {
    nlohmann::json row;
    row["candidate"] = res.candidates[c];
    if (!std::isnan(res.in_sample_loss[c])) row["in_sample_loss"] = res.in_sample_loss[c];
    if (!std::isnan(res.oos_loss[c])) row["oos_loss"] = res.oos_loss[c];
    row["n_failed_folds"] = res.n_failed_folds[c];
    rows.push_back(row);
  }
  nlohmann::json j;
  j["profile"] = rows;
  j["best"] = res.best_value;
  return j;
}

/// Integrated-error table: one row per estimator and grid level.
inline void write_rmise_csv(const ExperimentResult& res, const std::string& dgp,
                            int t_count, std::ostream& os) {
  os << "dgp,T,estimator,tau,rmise,std_error\n";
  for (const auto& est : res.estimators) {
    for (std::size_t q = 0; q < res.taus.size(); ++q) {
      os << dgp << "," << t_count << "," << est.estimator << ","
         << fmt(res.taus[q]) << ",";
      if (q < est.rmise.size())
        os << fmt(est.rmise[q]) << "," << fmt(est.rmise_se[q]);
      else
        os << ",";
      os << "\n";
    }
  }
}

/// Selection-rate table; tnr is blank when the truth has no zero entries.
inline void write_rates_csv(const ExperimentResult& res, const std::string& dgp,
                            int t_count, std::ostream& os) {
  os << "dgp,T,estimator,tpr,tnr,n_failed\n";
  for (const auto& est : res.estimators) {
    os << dgp << "," << t_count << "," << est.estimator << ","
       << fmt(est.rates.tpr) << ",";
    if (est.rates.tnr) os << fmt(*est.rates.tnr);
    os << "," << est.n_failed << "\n";
  }
}

inline void write_forecasts_csv(const std::vector<std::pair<std::string, RollingResult>>& runs,
                                const TauGrid& grid, std::ostream& os) {
  os << "estimator,date,tau,unsorted,sorted,realized\n";
  for (const auto& [name, run] : runs) {
    for (const auto& w : run.windows) {
      if (!w.ok) continue;
      for (std::size_t q = 0; q < grid.size(); ++q) {
        os << name << "," << w.date << "," << fmt(grid[q]) << ","
           << fmt(w.raw(static_cast<Eigen::Index>(q))) << ","
           << fmt(w.sorted(static_cast<Eigen::Index>(q))) << "," << fmt(w.realized) << "\n";
      }
    }
  }
}

inline void write_scores_csv(const std::vector<std::pair<std::string, ExerciseScores>>& scored,
                             std::ostream& os) {
  os << "estimator,crps,center,left,crps_sorted,center_sorted,left_sorted,"
        "log_score_sorted,n_windows,n_failed\n";
  for (const auto& [name, s] : scored) {
    os << name << "," << fmt(s.crps_unsorted) << "," << fmt(s.center_unsorted)
       << "," << fmt(s.left_unsorted) << "," << fmt(s.crps_sorted) << ","
       << fmt(s.center_sorted) << "," << fmt(s.left_sorted) << ","
       << fmt(s.log_score_sorted) << "," << s.n_scored << "," << s.n_failed
       << "\n";
  }
}

}  // namespace qrfuse
