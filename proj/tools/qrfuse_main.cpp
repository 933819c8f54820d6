// qrfuse: joint quantile regression with adaptive non-crossing constraints
// and interquantile shrinkage. Subcommands: fit, cv, simulate, forecast.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver
// failure.

#include "qrfuse/csv.hpp"
#include "qrfuse/estimators.hpp"
#include "qrfuse/forecast.hpp"
#include "qrfuse/io.hpp"
#include "qrfuse/selection.hpp"
#include "qrfuse/simulate.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace qrfuse;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitSolver = 4;

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

TauGrid parse_taus(const std::string& range_spec, const std::string& list_spec) {
  if (!list_spec.empty()) {
    std::vector<double> taus;
    for (const auto& item : split_list(list_spec)) taus.push_back(std::stod(item));
    return TauGrid(taus);
  }
  const std::string spec = range_spec.empty() ? "0.1:0.9:0.1" : range_spec;
  double start = 0, stop = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(spec);
  if (!(in >> start >> c1 >> stop >> c2 >> step) || c1 != ':' || c2 != ':')
    throw ConfigError("--taus expects start:stop:step, got '" + spec + "'");
  return TauGrid::equispaced(start, stop, step);
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, bool required) {
  if (flag) return *flag;
  if (const char* env = std::getenv("QRFUSE_SEED")) return std::stoull(env);
  if (required)
    throw ConfigError("a seed is required: pass --seed or set QRFUSE_SEED");
  return 0;
}

fs::path prepare_out_dir(const std::string& out) {
  fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  os << text;
}

template <typename Fn>
void write_with(const fs::path& path, Fn&& fn) {
  std::ostringstream os;
  fn(os);
  write_text(path, os.str());
}

struct GridFlags {
  std::string linear = "100:1";
  std::string log = "200:6";
  std::string list;

  HyperGrid build() const {
    if (!list.empty()) {
      std::vector<double> v;
      for (const auto& item : split_list(list)) v.push_back(std::stod(item));
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      HyperGrid g{v};
      g.validate();
      return g;
    }
    auto parse_pair = [](const std::string& spec, const char* flag) {
      const auto colon = spec.find(':');
      if (colon == std::string::npos)
        throw ConfigError(std::string(flag) + " expects COUNT:LIMIT, got '" + spec + "'");
      return std::pair<int, double>{std::stoi(spec.substr(0, colon)),
                                    std::stod(spec.substr(colon + 1))};
    };
    const auto [n_lin, hi_lin] = parse_pair(linear, "--grid-linear");
    const auto [n_log, hi_log] = parse_pair(log, "--grid-log");
    return make_grid(n_lin, hi_lin, n_log, hi_log);
  }
};

EstimatorKind parse_kind_or_throw(const std::string& name) {
  const auto kind = parse_estimator_kind(name);
  if (!kind) throw ConfigError("unknown estimator '" + name + "'");
  return *kind;
}

/// Composition of standardize (optional) and min-max maps, so reported
/// coefficients always refer to the original columns.
struct FitPipeline {
  bool rescale = false;
  bool standardize = false;

  QuantileFit run(const Dataset& ds, const TauGrid& taus,
                  const EstimatorConfig& cfg, const LpOptions& lp) const {
    if (!rescale && !standardize) return fit(ds, taus, cfg, lp);
    Dataset work = ds;
    AffineMap pre{std::vector<double>(static_cast<std::size_t>(ds.cols()), 0.0),
                  std::vector<double>(static_cast<std::size_t>(ds.cols()), 1.0)};
    if (standardize) {
      for (Eigen::Index j = 0; j < ds.cols(); ++j) {
        const auto& col = ds.x().col(j);
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().sum() /
                                    static_cast<double>(ds.rows() - 1));
        pre.shift[static_cast<std::size_t>(j)] = mean;
        pre.scale[static_cast<std::size_t>(j)] = sd > 0 ? sd : 1.0;
      }
      work = Dataset(pre.apply(ds.x()), ds.y());
    }
    const RescaledFit rf = fit_rescaled(work, taus, cfg, lp);
    QuantileFit out = rf.original;
    if (standardize) {
      for (Eigen::Index q = 0; q < out.xi.size(); ++q) {
        Eigen::VectorXd coef(ds.cols() + 1);
        coef(0) = out.xi(q);
        coef.tail(ds.cols()) = out.beta.col(q);
        const Eigen::VectorXd orig = inverse_transform_coefficients(coef, pre);
        out.xi(q) = orig(0);
        out.beta.col(q) = orig.tail(ds.cols());
      }
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string data, response, exclude, kind = "qr";
  std::string taus_range, taus_list, out;
  std::optional<double> alpha, lambda;
  bool rescale = false, standardize = false, json = false;
};

int cmd_fit(const FitArgs& a) {
  const TauGrid taus = parse_taus(a.taus_range, a.taus_list);
  EstimatorConfig cfg;
  cfg.kind = parse_kind_or_throw(a.kind);
  cfg.alpha = a.alpha;
  cfg.lambda = a.lambda;
  cfg.validate();

  const CsvTable table = read_csv_file(a.data);
  auto [ds, x_names] = dataset_from_csv(table, a.response, split_list(a.exclude));
  for (const auto& w : ds.warnings()) std::cerr << "warning: " << w << "\n";

  FitPipeline pipe{a.rescale || a.standardize, a.standardize};
  const QuantileFit f = pipe.run(ds, taus, cfg, LpOptions{});
  if (f.status != LpStatus::Optimal) {
    std::cerr << "error: solver stopped with status " << to_string(f.status) << "\n";
    return kExitSolver;
  }

  const fs::path dir = prepare_out_dir(a.out);
  write_text(dir / "fit.json", to_json(f).dump(2) + "\n");
  write_with(dir / "coefficients.csv",
             [&](std::ostream& os) { write_coefficients_csv(f, x_names, os); });
  (void)a.json;  // fit always writes both representations
  std::cout << "objective " << fmt(f.objective) << "\n"
            << "crossing_rate " << fmt(f.crossing_rate) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// cv

struct CvArgs {
  std::string data, response, exclude, kind = "gncqr";
  std::string taus_range, taus_list, out;
  GridFlags grid;
  int folds = 10;
  int hv_gap = 0;
  bool time_series = false;
  bool rescale = false;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool json = false;
};

int cmd_cv(const CvArgs& a) {
  const TauGrid taus = parse_taus(a.taus_range, a.taus_list);
  const EstimatorKind kind = parse_kind_or_throw(a.kind);
  if (kind != EstimatorKind::GNCQR && kind != EstimatorKind::FLQR)
    throw ConfigError("cv requires an estimator with a hyperparameter (gncqr or flqr)");
  const std::uint64_t seed = resolve_seed(a.seed, /*required=*/!a.time_series);

  const CsvTable table = read_csv_file(a.data);
  auto [raw, x_names] = dataset_from_csv(table, a.response, split_list(a.exclude));
  const Dataset ds = a.rescale ? scale_to_unit(raw).first : raw;

  CvPlan plan;
  plan.fold_count = a.folds;
  plan.h = a.hv_gap;
  plan.shuffled = !a.time_series;
  const GridSearchResult res =
      grid_search(ds, taus, kind, a.grid.build(), plan, seed, a.jobs);

  const fs::path dir = prepare_out_dir(a.out);
  write_with(dir / "cv_profile.csv",
             [&](std::ostream& os) { write_cv_profile_csv(res, os); });
  if (a.json) write_text(dir / "cv_profile.json", to_json(res).dump(2) + "\n");
  std::cout << "selected " << fmt(res.best_value) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimArgs {
  std::string dgp = "y1";
  int t_count = 100;
  int reps = 500;
  std::string taus_range = "0.1:0.9:0.2", taus_list, out;
  std::string estimators = "qr,brw,gncqr,flqr";
  std::optional<double> gncqr_alpha, flqr_lambda;
  GridFlags grid;
  int folds = 10;
  int eval_points = 1000;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool json = false;
};

int cmd_simulate(const SimArgs& a) {
  ExperimentConfig cfg;
  const auto dgp = DgpSpec::by_name(a.dgp);
  if (!dgp) throw ConfigError("unknown process '" + a.dgp + "' (use y1..y4)");
  cfg.dgp = *dgp;
  cfg.t_count = a.t_count;
  cfg.taus = parse_taus(a.taus_range, a.taus_list);
  cfg.n_reps = a.reps;
  cfg.seed = resolve_seed(a.seed, /*required=*/true);
  cfg.jobs = a.jobs;
  cfg.cv_fold_count = a.folds;
  cfg.n_eval = a.eval_points;

  for (const auto& name : split_list(a.estimators)) {
    EstimatorSpec spec;
    spec.kind = parse_kind_or_throw(name);
    if (spec.kind == EstimatorKind::GNCQR) {
      if (a.gncqr_alpha)
        spec.fixed_hyper = *a.gncqr_alpha;
      else
        spec.hypergrid = a.grid.build();
    } else if (spec.kind == EstimatorKind::FLQR) {
      if (a.flqr_lambda)
        spec.fixed_hyper = *a.flqr_lambda;
      else
        spec.hypergrid = a.grid.build();
    }
    cfg.estimators.push_back(std::move(spec));
  }
  if (cfg.estimators.empty()) throw ConfigError("--estimators is empty");

  const ExperimentResult res = run_experiment(cfg);
  const fs::path dir = prepare_out_dir(a.out);
  write_with(dir / "rmise.csv", [&](std::ostream& os) {
    write_rmise_csv(res, cfg.dgp.name, cfg.t_count, os);
  });
  write_with(dir / "selection_rates.csv", [&](std::ostream& os) {
    write_rates_csv(res, cfg.dgp.name, cfg.t_count, os);
  });
  if (a.json) {
    nlohmann::json j;
    j["dgp"] = cfg.dgp.name;
    j["T"] = cfg.t_count;
    j["taus"] = res.taus;
    for (const auto& est : res.estimators) {
      nlohmann::json row;
      row["estimator"] = est.estimator;
      row["rmise"] = est.rmise;
      row["rmise_se"] = est.rmise_se;
      row["tpr"] = est.rates.tpr;
      if (est.rates.tnr) row["tnr"] = *est.rates.tnr;
      row["n_failed"] = est.n_failed;
      j["estimators"].push_back(row);
    }
    write_text(dir / "simulation.json", j.dump(2) + "\n");
  }
  for (const auto& est : res.estimators)
    std::cout << est.estimator << " tpr " << fmt(est.rates.tpr) << " tnr "
              << (est.rates.tnr ? fmt(*est.rates.tnr) : std::string("-"))
              << " failed " << est.n_failed << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// forecast

struct ForecastArgs {
  std::string data, date_col = "date", response, exclude, out;
  int horizon = 1;
  int window = 50;
  std::string taus_range = "0.05:0.95:0.05", taus_list;
  std::string estimators = "qr,brw,gncqr,flqr";
  std::optional<double> gncqr_alpha, flqr_lambda;
  GridFlags grid;
  std::string select = "once";
  int select_every = 0;
  int folds = 5;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool json = false;
};

int cmd_forecast(const ForecastArgs& a) {
  const TauGrid taus = parse_taus(a.taus_range, a.taus_list);
  const CsvTable table = read_csv_file(a.data);
  const SeriesTable raw =
      series_from_csv(table, a.date_col, a.response, split_list(a.exclude));
  const SeriesTable pairs = build_target_pairs(raw, a.horizon);
  const std::uint64_t seed = resolve_seed(a.seed, /*required=*/false);

  std::vector<std::pair<std::string, RollingResult>> runs;
  std::vector<std::pair<std::string, ExerciseScores>> scored;
  for (const auto& name : split_list(a.estimators)) {
    RollingConfig cfg;
    cfg.kind = parse_kind_or_throw(name);
    cfg.window = a.window;
    cfg.horizon = a.horizon;
    cfg.taus = taus;
    cfg.jobs = a.jobs;
    if (cfg.kind == EstimatorKind::GNCQR || cfg.kind == EstimatorKind::FLQR) {
      const auto fixed =
          cfg.kind == EstimatorKind::GNCQR ? a.gncqr_alpha : a.flqr_lambda;
      if (fixed) {
        cfg.policy.mode = SelectionMode::Fixed;
        cfg.policy.fixed_value = *fixed;
      } else {
        cfg.policy.grid = a.grid.build();
        cfg.policy.cv_fold_count = a.folds;
        if (a.select == "once") {
          cfg.policy.mode = SelectionMode::SelectOnce;
        } else if (a.select == "every") {
          if (a.select_every < 1)
            throw ConfigError("--select every needs --select-every K >= 1");
          cfg.policy.mode = SelectionMode::SelectEvery;
          cfg.policy.every = a.select_every;
        } else {
          throw ConfigError("--select must be 'once' or 'every'");
        }
      }
    }
    RollingResult run = rolling_forecast(pairs, cfg, seed);
    scored.emplace_back(name, score_exercise(run, taus));
    runs.emplace_back(name, std::move(run));
  }

  const fs::path dir = prepare_out_dir(a.out);
  write_with(dir / "forecasts.csv",
             [&](std::ostream& os) { write_forecasts_csv(runs, taus, os); });
  write_with(dir / "scores.csv",
             [&](std::ostream& os) { write_scores_csv(scored, os); });
  if (a.json) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [name, s] : scored) {
      nlohmann::json row;
      row["estimator"] = name;
      row["crps"] = s.crps_unsorted;
      row["center"] = s.center_unsorted;
      row["left"] = s.left_unsorted;
      row["crps_sorted"] = s.crps_sorted;
      row["center_sorted"] = s.center_sorted;
      row["left_sorted"] = s.left_sorted;
      if (std::isfinite(s.log_score_sorted)) row["log_score_sorted"] = s.log_score_sorted;
      row["n_windows"] = s.n_scored;
      row["n_failed"] = s.n_failed;
      j.push_back(row);
    }
    write_text(dir / "scores.json", j.dump(2) + "\n");
  }
  for (const auto& [name, s] : scored)
    std::cout << name << " crps " << fmt(s.crps_unsorted) << " sorted "
              << fmt(s.crps_sorted) << " windows " << s.n_scored << " failed "
              << s.n_failed << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint quantile regression with non-crossing constraints and "
               "interquantile shrinkage"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value configuration file");

  FitArgs fit_args;
  CLI::App* fit_cmd = app.add_subcommand("fit", "fit one estimator on a CSV");
  fit_cmd->add_option("--data", fit_args.data, "input CSV")->required();
  fit_cmd->add_option("--response", fit_args.response, "response column name")->required();
  fit_cmd->add_option("--exclude", fit_args.exclude, "columns to skip (comma list)");
  fit_cmd->add_option("--kind", fit_args.kind, "qr|brw|gncqr|flqr|cqr");
  fit_cmd->add_option("--alpha", fit_args.alpha, "constraint scale (gncqr)");
  fit_cmd->add_option("--lambda", fit_args.lambda, "shrinkage weight (flqr)");
  fit_cmd->add_option("--taus", fit_args.taus_range, "grid start:stop:step");
  fit_cmd->add_option("--taus-list", fit_args.taus_list, "explicit grid, comma list");
  fit_cmd->add_flag("--rescale", fit_args.rescale, "fit on min-max rescaled columns");
  fit_cmd->add_flag("--standardize", fit_args.standardize,
                    "standardize before rescaling (implies --rescale)");
  fit_cmd->add_option("--out", fit_args.out, "output directory");
  fit_cmd->add_flag("--json", fit_args.json, "also emit JSON outputs");

  CvArgs cv_args;
  CLI::App* cv_cmd = app.add_subcommand("cv", "grid-search a hyperparameter");
  cv_cmd->add_option("--data", cv_args.data, "input CSV")->required();
  cv_cmd->add_option("--response", cv_args.response, "response column name")->required();
  cv_cmd->add_option("--exclude", cv_args.exclude, "columns to skip (comma list)");
  cv_cmd->add_option("--kind", cv_args.kind, "gncqr|flqr");
  cv_cmd->add_option("--taus", cv_args.taus_range, "grid start:stop:step");
  cv_cmd->add_option("--taus-list", cv_args.taus_list, "explicit grid, comma list");
  cv_cmd->add_option("--grid-linear", cv_args.grid.linear, "COUNT:LIMIT linear block");
  cv_cmd->add_option("--grid-log", cv_args.grid.log, "COUNT:EXPONENT log block");
  cv_cmd->add_option("--grid-list", cv_args.grid.list, "explicit candidates");
  cv_cmd->add_option("--folds", cv_args.folds, "fold count");
  cv_cmd->add_option("--hv-gap", cv_args.hv_gap, "indices trimmed around blocks");
  cv_cmd->add_flag("--time-series", cv_args.time_series,
                   "keep row order (no shuffling)");
  cv_cmd->add_flag("--rescale", cv_args.rescale, "min-max rescale before search");
  cv_cmd->add_option("--seed", cv_args.seed, "shuffle seed (or QRFUSE_SEED)");
  cv_cmd->add_option("--jobs", cv_args.jobs, "worker threads");
  cv_cmd->add_option("--out", cv_args.out, "output directory");
  cv_cmd->add_flag("--json", cv_args.json, "also emit JSON outputs");

  SimArgs sim_args;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study");
  sim_cmd->add_option("--dgp", sim_args.dgp, "y1|y2|y3|y4");
  sim_cmd->add_option("--t", sim_args.t_count, "observations per replication");
  sim_cmd->add_option("--reps", sim_args.reps, "replications");
  sim_cmd->add_option("--taus", sim_args.taus_range, "grid start:stop:step");
  sim_cmd->add_option("--taus-list", sim_args.taus_list, "explicit grid");
  sim_cmd->add_option("--estimators", sim_args.estimators, "comma list");
  sim_cmd->add_option("--gncqr-alpha", sim_args.gncqr_alpha,
                      "fixed constraint scale (skip selection)");
  sim_cmd->add_option("--flqr-lambda", sim_args.flqr_lambda,
                      "fixed shrinkage weight (skip selection)");
  sim_cmd->add_option("--grid-linear", sim_args.grid.linear, "COUNT:LIMIT");
  sim_cmd->add_option("--grid-log", sim_args.grid.log, "COUNT:EXPONENT");
  sim_cmd->add_option("--grid-list", sim_args.grid.list, "explicit candidates");
  sim_cmd->add_option("--folds", sim_args.folds, "selection fold count");
  sim_cmd->add_option("--eval-points", sim_args.eval_points,
                      "integration points per replication");
  sim_cmd->add_option("--seed", sim_args.seed, "run seed (or QRFUSE_SEED)");
  sim_cmd->add_option("--jobs", sim_args.jobs, "worker threads");
  sim_cmd->add_option("--out", sim_args.out, "output directory");
  sim_cmd->add_flag("--json", sim_args.json, "also emit JSON outputs");

  ForecastArgs fc_args;
  CLI::App* fc_cmd = app.add_subcommand("forecast", "rolling-window exercise");
  fc_cmd->add_option("--data", fc_args.data, "input CSV with a date column")->required();
  fc_cmd->add_option("--date-col", fc_args.date_col, "date column name");
  fc_cmd->add_option("--response", fc_args.response, "target column name")->required();
  fc_cmd->add_option("--exclude", fc_args.exclude, "columns to skip");
  fc_cmd->add_option("--horizon", fc_args.horizon, "steps ahead");
  fc_cmd->add_option("--window", fc_args.window, "rolling window length");
  fc_cmd->add_option("--taus", fc_args.taus_range, "grid start:stop:step");
  fc_cmd->add_option("--taus-list", fc_args.taus_list, "explicit grid");
  fc_cmd->add_option("--estimators", fc_args.estimators, "comma list");
  fc_cmd->add_option("--gncqr-alpha", fc_args.gncqr_alpha, "fixed constraint scale");
  fc_cmd->add_option("--flqr-lambda", fc_args.flqr_lambda, "fixed shrinkage weight");
  fc_cmd->add_option("--grid-linear", fc_args.grid.linear, "COUNT:LIMIT");
  fc_cmd->add_option("--grid-log", fc_args.grid.log, "COUNT:EXPONENT");
  fc_cmd->add_option("--grid-list", fc_args.grid.list, "explicit candidates");
  fc_cmd->add_option("--select", fc_args.select, "once|every");
  fc_cmd->add_option("--select-every", fc_args.select_every, "re-selection stride");
  fc_cmd->add_option("--folds", fc_args.folds, "selection fold count");
  fc_cmd->add_option("--seed", fc_args.seed, "run seed (or QRFUSE_SEED)");
  fc_cmd->add_option("--jobs", fc_args.jobs, "worker threads");
  fc_cmd->add_option("--out", fc_args.out, "output directory");
  fc_cmd->add_flag("--json", fc_args.json, "also emit JSON outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fit_args);
    if (cv_cmd->parsed()) return cmd_cv(cv_args);
    if (sim_cmd->parsed()) return cmd_simulate(sim_args);
    if (fc_cmd->parsed()) return cmd_forecast(fc_args);
    std::cerr << "error: no subcommand\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const FitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
