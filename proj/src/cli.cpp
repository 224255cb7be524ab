#include "stmoe/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "stmoe/ecm.hpp"
#include "stmoe/io.hpp"
#include "stmoe/predict.hpp"
#include "stmoe/select.hpp"
#include "stmoe/sim.hpp"

namespace stmoe::cli {

namespace {

using io::CsvWriter;
using io::DataSchema;

struct SchemaFlags {
  std::string response = "y";
  std::vector<std::string> covariates;
  std::vector<std::string> gating;
  bool no_intercept = false;

  void add(CLI::App* app, bool with_response) {
    if (with_response) app->add_option("--response", response, "Response column")->capture_default_str();
    app->add_option("--covariates", covariates, "Expert covariate columns")->delimiter(',');
    app->add_option("--gating", gating, "Gating covariate columns (default: covariates)")
        ->delimiter(',');
    app->add_flag("--no-intercept", no_intercept, "Do not prepend an intercept column");
  }

  // Flags given on the command line override a stored schema.
  DataSchema resolve(const std::optional<DataSchema>& stored, bool with_response) const {
    DataSchema s = stored.value_or(DataSchema{});
    if (with_response) s.response = response;
    if (!covariates.empty()) s.covariates = covariates;
    if (!gating.empty()) s.gating = gating;
    if (no_intercept) s.intercept = false;
    return s;
  }
};

struct SeedFlag {
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) { app->add_option("--seed", seed, "Random seed (fallback: STMOE_SEED)"); }

  std::uint64_t resolve() const {
    if (seed) return *seed;
    if (const char* env = std::getenv("STMOE_SEED")) {
      try {
        std::size_t pos = 0;
        const auto v = std::stoull(env, &pos);
        if (pos == std::string(env).size()) return v;
      } catch (const std::exception&) {
      }
      throw CLI::ValidationError("STMOE_SEED", std::string("not an unsigned integer: ") + env);
    }
    return 0;
  }
};

Family parse_family(const std::string& s) {
  try {
    return family_from_string(s);
  } catch (const std::invalid_argument& e) {
    throw CLI::ValidationError("--family", e.what());
  }
}

std::string to_csv(const std::function<void(CsvWriter&)>& body) {
  std::ostringstream os;
  CsvWriter w(os);
  body(w);
  return os.str();
}

std::string model_with_fit(const FittedModel& fm, const DataSchema& schema) {
  io::ModelFile mf;
  mf.params = fm.params;
  mf.meta = io::FitMeta{fm.loglik, fm.n_iter, fm.converged, fm.seed, fm.start_index};
  mf.schema = schema;
  return io::serialize_model(mf);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Skew-t and normal mixtures of experts: fitting, prediction, clustering, "
               "model selection and simulation studies",
               "stmoe"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // fit -------------------------------------------------------------------
  auto* fit_cmd = app.add_subcommand("fit", "Fit a mixture of experts by ECM with multiple starts");
  std::string fit_data, fit_out = "model.json", fit_tau_out, fit_trace_out;
  std::string fit_family = "stmoe";
  int fit_K = 2;
  FitConfig fit_cfg;
  bool fix_lambda_zero = false;
  std::optional<double> fix_nu;
  SchemaFlags fit_schema;
  SeedFlag fit_seed;
  fit_cmd->add_option("--data", fit_data, "Input CSV")->required();
  fit_schema.add(fit_cmd, true);
  fit_cmd->add_option("-K,--experts", fit_K, "Number of experts")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--family", fit_family, "nmoe or stmoe")->capture_default_str();
  fit_cmd->add_option("--starts", fit_cfg.n_starts, "Number of random starts")
      ->check(CLI::PositiveNumber)->capture_default_str();
  fit_cmd->add_option("--tol", fit_cfg.tol, "Relative log-likelihood tolerance")
      ->check(CLI::PositiveNumber)->capture_default_str();
  fit_cmd->add_option("--max-iter", fit_cfg.max_iter, "Maximum ECM iterations")
      ->check(CLI::PositiveNumber)->capture_default_str();
  fit_cmd->add_flag("--fix-lambda-zero", fix_lambda_zero, "Hold all skewness at zero");
  fit_cmd->add_option("--fix-nu", fix_nu, "Hold all degrees of freedom at this value")
      ->check(CLI::PositiveNumber);
  fit_seed.add(fit_cmd);
  fit_cmd->add_option("--out", fit_out, "Model file to write")->capture_default_str();
  fit_cmd->add_option("--tau-out", fit_tau_out, "Posterior membership CSV");
  fit_cmd->add_option("--trace-out", fit_trace_out, "Log-likelihood trace CSV");

  // predict ---------------------------------------------------------------
  auto* pred_cmd = app.add_subcommand("predict", "Predictive mean and band on a covariate grid");
  std::string pred_model, pred_grid, pred_out = "-";
  double band_width = 2.0;
  SchemaFlags pred_schema;
  pred_cmd->add_option("--model", pred_model, "Model file")->required();
  pred_cmd->add_option("--grid", pred_grid, "Covariate grid CSV")->required();
  pred_schema.add(pred_cmd, false);
  pred_cmd->add_option("--band-width", band_width, "Band half-width in standard deviations")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  pred_cmd->add_option("--out", pred_out, "Output CSV ('-' for stdout)")->capture_default_str();

  // cluster ---------------------------------------------------------------
  auto* clu_cmd = app.add_subcommand("cluster", "MAP partition of a data set under a model");
  std::string clu_model, clu_data, clu_out = "-";
  SchemaFlags clu_schema;
  clu_cmd->add_option("--model", clu_model, "Model file")->required();
  clu_cmd->add_option("--data", clu_data, "Data CSV")->required();
  clu_schema.add(clu_cmd, true);
  clu_cmd->add_option("--out", clu_out, "Output CSV ('-' for stdout)")->capture_default_str();

  // select ----------------------------------------------------------------
  auto* sel_cmd = app.add_subcommand("select", "AIC/BIC/ICL over a range of expert counts");
  std::string sel_data, sel_out = "-", sel_family = "stmoe";
  int kmin = 1, kmax = 5;
  FitConfig sel_cfg;
  SchemaFlags sel_schema;
  SeedFlag sel_seed;
  sel_cmd->add_option("--data", sel_data, "Input CSV")->required();
  sel_schema.add(sel_cmd, true);
  sel_cmd->add_option("--family", sel_family, "nmoe or stmoe")->capture_default_str();
  sel_cmd->add_option("--kmin", kmin, "Smallest K")->check(CLI::PositiveNumber)->capture_default_str();
  sel_cmd->add_option("--kmax", kmax, "Largest K")->check(CLI::PositiveNumber)->capture_default_str();
  sel_cmd->add_option("--starts", sel_cfg.n_starts, "Random starts per K")
      ->check(CLI::PositiveNumber)->capture_default_str();
  sel_cmd->add_option("--tol", sel_cfg.tol, "Relative log-likelihood tolerance")
      ->check(CLI::PositiveNumber)->capture_default_str();
  sel_cmd->add_option("--max-iter", sel_cfg.max_iter, "Maximum ECM iterations")
      ->check(CLI::PositiveNumber)->capture_default_str();
  sel_seed.add(sel_cmd);
  sel_cmd->add_option("--out", sel_out, "Output CSV ('-' for stdout)")->capture_default_str();

  // simulate --------------------------------------------------------------
  auto* sim_cmd = app.add_subcommand("simulate", "Draw a data set from a mixture of experts");
  std::string sim_family = "stmoe", sim_truth, sim_out = "-";
  long sim_n = 500;
  double sim_outliers = 0.0;
  SeedFlag sim_seed;
  sim_cmd->add_option("--family", sim_family, "Reference truth family: nmoe or stmoe")
      ->capture_default_str();
  sim_cmd->add_option("--truth", sim_truth, "Model file with the generating parameters");
  sim_cmd->add_option("--n", sim_n, "Sample size")->check(CLI::PositiveNumber)->capture_default_str();
  sim_cmd->add_option("--outliers", sim_outliers, "Outlier probability c")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  sim_seed.add(sim_cmd);
  sim_cmd->add_option("--out", sim_out, "Output CSV ('-' for stdout)")->capture_default_str();

  // benchmark -------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("benchmark", "Run a simulation study");
  std::string experiment, bench_out = "-", bench_truth = "";
  int bench_trials = 0;
  std::vector<long> n_grid;
  std::vector<double> c_grid;
  long bench_n = 500;
  FitConfig bench_cfg;
  SeedFlag bench_seed;
  bench_cmd->add_option("--experiment", experiment, "consistency or robustness")
      ->required()->check(CLI::IsMember({"consistency", "robustness"}));
  bench_cmd->add_option("--trials", bench_trials, "Trials per setting (default 20 / 10)")
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--n-grid", n_grid, "Sample sizes (consistency)")->delimiter(',');
  bench_cmd->add_option("--c-grid", c_grid, "Outlier probabilities (robustness)")->delimiter(',');
  bench_cmd->add_option("--n", bench_n, "Sample size (robustness)")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--truth-family", bench_truth,
                        "Generating family (default: stmoe for consistency, nmoe for robustness)");
  bench_cmd->add_option("--starts", bench_cfg.n_starts, "Random starts per fit")
      ->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--tol", bench_cfg.tol, "Relative log-likelihood tolerance")
      ->check(CLI::PositiveNumber);
  bench_seed.add(bench_cmd);
  bench_cmd->add_option("--out", bench_out, "Output CSV ('-' for stdout)")->capture_default_str();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "stmoe: " << e.what() << "\n";
    err << "run 'stmoe --help' for usage\n";
    return kUsage;
  }

  auto emit = [&](const std::string& path, const std::string& text) {
    if (path == "-") {
      out << text;
    } else {
      io::write_text(path, text);
    }
  };

  try {
    if (fit_cmd->parsed()) {
      const DataSchema schema = fit_schema.resolve(std::nullopt, true);
      const Dataset data = io::read_dataset(fit_data, schema);
      fit_cfg.seed = fit_seed.resolve();
      fit_cfg.constraints.fix_lambda_zero = fix_lambda_zero;
      fit_cfg.constraints.fix_nu = fix_nu;
      const FittedModel fm = multi_start_fit(data, fit_K, parse_family(fit_family), fit_cfg);
      emit(fit_out, model_with_fit(fm, schema));
      if (!fit_tau_out.empty()) {
        emit(fit_tau_out, to_csv([&](CsvWriter& w) {
               std::vector<std::string> h{"row"};
               for (Eigen::Index k = 0; k < fm.tau.cols(); ++k) h.push_back("tau_" + std::to_string(k + 1));
               w.header(h);
               for (Eigen::Index i = 0; i < fm.tau.rows(); ++i) {
                 w.cell(static_cast<long>(i + 1));
                 for (Eigen::Index k = 0; k < fm.tau.cols(); ++k) w.cell(fm.tau(i, k));
                 w.end_row();
               }
             }));
      }
      if (!fit_trace_out.empty()) {
        emit(fit_trace_out, to_csv([&](CsvWriter& w) {
               w.header({"iteration", "loglik"});
               for (std::size_t m = 0; m < fm.loglik_trace.size(); ++m) {
                 w.cell(static_cast<long>(m)).cell(fm.loglik_trace[m]).end_row();
               }
             }));
      }
      err << "fit: K=" << fit_K << " " << fit_family << " loglik=" << io::format_double(fm.loglik)
          << " iterations=" << fm.n_iter << (fm.converged ? " converged" : " NOT converged")
          << " (start " << fm.start_index + 1 << " of " << fit_cfg.n_starts << ")\n";
      return kOk;
    }

    if (pred_cmd->parsed()) {
      const io::ModelFile mf = io::load_model(pred_model);
      const DataSchema schema = pred_schema.resolve(mf.schema, false);
      DataSchema design = schema;
      design.response.clear();
      const Dataset grid = io::read_dataset(pred_grid, design);
      mf.params.check_compatible(grid);
      const auto K = mf.params.K();
      bool warned = false;
      const std::string text = to_csv([&](CsvWriter& w) {
        std::vector<std::string> h{"row", "mean", "variance", "lower", "upper"};
        for (Eigen::Index k = 0; k < K; ++k) h.push_back("expert_mean_" + std::to_string(k + 1));
        for (Eigen::Index k = 0; k < K; ++k) h.push_back("gate_" + std::to_string(k + 1));
        w.header(h);
        for (Eigen::Index i = 0; i < grid.n(); ++i) {
          const Prediction p =
              predict(grid.X.row(i).transpose(), grid.R.row(i).transpose(), mf.params);
          w.cell(static_cast<long>(i + 1)).cell(p.mean);
          if (p.variance_defined) {
            const double half = band_width * std::sqrt(*p.variance);
            w.cell(*p.variance).cell(p.mean - half).cell(p.mean + half);
          } else {
            w.empty().empty().empty();
            warned = true;
          }
          for (Eigen::Index k = 0; k < K; ++k) w.cell(p.per_expert_mean(k));
          for (Eigen::Index k = 0; k < K; ++k) w.cell(p.gate(k));
          w.end_row();
        }
      });
      emit(pred_out, text);
      if (warned) {
        err << "predict: variance undefined (nu <= 2) at some rows; band columns left empty\n";
      }
      return kOk;
    }

    if (clu_cmd->parsed()) {
      const io::ModelFile mf = io::load_model(clu_model);
      const DataSchema schema = clu_schema.resolve(mf.schema, true);
      const Dataset data = io::read_dataset(clu_data, schema);
      mf.params.check_compatible(data);
      const MatrixXd tau = posterior_tau(data, mf.params);
      const std::vector<int> labels = map_partition(tau);
      emit(clu_out, to_csv([&](CsvWriter& w) {
             std::vector<std::string> h{"row", "label"};
             for (Eigen::Index k = 0; k < tau.cols(); ++k) h.push_back("tau_" + std::to_string(k + 1));
             w.header(h);
             for (Eigen::Index i = 0; i < tau.rows(); ++i) {
               w.cell(static_cast<long>(i + 1)).cell(static_cast<long>(labels[static_cast<std::size_t>(i)]));
               for (Eigen::Index k = 0; k < tau.cols(); ++k) w.cell(tau(i, k));
               w.end_row();
             }
           }));
      return kOk;
    }

    if (sel_cmd->parsed()) {
      if (kmax < kmin) throw CLI::ValidationError("--kmax", "must be >= --kmin");
      const DataSchema schema = sel_schema.resolve(std::nullopt, true);
      const Dataset data = io::read_dataset(sel_data, schema);
      sel_cfg.seed = sel_seed.resolve();
      std::vector<Eigen::Index> ks;
      for (int k = kmin; k <= kmax; ++k) ks.push_back(k);
      const SelectionTable table = select_k(data, parse_family(sel_family), ks, sel_cfg);
      emit(sel_out, to_csv([&](CsvWriter& w) {
             w.header({"K", "loglik", "complete_loglik", "eta", "aic", "bic", "icl",
                       "chosen_aic", "chosen_bic", "chosen_icl", "status"});
             for (const auto& e : table.entries) {
               w.cell(static_cast<long>(e.K));
               if (e.row) {
                 w.cell(e.row->loglik).cell(e.row->complete_loglik).cell(e.row->eta)
                     .cell(e.row->aic).cell(e.row->bic).cell(e.row->icl);
               } else {
                 w.empty().empty().empty().empty().empty().empty();
               }
               w.cell(static_cast<long>(e.K == table.best_aic && e.row))
                   .cell(static_cast<long>(e.K == table.best_bic && e.row))
                   .cell(static_cast<long>(e.K == table.best_icl && e.row))
                   .cell(e.row ? std::string("ok") : std::string("failed"));
               w.end_row();
             }
           }));
      err << "select: chosen K  AIC=" << table.best_aic << "  BIC=" << table.best_bic
          << "  ICL=" << table.best_icl << "\n";
      return kOk;
    }

    if (sim_cmd->parsed()) {
      SimConfig sc;
      sc.truth = sim_truth.empty() ? reference_truth(parse_family(sim_family))
                                   : io::load_model(sim_truth).params;
      sc.n = sim_n;
      sc.outlier_rate = sim_outliers;
      sc.seed = sim_seed.resolve();
      const SimulatedData sim = simulate(sc);
      const auto p = sim.data.p();
      emit(sim_out, to_csv([&](CsvWriter& w) {
             std::vector<std::string> h;
             for (Eigen::Index j = 1; j < p; ++j) h.push_back(p == 2 ? "x" : "x" + std::to_string(j));
             h.insert(h.end(), {"y", "label", "outlier"});
             w.header(h);
             for (Eigen::Index i = 0; i < sim.data.n(); ++i) {
               for (Eigen::Index j = 1; j < p; ++j) w.cell(sim.data.X(i, j));
               w.cell(sim.data.y(i))
                   .cell(static_cast<long>(sim.labels[static_cast<std::size_t>(i)]))
                   .cell(static_cast<long>(sim.outlier[static_cast<std::size_t>(i)]));
               w.end_row();
             }
           }));
      return kOk;
    }

    if (bench_cmd->parsed()) {
      bench_cfg.seed = 0;
      const auto seed = bench_seed.resolve();
      if (experiment == "consistency") {
        ConsistencyConfig cc;
        cc.seed = seed;
        cc.fit = bench_cfg;
        if (bench_trials > 0) cc.trials = bench_trials;
        if (!n_grid.empty()) cc.n_grid.assign(n_grid.begin(), n_grid.end());
        if (!bench_truth.empty()) cc.truth_family = cc.fit_family = parse_family(bench_truth);
        const auto rows = run_consistency(cc);
        emit(bench_out, to_csv([&](CsvWriter& w) {
               std::vector<std::string> h{"n"};
               h.insert(h.end(), rows.front().names.begin(), rows.front().names.end());
               h.insert(h.end(), {"successes", "failures"});
               w.header(h);
               for (const auto& r : rows) {
                 w.cell(static_cast<long>(r.n));
                 for (Eigen::Index j = 0; j < r.mean_squared_error.size(); ++j) {
                   w.cell(r.mean_squared_error(j));
                 }
                 w.cell(static_cast<long>(r.successes)).cell(static_cast<long>(r.failures));
                 w.end_row();
               }
             }));
      } else {
        RobustnessConfig rc;
        rc.seed = seed;
        rc.fit = bench_cfg;
        rc.n = bench_n;
        if (bench_trials > 0) rc.trials = bench_trials;
        if (!c_grid.empty()) rc.c_grid = c_grid;
        if (!bench_truth.empty()) rc.truth_family = parse_family(bench_truth);
        const auto rows = run_robustness(rc);
        emit(bench_out, to_csv([&](CsvWriter& w) {
               w.header({"c", "fit_family", "median_mse", "mean_mse", "trials", "failures"});
               for (const auto& r : rows) {
                 w.cell(r.c).cell(to_string(r.fit_family)).cell(r.median).cell(r.mean)
                     .cell(static_cast<long>(r.mse.size())).cell(static_cast<long>(r.failures));
                 w.end_row();
               }
             }));
      }
      return kOk;
    }
  } catch (const CLI::ValidationError& e) {
    err << "stmoe: invalid argument: " << e.what() << "\n";
    return kUsage;
  } catch (const io::InputError& e) {
    err << "stmoe: input error: " << e.what() << "\n";
    return kInput;
  } catch (const FitError& e) {
    err << "stmoe: fit failed: " << e.what() << "\n";
    return kFit;
  } catch (const std::invalid_argument& e) {
    err << "stmoe: invalid input: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    err << "stmoe: error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace stmoe::cli
