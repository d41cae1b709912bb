// bbmm command-line front end.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "bbmm/bbmm.hpp"

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kNumeric = 4 };

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw bbmm::DataError("cannot open '" + path + "' for writing");
  out << text;
}

std::string dump(const bbmm::Json& j) { return j.dump(2) + "\n"; }

bbmm::Dataset load_or_synthesize(const bbmm::RunConfig& cfg) {
  if (!cfg.data_path.empty()) return bbmm::load_csv(cfg.data_path);
  if (cfg.subcommand == "verify") return bbmm::synthetic_rbf_data(80, 0.3, 1.0, 0.01, cfg.seed);
  throw bbmm::ConfigError("--data is required for '" + cfg.subcommand + "'");
}

int run(const bbmm::RunConfig& cfg) {
  const bbmm::Dataset raw = load_or_synthesize(cfg);
  if (cfg.subcommand == "benchmark") {
    emit(cfg.out_path, dump(bbmm::to_json(bbmm::run_benchmark(cfg, raw))));
  } else if (cfg.subcommand == "train") {
    cfg.validate();
    const bbmm::PreparedData d = bbmm::prepare_data(raw, cfg);
    bbmm::BenchmarkReport report;
    report.config = cfg;
    report.n_train = d.train.n();
    report.n_test = d.test_x.rows();
    report.arms.push_back(bbmm::run_bbmm_arm(d, cfg));
    emit(cfg.out_path, dump(bbmm::to_json(report)));
  } else if (cfg.subcommand == "predict") {
    cfg.validate();
    const bbmm::PreparedData d = bbmm::prepare_data(raw, cfg);
    bbmm::GpModel model(d.train, cfg.kernel, cfg.hyperparameters(), cfg.resolved_mode(), cfg.rank);
    bbmm::Rng rng(cfg.seed);
    const auto trained = bbmm::train(model, cfg.train_config(), rng);
    const auto pred = bbmm::predict(model, d.test_x, cfg.cg());
    const auto& rec = *d.train.standardization();
    bbmm::Json j;
    j["config"] = bbmm::to_json(cfg);
    j["seed"] = cfg.seed;
    j["hyperparameters"] = bbmm::to_json(model.hyperparameters());
    j["nll_trace"] = trained.nll_trace;
    j["mae"] = bbmm::mean_absolute_error(pred.mean, d.test_y);
    j["mean"] = bbmm::destandardize_targets(rec, pred.mean);
    j["variance"] = bbmm::destandardize_variance(rec, pred.variance);
    j["target"] = bbmm::destandardize_targets(rec, d.test_y);
    emit(cfg.out_path, dump(j));
  } else if (cfg.subcommand == "residuals") {
    const auto rows = bbmm::residual_curve(cfg, raw);
    if (cfg.out_path.empty() || cfg.out_path == "-") {
      std::cout << "rank,iteration,relative_residual\n";
      for (const auto& r : rows) {
        std::printf("%zu,%zu,%.17g\n", r.rank, r.iteration, r.relative_residual);
      }
    } else {
      bbmm::write_residual_csv(cfg.out_path, rows);
    }
  } else if (cfg.subcommand == "verify") {
    emit(cfg.out_path, dump(bbmm::verify_theory(cfg, raw)));
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian process training and prediction through batched conjugate gradients"};
  app.require_subcommand(1);
  app.fallthrough();

  bbmm::RunConfig cfg;
  std::string mode = "exact";
  std::string kernel = "rbf";
  std::size_t feature = 0;

  app.add_option("--data", cfg.data_path, "CSV file, header row, last column is the target");
  app.add_option("--mode", mode, "exact | sor | ski")->capture_default_str();
  app.add_option("--kernel", kernel, "rbf | matern52")->capture_default_str();
  app.add_option("--m", cfg.m, "inducing points (sor) or grid size (ski)")->capture_default_str();
  app.add_option("--rank", cfg.rank, "pivoted Cholesky preconditioner rank")->capture_default_str();
  app.add_option("--cg-iters", cfg.cg_iters, "max CG iterations per solve")->capture_default_str();
  app.add_option("--probes", cfg.probes, "probe vectors per gradient")->capture_default_str();
  app.add_option("--tol", cfg.tol, "CG relative residual tolerance")->capture_default_str();
  app.add_option("--seed", cfg.seed, "random seed")->capture_default_str();
  app.add_option("--split", cfg.split, "training fraction")->capture_default_str();
  app.add_option("--out", cfg.out_path, "output path (default stdout)");
  app.add_option("--iters", cfg.iterations, "Adam steps")->capture_default_str();
  app.add_option("--lr", cfg.learning_rate, "Adam step size")->capture_default_str();
  app.add_option("--oracle-cap", cfg.oracle_cap, "largest n for the dense arm")->capture_default_str();
  auto* feature_opt = app.add_option("--feature", feature, "use only this input column");
  app.add_option("--lengthscale", cfg.lengthscale, "initial or fixed lengthscale");
  app.add_option("--outputscale", cfg.outputscale, "initial or fixed outputscale");
  app.add_option("--noise", cfg.noise, "initial or fixed noise variance");
  bool no_timing = false;
  app.add_flag("--no-timing", no_timing, "write null wall times so reports are byte-stable");

  for (const char* name : {"train", "predict", "benchmark", "residuals", "verify"}) {
    app.add_subcommand(name)->callback([&cfg, name] { cfg.subcommand = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    cfg.mode = bbmm::parse_mode_kind(mode);
    cfg.kernel = bbmm::parse_kernel_kind(kernel);
    if (*feature_opt) cfg.feature = feature;
    cfg.timing = !no_timing;
    return run(cfg);
  } catch (const bbmm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const bbmm::DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const bbmm::UnsupportedModeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const bbmm::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const bbmm::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const bbmm::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
}
