#pragma once

#include <charme/asymptotics.hpp>
#include <charme/estimator.hpp>
#include <charme/model.hpp>
#include <charme/mvn_tests.hpp>
#include <charme/stability.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace charme::cli {

/// Scaled-down experiment presets. Every field can be overridden from the
/// command line or a config file before the run starts.
struct Experiment1Params {
  std::vector<std::vector<Index>> widths{{8, 16, 12, 1}, {8, 12, 1}, {8, 16, 8, 1}};
  std::vector<double> pi{0.1, 0.4, 0.5};
  std::vector<double> output_bias{1.0, 0.0, -1.0};
  double target_A = 0.85;  // per-expert Lipschitz estimate of the true model
  Index n = 20000;
  Index burn_in = -1;
  FitConfig fit;
  std::uint64_t model_seed = 11;

  static Experiment1Params preset(const std::string& scale);
};

struct Experiment2Params {
  std::vector<std::vector<Index>> widths{{5, 32, 16, 1}, {5, 32, 16, 1}, {5, 32, 16, 1}};
  Index n = 20000;
  Index burn_in = -1;
  FitConfig fit;

  static Experiment2Params preset(const std::string& scale);
};

struct Experiment3Params {
  Index K = 3;
  Index p = 2;
  std::vector<Index> hidden{1};
  std::vector<double> pi{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  double target_A = 0.9;
  double weight_scale = 0.5;  // first-layer weights U(-w, w) / sqrt(fan_in)
  double bias_scale = 1.0;
  double output_bias_step = 8.0;  // expert k's output bias is step * (k - (K - 1) / 2)
  Index N = 100;
  Index n = 5000;
  Index burn_in = -1;
  FitConfig fit;
  std::vector<Index> subset;  // 1-based; empty means the first 15 coordinates
  std::uint64_t model_seed = 1;

  static Experiment3Params preset(const std::string& scale);
};

/// True model of the first experiment: random ReLU experts rescaled so that
/// each expert's Lipschitz estimate equals target_A.
CharmeModel experiment1_model(const Experiment1Params& params);

/// Closed-form three-regime CHARME(5) process of the second experiment; it has
/// no network representation, so it is simulated through RegimeDynamics.
RegimeDynamics experiment2_dynamics();

/// Per-expert lag Lipschitz constants of experiment2_dynamics.
std::vector<std::vector<double>> experiment2_lag_constants();

/// Randomly initialised ReLU model used to fit the second experiment's data.
CharmeModel experiment2_fit_template(const Experiment2Params& params);

/// Small sigmoid experts for the Monte Carlo normality study.
CharmeModel experiment3_model(const Experiment3Params& params);

/// Each run writes its files into out_dir (created if needed) and returns the summary.
nlohmann::json run_experiment1(const Experiment1Params& params, std::uint64_t seed,
                               const std::filesystem::path& out_dir);
nlohmann::json run_experiment2(const Experiment2Params& params, std::uint64_t seed,
                               const std::filesystem::path& out_dir);
nlohmann::json run_experiment3(const Experiment3Params& params, std::uint64_t seed,
                               const std::filesystem::path& out_dir);

/// Empirical mean and variance (divisor n) of every residual entry.
std::pair<double, double> residual_moments(const Matrix& residuals);

}  // namespace charme::cli

namespace charme::cli {

// Output tables shared by the subcommands and the presets.
CsvTable residuals_csv(const Matrix& residuals);
CsvTable trace_csv(const std::vector<double>& trace);
CsvTable qq_csv(const QQData& qq);
CsvTable tau_csv(const StabilityReport& report);

}  // namespace charme::cli
