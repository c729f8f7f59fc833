#pragma once

#include "charme/estimator.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace charme {

/// Block-diagonal matrix; block k belongs to expert k (canonical flattening).
struct BlockDiagonal {
  std::vector<Matrix> blocks;

  [[nodiscard]] Index size() const noexcept;
  [[nodiscard]] Matrix dense() const;
};

/// V: block k = (1/n) sum_t 1{R_t = k} J_t^T J_t, J_t the Jacobian of f_k in theta_k.
/// Requires constant volatility.
BlockDiagonal estimate_V(const CharmeModel& model, const Trajectory& data);

/// W: block k = (1/n) sum_t 1{R_t = k} (r_t^T J_t)^T (r_t^T J_t), r_t = X_t - f_k.
BlockDiagonal estimate_W(const CharmeModel& model, const Trajectory& data);

/// Largest condition number a V block may have before it counts as singular.
inline constexpr double kMaxBlockCondition = 1e12;

struct SandwichResult {
  BlockDiagonal covariance;            // V_kk^-1 W_kk V_kk^-1 per block
  std::vector<double> condition_numbers;
  std::vector<double> jitter;           // diagonal jitter used per block
};

/// Block-wise V^-1 W V^-1. SingularBlock when a V block has condition number
/// >= 1e12 or no jitter level makes its Cholesky factorisation succeed.
SandwichResult sandwich_covariance(const BlockDiagonal& V, const BlockDiagonal& W);

struct AsymptoticsReport {
  BlockDiagonal V;
  BlockDiagonal W;
  SandwichResult sandwich;
};

AsymptoticsReport asymptotics_report(const CharmeModel& model, const Trajectory& data);
nlohmann::json to_json(const AsymptoticsReport& report);

struct EtaSample {
  Matrix eta;                          // N x D, rows sqrt(n) (theta_hat - theta0)
  Index n = 0;
  Index N = 0;                         // requested replicates
  std::vector<std::uint64_t> seeds;    // data seed of each kept row
  std::vector<Index> replicate;        // 1-based replicate index of each kept row
  std::vector<std::string> failures;   // one message per dropped replicate
};

struct MonteCarloOptions {
  Index burn_in = -1;       // negative: default_burn_in(p)
  std::size_t workers = 0;  // 0: worker_count()
  double max_failure_fraction = 0.2;
};

/// Replicate t (1-based) simulates model0 with derive_seed(master, kReplicateData, t)
/// and fits from theta0 (cfg.init is forced to Provided, cfg.seed to
/// derive_seed(master, kReplicateFit, t)). Rows come back in replicate order.
EtaSample monte_carlo_eta(const CharmeModel& model0, Index N, Index n, const FitConfig& fit_cfg,
                          std::uint64_t master_seed, MonteCarloOptions opts = {});

CsvTable eta_to_csv(const EtaSample& sample);
Matrix matrix_from_csv(const CsvTable& table);

}  // namespace charme
