#pragma once

#include "charme/error.hpp"
#include "charme/model.hpp"
#include "charme/simulator.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace charme {

struct FitConfig {
  enum class Init { Uniform, Provided };

  Index epochs = 100;
  Index batch_size = 32;
  double lr0 = 1e-3;
  double decay = 0.0;  // lr_j = lr0 / (1 + decay * j), j = update count
  std::uint64_t seed = 0;
  std::optional<double> lipschitz_cap;
  Init init = Init::Uniform;
  /// Uniform: parameters drawn from U(-init_scale, init_scale).
  /// Provided: the model's own parameters plus U(-init_scale, init_scale) jitter.
  double init_scale = 0.05;
  /// Keeps every bias at its initial value (no-intercept fits).
  bool freeze_biases = false;
};

/// Throws ShapeMismatch or DomainError for unusable settings.
void validate_fit_config(const FitConfig& cfg);

struct FitResult {
  CharmeModel model;                // fitted model
  std::vector<Vector> theta_hat;    // canonical f_k parameters, k = 1..K
  std::vector<double> loss_trace;   // Q_n after each epoch
  double final_loss = 0.0;
  Index iterations = 0;             // mini-batch updates
  bool projected = false;           // the cap changed at least one iterate
};

/// Raised when Q_n or a gradient turns non-finite; carries the trace so far.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(const std::string& what, std::vector<double> trace)
      : Error(ErrorCode::NonFiniteLoss, what), trace_(std::move(trace)) {}
  [[nodiscard]] const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

/// Q_n = (1/n) sum_t loss(X_t, f_{R_t}(lags), g_{R_t}(lags)).
double qn_loss(const CharmeModel& model, const Trajectory& data, const LossSpec& loss);

/// Whether sgd_fit also trains the volatility networks (NormalizedPower only).
bool trains_volatility(const CharmeModel& model, const LossSpec& loss);

/// Every trained parameter: f_1..f_K, then the volatility networks when trained.
Vector trainable_parameters(const CharmeModel& model, const LossSpec& loss);
CharmeModel with_trainable_parameters(const CharmeModel& model, const LossSpec& loss,
                                      std::span<const double> params);

/// Gradient of Q_n restricted to the time indices in `times` (1-based), scaled
/// by 1/|times|. Layout follows trainable_parameters.
Vector qn_gradient(const CharmeModel& model, const Trajectory& data, const LossSpec& loss,
                   std::span<const Index> times);

/// Mini-batch SGD on Q_n. Deterministic for fixed inputs and cfg.seed.
FitResult sgd_fit(const CharmeModel& init, const Trajectory& data, const LossSpec& loss,
                  const FitConfig& cfg);

struct FittedValues {
  Matrix x_hat;      // n x d, row t - 1 holds the active expert's prediction
  Matrix residuals;  // X_t - x_hat_t
};

FittedValues fitted_and_residuals(const CharmeModel& model, const Trajectory& data);

/// Shape checks shared by every routine that walks a trajectory with a model.
void check_data(const CharmeModel& model, const Trajectory& data);

}  // namespace charme
