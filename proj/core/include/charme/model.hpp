#pragma once

#include "charme/neural_net.hpp"

#include <optional>
#include <string>
#include <vector>

namespace charme {

/// Volatility function g_k: either the constant 1 or a network with a positive floor.
struct VolatilitySpec {
  enum class Kind { ConstantOne, Network };

  Kind kind = Kind::ConstantOne;
  std::optional<FeedforwardNet> net;
  double floor = 0.0;  // delta, required when kind == Network

  static VolatilitySpec constant_one() { return {}; }
  static VolatilitySpec network(FeedforwardNet net, double floor) {
    return {Kind::Network, std::move(net), floor};
  }

  [[nodiscard]] bool is_constant() const noexcept { return kind == Kind::ConstantOne; }

  /// g(x); 1 for the constant kind.
  [[nodiscard]] double evaluate(const Eigen::Ref<const Vector>& lags) const;
};

struct ExpertSpec {
  FeedforwardNet f;  // input d*p, output d
  VolatilitySpec g;
};

/// Distribution of the iid innovations epsilon_t in R^d (coordinates iid).
struct InnovationSpec {
  enum class Family { StandardGaussian, ScaledGaussian, TwoPointHalf };

  Family family = Family::StandardGaussian;
  double sigma = 1.0;  // ScaledGaussian only

  static InnovationSpec standard_gaussian() { return {}; }
  static InnovationSpec scaled_gaussian(double sigma) { return {Family::ScaledGaussian, sigma}; }
  /// Coordinates uniform on {0, 1}; simulator fixture only, not zero-mean.
  static InnovationSpec two_point_half() { return {Family::TwoPointHalf, 1.0}; }

  /// ||eps_0||_m = (E ||eps_0||^m)^(1/m) for eps_0 in R^d, in closed form.
  /// Throws MomentUndefined unless m >= 1 is finite.
  [[nodiscard]] double norm_moment(double m, Index d) const;

  /// E ||eps_0||^m.
  [[nodiscard]] double abs_moment(double m, Index d) const;

  [[nodiscard]] bool zero_mean() const noexcept { return family != Family::TwoPointHalf; }
};

/**
 * K-regime mixture of nonlinear AR-ARCH experts on R^d with lag order p:
 * X_t = sum_k 1{R_t = k} (f_k(X_{t-1..t-p}) + g_k(X_{t-1..t-p}) eps_t).
 *
 * Lags enter the networks as (X_{t-1}, ..., X_{t-p}) stacked into one d*p vector.
 */
struct CharmeModel {
  Index d = 1;
  Index p = 1;
  Index K = 1;
  std::vector<double> pi;
  std::vector<ExpertSpec> experts;
  InnovationSpec innovation;

  /// Total number of autoregressive parameters (sum over experts).
  [[nodiscard]] std::size_t theta_size() const noexcept;
};

struct Violation {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  [[nodiscard]] bool valid() const noexcept { return violations.empty(); }
  [[nodiscard]] bool has(std::string_view code) const noexcept;
};

inline constexpr double kProbabilityTolerance = 1e-12;

/// Every invariant violation of the model; empty report means valid.
ValidationReport validate_model(const CharmeModel& model);

/// Rescales a nonnegative vector to sum to one. Never applied implicitly.
std::vector<double> normalize_probabilities(std::vector<double> pi);

struct LossSpec {
  enum class Kind { Quadratic, NormalizedPower };

  Kind kind = Kind::Quadratic;
  double gamma = 2.0;
  double floor = 0.0;  // delta: smallest admissible |vol| for NormalizedPower

  static LossSpec quadratic() { return {}; }
  static LossSpec normalized_power(double gamma, double floor) {
    return {Kind::NormalizedPower, gamma, floor};
  }
};

/// Quadratic: ||x - fitted||^2. NormalizedPower: ||x - fitted||^gamma / |vol|^gamma.
/// Throws DomainError for NormalizedPower with |vol| < floor.
double loss_value(const LossSpec& loss, const Eigen::Ref<const Vector>& x,
                  const Eigen::Ref<const Vector>& fitted, double vol);

/// Checks that a loss is usable with a model (volatility floors for NormalizedPower).
ValidationReport validate_loss(const CharmeModel& model, const LossSpec& loss);

}  // namespace charme
