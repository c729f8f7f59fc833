#pragma once

#include <optional>
#include <string_view>

namespace charme {

enum class ActivationTag { ReLU, Sigmoid, Softplus, Tanh, Identity };

enum class Smoothness { NonSmooth, ThreeTimesDifferentiable };

/// Componentwise activation map applied after every hidden layer.
class Activation {
 public:
  constexpr Activation() = default;
  constexpr explicit Activation(ActivationTag tag) : tag_(tag) {}

  [[nodiscard]] constexpr ActivationTag tag() const noexcept { return tag_; }

  /// 1 for every supported tag (sigmoid's true modulus 1/4 is bounded by 1).
  [[nodiscard]] constexpr double lipschitz_constant() const noexcept { return 1.0; }

  [[nodiscard]] constexpr Smoothness smoothness() const noexcept {
    return tag_ == ActivationTag::ReLU ? Smoothness::NonSmooth
                                       : Smoothness::ThreeTimesDifferentiable;
  }

  /// True when the map only takes nonnegative values (needed by the volatility floor).
  [[nodiscard]] constexpr bool positive_valued() const noexcept {
    return tag_ == ActivationTag::ReLU || tag_ == ActivationTag::Sigmoid ||
           tag_ == ActivationTag::Softplus;
  }

  [[nodiscard]] double apply(double z) const noexcept;

  /// Derivative at the pre-activation z. ReLU'(0) is 0.
  [[nodiscard]] double derivative(double z) const noexcept;

  friend constexpr bool operator==(Activation, Activation) = default;

 private:
  ActivationTag tag_ = ActivationTag::ReLU;
};

std::string_view to_string(ActivationTag tag) noexcept;
std::optional<ActivationTag> activation_from_string(std::string_view name) noexcept;

}  // namespace charme
