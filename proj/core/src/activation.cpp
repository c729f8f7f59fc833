#include "charme/activation.hpp"
#include "charme/error.hpp"

#include <cmath>

namespace charme {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::MomentUndefined: return "MomentUndefined";
    case ErrorCode::ModelMismatch: return "ModelMismatch";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::SingularBlock: return "SingularBlock";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::SampleSizeOutOfRange: return "SampleSizeOutOfRange";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::TooManyFailures: return "TooManyFailures";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

double Activation::apply(double z) const noexcept {
  switch (tag_) {
    case ActivationTag::ReLU: return z > 0.0 ? z : 0.0;
    case ActivationTag::Sigmoid:
      if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
      else {
        const double e = std::exp(z);
        return e / (1.0 + e);
      }
    case ActivationTag::Softplus:
      // log(1 + e^z) without overflow
      return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    case ActivationTag::Tanh: return std::tanh(z);
    case ActivationTag::Identity: return z;
  }
  return z;
}

double Activation::derivative(double z) const noexcept {
  switch (tag_) {
    case ActivationTag::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case ActivationTag::Sigmoid: {
      const double s = apply(z);
      return s * (1.0 - s);
    }
    case ActivationTag::Softplus:
      return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    case ActivationTag::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case ActivationTag::Identity: return 1.0;
  }
  return 1.0;
}

std::string_view to_string(ActivationTag tag) noexcept {
  switch (tag) {
    case ActivationTag::ReLU: return "relu";
    case ActivationTag::Sigmoid: return "sigmoid";
    case ActivationTag::Softplus: return "softplus";
    case ActivationTag::Tanh: return "tanh";
    case ActivationTag::Identity: return "identity";
  }
  return "relu";
}

std::optional<ActivationTag> activation_from_string(std::string_view name) noexcept {
  if (name == "relu") return ActivationTag::ReLU;
  if (name == "sigmoid") return ActivationTag::Sigmoid;
  if (name == "softplus") return ActivationTag::Softplus;
  if (name == "tanh") return ActivationTag::Tanh;
  if (name == "identity") return ActivationTag::Identity;
  return std::nullopt;
}

}  // namespace charme
