#pragma once

#include "charme/error.hpp"
#include "charme/neural_net.hpp"

#include <Eigen/Cholesky>

namespace charme {

/// Diagonal jitter levels tried in order, relative to the mean diagonal.
inline constexpr double kJitterLevels[] = {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8};

struct CholeskyFactor {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;  // absolute amount added to the diagonal

  [[nodiscard]] Matrix inverse() const;
  [[nodiscard]] Matrix solve(const Eigen::Ref<const Matrix>& rhs) const { return llt.solve(rhs); }
};

/// Cholesky factorisation of a symmetric matrix, escalating diagonal jitter
/// from 0 to 1e-8 until it succeeds. Throws Error(on_failure) otherwise.
CholeskyFactor robust_cholesky(const Eigen::Ref<const Matrix>& a, ErrorCode on_failure);

/// lambda_max / lambda_min of a symmetric matrix; +inf when lambda_min <= 0.
double condition_number(const Eigen::Ref<const Matrix>& symmetric);

/// Sample covariance of the rows of x with the given divisor (N or N - 1).
Matrix covariance(const Eigen::Ref<const Matrix>& x, double divisor);

}  // namespace charme
