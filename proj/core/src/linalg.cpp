#include "charme/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace charme {

Matrix CholeskyFactor::inverse() const {
  const Index n = llt.matrixLLT().rows();
  return llt.solve(Matrix::Identity(n, n));
}

CholeskyFactor robust_cholesky(const Eigen::Ref<const Matrix>& a, ErrorCode on_failure) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::ShapeMismatch, "Cholesky needs a square matrix");
  if (!a.allFinite()) throw Error(on_failure, "matrix has non-finite entries");
  const Index n = a.rows();
  const double scale = n > 0 ? std::max(a.diagonal().cwiseAbs().mean(), std::numeric_limits<double>::min()) : 1.0;
  for (double level : kJitterLevels) {
    CholeskyFactor f;
    f.jitter = level * scale;
    Matrix shifted = a;
    shifted.diagonal().array() += f.jitter;
    f.llt.compute(shifted);
    if (f.llt.info() == Eigen::Success && (f.llt.matrixLLT().diagonal().array() > 0.0).all()) return f;
  }
  throw Error(on_failure, "matrix is not positive definite even with 1e-8 relative jitter");
}

double condition_number(const Eigen::Ref<const Matrix>& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  if (ev.size() == 0) return 1.0;
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

Matrix covariance(const Eigen::Ref<const Matrix>& x, double divisor) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  return (centered.transpose() * centered) / divisor;
}

}  // namespace charme
