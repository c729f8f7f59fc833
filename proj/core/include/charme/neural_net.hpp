#pragma once

#include "charme/activation.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace charme {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/**
 * Fully connected feedforward network.
 *
 * Hidden layers compute phi(W x + b); the last layer is affine. Layer indices
 * in this API are 0-based, so weight(0) is the first layer W^(1).
 *
 * The canonical parameter ordering (used by every flattening in the library)
 * walks layers first to last and, within a layer, emits the weight matrix in
 * row-major order followed by the bias vector.
 */
class FeedforwardNet {
 public:
  /// Throws ShapeMismatch for inconsistent shapes and DomainError for non-finite entries.
  FeedforwardNet(std::vector<Matrix> weights, std::vector<Vector> biases, Activation activation);

  /// All-zero weights and biases with the given widths (N_0, ..., N_L).
  static FeedforwardNet zeros(std::span<const Index> widths, Activation activation);

  [[nodiscard]] std::vector<Index> widths() const;
  [[nodiscard]] std::size_t depth() const noexcept { return weights_.size(); }
  [[nodiscard]] Index input_width() const noexcept { return weights_.front().cols(); }
  [[nodiscard]] Index output_width() const noexcept { return weights_.back().rows(); }
  [[nodiscard]] Activation activation() const noexcept { return activation_; }

  [[nodiscard]] const Matrix& weight(std::size_t layer) const { return weights_.at(layer); }
  [[nodiscard]] const Vector& bias(std::size_t layer) const { return biases_.at(layer); }
  [[nodiscard]] const std::vector<Matrix>& weights() const noexcept { return weights_; }
  [[nodiscard]] const std::vector<Vector>& biases() const noexcept { return biases_; }

  [[nodiscard]] std::size_t parameter_count() const noexcept;

  /// Parameters in canonical order.
  [[nodiscard]] Vector parameters() const;

  /// Same architecture with parameters replaced (canonical order).
  [[nodiscard]] FeedforwardNet with_parameters(std::span<const double> theta) const;

  [[nodiscard]] FeedforwardNet with_layer(std::size_t layer, Matrix w, Vector b) const;

  friend bool operator==(const FeedforwardNet& a, const FeedforwardNet& b);

 private:
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  Activation activation_;
};

/// Gradient of upstream^T f(x, theta) with respect to every weight and bias.
struct ParamGradient {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  /// Canonical flattening, identical to FeedforwardNet::parameters().
  [[nodiscard]] Vector flatten() const;
};

Vector forward(const FeedforwardNet& net, const Eigen::Ref<const Vector>& x);

ParamGradient param_gradient(const FeedforwardNet& net, const Eigen::Ref<const Vector>& x,
                             const Eigen::Ref<const Vector>& upstream);

struct SpectralNormResult {
  double value = 0.0;
  bool converged = true;
  int iterations = 0;
};

/// Largest singular value by power iteration on A^T A (abs. tolerance 1e-10,
/// at most 10000 iterations, start vector all-ones normalized). A start that
/// lands below the largest column or row norm is rerun from that column/row.
SpectralNormResult spectral_norm(const Eigen::Ref<const Matrix>& a);

/// Lip(phi)^(L - from_layer) * prod_{l = from_layer+1..L} ||W^(l)||, layers 1-based.
/// from_layer = 1 drops the first layer; from_layer = 0 bounds the whole net.
double layer_product_lipschitz(const FeedforwardNet& net, std::size_t from_layer);

/// Spectral norms of the p column blocks (each d wide) of the first-layer weight.
std::vector<double> first_layer_block_norms(const FeedforwardNet& net, Index p, Index d);

/// Rescales every layer whose spectral norm exceeds cap^(1/L) down to that
/// value. Idempotent: a projected net is returned unchanged bitwise.
FeedforwardNet project_layer_caps(const FeedforwardNet& net, double cap);

/// Scratch buffers for allocation-free forward/backward passes.
class NetWorkspace {
 public:
  explicit NetWorkspace(const FeedforwardNet& net);

  /// Runs the forward pass and keeps intermediates for backward().
  const Vector& forward(const FeedforwardNet& net, const Eigen::Ref<const Vector>& x);

  /// Adds scale * upstream^T d f / d theta into grad (canonical order).
  /// Must follow forward() on the same net and input.
  void backward(const FeedforwardNet& net, const Eigen::Ref<const Vector>& upstream, double scale,
                std::span<double> grad);

  [[nodiscard]] const Vector& output() const noexcept { return pre_.back(); }

 private:
  std::vector<std::size_t> offsets_;  // layer starts in the canonical vector
  std::size_t parameter_count_ = 0;
  Vector input_;
  std::vector<Vector> pre_;   // pre-activations per layer
  std::vector<Vector> post_;  // activations per hidden layer
  Vector delta_;
  Vector next_;
};

}  // namespace charme
