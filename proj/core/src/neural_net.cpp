#include "charme/neural_net.hpp"
#include "charme/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace charme {

namespace {

constexpr double kPowerTolerance = 1e-10;
constexpr int kPowerMaxIterations = 10'000;

void check_finite(const Eigen::Ref<const Matrix>& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorCode::DomainError, std::string(what) + " has non-finite entries");
}

SpectralNormResult power_iteration(const Eigen::Ref<const Matrix>& a, Vector v) {
  SpectralNormResult out;
  out.converged = false;
  Vector av(a.rows());
  double sigma = 0.0;
  for (int it = 1; it <= kPowerMaxIterations; ++it) {
    av.noalias() = a * v;
    const double next = av.norm();
    Vector u = a.transpose() * av;
    const double unorm = u.norm();
    out.iterations = it;
    if (unorm == 0.0) {
      // v is in the null space; nothing more to learn from this start.
      out.value = next;
      out.converged = true;
      return out;
    }
    v = u / unorm;
    if (std::abs(next - sigma) < kPowerTolerance) {
      out.value = next;
      out.converged = true;
      return out;
    }
    sigma = next;
  }
  out.value = sigma;
  return out;
}

}  // namespace

FeedforwardNet::FeedforwardNet(std::vector<Matrix> weights, std::vector<Vector> biases,
                               Activation activation)
    : weights_(std::move(weights)), biases_(std::move(biases)), activation_(activation) {
  if (weights_.empty()) throw Error(ErrorCode::ShapeMismatch, "network needs at least one layer");
  if (weights_.size() != biases_.size())
    throw Error(ErrorCode::ShapeMismatch, "weights and biases have different layer counts");
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const auto& w = weights_[l];
    if (w.rows() < 1 || w.cols() < 1)
      throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(l + 1) + " has an empty weight");
    if (biases_[l].size() != w.rows())
      throw Error(ErrorCode::ShapeMismatch, "bias length mismatch at layer " + std::to_string(l + 1));
    if (l > 0 && w.cols() != weights_[l - 1].rows())
      throw Error(ErrorCode::ShapeMismatch, "width mismatch entering layer " + std::to_string(l + 1));
    check_finite(w, "weight");
    check_finite(biases_[l], "bias");
  }
}

FeedforwardNet FeedforwardNet::zeros(std::span<const Index> widths, Activation activation) {
  if (widths.size() < 2) throw Error(ErrorCode::ShapeMismatch, "widths need at least two entries");
  std::vector<Matrix> w;
  std::vector<Vector> b;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    if (widths[l] < 1 || widths[l - 1] < 1) throw Error(ErrorCode::ShapeMismatch, "widths must be positive");
    w.push_back(Matrix::Zero(widths[l], widths[l - 1]));
    b.push_back(Vector::Zero(widths[l]));
  }
  return FeedforwardNet(std::move(w), std::move(b), activation);
}

std::vector<Index> FeedforwardNet::widths() const {
  std::vector<Index> out{weights_.front().cols()};
  for (const auto& w : weights_) out.push_back(w.rows());
  return out;
}

std::size_t FeedforwardNet::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& w : weights_) n += static_cast<std::size_t>(w.size() + w.rows());
  return n;
}

Vector FeedforwardNet::parameters() const {
  Vector theta(static_cast<Index>(parameter_count()));
  Index pos = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const auto& w = weights_[l];
    for (Index i = 0; i < w.rows(); ++i)
      for (Index j = 0; j < w.cols(); ++j) theta[pos++] = w(i, j);
    theta.segment(pos, biases_[l].size()) = biases_[l];
    pos += biases_[l].size();
  }
  return theta;
}

FeedforwardNet FeedforwardNet::with_parameters(std::span<const double> theta) const {
  if (theta.size() != parameter_count())
    throw Error(ErrorCode::ShapeMismatch, "parameter vector has length " + std::to_string(theta.size()) +
                                              ", expected " + std::to_string(parameter_count()));
  std::vector<Matrix> w(weights_.size());
  std::vector<Vector> b(biases_.size());
  std::size_t pos = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    w[l].resize(weights_[l].rows(), weights_[l].cols());
    for (Index i = 0; i < w[l].rows(); ++i)
      for (Index j = 0; j < w[l].cols(); ++j) w[l](i, j) = theta[pos++];
    b[l].resize(biases_[l].size());
    for (Index i = 0; i < b[l].size(); ++i) b[l][i] = theta[pos++];
  }
  return FeedforwardNet(std::move(w), std::move(b), activation_);
}

FeedforwardNet FeedforwardNet::with_layer(std::size_t layer, Matrix w, Vector b) const {
  auto ws = weights_;
  auto bs = biases_;
  ws.at(layer) = std::move(w);
  bs.at(layer) = std::move(b);
  return FeedforwardNet(std::move(ws), std::move(bs), activation_);
}

bool operator==(const FeedforwardNet& a, const FeedforwardNet& b) {
  if (a.activation_ != b.activation_ || a.weights_.size() != b.weights_.size()) return false;
  for (std::size_t l = 0; l < a.weights_.size(); ++l) {
    if (a.weights_[l].rows() != b.weights_[l].rows() || a.weights_[l].cols() != b.weights_[l].cols())
      return false;
    if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) return false;
  }
  return true;
}

Vector ParamGradient::flatten() const {
  Index n = 0;
  for (const auto& w : weights) n += w.size() + w.rows();
  Vector out(n);
  Index pos = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (Index i = 0; i < weights[l].rows(); ++i)
      for (Index j = 0; j < weights[l].cols(); ++j) out[pos++] = weights[l](i, j);
    out.segment(pos, biases[l].size()) = biases[l];
    pos += biases[l].size();
  }
  return out;
}

NetWorkspace::NetWorkspace(const FeedforwardNet& net) {
  input_.resize(net.input_width());
  for (const auto& w : net.weights()) {
    offsets_.push_back(parameter_count_);
    parameter_count_ += static_cast<std::size_t>(w.size() + w.rows());
    pre_.emplace_back(w.rows());
    post_.emplace_back(w.rows());
  }
}

const Vector& NetWorkspace::forward(const FeedforwardNet& net, const Eigen::Ref<const Vector>& x) {
  if (x.size() != net.input_width())
    throw Error(ErrorCode::ShapeMismatch, "input has length " + std::to_string(x.size()) + ", expected " +
                                              std::to_string(net.input_width()));
  input_ = x;
  const auto phi = net.activation();
  const std::size_t depth = net.depth();
  for (std::size_t l = 0; l < depth; ++l) {
    const Vector& in = l == 0 ? input_ : post_[l - 1];
    pre_[l].noalias() = net.weight(l) * in;
    pre_[l] += net.bias(l);
    if (l + 1 < depth) {
      for (Index i = 0; i < pre_[l].size(); ++i) post_[l][i] = phi.apply(pre_[l][i]);
    }
  }
  return pre_.back();
}

void NetWorkspace::backward(const FeedforwardNet& net, const Eigen::Ref<const Vector>& upstream,
                            double scale, std::span<double> grad) {
  if (upstream.size() != net.output_width())
    throw Error(ErrorCode::ShapeMismatch, "upstream has length " + std::to_string(upstream.size()) +
                                              ", expected " + std::to_string(net.output_width()));
  if (grad.size() != parameter_count_ || offsets_.size() != net.depth())
    throw Error(ErrorCode::ShapeMismatch, "gradient buffer does not match the workspace network");

  const std::size_t depth = net.depth();

  const auto phi = net.activation();
  delta_ = upstream;
  for (std::size_t l = depth; l-- > 0;) {
    const auto& w = net.weight(l);
    const Vector& in = l == 0 ? input_ : post_[l - 1];
    Eigen::Map<RowMajorMatrix> gw(grad.data() + offsets_[l], w.rows(), w.cols());
    Eigen::Map<Vector> gb(grad.data() + offsets_[l] + w.size(), w.rows());
    gw.noalias() += (scale * delta_) * in.transpose();
    gb.noalias() += scale * delta_;
    if (l > 0) {
      next_.noalias() = w.transpose() * delta_;
      const Vector& z = pre_[l - 1];
      for (Index i = 0; i < next_.size(); ++i) next_[i] *= phi.derivative(z[i]);
      delta_.swap(next_);
    }
  }
}

Vector forward(const FeedforwardNet& net, const Eigen::Ref<const Vector>& x) {
  NetWorkspace ws(net);
  return ws.forward(net, x);
}

ParamGradient param_gradient(const FeedforwardNet& net, const Eigen::Ref<const Vector>& x,
                             const Eigen::Ref<const Vector>& upstream) {
  NetWorkspace ws(net);
  ws.forward(net, x);
  std::vector<double> flat(net.parameter_count(), 0.0);
  ws.backward(net, upstream, 1.0, flat);

  ParamGradient out;
  std::size_t pos = 0;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& w = net.weight(l);
    out.weights.emplace_back(Eigen::Map<const RowMajorMatrix>(flat.data() + pos, w.rows(), w.cols()));
    pos += static_cast<std::size_t>(w.size());
    out.biases.emplace_back(Eigen::Map<const Vector>(flat.data() + pos, w.rows()));
    pos += static_cast<std::size_t>(w.rows());
  }
  return out;
}

SpectralNormResult spectral_norm(const Eigen::Ref<const Matrix>& a) {
  if (!a.allFinite()) throw Error(ErrorCode::DomainError, "spectral_norm: non-finite matrix entries");
  if (a.size() == 0) return {};

  const Index cols = a.cols();
  SpectralNormResult best = power_iteration(a, Vector::Constant(cols, 1.0 / std::sqrt(double(cols))));

  // sigma_max is at least every column norm and every row norm; a start
  // orthogonal to the top singular direction shows up as falling short.
  Index best_col = 0;
  Index best_row = 0;
  const double col_bound = a.colwise().norm().maxCoeff(&best_col);
  const double row_bound = a.rowwise().norm().maxCoeff(&best_row);
  const double lower = std::max(col_bound, row_bound);
  if (best.value < lower - 1e-12 * std::max(1.0, lower)) {
    Vector start = col_bound >= row_bound ? Vector(Vector::Unit(cols, best_col))
                                          : Vector(a.row(best_row).transpose() / row_bound);
    auto retry = power_iteration(a, std::move(start));
    retry.iterations += best.iterations;
    if (retry.value > best.value) best = retry;
    best.value = std::max(best.value, lower);
  }
  return best;
}

double layer_product_lipschitz(const FeedforwardNet& net, std::size_t from_layer) {
  const std::size_t depth = net.depth();
  if (from_layer > depth)
    throw Error(ErrorCode::ShapeMismatch, "from_layer exceeds network depth");
  double bound = std::pow(net.activation().lipschitz_constant(), double(depth - from_layer));
  for (std::size_t l = from_layer; l < depth; ++l) bound *= spectral_norm(net.weight(l)).value;
  return bound;
}

std::vector<double> first_layer_block_norms(const FeedforwardNet& net, Index p, Index d) {
  const auto& w = net.weight(0);
  if (p < 1 || d < 1 || w.cols() != p * d)
    throw Error(ErrorCode::ShapeMismatch, "first layer has " + std::to_string(w.cols()) +
                                              " columns, expected p*d = " + std::to_string(p * d));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) out.push_back(spectral_norm(w.middleCols(i * d, d)).value);
  return out;
}

FeedforwardNet project_layer_caps(const FeedforwardNet& net, double cap) {
  if (!(cap > 0.0)) throw Error(ErrorCode::DomainError, "Lipschitz cap must be positive");
  const double target = std::pow(cap, 1.0 / double(net.depth()));
  std::vector<Matrix> weights = net.weights();
  bool changed = false;
  for (auto& w : weights) {
    const double norm = spectral_norm(w).value;
    if (norm <= target) continue;
    double scale = target / norm;
    Matrix scaled = scale * w;
    // Shrink by ulps until the computed norm sits inside the cap so that a
    // second projection sees nothing to do.
    while (spectral_norm(scaled).value > target) {
      scale *= 1.0 - 4.0 * std::numeric_limits<double>::epsilon();
      scaled = scale * w;
    }
    w = std::move(scaled);
    changed = true;
  }
  if (!changed) return net;
  return FeedforwardNet(std::move(weights), net.biases(), net.activation());
}

}  // namespace charme
