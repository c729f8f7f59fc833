#include "charme/estimator.hpp"
#include "charme/rng.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace charme {

void validate_fit_config(const FitConfig& cfg) {
  if (cfg.epochs < 1) throw Error(ErrorCode::DomainError, "epochs must be >= 1");
  if (cfg.batch_size < 1) throw Error(ErrorCode::DomainError, "batch_size must be >= 1");
  if (!(cfg.lr0 >= 0.0) || !std::isfinite(cfg.lr0)) throw Error(ErrorCode::DomainError, "lr0 must be finite and >= 0");
  if (!(cfg.decay >= 0.0) || !std::isfinite(cfg.decay)) throw Error(ErrorCode::DomainError, "decay must be >= 0");
  if (cfg.lipschitz_cap && !(*cfg.lipschitz_cap > 0.0))
    throw Error(ErrorCode::DomainError, "lipschitz_cap must be positive");
  if (!(cfg.init_scale >= 0.0) || !std::isfinite(cfg.init_scale))
    throw Error(ErrorCode::DomainError, "init_scale must be finite and >= 0");
}

void check_data(const CharmeModel& model, const Trajectory& data) {
  if (data.d != model.d) throw Error(ErrorCode::ShapeMismatch, "data dimension differs from model d");
  if (data.p < model.p) throw Error(ErrorCode::ShapeMismatch, "data carries fewer pre-sample lags than model p");
  if (data.n() < 1) throw Error(ErrorCode::ShapeMismatch, "data has no observations");
  if (data.x.rows() != data.n() + data.p || data.x.cols() != data.d)
    throw Error(ErrorCode::ShapeMismatch, "trajectory matrix has inconsistent shape");
  if (model.experts.size() != static_cast<std::size_t>(model.K))
    throw Error(ErrorCode::ShapeMismatch, "model has K != number of experts");
  for (int r : data.regimes)
    if (r < 0 || r >= model.K) throw Error(ErrorCode::ShapeMismatch, "regime label outside 1..K");
}

bool trains_volatility(const CharmeModel& model, const LossSpec& loss) {
  if (loss.kind != LossSpec::Kind::NormalizedPower) return false;
  for (const auto& e : model.experts)
    if (!e.g.is_constant()) return true;
  return false;
}

Vector trainable_parameters(const CharmeModel& model, const LossSpec& loss) {
  std::vector<Vector> parts;
  Index total = 0;
  for (const auto& e : model.experts) {
    parts.push_back(e.f.parameters());
    total += parts.back().size();
  }
  if (trains_volatility(model, loss))
    for (const auto& e : model.experts)
      if (!e.g.is_constant()) {
        parts.push_back(e.g.net->parameters());
        total += parts.back().size();
      }
  Vector out(total);
  Index at = 0;
  for (const auto& v : parts) {
    out.segment(at, v.size()) = v;
    at += v.size();
  }
  return out;
}

CharmeModel with_trainable_parameters(const CharmeModel& model, const LossSpec& loss,
                                      std::span<const double> params) {
  CharmeModel out = model;
  std::size_t at = 0;
  auto take = [&](const FeedforwardNet& net) {
    const std::size_t count = net.parameter_count();
    if (at + count > params.size()) throw Error(ErrorCode::ShapeMismatch, "parameter vector too short");
    auto next = net.with_parameters(params.subspan(at, count));
    at += count;
    return next;
  };
  for (auto& e : out.experts) e.f = take(e.f);
  if (trains_volatility(model, loss))
    for (auto& e : out.experts)
      if (!e.g.is_constant()) e.g.net = take(*e.g.net);
  if (at != params.size()) throw Error(ErrorCode::ShapeMismatch, "parameter vector length mismatch");
  return out;
}

namespace {

/// Reusable per-expert workspaces for loss and gradient sweeps.
class GradientEngine {
 public:
  GradientEngine(const CharmeModel& model, const LossSpec& loss)
      : loss_(loss), train_vol_(trains_volatility(model, loss)) {
    std::size_t at = 0;
    for (const auto& e : model.experts) {
      f_ws_.emplace_back(e.f);
      f_off_.push_back(at);
      at += e.f.parameter_count();
    }
    for (const auto& e : model.experts) {
      if (!e.g.is_constant()) {
        g_ws_.emplace_back(*e.g.net);
        g_off_.push_back(at);
        if (train_vol_) at += e.g.net->parameter_count();
      } else {
        g_ws_.emplace_back(FeedforwardNet::zeros(std::vector<Index>{1, 1}, Activation(ActivationTag::Identity)));
        g_off_.push_back(at);
      }
    }
    size_ = at;
    lags_.resize(model.d * model.p);
  }

  [[nodiscard]] std::size_t size() const noexcept { return size_; }

  /// Loss at time t; with a gradient buffer also adds scale * d loss / d params.
  double sample(const CharmeModel& model, const Trajectory& data, Index t, double scale, double* grad) {
    const auto k = static_cast<std::size_t>(data.regimes[static_cast<std::size_t>(t - 1)]);
    const auto& expert = model.experts[k];
    data.lags(t, model.p, lags_);
    const Vector& fitted = f_ws_[k].forward(expert.f, lags_);
    resid_ = data.state(t) - fitted;

    if (loss_.kind == LossSpec::Kind::Quadratic) {
      if (grad) {
        upstream_ = -2.0 * resid_;
        f_ws_[k].backward(expert.f, upstream_, scale, {grad + f_off_[k], expert.f.parameter_count()});
      }
      return resid_.squaredNorm();
    }

    const double vol = expert.g.is_constant() ? 1.0 : g_ws_[k].forward(*expert.g.net, lags_)[0];
    const double av = std::abs(vol);
    if (av < loss_.floor || av == 0.0)
      throw Error(ErrorCode::DomainError, "volatility " + std::to_string(vol) + " below the loss floor");
    const double gamma = loss_.gamma;
    const double nr = resid_.norm();
    const double value = std::pow(nr / av, gamma);
    if (grad) {
      if (nr > 0.0) {
        upstream_ = (-gamma * std::pow(nr, gamma - 2.0) / std::pow(av, gamma)) * resid_;
      } else {
        upstream_ = Vector::Zero(resid_.size());
      }
      f_ws_[k].backward(expert.f, upstream_, scale, {grad + f_off_[k], expert.f.parameter_count()});
      if (train_vol_ && !expert.g.is_constant()) {
        const double dv = -gamma * value / av * (vol < 0.0 ? -1.0 : 1.0);
        vol_up_.setConstant(1, dv);
        g_ws_[k].backward(*expert.g.net, vol_up_, scale, {grad + g_off_[k], expert.g.net->parameter_count()});
      }
    }
    return value;
  }

 private:
  LossSpec loss_;
  bool train_vol_;
  std::vector<NetWorkspace> f_ws_, g_ws_;
  std::vector<std::size_t> f_off_, g_off_;
  std::size_t size_ = 0;
  Vector lags_, resid_, upstream_, vol_up_;
};

double mean_loss(GradientEngine& engine, const CharmeModel& model, const Trajectory& data) {
  double total = 0.0;
  for (Index t = 1; t <= data.n(); ++t) total += engine.sample(model, data, t, 0.0, nullptr);
  return total / static_cast<double>(data.n());
}

/// Mask of coordinates held fixed (biases when freeze_biases is set).
std::vector<bool> frozen_mask(const CharmeModel& model, const LossSpec& loss, bool freeze_biases) {
  std::vector<bool> mask;
  auto add = [&](const FeedforwardNet& net) {
    for (std::size_t l = 0; l < net.depth(); ++l) {
      mask.insert(mask.end(), static_cast<std::size_t>(net.weight(l).size()), false);
      mask.insert(mask.end(), static_cast<std::size_t>(net.bias(l).size()), freeze_biases);
    }
  };
  for (const auto& e : model.experts) add(e.f);
  if (trains_volatility(model, loss))
    for (const auto& e : model.experts)
      if (!e.g.is_constant()) add(*e.g.net);
  return mask;
}

/// Keeps trained volatility networks inside the admissible set: nonnegative
/// last-layer weights and last bias at least the floor.
void project_volatility(CharmeModel& model) {
  for (auto& e : model.experts) {
    if (e.g.is_constant()) continue;
    const auto& net = *e.g.net;
    const std::size_t last = net.depth() - 1;
    Matrix w = net.weight(last);
    Vector b = net.bias(last);
    if (net.depth() == 1) {
      w.setZero();
    } else {
      w = w.cwiseMax(0.0);
    }
    b = b.cwiseMax(e.g.floor);
    if (w != net.weight(last) || b != net.bias(last)) e.g.net = net.with_layer(last, std::move(w), std::move(b));
  }
}

}  // namespace

double qn_loss(const CharmeModel& model, const Trajectory& data, const LossSpec& loss) {
  check_data(model, data);
  GradientEngine engine(model, loss);
  return mean_loss(engine, model, data);
}

Vector qn_gradient(const CharmeModel& model, const Trajectory& data, const LossSpec& loss,
                   std::span<const Index> times) {
  check_data(model, data);
  GradientEngine engine(model, loss);
  Vector grad = Vector::Zero(static_cast<Index>(engine.size()));
  if (times.empty()) return grad;
  const double scale = 1.0 / static_cast<double>(times.size());
  for (Index t : times) {
    if (t < 1 || t > data.n()) throw Error(ErrorCode::IndexOutOfRange, "time index outside 1..n");
    engine.sample(model, data, t, scale, grad.data());
  }
  return grad;
}

FitResult sgd_fit(const CharmeModel& init, const Trajectory& data, const LossSpec& loss,
                  const FitConfig& cfg) {
  validate_fit_config(cfg);
  check_data(init, data);
  if (const auto report = validate_loss(init, loss); !report.valid())
    throw Error(ErrorCode::InvalidModel, report.violations.front().code + ": " + report.violations.front().message);

  const bool train_vol = trains_volatility(init, loss);
  const auto frozen = frozen_mask(init, loss, cfg.freeze_biases);
  Vector params = trainable_parameters(init, loss);
  const Index f_count = static_cast<Index>(init.theta_size());

  if (cfg.init_scale > 0.0) {
    const CounterRng rng(cfg.seed, 0, stream::kInit);
    for (Index i = 0; i < params.size(); ++i) {
      if (frozen[static_cast<std::size_t>(i)]) continue;
      const double u = cfg.init_scale * (2.0 * rng.uniform(static_cast<std::uint64_t>(i)) - 1.0);
      if (cfg.init == FitConfig::Init::Uniform) {
        // fresh draws for the mean networks; volatility networks start from the model
        if (i < f_count) params[i] = u;
      } else {
        params[i] += u;
      }
    }
  }

  CharmeModel model = with_trainable_parameters(init, loss, {params.data(), static_cast<std::size_t>(params.size())});
  if (train_vol) project_volatility(model);
  params = trainable_parameters(model, loss);

  GradientEngine engine(model, loss);
  const Index n = data.n();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{1});
  Vector grad(params.size());

  FitResult result;
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    const CounterRng shuffle(cfg.seed, static_cast<std::uint64_t>(epoch), stream::kShuffle);
    for (Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Index>(shuffle.below(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index stop = std::min(n, start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      grad.setZero();
      for (Index b = start; b < stop; ++b)
        engine.sample(model, data, order[static_cast<std::size_t>(b)], scale, grad.data());
      const double lr = cfg.lr0 / (1.0 + cfg.decay * static_cast<double>(result.iterations));
      for (Index i = 0; i < params.size(); ++i)
        if (!frozen[static_cast<std::size_t>(i)]) params[i] -= lr * grad[i];
      ++result.iterations;
      if (!params.allFinite())
        throw NonFiniteLossError("parameters turned non-finite at update " + std::to_string(result.iterations),
                                 result.loss_trace);

      model = with_trainable_parameters(model, loss, {params.data(), static_cast<std::size_t>(params.size())});
      bool changed = false;
      if (cfg.lipschitz_cap) {
        for (auto& e : model.experts) {
          auto capped = project_layer_caps(e.f, *cfg.lipschitz_cap);
          if (!(capped == e.f)) {
            e.f = std::move(capped);
            changed = true;
          }
        }
        result.projected = result.projected || changed;
      }
      if (train_vol) {
        project_volatility(model);
        changed = true;
      }
      if (changed) params = trainable_parameters(model, loss);
    }
    const double q = mean_loss(engine, model, data);
    if (!std::isfinite(q))
      throw NonFiniteLossError("Q_n turned non-finite after epoch " + std::to_string(epoch + 1), result.loss_trace);
    result.loss_trace.push_back(q);
  }

  result.final_loss = result.loss_trace.back();
  for (const auto& e : model.experts) result.theta_hat.push_back(e.f.parameters());
  result.model = std::move(model);
  return result;
}

FittedValues fitted_and_residuals(const CharmeModel& model, const Trajectory& data) {
  check_data(model, data);
  std::vector<NetWorkspace> ws;
  for (const auto& e : model.experts) ws.emplace_back(e.f);
  FittedValues out;
  out.x_hat.resize(data.n(), data.d);
  Vector lags;
  for (Index t = 1; t <= data.n(); ++t) {
    const auto k = static_cast<std::size_t>(data.regimes[static_cast<std::size_t>(t - 1)]);
    data.lags(t, model.p, lags);
    out.x_hat.row(t - 1) = ws[k].forward(model.experts[k].f, lags).transpose();
  }
  out.residuals = data.x.bottomRows(data.n()) - out.x_hat;
  return out;
}

}  // namespace charme
