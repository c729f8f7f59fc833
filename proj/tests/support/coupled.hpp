#pragma once

#include "test_support.hpp"

#include <charme/simulator.hpp>
#include <charme/stability.hpp>

namespace charme::testing {

/// Rescales every expert's last layer so its Lipschitz estimate A_k equals `target`.
inline CharmeModel with_expert_lipschitz(CharmeModel model, double target) {
  const auto lips = expert_lipschitz(model);
  for (std::size_t k = 0; k < model.experts.size(); ++k) {
    auto& f = model.experts[k].f;
    const std::size_t last = f.depth() - 1;
    if (lips[k].A > 0.0) f = f.with_layer(last, f.weight(last) * (target / lips[k].A), f.bias(last));
  }
  return model;
}

/// Adds `shift` to every expert's output bias, so each f_k moves by exactly ||shift||.
inline CharmeModel shifted(CharmeModel model, const Vector& shift) {
  for (auto& e : model.experts) {
    const std::size_t last = e.f.depth() - 1;
    e.f = e.f.with_layer(last, e.f.weight(last), e.f.bias(last) + shift);
  }
  return model;
}

/// Zeroes first-layer column blocks keep+1..p: the lag-truncated companion model.
inline CharmeModel truncated(CharmeModel model, Index keep) {
  for (auto& e : model.experts) {
    Matrix w = e.f.weight(0);
    w.rightCols((model.p - keep) * model.d).setZero();
    e.f = e.f.with_layer(0, std::move(w), e.f.bias(0));
  }
  return model;
}

/// Mean of ||X_a,t - X_b,t|| over t = 1..n.
inline double mean_gap(const Trajectory& a, const Trajectory& b) {
  double s = 0.0;
  for (Index t = 1; t <= a.n(); ++t) s += (a.state(t) - b.state(t)).norm();
  return s / static_cast<double>(a.n());
}

/// Certified p-lag model with smooth experts used by the coupling checks.
inline CharmeModel coupling_model(std::uint64_t seed, Index p, Index K = 2, double target_A = 0.6) {
  Gen gen(seed);
  CharmeModel m = random_model(gen, K, p, 1, {6, 4}, ActivationTag::Tanh, 1.0);
  return with_expert_lipschitz(m, target_A);
}

}  // namespace charme::testing
