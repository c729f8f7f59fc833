#include "charme/stability.hpp"
#include "charme/csv.hpp"
#include "charme/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace charme {

namespace {

void require_contraction(double c, const char* what) {
  if (!(c >= 0.0 && c < 1.0))
    throw Error(ErrorCode::DomainError, std::string(what) + " requires 0 <= c < 1, got " + std::to_string(c));
}

std::vector<double> lag_bounds(const FeedforwardNet& net, Index p, Index d) {
  const double tail = layer_product_lipschitz(net, 1) * net.activation().lipschitz_constant();
  auto blocks = first_layer_block_norms(net, p, d);
  for (double& b : blocks) b *= tail;
  return blocks;
}

}  // namespace

std::vector<ExpertLipschitz> expert_lipschitz(const CharmeModel& model) {
  std::vector<ExpertLipschitz> out;
  out.reserve(model.experts.size());
  for (const auto& e : model.experts) {
    ExpertLipschitz lip;
    lip.lag_coeffs_a = lag_bounds(e.f, model.p, model.d);
    if (e.g.is_constant() || !e.g.net) {
      lip.lag_coeffs_b.assign(static_cast<std::size_t>(model.p), 0.0);
    } else {
      lip.lag_coeffs_b = lag_bounds(*e.g.net, model.p, model.d);
    }
    lip.A = std::accumulate(lip.lag_coeffs_a.begin(), lip.lag_coeffs_a.end(), 0.0);
    lip.B = std::accumulate(lip.lag_coeffs_b.begin(), lip.lag_coeffs_b.end(), 0.0);
    out.push_back(std::move(lip));
  }
  return out;
}

double contraction_coefficient(std::span<const double> pi, std::span<const double> A,
                               std::span<const double> B, double moment_m, double m) {
  if (pi.size() != A.size() || pi.size() != B.size())
    throw Error(ErrorCode::ShapeMismatch, "pi, A and B must have K entries each");
  if (!(m >= 1.0)) throw Error(ErrorCode::MomentUndefined, "C(m) needs m >= 1");
  double sum = 0.0;
  for (std::size_t k = 0; k < pi.size(); ++k)
    sum += pi[k] * (std::pow(A[k], m) + std::pow(B[k], m) * moment_m);
  return std::pow(2.0, m - 1.0) * sum;
}

double compute_Cm(const CharmeModel& model, double m) {
  const auto lips = expert_lipschitz(model);
  std::vector<double> A, B;
  for (const auto& l : lips) {
    A.push_back(l.A);
    B.push_back(l.B);
  }
  return contraction_coefficient(model.pi, A, B, model.innovation.abs_moment(m, model.d), m);
}

double compute_mu1(const CharmeModel& model) {
  const double e1 = model.innovation.abs_moment(1.0, model.d);
  const Vector zero = Vector::Zero(model.d * model.p);
  double mu = 0.0;
  for (std::size_t k = 0; k < model.experts.size(); ++k) {
    const auto& e = model.experts[k];
    mu += model.pi[k] * (forward(e.f, zero).norm() + std::abs(e.g.evaluate(zero)) * e1);
  }
  return mu;
}

std::vector<double> lag_contraction(const CharmeModel& model, std::span<const ExpertLipschitz> lips) {
  const double e1 = model.innovation.abs_moment(1.0, model.d);
  std::vector<double> ci(static_cast<std::size_t>(model.p), 0.0);
  for (std::size_t k = 0; k < lips.size(); ++k)
    for (std::size_t i = 0; i < ci.size(); ++i)
      ci[i] += model.pi[k] * (lips[k].lag_coeffs_a[i] + lips[k].lag_coeffs_b[i] * e1);
  return ci;
}

double tau_bound_finite(double mu1, double c, long p, long r) {
  require_contraction(c, "tau_bound_finite");
  if (p < 1 || r < p) throw Error(ErrorCode::DomainError, "tau_bound_finite requires r >= p >= 1");
  return 2.0 * mu1 / (1.0 - c) * std::pow(c, double(r) / double(p));
}

double tau_bound_infinite(double mu1, double c, std::span<const double> ci, long r, double tail_beyond) {
  require_contraction(c, "tau_bound_infinite");
  if (r < 1) throw Error(ErrorCode::DomainError, "tau_bound_infinite requires r >= 1");
  // suffix[s] = sum_{i > s} c_i, with c_1 stored at ci[0]
  std::vector<double> suffix(ci.size() + 1, tail_beyond);
  for (std::size_t s = ci.size(); s-- > 0;) suffix[s] = suffix[s + 1] + ci[s];
  double best = std::numeric_limits<double>::infinity();
  for (long s = 1; s <= r; ++s) {
    // past the listed coefficients only tail_beyond is known, which still bounds the sum
    const auto us = static_cast<std::size_t>(s);
    const double tail = us < suffix.size() ? suffix[us] : tail_beyond;
    best = std::min(best, std::pow(c, double(r) / double(s)) + tail / (1.0 - c));
  }
  return 2.0 * mu1 / (1.0 - c) * best;
}

double truncation_bound(double mu1, double c, double ci_tail_sum) {
  require_contraction(c, "truncation_bound");
  return mu1 / ((1.0 - c) * (1.0 - c)) * ci_tail_sum;
}

double approximation_bound(std::span<const double> eps_k, std::span<const double> pi, double eps_moment1,
                           double Cm, double m) {
  if (eps_k.size() != pi.size()) throw Error(ErrorCode::ShapeMismatch, "eps_k and pi must have K entries");
  if (!(Cm >= 0.0 && Cm < 1.0)) throw Error(ErrorCode::DomainError, "approximation_bound requires C(m) < 1");
  if (!(m >= 1.0)) throw Error(ErrorCode::DomainError, "approximation_bound requires m >= 1");
  double weighted = 0.0;
  for (std::size_t k = 0; k < pi.size(); ++k) weighted += pi[k] * eps_k[k];
  return (1.0 + eps_moment1) * weighted / (1.0 - std::pow(Cm, 1.0 / m));
}

StabilityReport stability_report(const CharmeModel& model, std::span<const double> ms, long r_max) {
  StabilityReport rep;
  rep.per_expert = expert_lipschitz(model);
  std::vector<double> A, B;
  for (const auto& l : rep.per_expert) {
    A.push_back(l.A);
    B.push_back(l.B);
  }
  auto cm = [&](double m) {
    return contraction_coefficient(model.pi, A, B, model.innovation.abs_moment(m, model.d), m);
  };
  rep.c = cm(1.0);
  rep.Cm[1.0] = rep.c;
  for (double m : ms) rep.Cm[m] = cm(m);
  rep.mu1 = compute_mu1(model);
  rep.ci = lag_contraction(model, rep.per_expert);
  rep.certified_stationary = rep.c < 1.0;
  if (rep.certified_stationary)
    for (long r = model.p; r <= r_max; ++r) rep.tau_curve.emplace_back(r, tau_bound_finite(rep.mu1, rep.c, model.p, r));
  return rep;
}

nlohmann::json to_json(const StabilityReport& report) {
  nlohmann::json experts = nlohmann::json::array();
  for (const auto& e : report.per_expert)
    experts.push_back({{"A", e.A}, {"B", e.B}, {"lag_coeffs_a", e.lag_coeffs_a}, {"lag_coeffs_b", e.lag_coeffs_b}});
  nlohmann::json cm = nlohmann::json::object();
  for (const auto& [m, v] : report.Cm) cm[format_double(m)] = v;
  nlohmann::json tau = nlohmann::json::array();
  for (const auto& [r, b] : report.tau_curve) tau.push_back({{"r", r}, {"bound", b}});
  return {
      {"bounds", "certified upper bounds (layer-product Lipschitz estimates)"},
      {"per_expert", std::move(experts)},
      {"c", report.c},
      {"Cm", std::move(cm)},
      {"mu1", report.mu1},
      {"ci", report.ci},
      {"certified_stationary", report.certified_stationary},
      {"tau_curve", std::move(tau)},
  };
}

}  // namespace charme
