#pragma once

#include "charme/model.hpp"

#include <json.hpp>

#include <map>
#include <span>
#include <utility>
#include <vector>

namespace charme {

/// Per-lag Lipschitz upper bounds of one expert: ||f(x) - f(y)|| <= sum_i a_i ||x_i - y_i||
/// and |g(x) - g(y)| <= sum_i b_i ||x_i - y_i||, with A = sum a_i and B = sum b_i.
struct ExpertLipschitz {
  double A = 0.0;
  double B = 0.0;
  std::vector<double> lag_coeffs_a;
  std::vector<double> lag_coeffs_b;
};

/// Network estimates: a_i = layer_product_lipschitz(f, 1) * Lip(phi) * ||W1 block i||;
/// b_i likewise from the volatility network, and b = 0 for constant volatility.
std::vector<ExpertLipschitz> expert_lipschitz(const CharmeModel& model);

/// 2^(m-1) sum_k pi_k (A_k^m + B_k^m * moment_m) where moment_m = E ||eps_0||^m.
double contraction_coefficient(std::span<const double> pi, std::span<const double> A,
                               std::span<const double> B, double moment_m, double m);

/// C(m) of a model with closed-form innovation moments.
double compute_Cm(const CharmeModel& model, double m);

/// mu_1 = sum_k pi_k (||f_k(0)|| + |g_k(0)| E||eps_0||).
double compute_mu1(const CharmeModel& model);

/// c_i = sum_k pi_k (a_i^(k) + b_i^(k) E||eps_0||), i = 1..p.
std::vector<double> lag_contraction(const CharmeModel& model, std::span<const ExpertLipschitz> lips);

/// 2 mu1 / (1 - c) * c^(r/p) for r >= p. DomainError if c >= 1.
double tau_bound_finite(double mu1, double c, long p, long r);

/// 2 mu1 / (1 - c) * min_{s = 1..r} (c^(r/s) + sum_{i > s} c_i / (1 - c)).
/// ci[0] is c_1; coefficients past the end of ci sum to tail_beyond.
double tau_bound_infinite(double mu1, double c, std::span<const double> ci, long r,
                          double tail_beyond = 0.0);

/// mu1 / (1 - c)^2 * tail sum, bounding E||X_t - X_{p,t}|| for the lag-truncated model.
double truncation_bound(double mu1, double c, double ci_tail_sum);

/// (1 + E||eps_0||) sum_k pi_k eps_k / (1 - C(m)^(1/m)).
double approximation_bound(std::span<const double> eps_k, std::span<const double> pi, double eps_moment1,
                           double Cm, double m);

struct StabilityReport {
  std::vector<ExpertLipschitz> per_expert;
  double c = 0.0;  // C(1)
  std::map<double, double> Cm;
  double mu1 = 0.0;
  std::vector<double> ci;
  bool certified_stationary = false;
  std::vector<std::pair<long, double>> tau_curve;  // (r, bound) for r = p..r_max
};

/// Full certificate: C(m) for every requested m, and the tau curve when c < 1.
StabilityReport stability_report(const CharmeModel& model, std::span<const double> ms, long r_max);

nlohmann::json to_json(const StabilityReport& report);

}  // namespace charme
