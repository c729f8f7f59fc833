#include "coupled.hpp"
#include "test_support.hpp"

#include <charme/error.hpp>
#include <charme/simulator.hpp>
#include <charme/stability.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace charme;
using namespace charme::testing;

namespace {

CharmeModel with_vol_net(CharmeModel m, double scale) {
  const FeedforwardNet g({Matrix::Constant(2, m.d * m.p, scale), Matrix::Constant(1, 2, 0.5)},
                         {Vector::Zero(2), Vector::Constant(1, 0.5)}, Activation(ActivationTag::Softplus));
  for (auto& e : m.experts) e.g = VolatilitySpec::network(g, 0.5);
  return m;
}

}  // namespace

TEST(ExpertLipschitz, LinearScalarExpert) {
  for (double a : {0.5, -0.3, 1.7}) {
    const CharmeModel m = ar1_model(a);
    const auto lips = expert_lipschitz(m);
    ASSERT_EQ(lips.size(), 1u);
    EXPECT_NEAR(lips[0].A, std::abs(a), 1e-12);
    EXPECT_EQ(lips[0].B, 0.0);
    EXPECT_NEAR(compute_Cm(m, 1.0), std::abs(a), 1e-12);
  }
}

TEST(ExpertLipschitz, ZeroWeightsGiveZero) {
  CharmeModel m = ar1_model(0.5);
  m.experts[0].f = FeedforwardNet::zeros(std::vector<Index>{1, 3, 1}, Activation(ActivationTag::Tanh));
  EXPECT_EQ(expert_lipschitz(m)[0].A, 0.0);
}

TEST(ExpertLipschitz, MatchesSvdOracleAndSums) {
  Gen gen(1);
  for (int trial = 0; trial < 10; ++trial) {
    CharmeModel m = random_model(gen, 2, 3, 2, {5, 4}, ActivationTag::Sigmoid, 1.2);
    m = with_vol_net(m, 0.2);
    const auto lips = expert_lipschitz(m);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& f = m.experts[k].f;
      const double tail = svd_norm(f.weight(1)) * svd_norm(f.weight(2));
      double expect = 0.0, sum_a = 0.0, sum_b = 0.0;
      for (Index i = 0; i < 3; ++i) expect += tail * svd_norm(f.weight(0).middleCols(i * 2, 2));
      for (double a : lips[k].lag_coeffs_a) sum_a += a;
      for (double b : lips[k].lag_coeffs_b) sum_b += b;
      EXPECT_NEAR(lips[k].A, expect, 1e-8);
      EXPECT_NEAR(lips[k].A, sum_a, 1e-12);
      EXPECT_NEAR(lips[k].B, sum_b, 1e-12);
      EXPECT_GT(lips[k].B, 0.0);
    }
  }
}

TEST(ComputeCm, HandCheckableComposites) {
  const std::vector<double> one{1.0};
  EXPECT_NEAR(contraction_coefficient(one, std::vector<double>{0.5}, std::vector<double>{0.0}, 1.0, 1.0), 0.5, 1e-15);
  EXPECT_NEAR(contraction_coefficient(std::vector<double>{0.5, 0.5}, std::vector<double>{0.4, 0.6},
                                      std::vector<double>{0.0, 0.0}, 1.0, 1.0),
              0.5, 1e-15);
  const double gauss_m2 = InnovationSpec::standard_gaussian().abs_moment(2.0, 1);
  EXPECT_NEAR(contraction_coefficient(one, std::vector<double>{0.5}, std::vector<double>{0.2}, gauss_m2, 2.0), 0.58,
              1e-12);
  EXPECT_THROW(contraction_coefficient(one, std::vector<double>{0.5}, std::vector<double>{0.0}, 1.0, 0.5), Error);
}

TEST(ComputeCm, DoublingAScalesByTwoToTheM) {
  Gen gen(2);
  for (int trial = 0; trial < 20; ++trial) {
    const double m = gen.uniform(1.0, 4.0);
    std::vector<double> pi{0.2, 0.3, 0.5}, A, A2, B(3, 0.0);
    for (int k = 0; k < 3; ++k) {
      A.push_back(gen.uniform(0.0, 1.0));
      A2.push_back(2.0 * A.back());
    }
    const double c1 = contraction_coefficient(pi, A, B, 1.0, m);
    const double c2 = contraction_coefficient(pi, A2, B, 1.0, m);
    EXPECT_NEAR(c2, std::pow(2.0, m) * c1, 1e-12 * c2);
  }
}

TEST(ComputeCm, MomentUndefinedForTwoPointBelowOne) {
  CharmeModel m = ar1_model(0.5);
  EXPECT_THROW(compute_Cm(m, 0.9), Error);
}

TEST(ComputeMu1, ConstantVolatility) {
  CharmeModel m = ar1_model(0.5);
  m.experts[0].f = FeedforwardNet({Matrix::Constant(1, 1, 0.5)}, {Vector::Constant(1, -2.0)},
                                  Activation(ActivationTag::Identity));
  EXPECT_NEAR(compute_mu1(m), 2.0 + std::sqrt(2.0 / std::numbers::pi), 1e-14);
}

TEST(TauBoundFinite, Examples) {
  EXPECT_NEAR(tau_bound_finite(1.0, 0.5, 1, 2), 1.0, 1e-15);
  EXPECT_EQ(tau_bound_finite(0.0, 0.5, 2, 7), 0.0);
  double prev = tau_bound_finite(1.0, 0.7, 3, 3);
  for (long r = 4; r < 40; ++r) {
    const double cur = tau_bound_finite(1.0, 0.7, 3, r);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
  EXPECT_THROW(tau_bound_finite(1.0, 1.0, 1, 2), Error);
}

TEST(TauBoundInfinite, ZeroTailAttainsAtSOne) {
  const std::vector<double> ci{0.3, 0.0, 0.0};
  for (long r = 1; r < 20; ++r) EXPECT_NEAR(tau_bound_infinite(1.5, 0.3, ci, r), 2 * 1.5 / 0.7 * std::pow(0.3, r), 1e-15);
}

TEST(TauBoundInfinite, GeometricCoefficientsMatchScan) {
  std::vector<double> ci;
  for (int i = 1; i <= 60; ++i) ci.push_back(std::pow(0.5, i));
  const double c = 0.5, mu = 1.0;
  const long r = 10;
  // independent scan with the tail summed directly
  double best = INFINITY;
  for (long s = 1; s <= r; ++s) {
    double tail = 0.0;
    for (std::size_t i = static_cast<std::size_t>(s); i < ci.size(); ++i) tail += ci[i];
    best = std::min(best, std::pow(c, double(r) / double(s)) + tail / (1 - c));
  }
  EXPECT_NEAR(tau_bound_infinite(mu, c, ci, r), 2 * mu / (1 - c) * best, 1e-14);
  EXPECT_THROW(tau_bound_infinite(mu, 1.2, ci, r), Error);
}

// Property: the bound never increases with r.
TEST(TauBoundInfinite, NonIncreasingInR) {
  Gen gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> ci;
    const Index len = gen.integer(1, 12);
    for (Index i = 0; i < len; ++i) ci.push_back(gen.uniform(0.0, 0.2));
    double c = 0.0;
    for (double v : ci) c += v;
    if (c >= 1.0) continue;
    const double tail = gen.uniform(0.0, 0.05);
    for (long r = 2; r < 40; ++r)
      EXPECT_LE(tau_bound_infinite(1.0, c, ci, r, tail), tau_bound_infinite(1.0, c, ci, r - 1, tail) + 1e-15);
  }
}

TEST(TruncationBound, Examples) {
  EXPECT_EQ(truncation_bound(3.0, 0.4, 0.0), 0.0);
  EXPECT_NEAR(truncation_bound(1.0, 0.5, 0.1), 0.4, 1e-15);
  EXPECT_THROW(truncation_bound(1.0, 1.0, 0.1), Error);
}

TEST(ApproximationBound, Examples) {
  const std::vector<double> pi{1.0};
  EXPECT_EQ(approximation_bound(std::vector<double>{0.0}, pi, 1.0, 0.5, 1.0), 0.0);
  EXPECT_NEAR(approximation_bound(std::vector<double>{0.1}, pi, 1.0, 0.5, 1.0), 0.4, 1e-15);
  EXPECT_THROW(approximation_bound(std::vector<double>{0.1}, pi, 1.0, 1.0, 1.0), Error);
}

TEST(StabilityReport, InvariantsAndJson) {
  Gen gen(4);
  CharmeModel m = random_model(gen, 3, 2, 1, {4}, ActivationTag::Tanh, 0.8);
  m = with_expert_lipschitz(m, 0.7);
  const std::vector<double> ms{2.0, 3.0};
  const auto rep = stability_report(m, ms, 20);
  EXPECT_NEAR(rep.c, 0.7, 1e-12);
  EXPECT_TRUE(rep.certified_stationary);
  EXPECT_EQ(rep.tau_curve.size(), 19u);
  EXPECT_EQ(rep.tau_curve.front().first, 2);
  EXPECT_NEAR(rep.Cm.at(2.0), 2.0 * 0.49, 1e-12);
  double ci_sum = 0.0;
  for (double c : rep.ci) ci_sum += c;
  EXPECT_NEAR(ci_sum, rep.c, 1e-12);
  const auto doc = to_json(rep);
  EXPECT_TRUE(doc.contains("c"));
  EXPECT_TRUE(doc["Cm"].contains("2"));

  const auto hot = stability_report(with_expert_lipschitz(m, 1.3), ms, 20);
  EXPECT_FALSE(hot.certified_stationary);
  EXPECT_TRUE(hot.tau_curve.empty());
}

// Property: approximation bound dominates the coupled mean gap of shifted experts.
TEST(CoupledDomination, ApproximationBoundSmallScale) {
  const CharmeModel base = coupling_model(5, 2);
  const Vector shift = Vector::Constant(1, 0.1);
  const CharmeModel pert = shifted(base, shift);
  const double c = compute_Cm(base, 1.0);
  ASSERT_LT(c, 1.0);
  const std::vector<double> eps(static_cast<std::size_t>(base.K), 0.1);
  const double bound = approximation_bound(eps, base.pi, base.innovation.abs_moment(1.0, 1), c, 1.0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto [a, b] = coupled_simulate(base, pert, 2000, default_burn_in(base.p), s);
    EXPECT_LE(mean_gap(a, b), bound);
  }
}

// Property: truncation bound dominates the coupled gap to the lag-truncated model.
TEST(CoupledDomination, TruncationBoundSmallScale) {
  const CharmeModel full = coupling_model(6, 8);
  const CharmeModel trunc = truncated(full, 4);
  const auto rep = stability_report(full, {}, 8);
  ASSERT_TRUE(rep.certified_stationary);
  double tail = 0.0;
  for (std::size_t i = 4; i < 8; ++i) tail += rep.ci[i];
  const double bound = truncation_bound(rep.mu1, rep.c, tail);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto [a, b] = coupled_simulate(full, trunc, 2000, default_burn_in(full.p), s);
    EXPECT_LE(mean_gap(a, b), bound);
  }
}
