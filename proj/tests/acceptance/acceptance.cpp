// Acceptance suite: one PASS/FAIL line per criterion. Optional arguments pick
// criteria by number (default: all). Exit status is non-zero if any fails.

#include "cli_runs.hpp"
#include "coupled.hpp"
#include "mvn_fixture.hpp"
#include "test_support.hpp"

#include <presets.hpp>

#include <charme/asymptotics.hpp>
#include <charme/estimator.hpp>
#include <charme/rng.hpp>
#include <charme/simulator.hpp>
#include <charme/stability.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

using namespace charme;
using namespace charme::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1. Analytic parameter derivatives against central differences.
Outcome gradient_correctness() {
  Gen gen(101);
  const ActivationTag smooth[] = {ActivationTag::Tanh, ActivationTag::Sigmoid, ActivationTag::Softplus};
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto widths = gen.widths(4, 8);
    const auto net = gen.net(widths, smooth[trial % 3], 1.0);
    const Vector x = gen.vector(widths.front());
    Vector theta = net.parameters();
    const double h = 1e-5;
    for (Index out = 0; out < widths.back(); ++out) {
      const Vector u = Vector::Unit(widths.back(), out);
      const Vector analytic = param_gradient(net, x, u).flatten();
      for (Index i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + h;
        const double up = forward(net.with_parameters({theta.data(), std::size_t(theta.size())}), x)[out];
        theta[i] = keep - h;
        const double dn = forward(net.with_parameters({theta.data(), std::size_t(theta.size())}), x)[out];
        theta[i] = keep;
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
      }
    }
  }
  return {worst < 1e-5, "max relative error " + fmt("%.2e", worst)};
}

// 2. Stability certificate on hand-checkable cases.
Outcome certificate_exactness() {
  double worst = 0.0;
  bool exact = true;
  for (double a : {0.5, -0.3, 0.9, 1.7}) {
    const CharmeModel m = ar1_model(a);
    const auto lips = expert_lipschitz(m);
    exact = exact && lips[0].A == std::abs(a) && lips[0].B == 0.0;
    worst = std::max(worst, std::abs(compute_Cm(m, 1.0) - std::abs(a)));
  }
  const double gauss_m2 = InnovationSpec::standard_gaussian().abs_moment(2.0, 1);
  const std::vector<double> one{1.0};
  const double c2 = contraction_coefficient(one, std::vector<double>{0.5}, std::vector<double>{0.2}, gauss_m2, 2.0);
  worst = std::max(worst, std::abs(c2 - 0.58));
  const double mix = contraction_coefficient(std::vector<double>{0.25, 0.75}, std::vector<double>{0.4, 0.8},
                                             std::vector<double>{0.0, 0.0}, 1.0, 1.0);
  worst = std::max(worst, std::abs(mix - 0.7));
  return {exact && worst <= 1e-12, std::string("A = |a| ") + (exact ? "exact" : "inexact") + ", max deviation " +
                                       fmt("%.2e", worst)};
}

// 3 and 4. Coupled mean gaps against a bound over 100 seeded trials.
Outcome coupled_domination(const CharmeModel& a, const CharmeModel& b, double bound, std::uint64_t base) {
  int ok = 0;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto [x, y] = coupled_simulate(a, b, 10000, default_burn_in(a.p), derive_seed(base, stream::kTrial, s));
    const double gap = mean_gap(x, y);
    worst = std::max(worst, gap);
    ok += gap <= bound;
  }
  return {ok >= 99, std::to_string(ok) + "/100 within bound " + fmt("%.4f", bound) + ", largest gap " + fmt("%.4f", worst)};
}

Outcome approximation_domination() {
  const CharmeModel base = coupling_model(5, 2);
  const CharmeModel pert = shifted(base, Vector::Constant(1, 0.1));
  const double c = compute_Cm(base, 1.0);
  const std::vector<double> eps(static_cast<std::size_t>(base.K), 0.1);
  const double bound = approximation_bound(eps, base.pi, base.innovation.abs_moment(1.0, 1), c, 1.0);
  return coupled_domination(base, pert, bound, 3);
}

Outcome truncation_domination() {
  const CharmeModel full = coupling_model(6, 8);
  const auto rep = stability_report(full, {}, 8);
  double tail = 0.0;
  for (std::size_t i = 4; i < 8; ++i) tail += rep.ci[i];
  return coupled_domination(full, truncated(full, 4), truncation_bound(rep.mu1, rep.c, tail), 4);
}

FitConfig ar1_fit(bool freeze_biases) {
  FitConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 100;
  cfg.lr0 = 0.1;
  cfg.decay = 0.05;
  cfg.init = FitConfig::Init::Provided;
  cfg.init_scale = 0.0;
  cfg.freeze_biases = freeze_biases;
  return cfg;
}

// 5. Linear AR(1): SGD against the closed-form least-squares slope.
Outcome ols_consistency() {
  double worst_ols = 0.0, worst_true = 0.0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const Trajectory data = simulate(ar1_model(0.5), 10000, default_burn_in(1), derive_seed(s, stream::kReplicateData, 0));
    double num = 0.0, den = 0.0;
    for (Index t = 1; t <= data.n(); ++t) {
      num += data.state(t)[0] * data.state(t - 1)[0];
      den += data.state(t - 1)[0] * data.state(t - 1)[0];
    }
    FitConfig cfg = ar1_fit(true);
    cfg.seed = derive_seed(s, stream::kReplicateFit, 0);
    const double a = sgd_fit(ar1_model(0.0), data, LossSpec::quadratic(), cfg).model.experts[0].f.weight(0)(0, 0);
    worst_ols = std::max(worst_ols, std::abs(a - num / den));
    worst_true = std::max(worst_true, std::abs(a - 0.5));
  }
  return {worst_ols < 1e-3 && worst_true < 0.05,
          "max |a - a_OLS| " + fmt("%.2e", worst_ols) + ", max |a - 0.5| " + fmt("%.4f", worst_true)};
}

// 6. Monte Carlo and sandwich variance of the AR(1) slope against 1 - a^2.
Outcome asymptotic_variance() {
  const CharmeModel m = ar1_model(0.5);
  const EtaSample eta = monte_carlo_eta(m, 200, 5000, ar1_fit(false), 606);
  const Vector slope = eta.eta.col(0);
  const double mean = slope.mean();
  const double mc_var = (slope.array() - mean).square().sum() / double(slope.size() - 1);
  const auto rep = asymptotics_report(m, simulate(m, 5000, default_burn_in(1), 607));
  const double sandwich = rep.sandwich.covariance.blocks[0](0, 0);
  const double mc_rel = std::abs(mc_var / 0.75 - 1.0), sw_rel = std::abs(sandwich / 0.75 - 1.0);
  return {eta.eta.rows() == 200 && mc_rel <= 0.20 && sw_rel <= 0.15,
          "MC variance " + fmt("%.4f", mc_var) + " (" + fmt("%.1f", 100 * mc_rel) + "% off), sandwich " +
              fmt("%.4f", sandwich) + " (" + fmt("%.1f", 100 * sw_rel) + "% off)"};
}

// 7. First experiment preset: residual mean and variance over five seeds.
Outcome residual_recovery(const std::filesystem::path& work) {
  const auto params = cli::Experiment1Params::preset("small");
  int ok = 0;
  std::ostringstream detail;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const auto summary = cli::run_experiment1(params, s, work / ("ex1_" + std::to_string(s)));
    const double mean = summary["result"]["residual_mean"], var = summary["result"]["residual_variance"];
    ok += std::abs(mean) < 0.05 && var >= 0.85 && var <= 1.15;
    detail << (s > 1 ? "; " : "") << fmt("%.3f", mean) << "/" << fmt("%.3f", var);
  }
  return {ok == 5, std::to_string(ok) + "/5 seeds (mean/variance " + detail.str() + ")"};
}

// 8. Third experiment preset: normality of eta over ten meta-runs.
Outcome eta_normality(const std::filesystem::path& work) {
  const auto params = cli::Experiment3Params::preset("small");
  int ok = 0;
  double min_slope = INFINITY, max_slope = -INFINITY;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const auto summary = cli::run_experiment3(params, s, work / ("ex3_" + std::to_string(s)));
    const auto& n = summary["normality"];
    const double slope = n["qq_slope"];
    min_slope = std::min(min_slope, slope);
    max_slope = std::max(max_slope, slope);
    const bool pass = n["mardia_skewness"]["p_value"].get<double>() > 0.01 &&
                      n["mardia_kurtosis"]["p_value"].get<double>() > 0.01 &&
                      n["henze_zirkler"]["p_value"].get<double>() > 0.01 &&
                      n["royston"]["p_value"].get<double>() > 0.01 && slope >= 0.75 && slope <= 1.25;
    ok += pass;
  }
  return {ok >= 8, std::to_string(ok) + "/10 meta-runs pass, Q-Q slopes in [" + fmt("%.3f", min_slope) + ", " +
                       fmt("%.3f", max_slope) + "]"};
}

// 9. Normality statistics against frozen reference results.
Outcome statistic_fidelity() {
  double stat = 0.0, p = 0.0;
  for (const auto& name : mvn_fixture_names()) {
    const auto dev = compare_mvn_fixture(name);
    stat = std::max(stat, dev.stat);
    p = std::max(p, dev.p_value);
  }
  return {stat < 1e-6 && p < 1e-4, "max stat deviation " + fmt("%.2e", stat) + ", max p-value deviation " + fmt("%.2e", p)};
}

// 10. Every subcommand twice, with one and four worker threads.
Outcome determinism(const std::filesystem::path& work) {
  const auto a = pipeline_outputs(work / "det_a", "1");
  const auto b = pipeline_outputs(work / "det_b", "4");
  int differing = 0, failed = 0;
  for (const auto& [key, value] : a) {
    failed += key.rfind("exit:", 0) == 0;
    const auto it = b.find(key);
    differing += it == b.end() || it->second != value;
  }
  differing += a.size() != b.size();
  return {differing == 0 && failed == 0,
          std::to_string(a.size()) + " outputs compared, " + std::to_string(differing) + " differ, " +
              std::to_string(failed) + " commands failed"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
  TempDir work("acceptance");

  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;  // 0: no runtime limit
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 10, gradient_correctness},
      {2, "stability certificate exactness", 0, certificate_exactness},
      {3, "coupled approximation bound domination", 60, approximation_domination},
      {4, "truncation bound domination", 60, truncation_domination},
      {5, "least-squares consistency on AR(1)", 30, ols_consistency},
      {6, "asymptotic variance on AR(1)", 300, asymptotic_variance},
      {7, "residual recovery (experiment1)", 600, [&] { return residual_recovery(work.path()); }},
      {8, "normality of eta (experiment3)", 1200, [&] { return eta_normality(work.path()); }},
      {9, "test statistic fidelity", 0, statistic_fidelity},
      {10, "CLI determinism", 0, [&] { return determinism(work.path()); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_seconds > 0 && secs > c.limit_seconds) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f", c.limit_seconds) + " s limit";
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": " << o.detail << " ("
              << fmt("%.1f", secs) << " s)" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
