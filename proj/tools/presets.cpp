#include "presets.hpp"

#include <charme/csv.hpp>
#include <charme/model_json.hpp>
#include <charme/rng.hpp>
#include <charme/simulator.hpp>

#include <cmath>

namespace charme::cli {

namespace {

constexpr std::uint64_t kExperiment1 = 101;
constexpr std::uint64_t kExperiment3 = 103;

/// Random net with U(-w, w) / sqrt(fan_in) weights and U(-b, b) biases.
FeedforwardNet random_net(const std::vector<Index>& widths, Activation act, std::uint64_t seed, double w,
                          double b) {
  const CounterRng rng(seed, 0, stream::kModel);
  std::uint64_t counter = 0;
  auto draw = [&](double half) { return half * (2.0 * rng.uniform(counter++) - 1.0); };
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Matrix m(widths[l + 1], widths[l]);
    const double scale = w / std::sqrt(static_cast<double>(widths[l]));
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = draw(scale);
    Vector v(widths[l + 1]);
    for (Index i = 0; i < v.size(); ++i) v[i] = draw(b);
    weights.push_back(std::move(m));
    biases.push_back(std::move(v));
  }
  return FeedforwardNet(std::move(weights), std::move(biases), act);
}

/// Rescales the last layer so the expert's summed lag Lipschitz estimate is `target`.
FeedforwardNet with_lipschitz(const FeedforwardNet& net, Index p, Index d, double target, double out_bias) {
  double a = 0.0;
  const double tail = layer_product_lipschitz(net, 1) * net.activation().lipschitz_constant();
  for (double block : first_layer_block_norms(net, p, d)) a += tail * block;
  const std::size_t last = net.depth() - 1;
  Matrix w = net.weight(last);
  if (a > 0.0) w *= target / a;
  Vector bias = Vector::Constant(net.bias(last).size(), out_bias);
  return net.with_layer(last, std::move(w), std::move(bias));
}

CharmeModel zero_template(const CharmeModel& model) {
  CharmeModel out = model;
  for (auto& e : out.experts) e.f = FeedforwardNet::zeros(e.f.widths(), e.f.activation());
  return out;
}

Trajectory simulate_or_throw(const CharmeModel& model, Index n, Index burn_in, std::uint64_t seed) {
  auto traj = simulate(model, n, burn_in < 0 ? default_burn_in(model.p) : burn_in, seed);
  if (traj.overflow) throw Error(ErrorCode::NonFiniteLoss, "simulated path overflowed");
  return traj;
}

nlohmann::json fit_json(const FitConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr0", cfg.lr0},
          {"decay", cfg.decay},
          {"init", cfg.init == FitConfig::Init::Uniform ? "uniform" : "provided"},
          {"init_scale", cfg.init_scale},
          {"lipschitz_cap", cfg.lipschitz_cap ? nlohmann::json(*cfg.lipschitz_cap) : nlohmann::json()}};
}

nlohmann::json fit_summary(const FitResult& fit, const Matrix& residuals) {
  const auto [mean, var] = residual_moments(residuals);
  return {{"final_loss", fit.final_loss},
          {"first_epoch_loss", fit.loss_trace.front()},
          {"iterations", fit.iterations},
          {"projected", fit.projected},
          {"residual_mean", mean},
          {"residual_variance", var}};
}

}  // namespace

std::pair<double, double> residual_moments(const Matrix& residuals) {
  const double count = static_cast<double>(residuals.size());
  const double mean = residuals.sum() / count;
  const double var = (residuals.array() - mean).square().sum() / count;
  return {mean, var};
}

Experiment1Params Experiment1Params::preset(const std::string& scale) {
  Experiment1Params p;
  p.fit.epochs = 60;
  p.fit.batch_size = 64;
  p.fit.lr0 = 0.01;
  p.fit.decay = 1e-4;
  p.fit.init = FitConfig::Init::Uniform;
  p.fit.init_scale = 0.3;
  if (scale == "full") {
    p.n = 100000;
    p.fit.epochs = 100;
  } else if (scale != "small") {
    throw Error(ErrorCode::DomainError, "unknown scale '" + scale + "' (small or full)");
  }
  return p;
}

Experiment2Params Experiment2Params::preset(const std::string& scale) {
  Experiment2Params p;
  p.fit.epochs = 60;
  p.fit.batch_size = 64;
  p.fit.lr0 = 0.005;
  p.fit.decay = 1e-4;
  p.fit.init = FitConfig::Init::Uniform;
  p.fit.init_scale = 0.3;
  if (scale == "full") {
    p.n = 100000;
    p.widths = {{5, 64, 32, 1}, {5, 64, 32, 1}, {5, 64, 32, 1}};
  } else if (scale != "small") {
    throw Error(ErrorCode::DomainError, "unknown scale '" + scale + "' (small or full)");
  }
  return p;
}

Experiment3Params Experiment3Params::preset(const std::string& scale) {
  Experiment3Params p;
  p.fit.epochs = 50;
  p.fit.batch_size = 50;
  p.fit.lr0 = 0.02;
  p.fit.decay = 1e-3;
  p.fit.init = FitConfig::Init::Provided;
  p.fit.init_scale = 0.0;
  if (scale == "full") {
    p.N = 125;
    p.n = 20000;
  } else if (scale != "small") {
    throw Error(ErrorCode::DomainError, "unknown scale '" + scale + "' (small or full)");
  }
  return p;
}

CharmeModel experiment1_model(const Experiment1Params& params) {
  if (params.widths.size() != params.pi.size() || params.output_bias.size() != params.pi.size())
    throw Error(ErrorCode::ShapeMismatch, "experiment1 needs widths, pi and output_bias of length K");
  CharmeModel model;
  model.d = 1;
  model.p = params.widths.front().front();
  model.K = static_cast<Index>(params.pi.size());
  model.pi = params.pi;
  model.innovation = InnovationSpec::standard_gaussian();
  for (std::size_t k = 0; k < params.pi.size(); ++k) {
    const auto net = random_net(params.widths[k], Activation(ActivationTag::ReLU),
                                derive_seed(params.model_seed, kExperiment1, k), 1.0, 0.5);
    model.experts.push_back({with_lipschitz(net, model.p, 1, params.target_A, params.output_bias[k]),
                             VolatilitySpec::constant_one()});
  }
  return model;
}

std::vector<std::vector<double>> experiment2_lag_constants() {
  // |sqrt(sum c_i x_i^2) - sqrt(sum c_i y_i^2)| <= sum sqrt(c_i) |x_i - y_i|
  return {{1.0, 0.0, 0.0, 0.0, 0.0},
          {std::sqrt(0.2), std::sqrt(0.1), std::sqrt(0.25), std::sqrt(0.2), std::sqrt(0.05)},
          {0.05, 0.2, 0.15, 0.03, 0.01}};
}

RegimeDynamics experiment2_dynamics() {
  RegimeDynamics dyn;
  dyn.d = 1;
  dyn.p = 5;
  dyn.pi = {0.15, 0.35, 0.5};
  dyn.innovation = InnovationSpec::standard_gaussian();
  dyn.f.emplace_back([](const Vector& x, Vector& out) { out.setConstant(1, x[0] + 3.0); });
  dyn.f.emplace_back([](const Vector& x, Vector& out) {
    const double s = 0.2 * x[0] * x[0] + 0.1 * x[1] * x[1] + 0.25 * x[2] * x[2] + 0.2 * x[3] * x[3] + 0.05 * x[4] * x[4];
    out.setConstant(1, std::sqrt(s) - 3.0);
  });
  dyn.f.emplace_back([](const Vector& x, Vector& out) {
    out.setConstant(1, 0.05 * x[0] + 0.2 * x[1] + 0.15 * x[2] + 0.03 * x[3] + 0.01 * x[4] + 0.1);
  });
  for (int k = 0; k < 3; ++k) dyn.g.emplace_back([](const Vector&) { return 1.0; });
  return dyn;
}

CharmeModel experiment2_fit_template(const Experiment2Params& params) {
  CharmeModel model;
  model.d = 1;
  model.p = 5;
  model.K = 3;
  model.pi = {0.15, 0.35, 0.5};
  model.innovation = InnovationSpec::standard_gaussian();
  for (const auto& w : params.widths) {
    if (w.front() != 5 || w.back() != 1) throw Error(ErrorCode::ShapeMismatch, "experiment2 nets map R^5 to R");
    model.experts.push_back({FeedforwardNet::zeros(w, Activation(ActivationTag::ReLU)), VolatilitySpec::constant_one()});
  }
  return model;
}

CharmeModel experiment3_model(const Experiment3Params& params) {
  if (static_cast<Index>(params.pi.size()) != params.K)
    throw Error(ErrorCode::ShapeMismatch, "experiment3 needs pi of length K");
  CharmeModel model;
  model.d = 1;
  model.p = params.p;
  model.K = params.K;
  model.pi = params.pi;
  model.innovation = InnovationSpec::standard_gaussian();
  std::vector<Index> widths{params.p};
  widths.insert(widths.end(), params.hidden.begin(), params.hidden.end());
  widths.push_back(1);
  for (Index k = 0; k < params.K; ++k) {
    const auto net = random_net(widths, Activation(ActivationTag::Sigmoid),
                                derive_seed(params.model_seed, kExperiment3, static_cast<std::uint64_t>(k)),
                                params.weight_scale, params.bias_scale);
    const double bias =
        params.output_bias_step * (static_cast<double>(k) - 0.5 * static_cast<double>(params.K - 1));
    model.experts.push_back({with_lipschitz(net, model.p, 1, params.target_A, bias), VolatilitySpec::constant_one()});
  }
  return model;
}

nlohmann::json run_experiment1(const Experiment1Params& params, std::uint64_t seed,
                               const std::filesystem::path& out_dir) {
  const CharmeModel model = experiment1_model(params);
  if (const auto rep = validate_model(model); !rep.valid())
    throw Error(ErrorCode::InvalidModel, rep.violations.front().message);
  const std::vector<double> ms{2.0};
  const StabilityReport stab = stability_report(model, ms, 10 * model.p);
  const Trajectory data = simulate_or_throw(model, params.n, params.burn_in,
                                            derive_seed(seed, stream::kReplicateData, 0));
  FitConfig cfg = params.fit;
  cfg.seed = derive_seed(seed, stream::kReplicateFit, 0);
  const FitResult fit = sgd_fit(zero_template(model), data, LossSpec::quadratic(), cfg);
  const FittedValues fv = fitted_and_residuals(fit.model, data);

  std::filesystem::create_directories(out_dir);
  save_model(out_dir / "true_model.json", model);
  save_model(out_dir / "fitted_model.json", fit.model);
  write_csv(out_dir / "residuals.csv", residuals_csv(fv.residuals));
  write_csv(out_dir / "trace.csv", trace_csv(fit.loss_trace));
  write_json_file(out_dir / "stability.json", to_json(stab));

  nlohmann::json summary = {
      {"experiment", "experiment1"},
      {"seed", seed},
      {"model_seed", params.model_seed},
      {"n", params.n},
      {"K", model.K},
      {"p", model.p},
      {"true_c", stab.c},
      {"true_certified_stationary", stab.certified_stationary},
      {"fit", fit_json(params.fit)},
      {"result", fit_summary(fit, fv.residuals)},
      {"files", {"true_model.json", "fitted_model.json", "residuals.csv", "trace.csv", "stability.json"}},
  };
  write_json_file(out_dir / "summary.json", summary);
  return summary;
}

nlohmann::json run_experiment2(const Experiment2Params& params, std::uint64_t seed,
                               const std::filesystem::path& out_dir) {
  const RegimeDynamics dyn = experiment2_dynamics();
  const auto lags = experiment2_lag_constants();
  std::vector<double> A, B(3, 0.0);
  for (const auto& a : lags) {
    double s = 0.0;
    for (double v : a) s += v;
    A.push_back(s);
  }
  const double c = contraction_coefficient(dyn.pi, A, B, dyn.innovation.abs_moment(1.0, 1), 1.0);

  auto data = simulate(dyn, params.n, params.burn_in < 0 ? default_burn_in(dyn.p) : params.burn_in,
                       derive_seed(seed, stream::kReplicateData, 0));
  if (data.overflow) throw Error(ErrorCode::NonFiniteLoss, "simulated path overflowed");
  FitConfig cfg = params.fit;
  cfg.seed = derive_seed(seed, stream::kReplicateFit, 0);
  const FitResult fit = sgd_fit(experiment2_fit_template(params), data, LossSpec::quadratic(), cfg);
  const FittedValues fv = fitted_and_residuals(fit.model, data);

  std::filesystem::create_directories(out_dir);
  save_model(out_dir / "fitted_model.json", fit.model);
  write_csv(out_dir / "residuals.csv", residuals_csv(fv.residuals));
  write_csv(out_dir / "trace.csv", trace_csv(fit.loss_trace));

  nlohmann::json summary = {
      {"experiment", "experiment2"},
      {"seed", seed},
      {"n", params.n},
      {"K", 3},
      {"p", 5},
      {"true_lag_lipschitz", lags},
      {"true_A", A},
      {"true_c", c},
      {"true_certified_stationary", c < 1.0},
      {"fit", fit_json(params.fit)},
      {"result", fit_summary(fit, fv.residuals)},
      {"files", {"fitted_model.json", "residuals.csv", "trace.csv"}},
  };
  write_json_file(out_dir / "summary.json", summary);
  return summary;
}

nlohmann::json run_experiment3(const Experiment3Params& params, std::uint64_t seed,
                               const std::filesystem::path& out_dir) {
  const CharmeModel model = experiment3_model(params);
  if (const auto rep = validate_model(model); !rep.valid())
    throw Error(ErrorCode::InvalidModel, rep.violations.front().message);
  const std::vector<double> ms{2.0};
  const StabilityReport stab = stability_report(model, ms, 10 * model.p);

  MonteCarloOptions mc;
  mc.burn_in = params.burn_in;
  const EtaSample eta = monte_carlo_eta(model, params.N, params.n, params.fit, seed, mc);
  const auto subset = params.subset.empty() ? default_subset(eta.eta.cols()) : params.subset;
  const NormalityReport report = normality_report(eta.eta, subset);
  const QQData qq = mahalanobis_qq(select_subset(eta.eta, subset));

  // plug-in sandwich at theta0 on one extra path, compared with the Monte Carlo variance
  nlohmann::json asym_summary;
  std::filesystem::create_directories(out_dir);
  try {
    const Trajectory data = simulate_or_throw(model, params.n, params.burn_in,
                                              derive_seed(seed, stream::kReplicateData, 0));
    const AsymptoticsReport asym = asymptotics_report(model, data);
    write_json_file(out_dir / "asymptotics.json", to_json(asym));
    const Matrix sandwich = asym.sandwich.covariance.dense();
    const Matrix sub = select_subset(eta.eta, subset);
    const Eigen::RowVectorXd mean = sub.colwise().mean();
    std::vector<double> ratio;
    for (std::size_t i = 0; i < subset.size(); ++i) {
      const Index j = subset[i] - 1;
      const double mc_var = (sub.col(static_cast<Index>(i)).array() - mean[static_cast<Index>(i)]).square().sum() /
                            static_cast<double>(sub.rows() - 1);
      ratio.push_back(mc_var / sandwich(j, j));
    }
    asym_summary = {{"variance_ratio_mc_over_sandwich", ratio}, {"condition_numbers", asym.sandwich.condition_numbers}};
  } catch (const Error& e) {
    asym_summary = {{"error", e.what()}};
  }

  save_model(out_dir / "model.json", model);
  write_csv(out_dir / "eta.csv", eta_to_csv(eta));
  write_csv(out_dir / "qq.csv", qq_csv(qq));
  nlohmann::json rep_json = to_json(report);
  rep_json["failures"] = eta.failures;
  write_json_file(out_dir / "report.json", rep_json);

  nlohmann::json summary = {
      {"experiment", "experiment3"},
      {"seed", seed},
      {"model_seed", params.model_seed},
      {"N", params.N},
      {"n", params.n},
      {"K", model.K},
      {"p", model.p},
      {"parameters", model.theta_size()},
      {"true_c", stab.c},
      {"true_certified_stationary", stab.certified_stationary},
      {"fit", fit_json(params.fit)},
      {"replicates_kept", eta.eta.rows()},
      {"normality", rep_json},
      {"asymptotics", asym_summary},
      {"files", {"model.json", "eta.csv", "qq.csv", "report.json", "asymptotics.json"}},
  };
  write_json_file(out_dir / "summary.json", summary);
  return summary;
}

CsvTable residuals_csv(const Matrix& residuals) {
  CsvTable t;
  t.header = {"t"};
  for (Index j = 1; j <= residuals.cols(); ++j) t.header.push_back("eps_hat[" + std::to_string(j) + "]");
  for (Index r = 0; r < residuals.rows(); ++r) {
    std::vector<std::string> row{std::to_string(r + 1)};
    for (Index j = 0; j < residuals.cols(); ++j) row.push_back(format_double(residuals(r, j)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable trace_csv(const std::vector<double>& trace) {
  CsvTable t;
  t.header = {"epoch", "Q_n"};
  for (std::size_t e = 0; e < trace.size(); ++e) t.rows.push_back({std::to_string(e + 1), format_double(trace[e])});
  return t;
}

CsvTable qq_csv(const QQData& qq) {
  CsvTable t;
  t.header = {"chi2_q", "d2"};
  for (std::size_t i = 0; i < qq.d2_sorted.size(); ++i)
    t.rows.push_back({format_double(qq.chi2_quantiles[i]), format_double(qq.d2_sorted[i])});
  return t;
}

CsvTable tau_csv(const StabilityReport& report) {
  CsvTable t;
  t.header = {"r", "bound"};
  for (const auto& [r, b] : report.tau_curve) t.rows.push_back({std::to_string(r), format_double(b)});
  return t;
}

}  // namespace charme::cli
