#include "cli.hpp"
#include "presets.hpp"

#include <charme/asymptotics.hpp>
#include <charme/csv.hpp>
#include <charme/estimator.hpp>
#include <charme/model_json.hpp>
#include <charme/mvn_tests.hpp>
#include <charme/rng.hpp>
#include <charme/simulator.hpp>
#include <charme/stability.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>

namespace charme::cli {

namespace fs = std::filesystem;

namespace {

// keys whose values name input files that must exist when a config is loaded
constexpr const char* kFileKeys[] = {"model", "model-init", "data", "eta"};

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

std::string scalar_token(const nlohmann::json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

/// Folds a --config document into the argument list. Flags given on the command
/// line win over config values.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw Error(ErrorCode::ParseError, "--config needs a path");
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!path) return args;

  const auto doc = read_json_file(*path);
  if (!doc.is_object() || !doc.contains("schema_version") || !doc["schema_version"].is_number_integer())
    throw Error(ErrorCode::ParseError, "config needs an integer schema_version");
  if (doc["schema_version"].get<int>() != kConfigSchemaVersion)
    throw Error(ErrorCode::ParseError, "unsupported config schema_version " + doc["schema_version"].dump());
  if (doc.contains("command")) {
    if (args.empty()) args.push_back(doc["command"].get<std::string>());
    if (doc["command"].get<std::string>() != args.front())
      throw Error(ErrorCode::ParseError, "config is for '" + doc["command"].get<std::string>() + "', not '" +
                                             args.front() + "'");
  }
  if (!doc.contains("options")) return args;
  if (!doc["options"].is_object()) throw Error(ErrorCode::ParseError, "config options must be an object");
  for (const auto& [key, value] : doc["options"].items()) {
    const std::string flag = "--" + key;
    if (has_flag(args, flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      args.push_back(flag);
      for (const auto& v : value) args.push_back(scalar_token(v));
    } else if (!value.is_null()) {
      args.push_back(flag);
      args.push_back(scalar_token(value));
    }
  }
  for (const char* key : kFileKeys) {
    const auto& opts = doc["options"];
    if (opts.contains(key) && opts[key].is_string() && !fs::exists(opts[key].get<std::string>()))
      throw Error(ErrorCode::IoError, std::string("config file reference '") + key + "' does not exist: " +
                                          opts[key].get<std::string>());
  }
  return args;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::SingularBlock:
    case ErrorCode::SingularCovariance:
    case ErrorCode::TooManyFailures:
    case ErrorCode::DomainError: return kExitNumerical;
    default: return kExitValidation;
  }
}

CharmeModel load_valid_model(const std::string& path) {
  CharmeModel model = load_model(path);
  const auto report = validate_model(model);
  if (!report.valid()) {
    std::string msg = "invalid model " + path + ":";
    for (const auto& v : report.violations) msg += "\n  " + v.code + ": " + v.message;
    throw Error(ErrorCode::InvalidModel, msg);
  }
  return model;
}

void emit_json(const nlohmann::json& doc, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << dump_json(doc);
  } else {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    write_json_file(path, doc);
  }
}

void emit_csv(const CsvTable& table, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << to_csv_string(table);
  } else {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    write_csv(path, table);
  }
}

/// Path beside `anchor` (or in the working directory) when no explicit one is given.
std::string sibling(const std::string& explicit_path, const std::string& anchor, const std::string& name) {
  if (!explicit_path.empty()) return explicit_path;
  if (anchor.empty()) return {};
  return (fs::path(anchor).parent_path() / name).string();
}

struct FitFlags {
  Index epochs = 100;
  Index batch = 32;
  double lr0 = 1e-3;
  double decay = 0.0;
  double cap = 0.0;
  std::string init = "uniform";
  double init_scale = 0.05;
  bool freeze_biases = false;
  CLI::Option* init_scale_opt = nullptr;

  void add(CLI::App* sub) {
    sub->add_option("--epochs", epochs, "SGD epochs")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--batch", batch, "mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--lr0", lr0, "initial step size")->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->add_option("--decay", decay, "step size decay: lr0 / (1 + decay * j)")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--cap", cap, "Lipschitz cap projected after each update (0: none)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--init", init, "uniform or provided")->capture_default_str()->check(CLI::IsMember({"uniform", "provided"}));
    init_scale_opt = sub->add_option("--init-scale", init_scale, "uniform half-width or jitter around the provided model")
                         ->capture_default_str()
                         ->check(CLI::NonNegativeNumber);
    sub->add_flag("--freeze-biases", freeze_biases, "keep biases at their initial values");
  }

  [[nodiscard]] FitConfig config(std::uint64_t seed) const {
    FitConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.lr0 = lr0;
    cfg.decay = decay;
    cfg.seed = seed;
    if (cap > 0.0) cfg.lipschitz_cap = cap;
    cfg.init = init == "provided" ? FitConfig::Init::Provided : FitConfig::Init::Uniform;
    cfg.init_scale = init_scale;
    cfg.freeze_biases = freeze_biases;
    return cfg;
  }
};

/// Preset overrides; a field applies only when its flag was given.
struct PresetFlags {
  std::string scale = "small";
  std::uint64_t seed = 1;
  std::string out_dir;
  Index n = 0, N = 0, epochs = 0, batch = 0, burn_in = -1;
  double lr0 = -1.0, decay = -1.0, init_scale = -1.0;
  std::uint64_t model_seed = 0;
  std::vector<Index> subset;
  CLI::Option* model_seed_opt = nullptr;

  void add(CLI::App* sub, const std::string& default_dir, bool monte_carlo, bool has_model_seed) {
    sub->add_option("--scale", scale, "preset size: small or full")->capture_default_str()->check(CLI::IsMember({"small", "full"}));
    sub->add_option("--seed", seed, "master seed")->capture_default_str();
    out_dir = default_dir;
    sub->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
    sub->add_option("--n", n, "sample length")->check(CLI::PositiveNumber);
    sub->add_option("--burn-in", burn_in, "burn-in steps (default 1000 + 10 p)")->check(CLI::NonNegativeNumber);
    sub->add_option("--epochs", epochs, "SGD epochs")->check(CLI::PositiveNumber);
    sub->add_option("--batch", batch, "mini-batch size")->check(CLI::PositiveNumber);
    sub->add_option("--lr0", lr0, "initial step size")->check(CLI::NonNegativeNumber);
    sub->add_option("--decay", decay, "step size decay")->check(CLI::NonNegativeNumber);
    sub->add_option("--init-scale", init_scale, "initialisation scale")->check(CLI::NonNegativeNumber);
    if (has_model_seed) model_seed_opt = sub->add_option("--model-seed", model_seed, "seed of the true model weights");
    if (monte_carlo) {
      sub->add_option("--N", N, "Monte Carlo replicates")->check(CLI::PositiveNumber);
      sub->add_option("--subset", subset, "1-based coordinates tested for normality")->delimiter(',');
    }
  }

  template <class P>
  void apply(P& p) const {
    if (n > 0) p.n = n;
    if (burn_in >= 0) p.burn_in = burn_in;
    if (epochs > 0) p.fit.epochs = epochs;
    if (batch > 0) p.fit.batch_size = batch;
    if (lr0 >= 0.0) p.fit.lr0 = lr0;
    if (decay >= 0.0) p.fit.decay = decay;
    if (init_scale >= 0.0) p.fit.init_scale = init_scale;
  }
};

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulate, certify, fit and test regime-switching neural autoregressions", "charme"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "charme 0.1.0");

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate a trajectory from a model document");
  std::string sim_model, sim_out;
  Index sim_n = 1000, sim_burn = -1;
  std::uint64_t sim_seed = 0;
  bool sim_eps = false;
  sim->add_option("--model", sim_model, "model JSON")->required();
  sim->add_option("--n", sim_n, "observations kept after burn-in")->capture_default_str()->check(CLI::PositiveNumber);
  sim->add_option("--burn-in", sim_burn, "burn-in steps (default 1000 + 10 p)")->check(CLI::NonNegativeNumber);
  sim->add_option("--seed", sim_seed, "seed")->capture_default_str();
  sim->add_option("--out", sim_out, "CSV path (stdout when omitted)");
  sim->add_flag("--keep-eps", sim_eps, "add the innovations as eps_t[j] columns");

  // check-stability
  auto* chk = app.add_subcommand("check-stability", "stability certificate of a model");
  std::string chk_model, chk_out, chk_tau;
  std::vector<double> chk_m;
  long chk_rmax = 0;
  chk->add_option("--model", chk_model, "model JSON")->required();
  chk->add_option("--m", chk_m, "moment orders for C(m)")->check(CLI::Range(1.0, 1e6));
  chk->add_option("--r-max", chk_rmax, "largest r of the tau curve (default 10 p)")->check(CLI::PositiveNumber);
  chk->add_option("--out", chk_out, "report JSON (stdout when omitted)");
  chk->add_option("--tau-csv", chk_tau, "tau curve CSV (default tau.csv beside --out)");

  // train
  auto* trn = app.add_subcommand("train", "fit the expert networks by SGD");
  std::string trn_data, trn_init, trn_loss = "quadratic", trn_out = "train_out";
  double trn_gamma = 2.0, trn_floor = 0.0;
  std::uint64_t trn_seed = 0;
  FitFlags trn_fit;
  trn->add_option("--data", trn_data, "trajectory CSV")->required();
  trn->add_option("--model-init", trn_init, "model JSON giving architecture and initial values")->required();
  trn->add_option("--loss", trn_loss, "quadratic or normpow")->capture_default_str()->check(CLI::IsMember({"quadratic", "normpow"}));
  trn->add_option("--gamma", trn_gamma, "normpow exponent")->capture_default_str()->check(CLI::PositiveNumber);
  trn->add_option("--loss-floor", trn_floor, "normpow volatility floor (default: smallest model floor)")
      ->check(CLI::NonNegativeNumber);
  trn->add_option("--seed", trn_seed, "seed")->capture_default_str();
  trn->add_option("--out-dir", trn_out, "output directory")->capture_default_str();
  trn_fit.add(trn);

  // mc-normality
  auto* mcn = app.add_subcommand("mc-normality", "Monte Carlo sample of sqrt(n) (theta_hat - theta0)");
  std::string mcn_model, mcn_out = "eta.csv", mcn_asym;
  Index mcn_N = 100, mcn_n = 5000, mcn_burn = -1;
  std::uint64_t mcn_seed = 0;
  FitFlags mcn_fit;
  mcn_fit.init = "provided";
  mcn_fit.init_scale = 0.01;
  mcn->add_option("--model", mcn_model, "model JSON carrying theta0")->required();
  mcn->add_option("--N", mcn_N, "replicates")->capture_default_str()->check(CLI::PositiveNumber);
  mcn->add_option("--n", mcn_n, "sample length per replicate")->capture_default_str()->check(CLI::PositiveNumber);
  mcn->add_option("--burn-in", mcn_burn, "burn-in steps (default 1000 + 10 p)")->check(CLI::NonNegativeNumber);
  mcn->add_option("--seed", mcn_seed, "master seed")->capture_default_str();
  mcn->add_option("--out", mcn_out, "eta CSV")->capture_default_str();
  mcn->add_option("--asymptotics", mcn_asym, "V, W and sandwich JSON (default asymptotics.json beside --out)");
  mcn_fit.add(mcn);

  // mvn-test
  auto* mvn = app.add_subcommand("mvn-test", "multivariate normality tests on an eta sample");
  std::string mvn_eta, mvn_out, mvn_qq;
  std::vector<Index> mvn_subset;
  mvn->add_option("--eta", mvn_eta, "eta CSV")->required();
  mvn->add_option("--subset", mvn_subset, "1-based coordinates, comma separated (default: first 15)")->delimiter(',');
  mvn->add_option("--out", mvn_out, "report JSON (stdout when omitted)");
  mvn->add_option("--qq", mvn_qq, "Q-Q CSV (default qq.csv beside --out)");

  // presets
  auto* ex1 = app.add_subcommand("experiment1", "NN-generated data, NN fit, residual diagnostics");
  auto* ex2 = app.add_subcommand("experiment2", "closed-form data, NN fit, residual diagnostics");
  auto* ex3 = app.add_subcommand("experiment3", "Monte Carlo normality of the estimation error");
  PresetFlags ex1_flags, ex2_flags, ex3_flags;
  ex1_flags.add(ex1, "experiment1_out", false, true);
  ex2_flags.add(ex2, "experiment2_out", false, false);
  ex3_flags.add(ex3, "experiment3_out", true, true);

  for (auto* sub : app.get_subcommands({})) sub->add_option("--config", "JSON config with schema_version and options");

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  } catch (const Error& e) {
    err << "charme: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (sim->parsed()) {
      const CharmeModel model = load_valid_model(sim_model);
      SimulationOptions opts;
      opts.keep_innovations = sim_eps;
      const Trajectory traj = simulate(model, sim_n, sim_burn < 0 ? default_burn_in(model.p) : sim_burn, sim_seed, opts);
      emit_csv(trajectory_to_csv(traj), sim_out, out);
      if (traj.overflow) {
        err << "charme: state became non-finite; trajectory truncated to " << traj.n() << " rows\n";
        return kExitNumerical;
      }
    } else if (chk->parsed()) {
      const CharmeModel model = load_valid_model(chk_model);
      const long rmax = chk_rmax > 0 ? chk_rmax : 10 * static_cast<long>(model.p);
      const StabilityReport rep = stability_report(model, chk_m, rmax);
      emit_json(to_json(rep), chk_out, out);
      if (const auto tau = sibling(chk_tau, chk_out, "tau.csv"); !tau.empty()) emit_csv(tau_csv(rep), tau, out);
    } else if (trn->parsed()) {
      const CharmeModel init = load_valid_model(trn_init);
      Trajectory data = trajectory_from_csv(read_csv(trn_data));
      LossSpec loss = LossSpec::quadratic();
      if (trn_loss == "normpow") {
        double floor = trn_floor;
        if (floor <= 0.0) {
          floor = std::numeric_limits<double>::infinity();
          for (const auto& e : init.experts) floor = std::min(floor, e.g.is_constant() ? 1.0 : e.g.floor);
        }
        loss = LossSpec::normalized_power(trn_gamma, floor);
      }
      const FitResult fit = sgd_fit(init, data, loss, trn_fit.config(trn_seed));
      const FittedValues fv = fitted_and_residuals(fit.model, data);
      const auto [mean, var] = residual_moments(fv.residuals);
      fs::create_directories(trn_out);
      save_model(fs::path(trn_out) / "model.json", fit.model);
      write_csv(fs::path(trn_out) / "residuals.csv", residuals_csv(fv.residuals));
      write_csv(fs::path(trn_out) / "trace.csv", trace_csv(fit.loss_trace));
      write_json_file(fs::path(trn_out) / "fit.json", {{"final_loss", fit.final_loss},
                                                        {"iterations", fit.iterations},
                                                        {"projected", fit.projected},
                                                        {"residual_mean", mean},
                                                        {"residual_variance", var}});
    } else if (mcn->parsed()) {
      const CharmeModel model = load_valid_model(mcn_model);
      MonteCarloOptions mc;
      mc.burn_in = mcn_burn;
      const EtaSample eta = monte_carlo_eta(model, mcn_N, mcn_n, mcn_fit.config(0), mcn_seed, mc);
      for (const auto& f : eta.failures) err << "charme: dropped " << f << "\n";
      emit_csv(eta_to_csv(eta), mcn_out, out);
      const Trajectory data = simulate(model, mcn_n, mcn_burn < 0 ? default_burn_in(model.p) : mcn_burn,
                                       derive_seed(mcn_seed, stream::kReplicateData, 0));
      const auto asym_path = sibling(mcn_asym, mcn_out, "asymptotics.json");
      nlohmann::json doc = to_json(asymptotics_report(model, data));
      doc["replicates_requested"] = eta.N;
      doc["replicates_kept"] = eta.eta.rows();
      doc["failures"] = eta.failures;
      emit_json(doc, asym_path.empty() ? "asymptotics.json" : asym_path, out);
    } else if (mvn->parsed()) {
      const Matrix eta = matrix_from_csv(read_csv(mvn_eta));
      const auto subset = mvn_subset.empty() ? default_subset(eta.cols()) : mvn_subset;
      const NormalityReport rep = normality_report(eta, subset);
      emit_json(to_json(rep), mvn_out, out);
      const auto qq_path = sibling(mvn_qq, mvn_out, "qq.csv");
      if (!qq_path.empty()) emit_csv(qq_csv(mahalanobis_qq(select_subset(eta, subset))), qq_path, out);
    } else if (ex1->parsed()) {
      auto p = Experiment1Params::preset(ex1_flags.scale);
      ex1_flags.apply(p);
      if (ex1_flags.model_seed_opt->count()) p.model_seed = ex1_flags.model_seed;
      out << dump_json(run_experiment1(p, ex1_flags.seed, ex1_flags.out_dir));
    } else if (ex2->parsed()) {
      auto p = Experiment2Params::preset(ex2_flags.scale);
      ex2_flags.apply(p);
      out << dump_json(run_experiment2(p, ex2_flags.seed, ex2_flags.out_dir));
    } else if (ex3->parsed()) {
      auto p = Experiment3Params::preset(ex3_flags.scale);
      ex3_flags.apply(p);
      if (ex3_flags.N > 0) p.N = ex3_flags.N;
      if (!ex3_flags.subset.empty()) p.subset = ex3_flags.subset;
      if (ex3_flags.model_seed_opt->count()) p.model_seed = ex3_flags.model_seed;
      out << dump_json(run_experiment3(p, ex3_flags.seed, ex3_flags.out_dir));
    }
  } catch (const Error& e) {
    err << "charme: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const nlohmann::json::exception& e) {
    err << "charme: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "charme: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace charme::cli
