#include "charme/asymptotics.hpp"
#include "charme/linalg.hpp"
#include "charme/parallel.hpp"
#include "charme/rng.hpp"

#include <cmath>
#include <string>

namespace charme {

Index BlockDiagonal::size() const noexcept {
  Index total = 0;
  for (const auto& b : blocks) total += b.rows();
  return total;
}

Matrix BlockDiagonal::dense() const {
  Matrix out = Matrix::Zero(size(), size());
  Index at = 0;
  for (const auto& b : blocks) {
    out.block(at, at, b.rows(), b.cols()) = b;
    at += b.rows();
  }
  return out;
}

namespace {

enum class Moment { V, W };

BlockDiagonal plug_in(const CharmeModel& model, const Trajectory& data, Moment which) {
  check_data(model, data);
  for (const auto& e : model.experts)
    if (!e.g.is_constant())
      throw Error(ErrorCode::ShapeMismatch, "V and W are defined for constant-volatility models");

  BlockDiagonal out;
  std::vector<NetWorkspace> ws;
  for (const auto& e : model.experts) {
    const auto size = static_cast<Index>(e.f.parameter_count());
    out.blocks.push_back(Matrix::Zero(size, size));
    ws.emplace_back(e.f);
  }

  Vector lags, upstream(model.d), row;
  Matrix jac;
  for (Index t = 1; t <= data.n(); ++t) {
    const auto k = static_cast<std::size_t>(data.regimes[static_cast<std::size_t>(t - 1)]);
    const auto& net = model.experts[k].f;
    const auto size = static_cast<Index>(net.parameter_count());
    data.lags(t, model.p, lags);
    const Vector fitted = ws[k].forward(net, lags);
    if (which == Moment::V) {
      jac.setZero(model.d, size);
      row.resize(size);
      for (Index i = 0; i < model.d; ++i) {
        upstream.setZero();
        upstream[i] = 1.0;
        row.setZero();
        ws[k].backward(net, upstream, 1.0, {row.data(), static_cast<std::size_t>(size)});
        jac.row(i) = row.transpose();
      }
      out.blocks[k].selfadjointView<Eigen::Lower>().rankUpdate(jac.transpose());
    } else {
      upstream = data.state(t) - fitted;
      row.setZero(size);
      ws[k].backward(net, upstream, 1.0, {row.data(), static_cast<std::size_t>(size)});
      out.blocks[k].selfadjointView<Eigen::Lower>().rankUpdate(row);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(data.n());
  for (auto& b : out.blocks) {
    b = b.selfadjointView<Eigen::Lower>();  // mirror so the block is symmetric bitwise
    b *= inv_n;
  }
  return out;
}

}  // namespace

BlockDiagonal estimate_V(const CharmeModel& model, const Trajectory& data) {
  return plug_in(model, data, Moment::V);
}

BlockDiagonal estimate_W(const CharmeModel& model, const Trajectory& data) {
  return plug_in(model, data, Moment::W);
}

SandwichResult sandwich_covariance(const BlockDiagonal& V, const BlockDiagonal& W) {
  if (V.blocks.size() != W.blocks.size())
    throw Error(ErrorCode::ShapeMismatch, "V and W have different block counts");
  SandwichResult out;
  for (std::size_t k = 0; k < V.blocks.size(); ++k) {
    const Matrix& v = V.blocks[k];
    const Matrix& w = W.blocks[k];
    if (v.rows() != v.cols() || w.rows() != v.rows() || w.cols() != v.cols())
      throw Error(ErrorCode::ShapeMismatch, "block " + std::to_string(k + 1) + " shapes differ");
    const double cond = condition_number(v);
    out.condition_numbers.push_back(cond);
    if (!(cond < kMaxBlockCondition))
      throw Error(ErrorCode::SingularBlock, "V block " + std::to_string(k + 1) + " has condition number " +
                                                std::to_string(cond));
    const auto chol = robust_cholesky(v, ErrorCode::SingularBlock);
    out.jitter.push_back(chol.jitter);
    const Matrix left = chol.solve(w);                     // V^-1 W
    Matrix s = chol.solve(left.transpose());               // V^-1 (V^-1 W)^T = V^-1 W V^-1
    s = 0.5 * (s + s.transpose()).eval();
    out.covariance.blocks.push_back(std::move(s));
  }
  return out;
}

AsymptoticsReport asymptotics_report(const CharmeModel& model, const Trajectory& data) {
  AsymptoticsReport rep;
  rep.V = estimate_V(model, data);
  rep.W = estimate_W(model, data);
  rep.sandwich = sandwich_covariance(rep.V, rep.W);
  return rep;
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json blocks_json(const BlockDiagonal& b) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : b.blocks) out.push_back(matrix_json(m));
  return out;
}

}  // namespace

nlohmann::json to_json(const AsymptoticsReport& report) {
  return {
      {"V_blocks", blocks_json(report.V)},
      {"W_blocks", blocks_json(report.W)},
      {"sandwich_blocks", blocks_json(report.sandwich.covariance)},
      {"condition_numbers", report.sandwich.condition_numbers},
      {"jitter", report.sandwich.jitter},
      {"assumed", "moment conditions on the gradients are assumed, not checked"},
  };
}

EtaSample monte_carlo_eta(const CharmeModel& model0, Index N, Index n, const FitConfig& fit_cfg,
                          std::uint64_t master_seed, MonteCarloOptions opts) {
  if (N < 1 || n < 1) throw Error(ErrorCode::DomainError, "monte_carlo_eta needs N >= 1 and n >= 1");
  validate_fit_config(fit_cfg);
  for (const auto& e : model0.experts)
    if (!e.g.is_constant()) throw Error(ErrorCode::InvalidModel, "monte_carlo_eta needs constant volatility");
  const Index burn_in = opts.burn_in < 0 ? default_burn_in(model0.p) : opts.burn_in;
  const std::size_t workers = opts.workers ? opts.workers : worker_count();

  Vector theta0(static_cast<Index>(model0.theta_size()));
  {
    Index at = 0;
    for (const auto& e : model0.experts) {
      const Vector part = e.f.parameters();
      theta0.segment(at, part.size()) = part;
      at += part.size();
    }
  }
  const double root_n = std::sqrt(static_cast<double>(n));
  const LossSpec loss = LossSpec::quadratic();

  struct Outcome {
    Vector row;
    std::uint64_t seed = 0;
    std::string failure;
  };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(N));
  parallel_for(outcomes.size(), workers, [&](std::size_t i) {
    const auto t = static_cast<std::uint64_t>(i + 1);
    Outcome& out = outcomes[i];
    out.seed = derive_seed(master_seed, stream::kReplicateData, t);
    try {
      const Trajectory data = simulate(model0, n, burn_in, out.seed);
      if (data.overflow) throw Error(ErrorCode::NonFiniteLoss, "simulated path overflowed");
      FitConfig cfg = fit_cfg;
      cfg.init = FitConfig::Init::Provided;
      cfg.seed = derive_seed(master_seed, stream::kReplicateFit, t);
      const FitResult fit = sgd_fit(model0, data, loss, cfg);
      Vector row(theta0.size());
      Index at = 0;
      for (const auto& part : fit.theta_hat) {
        row.segment(at, part.size()) = part;
        at += part.size();
      }
      row = root_n * (row - theta0);
      if (!row.allFinite()) throw Error(ErrorCode::NonFiniteLoss, "eta row is non-finite");
      out.row = std::move(row);
    } catch (const Error& e) {
      out.failure = "replicate " + std::to_string(t) + ": " + e.what();
    }
  });

  EtaSample sample;
  sample.n = n;
  sample.N = N;
  std::vector<const Vector*> kept;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].failure.empty()) {
      sample.failures.push_back(outcomes[i].failure);
      continue;
    }
    kept.push_back(&outcomes[i].row);
    sample.seeds.push_back(outcomes[i].seed);
    sample.replicate.push_back(static_cast<Index>(i + 1));
  }
  if (static_cast<double>(sample.failures.size()) > opts.max_failure_fraction * static_cast<double>(N))
    throw Error(ErrorCode::TooManyFailures, std::to_string(sample.failures.size()) + " of " + std::to_string(N) +
                                                " replicates failed; first: " + sample.failures.front());
  sample.eta.resize(static_cast<Index>(kept.size()), theta0.size());
  for (std::size_t r = 0; r < kept.size(); ++r) sample.eta.row(static_cast<Index>(r)) = kept[r]->transpose();
  return sample;
}

CsvTable eta_to_csv(const EtaSample& sample) {
  CsvTable table;
  table.header.push_back("replicate");
  for (Index j = 1; j <= sample.eta.cols(); ++j) table.header.push_back("theta_" + std::to_string(j));
  for (Index r = 0; r < sample.eta.rows(); ++r) {
    std::vector<std::string> row;
    row.push_back(std::to_string(sample.replicate[static_cast<std::size_t>(r)]));
    for (Index j = 0; j < sample.eta.cols(); ++j) row.push_back(format_double(sample.eta(r, j)));
    table.rows.push_back(std::move(row));
  }
  return table;
}

Matrix matrix_from_csv(const CsvTable& table) {
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (table.header[c] != "replicate") cols.push_back(c);
  Matrix out(static_cast<Index>(table.rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Index>(r), static_cast<Index>(c)) = parse_double(table.rows[r][cols[c]]);
  return out;
}

}  // namespace charme
