#include "charme/simulator.hpp"
#include "charme/error.hpp"
#include "charme/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace charme {

void Trajectory::lags(Index t, Index lag_order, Vector& out) const {
  if (lag_order > p || t < 1 || t > n())
    throw Error(ErrorCode::ShapeMismatch, "lags for t=" + std::to_string(t) + " need " +
                                              std::to_string(lag_order) + " pre-sample rows");
  out.resize(d * lag_order);
  for (Index i = 0; i < lag_order; ++i) out.segment(i * d, d) = state(t - 1 - i);
}

RegimeDynamics dynamics_of(const CharmeModel& model) {
  RegimeDynamics dyn;
  dyn.d = model.d;
  dyn.p = model.p;
  dyn.pi = model.pi;
  dyn.innovation = model.innovation;
  for (const auto& e : model.experts) {
    dyn.f.emplace_back([net = e.f](const Vector& lags, Vector& out) { out = forward(net, lags); });
    dyn.g.emplace_back([vol = e.g](const Vector& lags) { return vol.evaluate(lags); });
  }
  return dyn;
}

int draw_regime(std::span<const double> cumulative, std::span<const double> pi, double u) {
  int last_positive = 0;
  for (std::size_t k = 0; k < cumulative.size(); ++k) {
    if (pi[k] <= 0.0) continue;
    last_positive = static_cast<int>(k);
    if (u <= cumulative[k]) return last_positive;
  }
  return last_positive;  // rounding left the total just under u
}

namespace {

void draw_innovation(const InnovationSpec& spec, const CounterRng& rng, Vector& eps) {
  for (Index j = 0; j < eps.size(); ++j) {
    const auto c = static_cast<std::uint64_t>(j);
    switch (spec.family) {
      case InnovationSpec::Family::StandardGaussian: eps[j] = rng.normal(c); break;
      case InnovationSpec::Family::ScaledGaussian: eps[j] = spec.sigma * rng.normal(c); break;
      case InnovationSpec::Family::TwoPointHalf: eps[j] = rng.uniform(c) < 0.5 ? 0.0 : 1.0; break;
    }
  }
}

void check_dynamics(const RegimeDynamics& dyn, Index n, Index burn_in) {
  if (n < 1) throw Error(ErrorCode::DomainError, "simulate needs n >= 1");
  if (burn_in < 0) throw Error(ErrorCode::DomainError, "simulate needs burn_in >= 0");
  if (dyn.d < 1 || dyn.p < 1) throw Error(ErrorCode::ShapeMismatch, "d and p must be positive");
  if (dyn.pi.empty() || dyn.f.size() != dyn.pi.size() || dyn.g.size() != dyn.pi.size())
    throw Error(ErrorCode::ShapeMismatch, "pi, f and g must have K entries each");
}

/// Shared recursion for one or several systems driven by the same draws.
std::vector<Trajectory> run(std::span<const RegimeDynamics* const> systems, Index n, Index burn_in,
                            std::uint64_t seed, SimulationOptions opts) {
  const RegimeDynamics& lead = *systems.front();
  const Index d = lead.d;
  const Index p = lead.p;
  const Index total = burn_in + n;

  std::vector<double> cumulative(lead.pi.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < lead.pi.size(); ++k) cumulative[k] = acc += lead.pi[k];

  struct State {
    Matrix path;  // rows: X_{-p+1} .. X_{total}
    std::vector<int> regimes;
    Matrix eps;
    Index last_finite = 0;  // last step with a finite state
    bool alive = true;
  };
  std::vector<State> states(systems.size());
  for (auto& s : states) {
    s.path = Matrix::Zero(total + p, d);
    s.regimes.resize(static_cast<std::size_t>(total));
    if (opts.keep_innovations) s.eps.resize(total, d);
  }

  Vector lags(d * p), mean(d), eps(d);
  for (Index step = 1; step <= total; ++step) {
    const auto ustep = static_cast<std::uint64_t>(step);
    const int k = draw_regime(cumulative, lead.pi, CounterRng(seed, ustep, stream::kRegime).uniform(0));
    draw_innovation(lead.innovation, CounterRng(seed, ustep, stream::kInnovation), eps);

    bool any_alive = false;
    for (std::size_t s = 0; s < systems.size(); ++s) {
      State& st = states[s];
      if (!st.alive) continue;
      const RegimeDynamics& dyn = *systems[s];
      const Index row = step - 1 + p;
      for (Index i = 0; i < p; ++i) lags.segment(i * d, d) = st.path.row(row - 1 - i).transpose();
      dyn.f[static_cast<std::size_t>(k)](lags, mean);
      const double vol = dyn.g[static_cast<std::size_t>(k)](lags);
      const Vector x = mean + vol * eps;
      st.regimes[static_cast<std::size_t>(step - 1)] = k;
      if (opts.keep_innovations) st.eps.row(step - 1) = eps.transpose();
      if (!x.allFinite()) {
        st.alive = false;
        continue;
      }
      st.path.row(row) = x.transpose();
      st.last_finite = step;
      any_alive = true;
    }
    if (!any_alive) break;
  }

  std::vector<Trajectory> out;
  out.reserve(states.size());
  for (auto& st : states) {
    Trajectory traj;
    traj.d = d;
    traj.p = p;
    traj.seed = seed;
    traj.burn_in = burn_in;
    traj.overflow = st.last_finite < total;
    const Index kept = std::max<Index>(0, st.last_finite - burn_in);
    // the p rows before the first kept step; for an early overflow they end at the failure
    const Index first_row = std::min(st.last_finite, burn_in);
    traj.x = st.path.middleRows(first_row, kept + p);
    traj.regimes.assign(st.regimes.begin() + first_row, st.regimes.begin() + (first_row + kept));
    if (opts.keep_innovations) traj.innovations = st.eps.middleRows(first_row, kept);
    out.push_back(std::move(traj));
  }
  return out;
}

void require_same_randomness(const CharmeModel& a, const CharmeModel& b) {
  if (a.d != b.d || a.p != b.p || a.K != b.K)
    throw Error(ErrorCode::ModelMismatch, "coupled models need equal d, p and K");
  if (a.pi != b.pi) throw Error(ErrorCode::ModelMismatch, "coupled models need identical pi");
  if (a.innovation.family != b.innovation.family || a.innovation.sigma != b.innovation.sigma)
    throw Error(ErrorCode::ModelMismatch, "coupled models need the same innovation law");
}

}  // namespace

Trajectory simulate(const RegimeDynamics& dyn, Index n, Index burn_in, std::uint64_t seed,
                    SimulationOptions opts) {
  check_dynamics(dyn, n, burn_in);
  const RegimeDynamics* systems[] = {&dyn};
  return std::move(run(systems, n, burn_in, seed, opts).front());
}

Trajectory simulate(const CharmeModel& model, Index n, Index burn_in, std::uint64_t seed,
                    SimulationOptions opts) {
  return simulate(dynamics_of(model), n, burn_in, seed, opts);
}

std::pair<Trajectory, Trajectory> coupled_simulate(const CharmeModel& a, const CharmeModel& b, Index n,
                                                   Index burn_in, std::uint64_t seed,
                                                   SimulationOptions opts) {
  require_same_randomness(a, b);
  const RegimeDynamics da = dynamics_of(a);
  const RegimeDynamics db = dynamics_of(b);
  check_dynamics(da, n, burn_in);
  check_dynamics(db, n, burn_in);
  const RegimeDynamics* systems[] = {&da, &db};
  auto trajs = run(systems, n, burn_in, seed, opts);
  return {std::move(trajs[0]), std::move(trajs[1])};
}

CsvTable trajectory_to_csv(const Trajectory& traj) {
  CsvTable table;
  table.header = {"t", "R_t"};
  for (Index j = 1; j <= traj.d; ++j) table.header.push_back("X_t[" + std::to_string(j) + "]");
  const bool eps = traj.innovations.has_value();
  if (eps)
    for (Index j = 1; j <= traj.d; ++j) table.header.push_back("eps_t[" + std::to_string(j) + "]");
  for (Index t = 1 - traj.p; t <= traj.n(); ++t) {
    std::vector<std::string> row;
    row.push_back(std::to_string(t));
    row.push_back(t >= 1 ? std::to_string(traj.regimes[static_cast<std::size_t>(t - 1)] + 1) : "");
    for (Index j = 0; j < traj.d; ++j) row.push_back(format_double(traj.state(t)[j]));
    if (eps)
      for (Index j = 0; j < traj.d; ++j) row.push_back(t >= 1 ? format_double((*traj.innovations)(t - 1, j)) : "");
    table.rows.push_back(std::move(row));
  }
  return table;
}

Trajectory trajectory_from_csv(const CsvTable& table) {
  const std::size_t tcol = table.column("t");
  const std::size_t rcol = table.column("R_t");
  std::vector<std::size_t> xcols, ecols;
  for (Index j = 1;; ++j) {
    const std::string name = "X_t[" + std::to_string(j) + "]";
    bool found = false;
    for (std::size_t c = 0; c < table.header.size(); ++c)
      if (table.header[c] == name) {
        xcols.push_back(c);
        found = true;
      }
    if (!found) break;
  }
  if (xcols.empty()) throw Error(ErrorCode::ParseError, "trajectory CSV has no X_t[1] column");
  for (std::size_t j = 1; j <= xcols.size(); ++j) {
    const std::string name = "eps_t[" + std::to_string(j) + "]";
    for (std::size_t c = 0; c < table.header.size(); ++c)
      if (table.header[c] == name) ecols.push_back(c);
  }
  const bool eps = ecols.size() == xcols.size();

  Trajectory traj;
  traj.d = static_cast<Index>(xcols.size());
  Index pre = 0;
  for (const auto& row : table.rows) {
    if (parse_double(row[tcol]) <= 0) ++pre;
  }
  if (pre < 1) throw Error(ErrorCode::ParseError, "trajectory CSV needs pre-sample rows with t <= 0");
  traj.p = pre;
  const auto rows = static_cast<Index>(table.rows.size());
  traj.x.resize(rows, traj.d);
  if (eps) traj.innovations = Matrix(rows - pre, traj.d);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(r)];
    const double t = parse_double(row[tcol]);
    if (t != double(r + 1 - pre)) throw Error(ErrorCode::ParseError, "trajectory CSV rows must have consecutive t");
    for (Index j = 0; j < traj.d; ++j) traj.x(r, j) = parse_double(row[xcols[static_cast<std::size_t>(j)]]);
    if (t >= 1) {
      const double k = parse_double(row[rcol]);
      if (k < 1 || k != std::floor(k)) throw Error(ErrorCode::ParseError, "regime labels must be integers >= 1");
      traj.regimes.push_back(static_cast<int>(k) - 1);
      if (eps)
        for (Index j = 0; j < traj.d; ++j)
          (*traj.innovations)(r - pre, j) = parse_double(row[ecols[static_cast<std::size_t>(j)]]);
    }
  }
  if (traj.regimes.empty()) throw Error(ErrorCode::ParseError, "trajectory CSV has no rows with t >= 1");
  return traj;
}

}  // namespace charme
