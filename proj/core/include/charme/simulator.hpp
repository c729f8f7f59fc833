#pragma once

#include "charme/csv.hpp"
#include "charme/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace charme {

/**
 * Sample path X_{-p+1}, ..., X_n with observed regimes R_1..R_n.
 *
 * Row t - 1 + p of x holds X_t, so rows 0..p-1 are the pre-sample lags.
 * Regimes are stored 0-based (expert index); files and reports use 1..K.
 */
struct Trajectory {
  Index d = 1;
  Index p = 1;
  Matrix x;
  std::vector<int> regimes;
  std::optional<Matrix> innovations;  // n x d when retained
  std::uint64_t seed = 0;
  Index burn_in = 0;
  bool overflow = false;  // a non-finite state truncated the path

  [[nodiscard]] Index n() const noexcept { return static_cast<Index>(regimes.size()); }

  /// X_t for t in [-p+1, n].
  [[nodiscard]] auto state(Index t) const { return x.row(t - 1 + p).transpose(); }

  /// Writes (X_{t-1}, ..., X_{t-lag_order}) into out (length d * lag_order).
  void lags(Index t, Index lag_order, Vector& out) const;
};

inline Index default_burn_in(Index p) { return 1000 + 10 * p; }

/// Regime-switching recursion with arbitrary expert maps. Network models
/// simulate through this path too; it exists so non-network fixtures share
/// the exact same randomness and bookkeeping.
struct RegimeDynamics {
  using MeanFn = std::function<void(const Vector& lags, Vector& out)>;
  using VolFn = std::function<double(const Vector& lags)>;

  Index d = 1;
  Index p = 1;
  std::vector<double> pi;
  InnovationSpec innovation;
  std::vector<MeanFn> f;
  std::vector<VolFn> g;
};

RegimeDynamics dynamics_of(const CharmeModel& model);

struct SimulationOptions {
  bool keep_innovations = false;
};

/// X_{-p+1..0} = 0, then burn_in + n steps of the recursion. R_t and eps_t are
/// drawn from counter streams keyed by (seed, step, substream), so equal seeds
/// give bitwise equal paths and two models with one seed see the same draws.
Trajectory simulate(const RegimeDynamics& dyn, Index n, Index burn_in, std::uint64_t seed,
                    SimulationOptions opts = {});
Trajectory simulate(const CharmeModel& model, Index n, Index burn_in, std::uint64_t seed,
                    SimulationOptions opts = {});

/// Both models driven by one draw of (R_t, eps_t) per step. The models must
/// share d, p, K, pi and innovation (ModelMismatch otherwise).
std::pair<Trajectory, Trajectory> coupled_simulate(const CharmeModel& a, const CharmeModel& b, Index n,
                                                   Index burn_in, std::uint64_t seed,
                                                   SimulationOptions opts = {});

/// Regime index for a uniform draw u: first k with u <= cumulative pi and pi_k > 0.
int draw_regime(std::span<const double> cumulative, std::span<const double> pi, double u);

/// Columns t, R_t, X_t[1..d] and, if retained, eps_t[1..d]. Pre-sample rows
/// (t <= 0) leave R_t and eps empty.
CsvTable trajectory_to_csv(const Trajectory& traj);
Trajectory trajectory_from_csv(const CsvTable& table);

}  // namespace charme
