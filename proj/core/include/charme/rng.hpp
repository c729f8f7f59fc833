#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace charme {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Keyed child seed: derive_seed(s, tag, i) is a fixed function of its inputs,
/// so sub-components never share a stream by accident.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag, std::uint64_t index = 0) noexcept {
  return mix64(mix64(mix64(parent) ^ (tag * 0xd1b54a32d192ed03ULL)) ^ (index * 0xabc98388fb8fac03ULL));
}

/// Stream tags used with derive_seed and CounterRng.
namespace stream {
inline constexpr std::uint64_t kRegime = 1;
inline constexpr std::uint64_t kInnovation = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kInit = 4;
inline constexpr std::uint64_t kReplicateData = 5;
inline constexpr std::uint64_t kReplicateFit = 6;
inline constexpr std::uint64_t kModel = 7;
inline constexpr std::uint64_t kTrial = 8;
}  // namespace stream

/**
 * Counter-based generator keyed by (seed, step, substream). Draw number c is
 * a pure function of the key and c, so the value used at time t does not
 * depend on how many draws were made before it or on thread scheduling.
 */
class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::uint64_t step, std::uint64_t substream) noexcept
      : key_(derive_seed(derive_seed(seed, substream), step)) {}

  [[nodiscard]] constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix64(key_ ^ mix64(counter ^ 0x632be59bd9b4e019ULL));
  }

  /// Uniform on [0, 1) with 53 random bits.
  [[nodiscard]] constexpr double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound).
  [[nodiscard]] constexpr std::uint64_t below(std::uint64_t counter, std::uint64_t bound) const noexcept {
    __extension__ using u128 = unsigned __int128;
    return static_cast<std::uint64_t>((static_cast<u128>(bits(counter)) * bound) >> 64);
  }

  /// Standard normal from draws 2c and 2c+1 (Box-Muller, cosine branch).
  [[nodiscard]] double normal(std::uint64_t counter) const noexcept {
    const double u1 = 1.0 - uniform(2 * counter);  // (0, 1]
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

}  // namespace charme
