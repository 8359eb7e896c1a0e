#pragma once

#include <cstdint>
#include <random>

namespace m2s {

/// Fixed stream indices for the counter-based seed fan-out. New components
/// take a new index, so existing streams never shift.
enum class SeedStream : std::uint64_t {
  weights = 1,
  text_embedding = 2,
  batch_order = 3,
  folds = 4,
  synthetic = 5,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for `stream` derived from the run's global seed.
std::uint64_t derive_seed(std::uint64_t global, std::uint64_t stream) noexcept;
inline std::uint64_t derive_seed(std::uint64_t global, SeedStream stream) noexcept {
  return derive_seed(global, static_cast<std::uint64_t>(stream));
}

/// mt19937_64 engine with locally defined distributions. Draws are identical
/// on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) noexcept;
  double normal() noexcept;
  /// Normal with standard deviation `std`, redrawn outside +-2 std.
  double truncated_normal(double std) noexcept;
  std::uint64_t next() noexcept { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace m2s
