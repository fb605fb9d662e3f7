#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace smcgen {

/// splitmix64 finalizer, used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// A random stream addressed by (seed, lineage, step). The same triple always
/// yields the same draws, independent of which worker thread consumes it.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, std::uint64_t lineage, std::uint64_t step);

  /// Uniform in [0, 1).
  double uniform();

  /// Index drawn proportionally to nonnegative linear weights. Requires a
  /// positive total.
  std::size_t categorical(std::span<const double> weights);

  /// Index drawn proportionally to exp(log_weights). Requires at least one
  /// finite entry.
  std::size_t log_categorical(std::span<const double> log_weights);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace smcgen
