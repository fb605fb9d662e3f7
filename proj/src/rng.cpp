#include "smcgen/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "smcgen/common.hpp"

namespace smcgen {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

Rng::Rng(std::uint64_t seed, std::uint64_t lineage, std::uint64_t step)
    : engine_(mix64(mix64(mix64(seed) ^ lineage) ^ step)) {}

double Rng::uniform() {
  // 53 random mantissa bits; std::generate_canonical is not guaranteed < 1.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw Error("categorical: weights have no positive mass");
  const double u = uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

std::size_t Rng::log_categorical(std::span<const double> log_weights) {
  double hi = kNegInf;
  for (double lw : log_weights) hi = std::max(hi, lw);
  if (hi == kNegInf) throw Error("log_categorical: all weights are zero");
  std::vector<double> w(log_weights.size());
  std::transform(log_weights.begin(), log_weights.end(), w.begin(),
                 [hi](double lw) { return lw == kNegInf ? 0.0 : std::exp(lw - hi); });
  return categorical(w);
}

}  // namespace smcgen
