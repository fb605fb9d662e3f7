#pragma once

// Brute-force oracle: exhaustive enumeration of every complete sequence of at
// most `max_tokens` non-EOS tokens that the LM and efficient potentials allow.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "smcgen/instances.hpp"

namespace smcgen {

class EnumerationTooLarge : public Error {
 public:
  using Error::Error;
};

struct EnumerationOptions {
  std::size_t max_tokens = 20;
  std::size_t node_cap = 2'000'000;
  /// Prefixes with p(prefix)·Φ_eff(prefix) below this are dropped; the
  /// dropped mass is added to the truncation bound.
  double min_prefix_prob = 0.0;
  /// Keep per-prefix local normalizers for prefixes of at most this many tokens.
  std::size_t record_prefix_depth = 3;
};

struct Enumeration {
  double z = 0.0;          // Σ p(x) Φ_eff(x) Φ_exp(x)
  double z_efficient = 0.0;  // Σ p(x) Φ_eff(x)
  double z_rerank = 0.0;   // Σ l_eff(x) Φ_exp(x)
  /// Upper bound on target mass beyond the length cap or below the
  /// probability threshold (Φ ≤ 1).
  double truncation_bound = 0.0;
  /// The same bound for l_eff·Φ_exp: local-product mass of the cut prefixes.
  double rerank_truncation_bound = 0.0;
  std::size_t nodes = 0;
  std::size_t sequences = 0;  // complete sequences with positive g

  std::map<std::string, double> posterior;            // g, by decoded text
  std::map<std::string, double> efficient_posterior;  // normalized p·Φ_eff
  std::map<std::string, double> lm_distribution;      // p(x), by text, for Φ ≡ 1 checks
  std::map<std::string, double> prefix_normalizers;   // rendered token prefix -> L

  nlohmann::json to_json() const;
};

Enumeration enumerate_target(const LanguageModel& lm, const std::vector<PotentialPtr>& efficient,
                             const std::vector<PotentialPtr>& expensive, const EnumerationOptions& opts);

/// Enumerates an enumerable instance at its own length cap.
Enumeration enumerate_instance(const Instance& inst, std::size_t node_cap = 2'000'000);

}  // namespace smcgen
