#pragma once

// Properly weighted next-token proposals. Both return a token together with
// a weight W such that E[W·f(token)] = Σ_x σ̃(x)·f(x), where σ̃ is the local
// unnormalized target p(x | ctx)·Φ_eff(x | ctx).

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "smcgen/grammar.hpp"
#include "smcgen/lm.hpp"
#include "smcgen/rng.hpp"
#include "smcgen/trie.hpp"

namespace smcgen {

/// The local target has no mass: Σ σ̃ = 0.
class DeadEndError : public Error {
 public:
  using Error::Error;
};

/// Debug record of one trie walk.
struct ProposalTrace {
  struct Step {
    std::uint8_t byte = 0;
    double q_bar = 0.0;       // unnormalized score of the chosen byte
    double q_total = 0.0;     // Q, the sum over candidate bytes
    double log_inclusion = 0.0;  // log ι of the node reached
  };
  struct Candidate {
    TokenId token = kNoToken;
    double log_inclusion = 0.0;
    double log_weight = 0.0;  // log σ̃(x) − log ι(x)
  };
  std::vector<Step> steps;
  std::vector<Candidate> set;
  TokenId chosen = kNoToken;

  nlohmann::json to_json(const Vocabulary& vocab) const;
};

struct WeightedToken {
  TokenId token = kNoToken;
  /// log L for the exact proposal, log W̃_S for the character proposal;
  /// −inf marks a dead end.
  double log_set_weight = kNegInf;
  /// log q(token | ctx) when the proposal density is tractable (exact
  /// proposal), NaN otherwise.
  double log_proposal_prob = 0.0;
  std::optional<ProposalTrace> trace;

  bool dead() const { return log_set_weight == kNegInf; }
};

/// Samples x ∝ exp(log_sigma[x]) and reports log L = log Σ exp(log_sigma).
/// Throws DeadEndError when every entry is −inf.
WeightedToken exact_local_step(std::span<const double> log_sigma, Rng& rng);

/// log σ̃(x) = log p(x | ctx) + Σ_k log φ_k(x | ctx).
std::vector<double> local_log_weights(const TokenDistribution& dist,
                                      std::span<const std::vector<double>> factors);

/// The trie-walk set proposal for a local target p(x | ctx)·φ_G(x | ctx)
/// where φ_G is the byte-level grammar potential in `state`. A walk that
/// collects nothing returns a dead WeightedToken (no exception).
WeightedToken character_proposal(const TokenTrie& trie, const TokenDistribution& dist, const RecognizerState& state,
                                 Rng& rng, bool record_trace = false);

/// Same, with the mass map precomputed for this context.
WeightedToken character_proposal(const TokenTrie& trie, const MassMap& mass, const RecognizerState& state, Rng& rng,
                                 bool record_trace = false);

}  // namespace smcgen
