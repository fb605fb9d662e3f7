#include "smcgen/proposal.hpp"

#include <cmath>

namespace smcgen {

nlohmann::json ProposalTrace::to_json(const Vocabulary& vocab) const {
  auto steps_j = nlohmann::json::array();
  std::string path;
  for (const auto& s : steps) {
    path.push_back(static_cast<char>(s.byte));
    steps_j.push_back({{"byte", s.byte},
                       {"q_bar", s.q_bar},
                       {"Q", s.q_total},
                       {"inclusion", std::exp(s.log_inclusion)},
                       {"log_inclusion", s.log_inclusion}});
  }
  auto set_j = nlohmann::json::array();
  for (const auto& c : set) {
    set_j.push_back({{"token", c.token},
                     {"text", vocab.is_eos(c.token) ? std::string("<eos>") : escape_bytes(vocab.token_bytes(c.token))},
                     {"inclusion", std::exp(c.log_inclusion)},
                     {"log_weight", c.log_weight}});
  }
  return {{"path", escape_bytes(path)}, {"steps", steps_j}, {"set", set_j}, {"chosen", chosen}};
}

WeightedToken exact_local_step(std::span<const double> log_sigma, Rng& rng) {
  const double log_l = log_sum_exp(log_sigma);
  if (log_l == kNegInf) throw DeadEndError("local normalizer is zero");
  if (!std::isfinite(log_l)) throw Error("local normalizer is not finite");
  WeightedToken out;
  out.token = static_cast<TokenId>(rng.log_categorical(log_sigma));
  out.log_set_weight = log_l;
  out.log_proposal_prob = log_sigma[static_cast<std::size_t>(out.token)] - log_l;
  return out;
}

std::vector<double> local_log_weights(const TokenDistribution& dist, std::span<const std::vector<double>> factors) {
  std::vector<double> out = dist.logprobs;
  for (const auto& f : factors) {
    if (f.size() != out.size()) throw Error("potential score vector has the wrong size");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] == kNegInf || f[i] == kNegInf) ? kNegInf : out[i] + f[i];
  }
  return out;
}

WeightedToken character_proposal(const TokenTrie& trie, const TokenDistribution& dist, const RecognizerState& state,
                                 Rng& rng, bool record_trace) {
  return character_proposal(trie, compute_mass(trie, dist), state, rng, record_trace);
}

WeightedToken character_proposal(const TokenTrie& trie, const MassMap& mass, const RecognizerState& state, Rng& rng,
                                 bool record_trace) {
  WeightedToken out;
  out.log_proposal_prob = std::nan("");
  ProposalTrace trace;
  std::vector<TokenId> set_tokens;
  std::vector<double> set_log_w;

  auto collect = [&](TokenId token, double marker_mass, double log_iota) {
    const double lw = marker_mass > 0.0 ? std::log(marker_mass) - log_iota : kNegInf;
    set_tokens.push_back(token);
    set_log_w.push_back(lw);
    if (record_trace) trace.set.push_back({token, log_iota, lw});
  };

  if (!state.is_valid_prefix()) {
    if (record_trace) out.trace = std::move(trace);
    return out;
  }

  // EOS is included with certainty when the grammar accepts the context.
  if (state.eos_allowed()) collect(trie.eos(), mass.marker[TokenTrie::kRoot], 0.0);

  TokenTrie::NodeId node = TokenTrie::kRoot;
  RecognizerState rec = state;
  double log_iota = 0.0;
  std::vector<double> q_bar;
  for (;;) {
    const auto& n = trie.node(node);
    if (n.child_count == 0) break;
    const auto allowed = rec.allowed_next_bytes();
    q_bar.assign(n.child_count, 0.0);
    double q_total = 0.0;
    for (std::uint32_t i = 0; i < n.child_count; ++i) {
      const TokenTrie::NodeId c = n.first_child + i;
      if (allowed.test(trie.node(c).byte)) q_bar[i] = mass.node[c];
      q_total += q_bar[i];
    }
    if (!(q_total > 0.0)) break;
    const std::size_t pick = rng.categorical(q_bar);
    const TokenTrie::NodeId c = n.first_child + static_cast<TokenTrie::NodeId>(pick);
    log_iota += std::log(q_bar[pick]) - std::log(q_total);
    node = c;
    rec = rec.advance(trie.node(c).byte);
    if (record_trace) trace.steps.push_back({trie.node(c).byte, q_bar[pick], q_total, log_iota});
    if (trie.node(c).token != kNoToken) collect(trie.node(c).token, mass.marker[c], log_iota);
  }

  const double log_w = log_sum_exp(set_log_w);
  if (log_w != kNegInf) {
    out.token = set_tokens[rng.log_categorical(set_log_w)];
    out.log_set_weight = log_w;
  }
  if (record_trace) {
    trace.chosen = out.token;
    out.trace = std::move(trace);
  }
  return out;
}

}  // namespace smcgen
