#include "smcgen/enumerate.hpp"

#include <cmath>

#include "smcgen/proposal.hpp"

namespace smcgen {

namespace {

struct Enumerator {
  const LanguageModel& lm;
  const std::vector<PotentialPtr>& efficient;
  PotentialProduct expensive;
  const EnumerationOptions& opts;
  const Vocabulary& vocab;
  Enumeration out;
  std::map<std::string, double> raw_g, raw_eff;

  Enumerator(const LanguageModel& l, const std::vector<PotentialPtr>& eff, const std::vector<PotentialPtr>& exp,
             const EnumerationOptions& o)
      : lm(l), efficient(eff), expensive(nullptr, exp), opts(o), vocab(l.vocabulary()) {}

  void visit(std::vector<TokenId>& tokens, const std::vector<PotentialStatePtr>& states, double log_p,
             double log_phi_eff, double log_l) {
    if (++out.nodes > opts.node_cap)
      throw EnumerationTooLarge("enumeration exceeded the cap of " + std::to_string(opts.node_cap) + " prefixes");
    const TokenDistribution dist = lm.next_distribution(tokens);
    std::vector<std::vector<double>> factors;
    for (std::size_t k = 0; k < efficient.size(); ++k) factors.push_back(efficient[k]->next_token_log_scores(states[k]));
    const std::vector<double> log_sigma = local_log_weights(dist, factors);
    const double log_norm = log_sum_exp(log_sigma);
    if (tokens.size() <= opts.record_prefix_depth) out.prefix_normalizers[vocab.render(tokens)] = std::exp(log_norm);
    if (log_norm == kNegInf) return;

    const TokenId eos = vocab.eos();
    const auto eos_idx = static_cast<std::size_t>(eos);
    if (log_sigma[eos_idx] > kNegInf) {
      const double lp = log_p + dist.logprob(eos);
      const double phi_eff = log_phi_eff + (log_sigma[eos_idx] - dist.logprob(eos));
      const double phi_exp = expensive.log_score(tokens, true);
      const double l_x = log_l + log_sigma[eos_idx] - log_norm;
      const std::string text = vocab.decode(tokens);
      const double g = std::exp(lp + phi_eff + phi_exp);
      const double e = std::exp(lp + phi_eff);
      out.z += g;
      out.z_efficient += e;
      out.z_rerank += std::exp(l_x + phi_exp);
      out.lm_distribution[text] += std::exp(lp);
      raw_eff[text] += e;
      if (g > 0.0) {
        raw_g[text] += g;
        ++out.sequences;
      }
    }

    for (std::size_t t = 0; t < log_sigma.size(); ++t) {
      if (t == eos_idx || log_sigma[t] == kNegInf) continue;
      const auto tok = static_cast<TokenId>(t);
      const double lp = log_p + dist.logprob(tok);
      const double phi = log_phi_eff + (log_sigma[t] - dist.logprob(tok));
      if (tokens.size() + 1 > opts.max_tokens || std::exp(lp + phi) < opts.min_prefix_prob) {
        out.truncation_bound += std::exp(lp);
        out.rerank_truncation_bound += std::exp(log_l + log_sigma[t] - log_norm);
        continue;
      }
      std::vector<PotentialStatePtr> next_states;
      next_states.reserve(states.size());
      for (std::size_t k = 0; k < efficient.size(); ++k) next_states.push_back(efficient[k]->advance(states[k], tok));
      tokens.push_back(tok);
      visit(tokens, next_states, lp, phi, log_l + log_sigma[t] - log_norm);
      tokens.pop_back();
    }
  }
};

}  // namespace

nlohmann::json Enumeration::to_json() const {
  auto post = nlohmann::json::object();
  for (const auto& [k, v] : posterior) post[k] = v;
  auto eff = nlohmann::json::object();
  for (const auto& [k, v] : efficient_posterior) eff[k] = v;
  auto pref = nlohmann::json::object();
  for (const auto& [k, v] : prefix_normalizers) pref[k.empty() ? std::string("<empty>") : k] = v;
  return {{"format", "smcgen-oracle"},
          {"version", 1},
          {"Z", z},
          {"log_Z", z > 0 ? nlohmann::json(std::log(z)) : nlohmann::json(nullptr)},
          {"Z_efficient", z_efficient},
          {"Z_rerank", z_rerank},
          {"truncation_bound", truncation_bound},
          {"rerank_truncation_bound", rerank_truncation_bound},
          {"nodes", nodes},
          {"sequences", sequences},
          {"posterior", post},
          {"efficient_posterior", eff},
          {"prefix_normalizers", pref}};
}

Enumeration enumerate_target(const LanguageModel& lm, const std::vector<PotentialPtr>& efficient,
                             const std::vector<PotentialPtr>& expensive, const EnumerationOptions& opts) {
  Enumerator e(lm, efficient, expensive, opts);
  std::vector<PotentialStatePtr> states;
  double log_phi_eff = 0.0;
  for (const auto& p : efficient) {
    states.push_back(p->initial_state());
    log_phi_eff += p->state_log_score(*states.back(), false);
  }
  std::vector<TokenId> tokens;
  if (log_phi_eff > kNegInf) e.visit(tokens, states, 0.0, log_phi_eff, 0.0);
  if (e.out.z > 0)
    for (const auto& [k, v] : e.raw_g) e.out.posterior[k] = v / e.out.z;
  if (e.out.z_efficient > 0)
    for (const auto& [k, v] : e.raw_eff)
      if (v > 0) e.out.efficient_posterior[k] = v / e.out.z_efficient;
  return std::move(e.out);
}

Enumeration enumerate_instance(const Instance& inst, std::size_t node_cap) {
  if (!inst.enumerable) throw Error("instance '" + inst.name + "' is not enumerable");
  EnumerationOptions opts;
  opts.max_tokens = inst.max_tokens;
  opts.node_cap = node_cap;
  return enumerate_target(*inst.lm, inst.efficient, inst.expensive, opts);
}

}  // namespace smcgen
