#pragma once

// Potential functions: nonnegative scores on partial and complete token
// sequences, kept in log space (−inf encodes a hard-constraint violation).
//
// Every potential must be monotone in its zeros: once a prefix scores −inf,
// every extension does too. Scores are bounded above by log_upper_bound().

#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "smcgen/grammar.hpp"
#include "smcgen/lm.hpp"
#include "smcgen/toy_eval.hpp"
#include "smcgen/trie.hpp"

namespace smcgen {

enum class PotentialClass { Efficient, Expensive };

/// How often a potential's score can change: after every token, or only when
/// a semantic unit (a token containing the boundary byte) is finished.
struct Stride {
  enum class Kind { EveryToken, SemanticUnit };
  Kind kind = Kind::EveryToken;
  unsigned char boundary = '\n';

  static Stride every_token() { return {}; }
  static Stride semantic_unit(unsigned char boundary = '\n') { return {Kind::SemanticUnit, boundary}; }

  /// True when `token` closes a unit under this stride (always, for EveryToken).
  bool closes_unit(const Vocabulary& vocab, TokenId token) const;
};

/// The potential's own evaluator failed (as opposed to scoring 0).
class PotentialFault : public Error {
 public:
  using Error::Error;
};

/// Opaque incremental state. Concrete potentials derive from this.
class PotentialState {
 public:
  virtual ~PotentialState() = default;
};
using PotentialStatePtr = std::shared_ptr<const PotentialState>;

class Potential {
 public:
  explicit Potential(std::shared_ptr<const Vocabulary> vocab);
  virtual ~Potential() = default;

  virtual std::string name() const = 0;
  virtual PotentialClass potential_class() const = 0;
  virtual Stride stride() const { return Stride::every_token(); }
  virtual double log_upper_bound() const { return 0.0; }

  /// Score of `tokens` (no EOS); `complete` marks an EOS-terminated sequence.
  virtual double log_score(std::span<const TokenId> tokens, bool complete) const = 0;

  // Incremental interface. The defaults keep the token sequence in the
  // state and call log_score; parsers override them to avoid rescans.
  virtual PotentialStatePtr initial_state() const;
  virtual PotentialStatePtr advance(const PotentialStatePtr& state, TokenId token) const;
  virtual double state_log_score(const PotentialState& state, bool complete) const;

  /// log φ(x' | context) for every x' in the vocabulary, EOS included,
  /// using the zero-safe convention (−inf everywhere on a dead context).
  virtual std::vector<double> next_token_log_scores(const PotentialStatePtr& state) const;

  const Vocabulary& vocabulary() const { return *vocab_; }
  const std::shared_ptr<const Vocabulary>& vocabulary_ptr() const { return vocab_; }

 protected:
  std::shared_ptr<const Vocabulary> vocab_;
};

using PotentialPtr = std::shared_ptr<const Potential>;

enum class FaultPolicy {
  ZeroScore,  // a PotentialFault scores −inf and is recorded as a diagnostic
  Raise,      // a PotentialFault propagates
};

/// Product of potentials; the empty product is identically 1 (log 0).
class PotentialProduct {
 public:
  PotentialProduct(std::shared_ptr<const Vocabulary> vocab, std::vector<PotentialPtr> members,
                   FaultPolicy policy = FaultPolicy::ZeroScore);

  const std::vector<PotentialPtr>& members() const { return members_; }
  FaultPolicy fault_policy() const { return policy_; }

  double log_score(std::span<const TokenId> tokens, bool complete,
                   std::vector<std::string>* diagnostics = nullptr) const;

  /// log Φ(next | context) = log Φ(context·next) − log Φ(context), or −inf
  /// when the context already scores −inf. `next` may be EOS.
  double conditional_log_score(TokenId next, std::span<const TokenId> context,
                               std::vector<std::string>* diagnostics = nullptr) const;

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  std::vector<PotentialPtr> members_;
  FaultPolicy policy_;
};

inline double product_log_score(const PotentialProduct& pp, std::span<const TokenId> tokens, bool complete,
                                std::vector<std::string>* diagnostics = nullptr) {
  return pp.log_score(tokens, complete, diagnostics);
}

inline double conditional_log_score(const PotentialProduct& pp, TokenId next, std::span<const TokenId> context,
                                    std::vector<std::string>* diagnostics = nullptr) {
  return pp.conditional_log_score(next, context, diagnostics);
}

/// Evaluates one potential, applying the fault policy.
double guarded_score(const Potential& p, const PotentialState& state, bool complete, FaultPolicy policy,
                     std::vector<std::string>* diagnostics);

// ---------------------------------------------------------------------------
// Concrete potentials

/// 1 when the decoded bytes are a prefix of (partial) or a member of
/// (complete) the grammar's language, else 0.
class CfgPotential final : public Potential {
 public:
  CfgPotential(std::shared_ptr<const Grammar> grammar, std::shared_ptr<const Vocabulary> vocab);

  std::string name() const override { return "cfg"; }
  PotentialClass potential_class() const override { return PotentialClass::Efficient; }
  double log_score(std::span<const TokenId> tokens, bool complete) const override;

  PotentialStatePtr initial_state() const override;
  PotentialStatePtr advance(const PotentialStatePtr& state, TokenId token) const override;
  double state_log_score(const PotentialState& state, bool complete) const override;
  std::vector<double> next_token_log_scores(const PotentialStatePtr& state) const override;

  const Grammar& grammar() const { return *grammar_; }
  const TokenTrie& trie() const { return trie_; }

  /// The recognizer behind a state produced by this potential.
  static const RecognizerState& recognizer(const PotentialState& state);

 private:
  std::shared_ptr<const Grammar> grammar_;
  TokenTrie trie_;
};

inline std::shared_ptr<CfgPotential> cfg_potential(std::shared_ptr<const Grammar> g,
                                                   std::shared_ptr<const Vocabulary> vocab) {
  return std::make_shared<CfgPotential>(std::move(g), std::move(vocab));
}

/// Runs the toy evaluator over the complete statements (lines) generated so
/// far; 1 if they run without a fault. Partial sequences are truncated to
/// their longest prefix of complete lines.
class CheckedEvalPotential final : public Potential {
 public:
  CheckedEvalPotential(std::shared_ptr<const Vocabulary> vocab, std::size_t step_budget = 10000);

  std::string name() const override { return "checked_eval"; }
  PotentialClass potential_class() const override { return PotentialClass::Expensive; }
  Stride stride() const override { return Stride::semantic_unit('\n'); }
  double log_score(std::span<const TokenId> tokens, bool complete) const override;

  std::size_t evaluations() const;

 private:
  ToyEvaluator evaluator_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, double> memo_;
  mutable std::size_t evaluations_ = 0;
};

inline std::shared_ptr<CheckedEvalPotential> checked_eval_potential(std::shared_ptr<const Vocabulary> vocab,
                                                                   std::size_t step_budget = 10000) {
  return std::make_shared<CheckedEvalPotential>(std::move(vocab), step_budget);
}

/// 1 while the decoded bytes are a prefix of one of `allowed` (partial), or
/// equal to one of them (complete).
class PrefixSetPotential final : public Potential {
 public:
  PrefixSetPotential(std::shared_ptr<const Vocabulary> vocab, std::vector<std::string> allowed);

  std::string name() const override { return "prefix_set"; }
  PotentialClass potential_class() const override { return PotentialClass::Expensive; }
  double log_score(std::span<const TokenId> tokens, bool complete) const override;

  const std::vector<std::string>& allowed() const { return allowed_; }

 private:
  std::vector<std::string> allowed_;
};

/// 1 while bracket nesting depth never exceeds `max_depth`.
class DepthLimitPotential final : public Potential {
 public:
  DepthLimitPotential(std::shared_ptr<const Vocabulary> vocab, int max_depth, char open = '(', char close = ')');

  std::string name() const override { return "depth_limit"; }
  PotentialClass potential_class() const override { return PotentialClass::Expensive; }
  double log_score(std::span<const TokenId> tokens, bool complete) const override;

  int max_depth() const { return max_depth_; }

 private:
  int max_depth_;
  char open_;
  char close_;
};

/// Wraps a callable; used for ad hoc soft potentials and from Python.
class FunctionPotential final : public Potential {
 public:
  using Fn = std::function<double(const Vocabulary&, std::span<const TokenId>, bool)>;

  FunctionPotential(std::shared_ptr<const Vocabulary> vocab, std::string name, PotentialClass cls, Fn fn,
                    double log_upper_bound = 0.0, Stride stride = Stride::every_token());

  std::string name() const override { return name_; }
  PotentialClass potential_class() const override { return cls_; }
  Stride stride() const override { return stride_; }
  double log_upper_bound() const override { return bound_; }
  double log_score(std::span<const TokenId> tokens, bool complete) const override;

 private:
  std::string name_;
  PotentialClass cls_;
  Fn fn_;
  double bound_;
  Stride stride_;
};

}  // namespace smcgen
