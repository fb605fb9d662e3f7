#pragma once

// Autoregressive language models over a token vocabulary with a distinguished
// end-of-sequence token. All probabilities are natural-log values.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "smcgen/common.hpp"

namespace smcgen {

class HorizonError : public Error {
 public:
  using Error::Error;
};

/// Raised by an unsmoothed n-gram model queried in a context it never saw.
class CoverageError : public Error {
 public:
  using Error::Error;
};

/// Token ids are dense in [0, size()). Every id except eos() decodes to a
/// nonempty byte string; eos() decodes to nothing.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// `tokens` has one entry per id; the entry at `eos_id` must be empty.
  Vocabulary(std::vector<std::string> tokens, TokenId eos_id);

  /// Builds a vocabulary from the non-EOS tokens; EOS gets the last id.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  /// One single-byte token per distinct byte of `alphabet`, in byte order.
  static Vocabulary bytes(std::string_view alphabet);

  std::size_t size() const { return tokens_.size(); }
  TokenId eos() const { return eos_; }
  bool is_eos(TokenId t) const { return t == eos_; }

  const std::string& token_bytes(TokenId t) const { return tokens_.at(static_cast<std::size_t>(t)); }
  std::optional<TokenId> find(std::string_view bytes) const;

  /// Concatenated bytes of `tokens`; EOS contributes nothing.
  std::string decode(std::span<const TokenId> tokens) const;

  /// Greedy longest-match tokenization. Throws if some byte cannot be covered.
  std::vector<TokenId> tokenize(std::string_view text) const;

  /// Human-readable rendering used in logs and JSON outputs.
  std::string render(std::span<const TokenId> tokens) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.eos_ == b.eos_ && a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  TokenId eos_ = kNoToken;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t max_token_len_ = 0;
};

/// Printable rendering of raw bytes (\n and non-printables escaped).
std::string escape_bytes(std::string_view bytes);

/// Vocabulary of every single byte in `alphabet` plus the multi-byte
/// `merges`, in that order, with EOS last.
Vocabulary merged_vocabulary(std::string_view alphabet, const std::vector<std::string>& merges);

/// Random vocabulary of `size` distinct non-EOS tokens of length 1..max_len
/// over `alphabet`; every single byte of the alphabet is included.
Vocabulary synthetic_vocabulary(std::string_view alphabet, std::size_t size, std::size_t max_len,
                                std::uint64_t seed);

/// A normalized next-token distribution over A ∪ {eos}.
struct TokenDistribution {
  std::vector<double> logprobs;

  std::size_t size() const { return logprobs.size(); }
  double logprob(TokenId t) const { return logprobs.at(static_cast<std::size_t>(t)); }
  double prob(TokenId t) const { return std::exp(logprob(t)); }

  /// Throws unless entries are <= 0 (up to rounding) and exp-sum to 1 ± tol.
  void validate(double tol = 1e-9) const;
};

/// Deterministic conditional distribution p(x' | context). Implementations
/// must be safe for concurrent queries.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const Vocabulary& vocabulary() const = 0;

  /// Longest context the model accepts.
  virtual std::size_t horizon() const { return static_cast<std::size_t>(-1); }

  /// Checks the context (no EOS, within horizon) and queries the model.
  TokenDistribution next_distribution(std::span<const TokenId> context) const;

 protected:
  virtual TokenDistribution do_next_distribution(std::span<const TokenId> context) const = 0;
};

/// Sum of per-step conditional log-probabilities: the probability of a
/// complete sequence when `tokens` ends with EOS, the prefix probability
/// otherwise.
double sequence_logprob(const LanguageModel& lm, std::span<const TokenId> tokens);

/// Context-free model: the same distribution after every context.
class CategoricalModel final : public LanguageModel {
 public:
  CategoricalModel(Vocabulary vocab, std::vector<double> probs);
  static CategoricalModel uniform(Vocabulary vocab);

  const Vocabulary& vocabulary() const override { return vocab_; }

 protected:
  TokenDistribution do_next_distribution(std::span<const TokenId> context) const override;

 private:
  Vocabulary vocab_;
  TokenDistribution dist_;
};

/// Distribution depends only on the context length: position t uses
/// `by_position[t]`, and every later position uses the last entry.
class PositionalModel final : public LanguageModel {
 public:
  PositionalModel(Vocabulary vocab, const std::vector<std::vector<double>>& by_position);

  const Vocabulary& vocabulary() const override { return vocab_; }

 protected:
  TokenDistribution do_next_distribution(std::span<const TokenId> context) const override;

 private:
  Vocabulary vocab_;
  std::vector<CategoricalModel> positions_;
};

/// Pseudo-random but deterministic model: logits are a hash of
/// (seed, recent context, token), scaled by `temperature`. Used to exercise
/// large vocabularies without training anything.
class SyntheticModel final : public LanguageModel {
 public:
  SyntheticModel(Vocabulary vocab, std::uint64_t seed, double temperature = 1.0,
                 double eos_logit_bias = 0.0, std::size_t context_window = 3);

  const Vocabulary& vocabulary() const override { return vocab_; }

 protected:
  TokenDistribution do_next_distribution(std::span<const TokenId> context) const override;

 private:
  Vocabulary vocab_;
  std::uint64_t seed_;
  double temperature_;
  double eos_bias_;
  std::size_t window_;
};

struct NgramOptions {
  /// Number of conditioning tokens (1 = bigram).
  std::size_t order = 2;
  /// Additive constant; 0 is allowed but unseen contexts then raise CoverageError.
  double smoothing = 1.0;
  /// Byte separating documents; each occurrence emits an EOS event.
  char delimiter = '\n';
  std::size_t horizon = 4096;
};

/// Count-based n-gram model with additive smoothing:
///   p(x | ctx) = (count(ctx, x) + s) / (count(ctx) + s·|A ∪ {eos}|).
/// Contexts shorter than the order are left-padded with a BOS marker.
class NgramModel final : public LanguageModel {
 public:
  using Context = std::vector<TokenId>;

  NgramModel(Vocabulary vocab, NgramOptions opts);

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::size_t horizon() const override { return opts_.horizon; }
  const NgramOptions& options() const { return opts_; }

  /// Adds one token-level document; `terminated` appends an EOS event.
  void add_document(std::span<const TokenId> tokens, bool terminated);

  std::uint64_t count(const Context& ctx, TokenId next) const;
  std::uint64_t context_count(const Context& ctx) const;

  /// Mean negative log-likelihood per event of a corpus, exponentiated.
  double perplexity(std::string_view corpus) const;

  nlohmann::json to_json() const;
  static NgramModel from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static NgramModel load(const std::string& path);

  static constexpr TokenId kBos = -2;

 protected:
  TokenDistribution do_next_distribution(std::span<const TokenId> context) const override;

 private:
  Context context_key(std::span<const TokenId> history) const;

  Vocabulary vocab_;
  NgramOptions opts_;
  // Ordered map for deterministic serialization.
  std::map<Context, std::vector<std::uint64_t>> counts_;
  std::map<Context, std::uint64_t> totals_;
};

/// Splits `corpus` on the delimiter and counts every document. Without an
/// explicit vocabulary the alphabet is the set of corpus bytes.
NgramModel train_ngram(std::string_view corpus, const NgramOptions& opts,
                       std::optional<Vocabulary> vocab = std::nullopt);

/// Splits a corpus into (document, terminated) pairs.
std::vector<std::pair<std::string, bool>> split_documents(std::string_view corpus, char delimiter);

}  // namespace smcgen
