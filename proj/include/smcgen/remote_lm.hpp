#pragma once

// Client for a remote next-token log-probability service.
//
// Protocol: HTTP POST to the endpoint with body {"context": [token ids]};
// the response is {"logprobs": [float; |A|+1]} indexed by token id, with the
// EOS entry at the vocabulary's eos id. Responses are renormalized; drift of
// the probability mass beyond 1e-3 is reported through the warning sink.
//
// Determinism holds only if the backend is deterministic.

#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "smcgen/lm.hpp"

namespace smcgen {

class RemoteError : public Error {
 public:
  using Error::Error;
};

class NetworkError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};

class PayloadError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};

class VocabularyMismatchError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};

/// Splits "http://host:port/path" into ("http://host:port", "/path").
std::pair<std::string, std::string> split_endpoint(const std::string& url);

/// Validates and renormalizes a response body. `warning` receives a message
/// when the raw mass differs from 1 by more than 1e-3.
TokenDistribution parse_logprob_payload(const std::string& body, std::size_t vocab_size,
                                        const std::function<void(const std::string&)>& warning);

class RemoteModel final : public LanguageModel {
 public:
  RemoteModel(std::string endpoint, Vocabulary vocab, double timeout_seconds = 30.0);

  const Vocabulary& vocabulary() const override { return vocab_; }

  /// Warnings collected so far (thread-safe snapshot).
  std::vector<std::string> warnings() const;

 protected:
  TokenDistribution do_next_distribution(std::span<const TokenId> context) const override;

 private:
  std::string base_;
  std::string path_;
  Vocabulary vocab_;
  double timeout_;
  mutable std::mutex mu_;
  mutable std::vector<std::string> warnings_;
};

/// Free-function form of a single remote query.
TokenDistribution remote_logprobs(const RemoteModel& model, std::span<const TokenId> context);

}  // namespace smcgen
