#include "smcgen/remote_lm.hpp"

#include <cmath>
#include <sstream>

#include <httplib.h>

namespace smcgen {

std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw NetworkError("endpoint '" + url + "' lacks a scheme");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

TokenDistribution parse_logprob_payload(const std::string& body, std::size_t vocab_size,
                                        const std::function<void(const std::string&)>& warning) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw PayloadError(std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("logprobs") || !j["logprobs"].is_array())
    throw PayloadError("response lacks a \"logprobs\" array");
  const auto& arr = j["logprobs"];
  if (arr.size() != vocab_size)
    throw VocabularyMismatchError("response has " + std::to_string(arr.size()) +
                                  " log-probabilities, vocabulary has " + std::to_string(vocab_size));
  TokenDistribution d;
  d.logprobs.reserve(vocab_size);
  for (const auto& v : arr) {
    if (v.is_null()) {
      d.logprobs.push_back(kNegInf);  // JSON has no -inf; null means zero probability
      continue;
    }
    if (!v.is_number()) throw PayloadError("log-probability entry is not a number");
    const double lp = v.get<double>();
    if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity())
      throw PayloadError("log-probability entry is NaN or +inf");
    d.logprobs.push_back(lp);
  }
  const double lse = log_sum_exp(d.logprobs);
  if (lse == kNegInf) throw PayloadError("response assigns zero mass to every token");
  const double mass = std::exp(lse);
  if (std::abs(mass - 1.0) > 1e-3 && warning) {
    std::ostringstream msg;
    msg << "remote distribution mass " << mass << " renormalized";
    warning(msg.str());
  }
  for (double& lp : d.logprobs) lp -= lse;
  return d;
}

RemoteModel::RemoteModel(std::string endpoint, Vocabulary vocab, double timeout_seconds)
    : vocab_(std::move(vocab)), timeout_(timeout_seconds) {
  std::tie(base_, path_) = split_endpoint(endpoint);
}

std::vector<std::string> RemoteModel::warnings() const {
  std::lock_guard lock(mu_);
  return warnings_;
}

TokenDistribution RemoteModel::do_next_distribution(std::span<const TokenId> context) const {
  httplib::Client client(base_);
  const auto secs = static_cast<time_t>(timeout_);
  const auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  nlohmann::json req = {{"context", std::vector<TokenId>(context.begin(), context.end())}};
  auto res = client.Post(path_, req.dump(), "application/json");
  if (!res) throw NetworkError("request to " + base_ + path_ + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw NetworkError("request to " + base_ + path_ + " returned HTTP " + std::to_string(res->status));
  return parse_logprob_payload(res->body, vocab_.size(), [this](const std::string& w) {
    std::lock_guard lock(mu_);
    warnings_.push_back(w);
  });
}

TokenDistribution remote_logprobs(const RemoteModel& model, std::span<const TokenId> context) {
  return model.next_distribution(context);
}

}  // namespace smcgen
