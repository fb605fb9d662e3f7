#include "smcgen/lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "smcgen/rng.hpp"

namespace smcgen {

namespace {

std::string to_hex(std::string_view bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(kDigits[c >> 4]);
    out.push_back(kDigits[c & 0xf]);
  }
  return out;
}

std::string from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error("malformed hex token: odd length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(std::string("malformed hex token: bad digit '") + c + "'");
  };
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2)
    out.push_back(static_cast<char>(nibble(hex[i]) * 16 + nibble(hex[i + 1])));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> tokens, TokenId eos_id)
    : tokens_(std::move(tokens)), eos_(eos_id) {
  if (eos_ < 0 || static_cast<std::size_t>(eos_) >= tokens_.size())
    throw Error("vocabulary: eos id out of range");
  if (!tokens_[static_cast<std::size_t>(eos_)].empty())
    throw Error("vocabulary: the eos entry must not carry bytes");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (static_cast<TokenId>(i) == eos_) continue;
    if (tokens_[i].empty())
      throw Error("vocabulary: token " + std::to_string(i) + " decodes to an empty byte string");
    index_.emplace(tokens_[i], static_cast<TokenId>(i));
    max_token_len_ = std::max(max_token_len_, tokens_[i].size());
  }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  tokens.emplace_back();
  const auto eos = static_cast<TokenId>(tokens.size() - 1);
  return Vocabulary(std::move(tokens), eos);
}

Vocabulary Vocabulary::bytes(std::string_view alphabet) {
  std::set<unsigned char> distinct(alphabet.begin(), alphabet.end());
  std::vector<std::string> tokens;
  for (unsigned char c : distinct) tokens.emplace_back(1, static_cast<char>(c));
  return from_tokens(std::move(tokens));
}

std::optional<TokenId> Vocabulary::find(std::string_view bytes) const {
  auto it = index_.find(std::string(bytes));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId t : tokens)
    if (t != eos_) out += token_bytes(t);
  return out;
}

std::vector<TokenId> Vocabulary::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t len = std::min(max_token_len_, text.size() - pos);
    for (; len > 0; --len) {
      if (auto id = find(text.substr(pos, len))) {
        out.push_back(*id);
        break;
      }
    }
    if (len == 0) {
      std::ostringstream msg;
      msg << "tokenize: byte 0x" << std::hex << std::setw(2) << std::setfill('0')
          << static_cast<int>(static_cast<unsigned char>(text[pos])) << " at offset " << std::dec
          << pos << " is not covered by the vocabulary";
      throw Error(msg.str());
    }
    pos += len;
  }
  return out;
}

std::string escape_bytes(std::string_view bytes) {
  std::string out;
  for (unsigned char c : bytes) {
    if (c == '\n') {
      out += "\\n";
    } else if (c < 0x20 || c >= 0x7f) {
      std::ostringstream esc;
      esc << "\\x" << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(c);
      out += esc.str();
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

std::string Vocabulary::render(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId t : tokens) out += t == eos_ ? std::string("<eos>") : escape_bytes(token_bytes(t));
  return out;
}

Vocabulary merged_vocabulary(std::string_view alphabet, const std::vector<std::string>& merges) {
  std::set<unsigned char> distinct(alphabet.begin(), alphabet.end());
  std::vector<std::string> tokens;
  for (unsigned char c : distinct) tokens.emplace_back(1, static_cast<char>(c));
  for (const auto& m : merges) {
    if (m.size() < 2) throw Error("merged_vocabulary: merges must be multi-byte");
    tokens.push_back(m);
  }
  return Vocabulary::from_tokens(std::move(tokens));
}

Vocabulary synthetic_vocabulary(std::string_view alphabet, std::size_t size, std::size_t max_len,
                                std::uint64_t seed) {
  std::set<unsigned char> distinct(alphabet.begin(), alphabet.end());
  if (distinct.empty()) throw Error("synthetic_vocabulary: empty alphabet");
  std::vector<unsigned char> letters(distinct.begin(), distinct.end());
  std::vector<std::string> tokens;
  std::set<std::string> seen;
  for (unsigned char c : letters) {
    tokens.emplace_back(1, static_cast<char>(c));
    seen.insert(tokens.back());
  }
  Rng rng(seed);
  std::size_t attempts = 0;
  while (tokens.size() < size) {
    if (++attempts > size * 1000) throw Error("synthetic_vocabulary: alphabet too small for size");
    const std::size_t len = 2 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(max_len - 1));
    std::string tok;
    for (std::size_t i = 0; i < std::min(len, max_len); ++i)
      tok.push_back(static_cast<char>(letters[static_cast<std::size_t>(rng.uniform() * letters.size())]));
    if (seen.insert(tok).second) tokens.push_back(tok);
  }
  return Vocabulary::from_tokens(std::move(tokens));
}

// ---------------------------------------------------------------------------
// Distributions and models

void TokenDistribution::validate(double tol) const {
  if (logprobs.empty()) throw Error("distribution is empty");
  for (double lp : logprobs) {
    if (std::isnan(lp) || lp > 1e-12) throw Error("distribution has an entry above log 1 or NaN");
  }
  const double total = std::exp(log_sum_exp(logprobs));
  if (std::abs(total - 1.0) > tol) {
    std::ostringstream msg;
    msg << "distribution sums to " << std::setprecision(17) << total;
    throw Error(msg.str());
  }
}

TokenDistribution LanguageModel::next_distribution(std::span<const TokenId> context) const {
  const auto& vocab = vocabulary();
  if (context.size() > horizon())
    throw HorizonError("context of length " + std::to_string(context.size()) +
                       " exceeds model horizon " + std::to_string(horizon()));
  for (TokenId t : context) {
    if (t == vocab.eos()) throw Error("next_distribution: context contains EOS");
    if (t < 0 || static_cast<std::size_t>(t) >= vocab.size())
      throw Error("next_distribution: token id " + std::to_string(t) + " out of range");
  }
  return do_next_distribution(context);
}

double sequence_logprob(const LanguageModel& lm, std::span<const TokenId> tokens) {
  const TokenId eos = lm.vocabulary().eos();
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == eos && i + 1 != tokens.size())
      throw Error("sequence_logprob: EOS may only appear at the end");
    total += lm.next_distribution(tokens.first(i)).logprob(tokens[i]);
  }
  return total;
}

CategoricalModel::CategoricalModel(Vocabulary vocab, std::vector<double> probs)
    : vocab_(std::move(vocab)) {
  if (probs.size() != vocab_.size()) throw Error("CategoricalModel: probability vector size mismatch");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw Error("CategoricalModel: negative probability");
    total += p;
  }
  if (!(total > 0.0)) throw Error("CategoricalModel: zero total mass");
  dist_.logprobs.reserve(probs.size());
  for (double p : probs) dist_.logprobs.push_back(std::log(p / total));
}

CategoricalModel CategoricalModel::uniform(Vocabulary vocab) {
  std::vector<double> probs(vocab.size(), 1.0);
  return CategoricalModel(std::move(vocab), std::move(probs));
}

TokenDistribution CategoricalModel::do_next_distribution(std::span<const TokenId>) const {
  return dist_;
}

PositionalModel::PositionalModel(Vocabulary vocab, const std::vector<std::vector<double>>& by_position)
    : vocab_(std::move(vocab)) {
  if (by_position.empty()) throw Error("PositionalModel: needs at least one position");
  for (const auto& probs : by_position) positions_.emplace_back(vocab_, probs);
}

TokenDistribution PositionalModel::do_next_distribution(std::span<const TokenId> context) const {
  return positions_[std::min(context.size(), positions_.size() - 1)].next_distribution({});
}

SyntheticModel::SyntheticModel(Vocabulary vocab, std::uint64_t seed, double temperature,
                               double eos_logit_bias, std::size_t context_window)
    : vocab_(std::move(vocab)),
      seed_(seed),
      temperature_(temperature),
      eos_bias_(eos_logit_bias),
      window_(context_window) {}

TokenDistribution SyntheticModel::do_next_distribution(std::span<const TokenId> context) const {
  std::uint64_t h = mix64(seed_);
  const std::size_t start = context.size() > window_ ? context.size() - window_ : 0;
  for (std::size_t i = start; i < context.size(); ++i)
    h = mix64(h ^ static_cast<std::uint64_t>(context[i] + 1));
  TokenDistribution d;
  d.logprobs.resize(vocab_.size());
  for (std::size_t t = 0; t < vocab_.size(); ++t) {
    // Map the hash to a standard-normal-ish logit via the sum of 4 uniforms.
    std::uint64_t r = mix64(h ^ (t * 0x9e3779b97f4a7c15ULL));
    double s = 0.0;
    for (int k = 0; k < 4; ++k) {
      s += static_cast<double>((r >> (16 * k)) & 0xffff) / 65536.0;
    }
    double logit = (s - 2.0) * std::sqrt(3.0) * temperature_;
    if (static_cast<TokenId>(t) == vocab_.eos()) logit += eos_bias_;
    d.logprobs[t] = logit;
  }
  const double lse = log_sum_exp(d.logprobs);
  for (double& lp : d.logprobs) lp -= lse;
  return d;
}

// ---------------------------------------------------------------------------
// N-gram model

NgramModel::NgramModel(Vocabulary vocab, NgramOptions opts) : vocab_(std::move(vocab)), opts_(opts) {
  if (opts_.order < 1) throw Error("n-gram order must be at least 1");
  if (!(opts_.smoothing >= 0.0)) throw Error("n-gram smoothing must be nonnegative");
}

NgramModel::Context NgramModel::context_key(std::span<const TokenId> history) const {
  Context key(opts_.order, kBos);
  const std::size_t n = std::min(history.size(), opts_.order);
  std::copy(history.end() - static_cast<std::ptrdiff_t>(n), history.end(),
            key.end() - static_cast<std::ptrdiff_t>(n));
  return key;
}

void NgramModel::add_document(std::span<const TokenId> tokens, bool terminated) {
  std::vector<TokenId> events(tokens.begin(), tokens.end());
  if (terminated) events.push_back(vocab_.eos());
  for (std::size_t i = 0; i < events.size(); ++i) {
    auto key = context_key(std::span<const TokenId>(events).first(i));
    auto& row = counts_[key];
    if (row.empty()) row.assign(vocab_.size(), 0);
    row[static_cast<std::size_t>(events[i])] += 1;
    totals_[key] += 1;
  }
}

std::uint64_t NgramModel::count(const Context& ctx, TokenId next) const {
  auto it = counts_.find(ctx);
  return it == counts_.end() ? 0 : it->second.at(static_cast<std::size_t>(next));
}

std::uint64_t NgramModel::context_count(const Context& ctx) const {
  auto it = totals_.find(ctx);
  return it == totals_.end() ? 0 : it->second;
}

TokenDistribution NgramModel::do_next_distribution(std::span<const TokenId> context) const {
  const auto key = context_key(context);
  const auto it = counts_.find(key);
  const double s = opts_.smoothing;
  const double v = static_cast<double>(vocab_.size());
  TokenDistribution d;
  d.logprobs.resize(vocab_.size());
  if (it == counts_.end()) {
    if (s == 0.0)
      throw CoverageError("n-gram context " + vocab_.render(context) +
                          " was never observed and smoothing is 0");
    std::fill(d.logprobs.begin(), d.logprobs.end(), -std::log(v));
    return d;
  }
  const double denom = static_cast<double>(totals_.at(key)) + s * v;
  for (std::size_t t = 0; t < vocab_.size(); ++t) {
    const double num = static_cast<double>(it->second[t]) + s;
    d.logprobs[t] = num > 0.0 ? std::log(num / denom) : kNegInf;
  }
  return d;
}

double NgramModel::perplexity(std::string_view corpus) const {
  double nll = 0.0;
  std::size_t events = 0;
  for (const auto& [doc, terminated] : split_documents(corpus, opts_.delimiter)) {
    auto tokens = vocab_.tokenize(doc);
    if (terminated) tokens.push_back(vocab_.eos());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      nll -= next_distribution(std::span<const TokenId>(tokens).first(i)).logprob(tokens[i]);
      ++events;
    }
  }
  if (events == 0) throw Error("perplexity: corpus has no events");
  return std::exp(nll / static_cast<double>(events));
}

nlohmann::json NgramModel::to_json() const {
  nlohmann::json j;
  j["format"] = "smcgen-ngram";
  j["version"] = 1;
  j["order"] = opts_.order;
  j["smoothing"] = opts_.smoothing;
  j["delimiter"] = to_hex(std::string(1, opts_.delimiter));
  j["horizon"] = opts_.horizon;
  auto tokens = nlohmann::json::array();
  for (std::size_t i = 0; i < vocab_.size(); ++i) tokens.push_back(to_hex(vocab_.token_bytes(static_cast<TokenId>(i))));
  j["vocabulary"] = {{"tokens_hex", tokens}, {"eos_id", vocab_.eos()}};
  auto rows = nlohmann::json::array();
  for (const auto& [ctx, row] : counts_) rows.push_back({{"context", ctx}, {"counts", row}});
  j["counts"] = rows;
  return j;
}

NgramModel NgramModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "smcgen-ngram") throw Error("not an smcgen n-gram model file");
  if (j.at("version").get<int>() != 1)
    throw Error("unsupported n-gram model version " + j.at("version").dump());
  std::vector<std::string> tokens;
  for (const auto& t : j.at("vocabulary").at("tokens_hex")) tokens.push_back(from_hex(t.get<std::string>()));
  Vocabulary vocab(std::move(tokens), j.at("vocabulary").at("eos_id").get<TokenId>());
  NgramOptions opts;
  opts.order = j.at("order").get<std::size_t>();
  opts.smoothing = j.at("smoothing").get<double>();
  opts.delimiter = from_hex(j.at("delimiter").get<std::string>()).at(0);
  opts.horizon = j.at("horizon").get<std::size_t>();
  NgramModel model(std::move(vocab), opts);
  for (const auto& row : j.at("counts")) {
    auto ctx = row.at("context").get<Context>();
    auto counts = row.at("counts").get<std::vector<std::uint64_t>>();
    if (ctx.size() != opts.order || counts.size() != model.vocab_.size())
      throw Error("n-gram model file: count row has the wrong shape");
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    model.totals_[ctx] = total;
    model.counts_[ctx] = std::move(counts);
  }
  return model;
}

void NgramModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << to_json().dump(1) << '\n';
  if (!out) throw Error("failed writing " + path);
}

NgramModel NgramModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return from_json(nlohmann::json::parse(in));
}

std::vector<std::pair<std::string, bool>> split_documents(std::string_view corpus, char delimiter) {
  std::vector<std::pair<std::string, bool>> docs;
  std::size_t start = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i] == delimiter) {
      docs.emplace_back(std::string(corpus.substr(start, i - start)), true);
      start = i + 1;
    }
  }
  if (start < corpus.size()) docs.emplace_back(std::string(corpus.substr(start)), false);
  return docs;
}

NgramModel train_ngram(std::string_view corpus, const NgramOptions& opts, std::optional<Vocabulary> vocab) {
  if (corpus.empty()) throw Error("train_ngram: corpus is empty");
  if (!vocab) {
    std::string alphabet;
    for (char c : corpus)
      if (c != opts.delimiter) alphabet.push_back(c);
    if (alphabet.empty()) throw Error("train_ngram: corpus has no tokens besides delimiters");
    vocab = Vocabulary::bytes(alphabet);
  }
  NgramModel model(std::move(*vocab), opts);
  for (const auto& [doc, terminated] : split_documents(corpus, opts.delimiter)) {
    const auto tokens = model.vocabulary().tokenize(doc);
    model.add_document(tokens, terminated);
  }
  return model;
}

}  // namespace smcgen
