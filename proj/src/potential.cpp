#include "smcgen/potential.hpp"

#include <algorithm>
#include <cmath>

namespace smcgen {

bool Stride::closes_unit(const Vocabulary& vocab, TokenId token) const {
  if (kind == Kind::EveryToken || vocab.is_eos(token)) return true;
  return vocab.token_bytes(token).find(static_cast<char>(boundary)) != std::string::npos;
}

namespace {

struct SequenceState final : PotentialState {
  std::vector<TokenId> tokens;
};

const SequenceState& as_sequence(const PotentialState& s) {
  auto* p = dynamic_cast<const SequenceState*>(&s);
  if (!p) throw Error("potential state of the wrong kind");
  return *p;
}

struct CfgState final : PotentialState {
  explicit CfgState(RecognizerState r) : rec(std::move(r)) {}
  RecognizerState rec;
};

}  // namespace

Potential::Potential(std::shared_ptr<const Vocabulary> vocab) : vocab_(std::move(vocab)) {
  if (!vocab_) throw Error("potential requires a vocabulary");
}

PotentialStatePtr Potential::initial_state() const { return std::make_shared<SequenceState>(); }

PotentialStatePtr Potential::advance(const PotentialStatePtr& state, TokenId token) const {
  auto next = std::make_shared<SequenceState>(as_sequence(*state));
  if (!vocab_->is_eos(token)) next->tokens.push_back(token);
  return next;
}

double Potential::state_log_score(const PotentialState& state, bool complete) const {
  return log_score(as_sequence(state).tokens, complete);
}

std::vector<double> Potential::next_token_log_scores(const PotentialStatePtr& state) const {
  const std::size_t n = vocab_->size();
  std::vector<double> out(n, kNegInf);
  const double base = state_log_score(*state, false);
  if (base == kNegInf) return out;
  std::vector<TokenId> seq = as_sequence(*state).tokens;
  for (std::size_t t = 0; t < n; ++t) {
    const auto id = static_cast<TokenId>(t);
    if (vocab_->is_eos(id)) {
      out[t] = log_score(seq, true) - base;
      continue;
    }
    seq.push_back(id);
    const double s = log_score(seq, false);
    seq.pop_back();
    out[t] = s == kNegInf ? kNegInf : s - base;
  }
  return out;
}

double guarded_score(const Potential& p, const PotentialState& state, bool complete, FaultPolicy policy,
                     std::vector<std::string>* diagnostics) {
  try {
    return p.state_log_score(state, complete);
  } catch (const PotentialFault& e) {
    if (policy == FaultPolicy::Raise) throw;
    if (diagnostics) diagnostics->push_back(p.name() + ": " + e.what());
    return kNegInf;
  }
}

PotentialProduct::PotentialProduct(std::shared_ptr<const Vocabulary> vocab, std::vector<PotentialPtr> members,
                                   FaultPolicy policy)
    : vocab_(std::move(vocab)), members_(std::move(members)), policy_(policy) {
  for (const auto& m : members_)
    if (!m) throw Error("null potential in product");
}

double PotentialProduct::log_score(std::span<const TokenId> tokens, bool complete,
                                   std::vector<std::string>* diagnostics) const {
  double total = 0.0;
  for (const auto& m : members_) {
    double s;
    try {
      s = m->log_score(tokens, complete);
    } catch (const PotentialFault& e) {
      if (policy_ == FaultPolicy::Raise) throw;
      if (diagnostics) diagnostics->push_back(m->name() + ": " + e.what());
      return kNegInf;
    }
    if (s == kNegInf) return kNegInf;
    total += s;
  }
  return total;
}

double PotentialProduct::conditional_log_score(TokenId next, std::span<const TokenId> context,
                                               std::vector<std::string>* diagnostics) const {
  const double base = log_score(context, false, diagnostics);
  if (base == kNegInf) return kNegInf;
  double ext;
  if (vocab_ && vocab_->is_eos(next)) {
    ext = log_score(context, true, diagnostics);
  } else {
    std::vector<TokenId> seq(context.begin(), context.end());
    seq.push_back(next);
    ext = log_score(seq, false, diagnostics);
  }
  return ext == kNegInf ? kNegInf : ext - base;
}

// ---------------------------------------------------------------------------

CfgPotential::CfgPotential(std::shared_ptr<const Grammar> grammar, std::shared_ptr<const Vocabulary> vocab)
    : Potential(std::move(vocab)), grammar_(std::move(grammar)), trie_(*vocab_) {
  if (!grammar_) throw Error("cfg potential requires a grammar");
}

double CfgPotential::log_score(std::span<const TokenId> tokens, bool complete) const {
  const Recognition r = recognize(*grammar_, vocab_->decode(tokens));
  return (complete ? r.complete_member : r.valid_prefix) ? 0.0 : kNegInf;
}

PotentialStatePtr CfgPotential::initial_state() const {
  return std::make_shared<CfgState>(RecognizerState::initial(*grammar_));
}

const RecognizerState& CfgPotential::recognizer(const PotentialState& state) {
  auto* p = dynamic_cast<const CfgState*>(&state);
  if (!p) throw Error("potential state is not a grammar state");
  return p->rec;
}

PotentialStatePtr CfgPotential::advance(const PotentialStatePtr& state, TokenId token) const {
  if (vocab_->is_eos(token)) return state;
  return std::make_shared<CfgState>(recognizer(*state).advance(vocab_->token_bytes(token)));
}

double CfgPotential::state_log_score(const PotentialState& state, bool complete) const {
  const RecognizerState& r = recognizer(state);
  return (complete ? r.is_complete_member() : r.is_valid_prefix()) ? 0.0 : kNegInf;
}

std::vector<double> CfgPotential::next_token_log_scores(const PotentialStatePtr& state) const {
  std::vector<double> out(vocab_->size(), kNegInf);
  const RecognizerState& root = recognizer(*state);
  if (!root.is_valid_prefix()) return out;
  if (root.eos_allowed()) out[static_cast<std::size_t>(vocab_->eos())] = 0.0;

  // Depth-first walk of the token trie, advancing the parser only along
  // bytes it accepts.
  struct Frame {
    TokenTrie::NodeId node;
    RecognizerState rec;
  };
  std::vector<Frame> stack;
  stack.push_back({TokenTrie::kRoot, root});
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    const auto& node = trie_.node(f.node);
    const auto allowed = f.rec.allowed_next_bytes();
    for (std::uint32_t i = 0; i < node.child_count; ++i) {
      const TokenTrie::NodeId c = node.first_child + i;
      const auto& child = trie_.node(c);
      if (!allowed.test(child.byte)) continue;
      RecognizerState next = f.rec.advance(child.byte);
      if (child.token != kNoToken) out[static_cast<std::size_t>(child.token)] = 0.0;
      if (child.child_count > 0) stack.push_back({c, std::move(next)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

CheckedEvalPotential::CheckedEvalPotential(std::shared_ptr<const Vocabulary> vocab, std::size_t step_budget)
    : Potential(std::move(vocab)), evaluator_(step_budget) {}

std::size_t CheckedEvalPotential::evaluations() const {
  std::lock_guard<std::mutex> lock(mu_);
  return evaluations_;
}

double CheckedEvalPotential::log_score(std::span<const TokenId> tokens, bool complete) const {
  std::string text = vocab_->decode(tokens);
  if (!complete) {
    const auto cut = text.rfind('\n');
    text.resize(cut == std::string::npos ? 0 : cut + 1);
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = memo_.find(text);
    if (it != memo_.end()) {
      if (std::isnan(it->second)) throw PotentialFault("evaluation budget exhausted");
      return it->second;
    }
  }
  double score;
  bool fault = false;
  try {
    score = evaluator_.run(text).ok ? 0.0 : kNegInf;
  } catch (const BudgetExhausted&) {
    score = std::nan("");
    fault = true;
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    ++evaluations_;
    memo_.emplace(text, score);
  }
  if (fault) throw PotentialFault("evaluation budget exhausted");
  return score;
}

// ---------------------------------------------------------------------------

PrefixSetPotential::PrefixSetPotential(std::shared_ptr<const Vocabulary> vocab, std::vector<std::string> allowed)
    : Potential(std::move(vocab)), allowed_(std::move(allowed)) {}

double PrefixSetPotential::log_score(std::span<const TokenId> tokens, bool complete) const {
  const std::string text = vocab_->decode(tokens);
  for (const auto& a : allowed_) {
    if (complete ? a == text : a.starts_with(text)) return 0.0;
  }
  return kNegInf;
}

DepthLimitPotential::DepthLimitPotential(std::shared_ptr<const Vocabulary> vocab, int max_depth, char open,
                                         char close)
    : Potential(std::move(vocab)), max_depth_(max_depth), open_(open), close_(close) {
  if (max_depth < 0) throw Error("depth limit must be nonnegative");
}

double DepthLimitPotential::log_score(std::span<const TokenId> tokens, bool) const {
  int depth = 0;
  for (char c : vocab_->decode(tokens)) {
    if (c == open_) {
      if (++depth > max_depth_) return kNegInf;
    } else if (c == close_) {
      depth = std::max(0, depth - 1);
    }
  }
  return 0.0;
}

FunctionPotential::FunctionPotential(std::shared_ptr<const Vocabulary> vocab, std::string name, PotentialClass cls,
                                     Fn fn, double log_upper_bound, Stride stride)
    : Potential(std::move(vocab)),
      name_(std::move(name)),
      cls_(cls),
      fn_(std::move(fn)),
      bound_(log_upper_bound),
      stride_(stride) {
  if (!fn_) throw Error("function potential requires a callable");
}

double FunctionPotential::log_score(std::span<const TokenId> tokens, bool complete) const {
  const double s = fn_(*vocab_, tokens, complete);
  if (std::isnan(s) || s > bound_ + 1e-12) throw PotentialFault(name_ + ": score exceeds declared bound");
  return s;
}

}  // namespace smcgen
