#include <doctest.h>

#include <cmath>

#include "smcgen/instances.hpp"
#include "smcgen/potential.hpp"

using namespace smcgen;

namespace {

std::shared_ptr<const Vocabulary> vocab_ptr(Vocabulary v) { return std::make_shared<const Vocabulary>(std::move(v)); }

std::vector<TokenId> toks(const Vocabulary& v, std::string_view s) { return v.tokenize(s); }

}  // namespace

TEST_SUITE("potential") {
  TEST_CASE("cfg next-token scores agree with whole-string recognition") {
    const auto vocab = vocab_ptr(merged_vocabulary("()", {"()", "((", "))"}));
    auto g = std::make_shared<const Grammar>(parse_grammar(R"g(S ::= "(" S ")" S | "")g"));
    const CfgPotential cfg(g, vocab);
    for (const std::string ctx : {"", "(", "((", "()", "(()"}) {
      CAPTURE(ctx);
      auto state = cfg.initial_state();
      for (TokenId t : toks(*vocab, ctx)) state = cfg.advance(state, t);
      const auto scores = cfg.next_token_log_scores(state);
      for (std::size_t t = 0; t < vocab->size(); ++t) {
        const auto id = static_cast<TokenId>(t);
        const auto r = recognize(*g, ctx + vocab->token_bytes(id));
        const bool ok = vocab->is_eos(id) ? r.complete_member : r.valid_prefix;
        CHECK((scores[t] == 0.0) == ok);
        CHECK((scores[t] == kNegInf) == !ok);
      }
      CHECK(cfg.state_log_score(*state, false) == cfg.log_score(toks(*vocab, ctx), false));
    }
  }

  TEST_CASE("a dead cfg context scores -inf everywhere") {
    const auto vocab = vocab_ptr(Vocabulary::bytes("()"));
    const CfgPotential cfg(std::make_shared<const Grammar>(parse_grammar(R"g(S ::= "(" S ")" S | "")g")), vocab);
    auto state = cfg.advance(cfg.initial_state(), 1);  // ")"
    for (double s : cfg.next_token_log_scores(state)) CHECK(s == kNegInf);
  }

  TEST_CASE("checked eval scores complete lines only") {
    const auto vocab = vocab_ptr(Vocabulary::bytes("xyz0123456789+-*/()=\n"));
    const CheckedEvalPotential p(vocab);
    CHECK(p.log_score(toks(*vocab, "x=1\ny=x/0"), false) == 0.0);  // unfinished line is ignored
    CHECK(p.log_score(toks(*vocab, "x=1\ny=x/0\n"), false) == kNegInf);
    CHECK(p.log_score(toks(*vocab, "x=1\ny=x/0"), true) == kNegInf);
    CHECK(p.log_score(toks(*vocab, "x=4\ny=x/2\n"), true) == 0.0);
    const auto before = p.evaluations();
    p.log_score(toks(*vocab, "x=4\ny=x/2\n"), true);
    CHECK(p.evaluations() == before);  // memoized
    CHECK(p.stride().closes_unit(*vocab, *vocab->find("\n")));
    CHECK_FALSE(p.stride().closes_unit(*vocab, *vocab->find("x")));
  }

  TEST_CASE("checked eval budget exhaustion is a fault, not a zero") {
    const auto vocab = vocab_ptr(Vocabulary::bytes("xyz0123456789+-*/()=\n"));
    const auto p = std::make_shared<CheckedEvalPotential>(vocab, 2);
    const auto t = toks(*vocab, "x=1+2+3+4\n");
    CHECK_THROWS_AS(p->log_score(t, true), PotentialFault);
    const PotentialProduct zero(vocab, {p}, FaultPolicy::ZeroScore);
    std::vector<std::string> diag;
    CHECK(zero.log_score(t, true, &diag) == kNegInf);
    CHECK(diag.size() == 1);
    const PotentialProduct raise(vocab, {p}, FaultPolicy::Raise);
    CHECK_THROWS_AS(raise.log_score(t, true), PotentialFault);
  }

  TEST_CASE("prefix set and depth limit") {
    const auto vocab = vocab_ptr(Vocabulary::bytes("01()"));
    const PrefixSetPotential ps(vocab, {"0110", "0111"});
    CHECK(ps.log_score(toks(*vocab, "011"), false) == 0.0);
    CHECK(ps.log_score(toks(*vocab, "011"), true) == kNegInf);
    CHECK(ps.log_score(toks(*vocab, "0111"), true) == 0.0);
    CHECK(ps.log_score(toks(*vocab, "00"), false) == kNegInf);
    const DepthLimitPotential d(vocab, 2);
    CHECK(d.log_score(toks(*vocab, "(()())"), true) == 0.0);
    CHECK(d.log_score(toks(*vocab, "((("), false) == kNegInf);
  }

  TEST_CASE("product conditional scores are ratios and short-circuit on zero") {
    const auto vocab = vocab_ptr(Vocabulary::bytes("ab"));
    auto half_per_b = std::make_shared<FunctionPotential>(
        vocab, "half_per_b", PotentialClass::Expensive,
        [](const Vocabulary& v, std::span<const TokenId> t, bool) {
          double s = 0.0;
          for (TokenId x : t) s += v.token_bytes(x) == "b" ? std::log(0.5) : 0.0;
          return s;
        });
    auto no_aa = std::make_shared<FunctionPotential>(vocab, "no_aa", PotentialClass::Expensive,
                                                     [](const Vocabulary& v, std::span<const TokenId> t, bool) {
                                                       return v.decode(t).find("aa") == std::string::npos ? 0.0
                                                                                                           : kNegInf;
                                                     });
    const PotentialProduct pp(vocab, {half_per_b, no_aa});
    const std::vector<TokenId> ctx = {0, 1};
    CHECK(pp.conditional_log_score(1, ctx) == doctest::Approx(std::log(0.5)));
    CHECK(pp.conditional_log_score(0, ctx) == 0.0);
    const std::vector<TokenId> dead = {0, 0};
    CHECK(pp.conditional_log_score(1, dead) == kNegInf);
    const PotentialProduct empty(vocab, {});
    CHECK(empty.log_score(ctx, true) == 0.0);
  }

  TEST_CASE("scores above the declared bound are faults") {
    const auto vocab = vocab_ptr(Vocabulary::bytes("ab"));
    const FunctionPotential bad(vocab, "bad", PotentialClass::Expensive,
                                [](const Vocabulary&, std::span<const TokenId>, bool) { return 1.0; });
    CHECK_THROWS_AS(bad.log_score({}, false), PotentialFault);
  }

  TEST_CASE("registry builds potentials by name and names bad fields") {
    const auto vocab = vocab_ptr(Vocabulary::bytes("()"));
    auto g = std::make_shared<const Grammar>(parse_grammar(R"g(S ::= "(" S ")" S | "")g"));
    CHECK(make_potential({{"name", "depth_limit"}, {"max_depth", 3}}, vocab, g)->name() == "depth_limit");
    CHECK(make_potential({{"name", "cfg"}}, vocab, g)->potential_class() == PotentialClass::Efficient);
    CHECK_THROWS_WITH_AS(make_potential({{"name", "depth_limit"}}, vocab, g), doctest::Contains("max_depth"), Error);
    CHECK_THROWS_WITH_AS(make_potential({{"name", "nope"}}, vocab, g), doctest::Contains("prefix_set"), Error);
    CHECK_THROWS_WITH_AS(make_potential({{"name", "cfg"}, {"extra", 1}}, vocab, g), doctest::Contains("extra"),
                         Error);
  }
}
