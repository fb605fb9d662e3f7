#include <doctest.h>

#include "oracles.hpp"
#include "smcgen/instances.hpp"
#include "smcgen/toy_eval.hpp"

using namespace smcgen;

TEST_SUITE("grammar") {
  TEST_CASE("the span oracle agrees with hand-checked strings") {
    const auto g = parse_grammar(R"g(S ::= "(" S ")" S | "")g");
    const oracle::SpanRecognizer ref(g);
    CHECK(ref("") == std::pair{true, true});
    CHECK(ref("(()") == std::pair{true, false});
    CHECK(ref("(())()") == std::pair{true, true});
    CHECK(ref(")") == std::pair{false, false});
    CHECK(ref("())") == std::pair{false, false});
  }

  TEST_CASE("recognizer matches the exhaustive oracle on every test grammar") {
    for (const auto& ng : test_grammars()) {
      const std::size_t len = ng.name == "arithmetic" ? 5 : 8;
      CAPTURE(ng.name);
      const auto g = parse_grammar(ng.text);
      const auto rep = oracle::exhaustive_parser_check(g, len);
      CHECK_MESSAGE(rep.mismatches == 0, rep.first_mismatch);
      CHECK(rep.strings_checked > 0);
    }
  }

  TEST_CASE("unproductive nonterminals contribute nothing") {
    const auto g = parse_grammar(R"g(S ::= "a" | D "x"
D ::= "d" D)g");
    const auto st = RecognizerState::initial(g);
    CHECK(st.allows('a'));
    CHECK_FALSE(st.allows('d'));
    CHECK_FALSE(g.productive(1));
  }

  TEST_CASE("states are persistent values") {
    const auto g = parse_grammar(R"g(S ::= "ab" | "ac")g");
    const auto a = RecognizerState::initial(g).advance('a');
    const auto ab = a.advance('b');
    const auto ac = a.advance('c');
    CHECK(ab.is_complete_member());
    CHECK(ac.is_complete_member());
    CHECK_FALSE(a.is_complete_member());
    CHECK(a.consumed() == "a");
    CHECK_FALSE(ab.advance('x').is_valid_prefix());
    CHECK_FALSE(ab.advance('x').advance('b').is_valid_prefix());
  }

  TEST_CASE("EOS is allowed exactly on complete members") {
    const auto g = parse_grammar(R"g(S ::= "a" S | "")g");
    auto st = RecognizerState::initial(g);
    for (int i = 0; i < 4; ++i) {
      CHECK(st.eos_allowed());
      st = st.advance('a');
    }
    CHECK_FALSE(st.advance('b').eos_allowed());
  }

  TEST_CASE("grammar syntax errors report line and column") {
    try {
      parse_grammar("S ::= \"a\" T\n");
      FAIL("expected GrammarError");
    } catch (const GrammarError& e) {
      CHECK(e.line() == 1);
      CHECK(std::string(e.what()).find("undefined nonterminal 'T'") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_grammar(""), GrammarError);
    CHECK_THROWS_AS(parse_grammar("S ::= \"a"), GrammarError);
  }

  TEST_CASE("to_bnf round-trips") {
    for (const auto& ng : test_grammars()) {
      CAPTURE(ng.name);
      const auto g = parse_grammar(ng.text);
      const auto back = parse_grammar(g.to_bnf());
      CHECK(back.to_bnf() == g.to_bnf());
      CHECK(back.rules().size() == g.rules().size());
    }
  }

  TEST_CASE("the benchmark grammar has at least 50 productions") {
    const auto g = parse_grammar(benchmark_grammar_text());
    CHECK(g.rules().size() >= 50);
    CHECK(recognize(g, "ab = 3 * (x1 + 7)\n").complete_member);
    CHECK_FALSE(recognize(g, "ab = = 3\n").valid_prefix);
  }
}

TEST_SUITE("grammar") {
  TEST_CASE("toy evaluator computes and faults") {
    const ToyEvaluator ev;
    const auto ok = ev.run("x=7\ny=x*(3-1)\nz=y/4\n");
    CHECK(ok.ok);
    CHECK(ok.variables.at("y") == 14);
    CHECK(ok.variables.at("z") == 3);
    CHECK_FALSE(ev.run("x=1/0\n").ok);
    CHECK_FALSE(ev.run("x=y\n").ok);
    CHECK(ev.run("x=0-7\ny=x/2\n").variables.at("y") == -3);
    CHECK_THROWS_AS(ToyEvaluator(3).run("x=1+2+3+4\n"), BudgetExhausted);
  }
}
