#include "smcgen/instances.hpp"

#include <cmath>

#include "smcgen/corpora.hpp"

namespace smcgen {

namespace {

const char* kAbBaGrammar = R"g(S ::= "ab" | "ba")g";

const char* kAStarGrammar = R"g(S ::= "a" S | "")g";

const char* kParenGrammar = R"g(S ::= "(" S ")" S | "")g";

const char* kBinaryGrammar = R"g(S ::= B B B B B B B B B B B B B B B B
B ::= "0" | "1")g";

// The early-kill reference string and the LM that mostly follows it.
const std::string kEarlyKillReference = "0110100110010110";

std::shared_ptr<const LanguageModel> early_kill_lm() {
  const auto vocab = Vocabulary::bytes("01");  // ids: 0, 1, eos
  std::vector<std::vector<double>> rows;
  for (char c : kEarlyKillReference) rows.push_back(c == '0' ? std::vector{0.65, 0.30, 0.05} : std::vector{0.30, 0.65, 0.05});
  rows.push_back({0.05, 0.05, 0.9});
  return std::make_shared<PositionalModel>(vocab, rows);
}

const char* kArithmeticGrammar = R"g(# one assignment per line
Program ::= Stmt "\n" | Stmt "\n" Program
Stmt    ::= Var "=" Expr
Expr    ::= Term | Expr "+" Term | Expr "-" Term
Term    ::= Factor | Term "*" Factor | Term "/" Factor
Factor  ::= Var | Num | "(" Expr ")"
Var     ::= "x" | "y" | "z"
Num     ::= Digit | Digit Num
Digit   ::= "0" | "1" | "2" | "3" | "4" | "5" | "6" | "7" | "8" | "9")g";

const char* kLeftRecursiveGrammar = R"g(E ::= E "+" T | T
T ::= T "*" F | F
F ::= "(" E ")" | "x")g";

const char* kEpsilonGrammar = R"g(# nullable cycles and an unproductive branch
S ::= A B C | D "x"
A ::= "a" A | ""
B ::= "" | "b" | B B
C ::= A "c" | ""
D ::= "d" D)g";

std::shared_ptr<const Grammar> grammar_from(const std::string& text) {
  return std::make_shared<const Grammar>(parse_grammar(text));
}

Instance with_grammar(Instance inst, const std::string& text, nlohmann::json specs = nlohmann::json::array()) {
  inst.grammar_text = text;
  inst.grammar = grammar_from(text);
  specs.insert(specs.begin(), nlohmann::json{{"name", "cfg"}});
  install_potentials(inst, specs);
  return inst;
}

Instance base(std::string name, std::string description, std::shared_ptr<const LanguageModel> lm) {
  Instance inst;
  inst.name = std::move(name);
  inst.description = std::move(description);
  inst.vocab = std::make_shared<const Vocabulary>(lm->vocabulary());
  inst.lm = std::move(lm);
  return inst;
}

std::shared_ptr<const LanguageModel> uniform_lm(const std::string& alphabet) {
  return std::make_shared<CategoricalModel>(CategoricalModel::uniform(Vocabulary::bytes(alphabet)));
}

}  // namespace

const std::vector<std::string>& potential_names() {
  static const std::vector<std::string> names = {"cfg", "checked_eval", "depth_limit", "prefix_set"};
  return names;
}

PotentialPtr make_potential(const nlohmann::json& entry, std::shared_ptr<const Vocabulary> vocab,
                            std::shared_ptr<const Grammar> grammar) {
  if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string())
    throw Error("name: potential entries need a string 'name'");
  const std::string name = entry["name"];
  auto allow_only = [&](std::initializer_list<const char*> keys) {
    for (const auto& [k, v] : entry.items()) {
      bool ok = k == "name";
      for (const char* key : keys) ok = ok || k == key;
      if (!ok) throw Error(k + ": unknown field for potential '" + name + "'");
    }
  };
  if (name == "cfg") {
    allow_only({});
    if (!grammar) throw Error("name: potential 'cfg' needs a grammar");
    return std::make_shared<CfgPotential>(std::move(grammar), std::move(vocab));
  }
  if (name == "checked_eval") {
    allow_only({"step_budget"});
    std::size_t budget = 10000;
    if (entry.contains("step_budget")) {
      if (!entry["step_budget"].is_number_integer() || entry["step_budget"].get<long>() <= 0)
        throw Error("step_budget: must be a positive integer");
      budget = entry["step_budget"];
    }
    return std::make_shared<CheckedEvalPotential>(std::move(vocab), budget);
  }
  if (name == "depth_limit") {
    allow_only({"max_depth"});
    if (!entry.contains("max_depth") || !entry["max_depth"].is_number_integer() || entry["max_depth"].get<long>() < 0)
      throw Error("max_depth: must be a nonnegative integer");
    return std::make_shared<DepthLimitPotential>(std::move(vocab), entry["max_depth"].get<int>());
  }
  if (name == "prefix_set") {
    allow_only({"allowed"});
    if (!entry.contains("allowed") || !entry["allowed"].is_array())
      throw Error("allowed: must be an array of strings");
    std::vector<std::string> allowed;
    for (const auto& a : entry["allowed"]) {
      if (!a.is_string()) throw Error("allowed: must be an array of strings");
      allowed.push_back(a);
    }
    return std::make_shared<PrefixSetPotential>(std::move(vocab), std::move(allowed));
  }
  std::string valid;
  for (const auto& n : potential_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw Error("name: unknown potential '" + name + "'; valid potentials: " + valid);
}

void install_potentials(Instance& inst, const nlohmann::json& specs) {
  if (!specs.is_array()) throw Error("potentials must be an array");
  inst.efficient.clear();
  inst.expensive.clear();
  for (const auto& entry : specs) {
    PotentialPtr p = make_potential(entry, inst.vocab, inst.grammar);
    (p->potential_class() == PotentialClass::Efficient ? inst.efficient : inst.expensive).push_back(std::move(p));
  }
  inst.potential_specs = specs;
}

const std::vector<std::string>& instance_names() {
  static const std::vector<std::string> names = {"ab-ba",          "a-star",     "nested-parens",
                                                 "toy-arithmetic", "early-kill", "unconstrained"};
  return names;
}

Instance make_instance(const std::string& name) {
  if (name == "ab-ba") {
    Instance inst = with_grammar(base(name, "uniform LM over {a, b, eos}; grammar {ab, ba}", uniform_lm("ab")),
                                 kAbBaGrammar);
    inst.enumerable = true;
    inst.max_tokens = 4;
    inst.analytic_z = 2.0 / 27.0;
    return inst;
  }
  if (name == "a-star") {
    Instance inst =
        with_grammar(base(name, "uniform LM over {a, b, eos}; grammar a*", uniform_lm("ab")), kAStarGrammar);
    inst.enumerable = true;
    inst.max_tokens = 20;
    inst.analytic_z = 0.5;
    return inst;
  }
  if (name == "nested-parens") {
    NgramOptions opts;
    opts.order = 2;
    opts.smoothing = 0.1;
    const std::string corpus = paren_corpus();
    auto lm = std::make_shared<NgramModel>(train_ngram(corpus, opts, merged_vocabulary("()", {"()"})));
    Instance inst = with_grammar(
        base(name, "n-gram trained on balanced parentheses; balanced-paren grammar; depth limit 2", lm),
        kParenGrammar, nlohmann::json::array({{{"name", "depth_limit"}, {"max_depth", 2}}}));
    inst.corpus = corpus;
    inst.enumerable = true;
    inst.max_tokens = 10;
    return inst;
  }
  if (name == "toy-arithmetic") {
    NgramOptions opts;
    opts.order = 3;
    opts.smoothing = 0.05;
    opts.delimiter = ';';
    const std::string corpus = arithmetic_corpus();
    auto lm = std::make_shared<NgramModel>(train_ngram(corpus, opts, Vocabulary::bytes("xyz0123456789+-*/()=\n")));
    Instance inst =
        with_grammar(base(name, "n-gram over toy programs; statement grammar; runtime-fault checker", lm),
                     kArithmeticGrammar, nlohmann::json::array({{{"name", "checked_eval"}}}));
    inst.corpus = corpus;
    inst.enumerable = false;
    inst.max_tokens = 64;
    return inst;
  }
  if (name == "early-kill") {
    std::string flipped = kEarlyKillReference;
    flipped.back() = flipped.back() == '0' ? '1' : '0';
    Instance inst = with_grammar(
        base(name,
             "16-bit strings; the LM follows a reference string with probability 0.65 per bit; the expensive "
             "prefix set allows only the reference and its last-bit flip, so most prefixes die early",
             early_kill_lm()),
        kBinaryGrammar,
        nlohmann::json::array({{{"name", "prefix_set"}, {"allowed", {kEarlyKillReference, flipped}}}}));
    inst.enumerable = true;
    inst.max_tokens = 16;
    inst.analytic_z = std::pow(0.65, 15) * 0.95 * 0.9;
    return inst;
  }
  if (name == "unconstrained") {
    auto lm = std::make_shared<CategoricalModel>(Vocabulary::bytes("ab"), std::vector<double>{0.15, 0.05, 0.8});
    Instance inst = base(name, "three-token categorical LM with no potentials", lm);
    inst.enumerable = true;
    inst.max_tokens = 12;
    return inst;
  }
  std::string valid;
  for (const auto& n : instance_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw Error("unknown instance '" + name + "'; valid instances: " + valid);
}

Instance custom_instance(std::string name, std::shared_ptr<const LanguageModel> lm, const std::string& grammar_text,
                         std::vector<PotentialPtr> expensive) {
  Instance inst = base(std::move(name), "custom", std::move(lm));
  if (!grammar_text.empty()) inst = with_grammar(std::move(inst), grammar_text);
  for (auto& p : expensive) inst.expensive.push_back(std::move(p));
  return inst;
}

const std::vector<NamedGrammar>& test_grammars() {
  static const std::vector<NamedGrammar> grammars = {
      {"ab-ba", kAbBaGrammar},           {"a-star", kAStarGrammar},
      {"nested-parens", kParenGrammar},  {"left-recursive", kLeftRecursiveGrammar},
      {"epsilon-cycles", kEpsilonGrammar}, {"arithmetic", kArithmeticGrammar},
  };
  return grammars;
}

std::string benchmark_alphabet() { return "abcdefghijklmnopqrstuvwxyz0123456789 =+-*()\n"; }

std::string benchmark_grammar_text() {
  std::string g =
      "Program ::= Stmt \"\\n\" | Stmt \"\\n\" Program\n"
      "Stmt    ::= Ident \" = \" Expr\n"
      "Expr    ::= Term | Expr \" + \" Term | Expr \" - \" Term\n"
      "Term    ::= Factor | Term \" * \" Factor\n"
      "Factor  ::= Ident | Number | \"(\" Expr \")\"\n"
      "Ident   ::= Letter | Ident Letter | Ident Digit\n"
      "Number  ::= Digit | Number Digit\n";
  g += "Letter  ::= \"a\"\n";
  for (char c = 'b'; c <= 'z'; ++c) g += "        | \"" + std::string(1, c) + "\"\n";
  g += "Digit   ::= \"0\"\n";
  for (char c = '1'; c <= '9'; ++c) g += "        | \"" + std::string(1, c) + "\"\n";
  return g;
}

const std::string& paren_corpus() {
  static const std::string corpus = embedded::kParenCorpus;
  return corpus;
}

const std::string& arithmetic_corpus() {
  static const std::string corpus = embedded::kArithmeticCorpus;
  return corpus;
}

}  // namespace smcgen
