#pragma once

// Named synthetic instances bundled with the library, plus the grammars used
// by the parser tests and the benchmark.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "smcgen/grammar.hpp"
#include "smcgen/lm.hpp"
#include "smcgen/potential.hpp"

namespace smcgen {

struct Instance {
  std::string name;
  std::string description;
  std::shared_ptr<const Vocabulary> vocab;
  std::shared_ptr<const LanguageModel> lm;
  std::string grammar_text;  // empty when the instance has no grammar
  std::shared_ptr<const Grammar> grammar;
  /// Registry entries the potentials below were built from.
  nlohmann::json potential_specs = nlohmann::json::array();
  std::vector<PotentialPtr> efficient;
  std::vector<PotentialPtr> expensive;
  bool enumerable = false;
  /// Longest output (non-EOS tokens) the instance considers; runs use
  /// max_steps = max_tokens + 1 so their target matches the enumerator's.
  std::size_t max_tokens = 32;
  std::optional<double> analytic_z;
  std::string corpus;  // training corpus for n-gram instances
};

/// Builds one potential from a registry entry such as
///   {"name": "cfg"}, {"name": "checked_eval", "step_budget": 10000},
///   {"name": "depth_limit", "max_depth": 2}, {"name": "prefix_set", "allowed": [...]}.
/// `grammar` is required for "cfg". Throws Error naming the bad field.
PotentialPtr make_potential(const nlohmann::json& entry, std::shared_ptr<const Vocabulary> vocab,
                            std::shared_ptr<const Grammar> grammar);

/// Names accepted by make_potential.
const std::vector<std::string>& potential_names();

/// Rebuilds inst.efficient / inst.expensive from `specs` against inst.vocab.
void install_potentials(Instance& inst, const nlohmann::json& specs);

/// ab-ba, a-star, nested-parens, toy-arithmetic, early-kill, unconstrained.
const std::vector<std::string>& instance_names();

/// Throws Error listing the valid names for an unknown instance.
Instance make_instance(const std::string& name);

/// Builds an instance around a caller-supplied grammar and LM.
Instance custom_instance(std::string name, std::shared_ptr<const LanguageModel> lm, const std::string& grammar_text,
                         std::vector<PotentialPtr> expensive = {});

struct NamedGrammar {
  std::string name;
  std::string text;
};

/// Grammars exercised by the parser oracle tests (ε-rules, left recursion,
/// nested parentheses, ...).
const std::vector<NamedGrammar>& test_grammars();

/// The statement grammar with at least 50 productions used by the benchmark.
std::string benchmark_grammar_text();
/// Byte alphabet of the benchmark grammar.
std::string benchmark_alphabet();

/// Corpora shipped in the library so tests and demos run offline.
const std::string& paren_corpus();
const std::string& arithmetic_corpus();

}  // namespace smcgen
