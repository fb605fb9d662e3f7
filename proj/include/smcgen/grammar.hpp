#pragma once

// Byte-terminal context-free grammars and an incremental Earley recognizer.
//
// Recognizer states are persistent values: advance() returns a new state that
// shares every earlier chart column with its parent, so cloned particles can
// hold diverging parses without copying charts.

#include <bitset>
#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "smcgen/common.hpp"

namespace smcgen {

class GrammarError : public Error {
 public:
  GrammarError(std::size_t line, std::size_t column, const std::string& message);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Symbols below 256 are byte terminals; nonterminal `n` is `256 + n`.
using Symbol = std::int32_t;
inline constexpr Symbol kFirstNonterminal = 256;

inline constexpr bool is_terminal(Symbol s) { return s >= 0 && s < kFirstNonterminal; }
inline constexpr Symbol nonterminal_symbol(std::int32_t id) { return kFirstNonterminal + id; }

struct Rule {
  std::int32_t lhs = 0;
  std::vector<Symbol> rhs;
};

namespace detail {
struct CompiledGrammar;
}

class Grammar {
 public:
  Grammar(std::vector<std::string> nonterminals, std::int32_t start, std::vector<Rule> rules);

  const std::vector<std::string>& nonterminals() const { return names_; }
  std::int32_t start() const { return start_; }
  const std::vector<Rule>& rules() const { return rules_; }

  bool nullable(std::int32_t nonterminal) const;
  bool productive(std::int32_t nonterminal) const;
  bool language_empty() const { return !productive(start_); }

  /// Bytes appearing in productive rules.
  std::set<unsigned char> terminal_alphabet() const;

  /// Round-trippable BNF text.
  std::string to_bnf() const;

  const detail::CompiledGrammar& compiled() const { return *compiled_; }
  std::shared_ptr<const detail::CompiledGrammar> compiled_ptr() const { return compiled_; }

 private:
  std::vector<std::string> names_;
  std::int32_t start_;
  std::vector<Rule> rules_;
  std::vector<char> productive_;
  std::shared_ptr<const detail::CompiledGrammar> compiled_;
};

/// Parses line-oriented BNF:
///   Name ::= "quoted bytes" Other | ""      # comment
///        | "continuation alternative"
/// Quoted strings are expanded into their bytes; `""` denotes ε. The first
/// rule's left-hand side is the start symbol.
Grammar parse_grammar(std::string_view text);

namespace detail {
struct Column;
}

class RecognizerState {
 public:
  /// State for the empty byte sequence.
  static RecognizerState initial(const Grammar& grammar);

  /// State for consumed()·b. Never mutates *this; dead states absorb.
  RecognizerState advance(unsigned char b) const;
  RecognizerState advance(std::string_view bytes) const;

  /// consumed() is a prefix of some string of the language.
  bool is_valid_prefix() const { return !columns_.empty(); }
  /// consumed() is itself in the language.
  bool is_complete_member() const;

  /// Exactly { b : advance(b).is_valid_prefix() }.
  std::bitset<256> allowed_next_bytes() const;
  bool allows(unsigned char b) const;
  /// EOS is allowed iff consumed() is a complete member.
  bool eos_allowed() const { return is_complete_member(); }

  const std::string& consumed() const { return consumed_; }

 private:
  RecognizerState() = default;

  std::shared_ptr<const detail::CompiledGrammar> grammar_;
  std::vector<std::shared_ptr<const detail::Column>> columns_;
  std::string consumed_;
};

inline RecognizerState init_recognizer(const Grammar& g) { return RecognizerState::initial(g); }

struct Recognition {
  bool valid_prefix = false;
  bool complete_member = false;
};

/// Non-incremental recognition of a whole byte string in a single chart.
Recognition recognize(const Grammar& grammar, std::string_view bytes);

}  // namespace smcgen
