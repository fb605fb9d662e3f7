#include "smcgen/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <unordered_set>

namespace smcgen {

GrammarError::GrammarError(std::size_t line, std::size_t column, const std::string& message)
    : Error("grammar:" + std::to_string(line) + ":" + std::to_string(column) + ": " + message),
      line_(line),
      column_(column) {}

namespace detail {

// Trimmed grammar with an augmented start rule at index 0 (S' -> S).
struct CompiledGrammar {
  std::vector<std::int32_t> lhs;
  std::vector<std::vector<Symbol>> rhs;
  std::vector<std::vector<std::uint32_t>> rules_by_lhs;  // indexed by nonterminal id
  std::vector<char> nullable;                            // indexed by nonterminal id
  bool empty_language = false;
};

struct Item {
  std::uint32_t rule;
  std::uint32_t dot;
  std::uint32_t origin;
};

struct Column {
  std::vector<Item> items;
  // (nonterminal, item index) for items whose next symbol is that nonterminal.
  std::vector<std::pair<std::int32_t, std::uint32_t>> waiting;
  // (byte, item index) for items whose next symbol is that byte.
  std::vector<std::pair<std::uint8_t, std::uint32_t>> scannable;
  std::bitset<256> next_bytes;
  bool accepts = false;
};

namespace {

std::uint64_t item_key(const Item& it) {
  return (static_cast<std::uint64_t>(it.rule) << 42) ^ (static_cast<std::uint64_t>(it.dot) << 32) ^
         it.origin;
}

}  // namespace

// Builds column `k` from scanned seed items; earlier columns are read-only.
std::shared_ptr<const Column> build_column(const CompiledGrammar& g, std::vector<Item> seeds,
                                           std::span<const std::shared_ptr<const Column>> earlier) {
  const auto k = static_cast<std::uint32_t>(earlier.size());
  auto col = std::make_shared<Column>();
  std::unordered_set<std::uint64_t> seen;
  std::vector<char> predicted(g.rules_by_lhs.size(), 0);
  auto add = [&](const Item& it) {
    if (seen.insert(item_key(it)).second) col->items.push_back(it);
  };
  for (const auto& s : seeds) add(s);

  for (std::size_t i = 0; i < col->items.size(); ++i) {
    const Item it = col->items[i];
    const auto& rhs = g.rhs[it.rule];
    if (it.dot < rhs.size()) {
      const Symbol sym = rhs[it.dot];
      if (is_terminal(sym)) continue;
      const auto nt = static_cast<std::size_t>(sym - kFirstNonterminal);
      if (!predicted[nt]) {
        predicted[nt] = 1;
        for (auto r : g.rules_by_lhs[nt]) add(Item{r, 0, k});
      }
      // Nullable symbols are stepped over at prediction time, which also
      // covers completions whose origin is this column.
      if (g.nullable[nt]) add(Item{it.rule, it.dot + 1, it.origin});
      continue;
    }
    if (it.origin == k) continue;  // handled by the nullable step above
    const Column& from = *earlier[it.origin];
    const std::int32_t lhs = g.lhs[it.rule];
    auto range = std::equal_range(from.waiting.begin(), from.waiting.end(), std::make_pair(lhs, 0u),
                                  [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto w = range.first; w != range.second; ++w) {
      const Item& parent = from.items[w->second];
      add(Item{parent.rule, parent.dot + 1, parent.origin});
    }
  }

  for (std::uint32_t i = 0; i < col->items.size(); ++i) {
    const Item& it = col->items[i];
    const auto& rhs = g.rhs[it.rule];
    if (it.dot < rhs.size()) {
      const Symbol sym = rhs[it.dot];
      if (is_terminal(sym)) {
        col->scannable.emplace_back(static_cast<std::uint8_t>(sym), i);
        col->next_bytes.set(static_cast<std::size_t>(sym));
      } else {
        col->waiting.emplace_back(sym - kFirstNonterminal, i);
      }
    } else if (it.rule == 0 && it.origin == 0) {
      col->accepts = true;
    }
  }
  std::stable_sort(col->waiting.begin(), col->waiting.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::stable_sort(col->scannable.begin(), col->scannable.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  return col;
}

std::vector<Item> scan(const CompiledGrammar& g, const Column& col, unsigned char b) {
  (void)g;
  std::vector<Item> out;
  auto range = std::equal_range(col.scannable.begin(), col.scannable.end(),
                                std::make_pair(static_cast<std::uint8_t>(b), 0u),
                                [](const auto& x, const auto& y) { return x.first < y.first; });
  for (auto s = range.first; s != range.second; ++s) {
    const Item& it = col.items[s->second];
    out.push_back(Item{it.rule, it.dot + 1, it.origin});
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Grammar

Grammar::Grammar(std::vector<std::string> nonterminals, std::int32_t start, std::vector<Rule> rules)
    : names_(std::move(nonterminals)), start_(start), rules_(std::move(rules)) {
  const auto n = static_cast<std::int32_t>(names_.size());
  if (start_ < 0 || start_ >= n) throw Error("grammar: start symbol is not a declared nonterminal");
  bool start_has_rule = false;
  for (const auto& r : rules_) {
    if (r.lhs < 0 || r.lhs >= n) throw Error("grammar: rule lhs is not a declared nonterminal");
    if (r.lhs == start_) start_has_rule = true;
    if (r.rhs.size() >= (1u << 10)) throw Error("grammar: rule right-hand side too long");
    for (Symbol s : r.rhs) {
      if (s < 0 || (!is_terminal(s) && s - kFirstNonterminal >= n))
        throw Error("grammar: rule references an undeclared symbol");
    }
  }
  if (!start_has_rule) throw Error("grammar: start symbol has no rules");
  if (rules_.size() >= (1u << 21)) throw Error("grammar: too many rules");

  auto g = std::make_shared<detail::CompiledGrammar>();
  const auto un = static_cast<std::size_t>(n);

  // Productive nonterminals: least fixpoint.
  std::vector<char> productive(un, 0);
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& r : rules_) {
      if (productive[static_cast<std::size_t>(r.lhs)]) continue;
      const bool ok = std::all_of(r.rhs.begin(), r.rhs.end(), [&](Symbol s) {
        return is_terminal(s) || productive[static_cast<std::size_t>(s - kFirstNonterminal)];
      });
      if (ok) {
        productive[static_cast<std::size_t>(r.lhs)] = 1;
        changed = true;
      }
    }
  }
  std::vector<char> nullable(un, 0);
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& r : rules_) {
      if (nullable[static_cast<std::size_t>(r.lhs)]) continue;
      const bool ok = std::all_of(r.rhs.begin(), r.rhs.end(), [&](Symbol s) {
        return !is_terminal(s) && nullable[static_cast<std::size_t>(s - kFirstNonterminal)];
      });
      if (ok) {
        nullable[static_cast<std::size_t>(r.lhs)] = 1;
        changed = true;
      }
    }
  }

  // Augmented rule S' -> S gets index 0; its lhs id is n (one past the user's).
  g->lhs.push_back(n);
  g->rhs.push_back({nonterminal_symbol(start_)});
  g->rules_by_lhs.assign(un + 1, {});
  g->nullable = nullable;
  g->nullable.push_back(nullable[static_cast<std::size_t>(start_)]);
  for (const auto& r : rules_) {
    const bool keep = std::all_of(r.rhs.begin(), r.rhs.end(), [&](Symbol s) {
      return is_terminal(s) || productive[static_cast<std::size_t>(s - kFirstNonterminal)];
    });
    if (!keep) continue;
    const auto idx = static_cast<std::uint32_t>(g->lhs.size());
    g->lhs.push_back(r.lhs);
    g->rhs.push_back(r.rhs);
    g->rules_by_lhs[static_cast<std::size_t>(r.lhs)].push_back(idx);
  }
  g->rules_by_lhs[un].push_back(0);
  g->empty_language = !productive[static_cast<std::size_t>(start_)];
  productive_ = std::move(productive);
  compiled_ = std::move(g);
}

bool Grammar::nullable(std::int32_t nonterminal) const {
  return compiled_->nullable.at(static_cast<std::size_t>(nonterminal)) != 0;
}

bool Grammar::productive(std::int32_t nonterminal) const {
  return productive_.at(static_cast<std::size_t>(nonterminal)) != 0;
}

std::set<unsigned char> Grammar::terminal_alphabet() const {
  std::set<unsigned char> out;
  const auto& g = *compiled_;
  for (const auto& rhs : g.rhs)
    for (Symbol s : rhs)
      if (is_terminal(s)) out.insert(static_cast<unsigned char>(s));
  return out;
}

namespace {

std::string quote_byte_run(const std::string& run) {
  std::string out = "\"";
  for (unsigned char c : run) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      default:
        if (c < 0x20 || c >= 0x7f) {
          static constexpr char kHex[] = "0123456789abcdef";
          out += "\\x";
          out.push_back(kHex[c >> 4]);
          out.push_back(kHex[c & 0xf]);
        } else {
          out.push_back(static_cast<char>(c));
        }
    }
  }
  return out + "\"";
}

}  // namespace

std::string Grammar::to_bnf() const {
  std::ostringstream out;
  std::vector<std::int32_t> order{start_};
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(names_.size()); ++i)
    if (i != start_) order.push_back(i);
  for (auto nt : order) {
    std::vector<std::string> alts;
    for (const auto& r : rules_) {
      if (r.lhs != nt) continue;
      std::string alt;
      std::string run;
      auto flush = [&] {
        if (run.empty()) return;
        if (!alt.empty()) alt += ' ';
        alt += quote_byte_run(run);
        run.clear();
      };
      for (Symbol s : r.rhs) {
        if (is_terminal(s)) {
          run.push_back(static_cast<char>(s));
        } else {
          flush();
          if (!alt.empty()) alt += ' ';
          alt += names_[static_cast<std::size_t>(s - kFirstNonterminal)];
        }
      }
      flush();
      alts.push_back(alt.empty() ? "\"\"" : alt);
    }
    if (alts.empty()) continue;
    out << names_[static_cast<std::size_t>(nt)] << " ::= ";
    for (std::size_t i = 0; i < alts.size(); ++i) out << (i ? " | " : "") << alts[i];
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// BNF parser

namespace {

struct PendingSymbol {
  bool terminal_run;
  std::string text;  // bytes for runs, name for nonterminals
  std::size_t line, column;
};

class BnfParser {
 public:
  explicit BnfParser(std::string_view text) : text_(text) {}

  Grammar parse() {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text_.size()) {
      const auto nl = text_.find('\n', pos);
      const auto end = nl == std::string_view::npos ? text_.size() : nl;
      ++line_no;
      parse_line(text_.substr(pos, end - pos), line_no);
      if (nl == std::string_view::npos) break;
      pos = nl + 1;
    }
    if (order_.empty()) throw GrammarError(1, 1, "grammar has no rules");

    std::map<std::string, std::int32_t> ids;
    std::vector<std::string> names;
    for (const auto& name : order_) {
      ids.emplace(name, static_cast<std::int32_t>(names.size()));
      names.push_back(name);
    }
    std::vector<Rule> rules;
    for (const auto& [lhs, alt] : alts_) {
      Rule r;
      r.lhs = ids.at(lhs);
      for (const auto& sym : alt) {
        if (sym.terminal_run) {
          for (unsigned char c : sym.text) r.rhs.push_back(static_cast<Symbol>(c));
        } else {
          auto it = ids.find(sym.text);
          if (it == ids.end())
            throw GrammarError(sym.line, sym.column, "undefined nonterminal '" + sym.text + "'");
          r.rhs.push_back(nonterminal_symbol(it->second));
        }
      }
      rules.push_back(std::move(r));
    }
    return Grammar(std::move(names), 0, std::move(rules));
  }

 private:
  void parse_line(std::string_view line, std::size_t line_no) {
    line_ = line;
    line_no_ = line_no;
    i_ = 0;
    skip_space();
    if (at_end()) return;
    if (line_[i_] == '|') {
      if (current_lhs_.empty()) error("continuation line without a preceding rule");
      ++i_;
      parse_alternatives();
      return;
    }
    const std::size_t name_col = i_ + 1;
    const std::string name = parse_name();
    if (name.empty()) error("expected a nonterminal name");
    skip_space();
    if (line_.substr(i_, 3) != "::=") error("expected '::=' after '" + name + "'");
    i_ += 3;
    (void)name_col;
    current_lhs_ = name;
    if (std::find(order_.begin(), order_.end(), name) == order_.end()) order_.push_back(name);
    skip_space();
    if (at_end()) return;  // alternatives follow on continuation lines
    parse_alternatives();
  }

  void parse_alternatives() {
    for (;;) {
      skip_space();
      std::vector<PendingSymbol> alt;
      bool saw_symbol = false;
      while (!at_end() && line_[i_] != '|') {
        const std::size_t col = i_ + 1;
        if (line_[i_] == '"') {
          alt.push_back({true, parse_string(), line_no_, col});
        } else if (is_name_start(line_[i_])) {
          alt.push_back({false, parse_name(), line_no_, col});
        } else {
          error(std::string("unexpected character '") + line_[i_] + "'");
        }
        saw_symbol = true;
        skip_space();
      }
      if (!saw_symbol) error("empty alternative (write \"\" for the empty string)");
      alts_.emplace_back(current_lhs_, std::move(alt));
      if (at_end()) return;
      ++i_;  // '|'
      skip_space();
      if (at_end()) error("dangling '|' at end of line");
    }
  }

  std::string parse_string() {
    ++i_;  // opening quote
    std::string out;
    while (true) {
      if (i_ >= line_.size()) error("unterminated string literal");
      const char c = line_[i_++];
      if (c == '"') break;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (i_ >= line_.size()) error("unterminated escape sequence");
      const char e = line_[i_++];
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case '\\': out.push_back('\\'); break;
        case '"': out.push_back('"'); break;
        case 'x': {
          if (i_ + 2 > line_.size() || !std::isxdigit(static_cast<unsigned char>(line_[i_])) ||
              !std::isxdigit(static_cast<unsigned char>(line_[i_ + 1])))
            error("\\x escape needs two hex digits");
          out.push_back(static_cast<char>(std::stoi(std::string(line_.substr(i_, 2)), nullptr, 16)));
          i_ += 2;
          break;
        }
        default:
          --i_;
          error(std::string("unknown escape '\\") + e + "'");
      }
    }
    return out;
  }

  static bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  static bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  }

  std::string parse_name() {
    const std::size_t start = i_;
    if (i_ < line_.size() && is_name_start(line_[i_])) {
      ++i_;
      while (i_ < line_.size() && is_name_char(line_[i_])) ++i_;
    }
    return std::string(line_.substr(start, i_ - start));
  }

  void skip_space() {
    while (i_ < line_.size() && (line_[i_] == ' ' || line_[i_] == '\t' || line_[i_] == '\r')) ++i_;
    if (i_ < line_.size() && line_[i_] == '#') i_ = line_.size();
  }

  bool at_end() const { return i_ >= line_.size(); }

  [[noreturn]] void error(const std::string& msg) const { throw GrammarError(line_no_, i_ + 1, msg); }

  std::string_view text_;
  std::string_view line_;
  std::size_t line_no_ = 0;
  std::size_t i_ = 0;
  std::string current_lhs_;
  std::vector<std::string> order_;
  std::vector<std::pair<std::string, std::vector<PendingSymbol>>> alts_;
};

}  // namespace

Grammar parse_grammar(std::string_view text) { return BnfParser(text).parse(); }

// ---------------------------------------------------------------------------
// Recognizer

RecognizerState RecognizerState::initial(const Grammar& grammar) {
  RecognizerState s;
  s.grammar_ = grammar.compiled_ptr();
  if (!s.grammar_->empty_language)
    s.columns_.push_back(detail::build_column(*s.grammar_, {detail::Item{0, 0, 0}}, {}));
  return s;
}

RecognizerState RecognizerState::advance(unsigned char b) const {
  RecognizerState next;
  next.grammar_ = grammar_;
  next.consumed_ = consumed_;
  next.consumed_.push_back(static_cast<char>(b));
  if (columns_.empty() || !columns_.back()->next_bytes.test(b)) return next;
  auto seeds = detail::scan(*grammar_, *columns_.back(), b);
  next.columns_.reserve(columns_.size() + 1);
  next.columns_ = columns_;
  next.columns_.push_back(detail::build_column(*grammar_, std::move(seeds), columns_));
  // With a trimmed grammar every scanned item can be completed, so the new
  // column is nonempty exactly when consumed()·b is a viable prefix.
  return next;
}

RecognizerState RecognizerState::advance(std::string_view bytes) const {
  RecognizerState s = *this;
  for (unsigned char c : bytes) s = s.advance(c);
  return s;
}

bool RecognizerState::is_complete_member() const { return !columns_.empty() && columns_.back()->accepts; }

std::bitset<256> RecognizerState::allowed_next_bytes() const {
  return columns_.empty() ? std::bitset<256>{} : columns_.back()->next_bytes;
}

bool RecognizerState::allows(unsigned char b) const {
  return !columns_.empty() && columns_.back()->next_bytes.test(b);
}

Recognition recognize(const Grammar& grammar, std::string_view bytes) {
  const auto& g = grammar.compiled();
  if (g.empty_language) return {};
  std::vector<std::shared_ptr<const detail::Column>> chart;
  chart.push_back(detail::build_column(g, {detail::Item{0, 0, 0}}, {}));
  for (unsigned char b : bytes) {
    auto seeds = detail::scan(g, *chart.back(), b);
    if (seeds.empty()) return {};
    auto col = detail::build_column(g, std::move(seeds), chart);
    chart.push_back(std::move(col));
  }
  return {true, chart.back()->accepts};
}

}  // namespace smcgen
