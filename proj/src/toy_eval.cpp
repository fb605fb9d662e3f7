#include "smcgen/toy_eval.hpp"

#include <cctype>
#include <limits>

namespace smcgen {

namespace {

struct Fault {
  std::string message;
};

class StatementEval {
 public:
  StatementEval(std::string_view line, EvalOutcome& out, std::size_t budget)
      : s_(line), out_(out), budget_(budget) {}

  void run() {
    skip();
    const std::string name = ident();
    if (name.empty()) throw Fault{"expected a variable name"};
    skip();
    if (!eat('=')) throw Fault{"expected '='"};
    const std::int64_t v = expr();
    skip();
    if (i_ != s_.size()) throw Fault{"trailing characters"};
    out_.variables[name] = v;
  }

 private:
  void tick() {
    if (++out_.steps > budget_) throw BudgetExhausted("toy evaluator exceeded its step budget");
  }

  void skip() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t' || s_[i_] == '\r')) ++i_;
  }

  bool eat(char c) {
    skip();
    if (i_ < s_.size() && s_[i_] == c) {
      ++i_;
      return true;
    }
    return false;
  }

  std::string ident() {
    const std::size_t start = i_;
    if (i_ < s_.size() && (std::isalpha(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_')) {
      ++i_;
      while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_')) ++i_;
    }
    return std::string(s_.substr(start, i_ - start));
  }

  static std::int64_t checked(__int128 v) {
    if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min())
      throw Fault{"integer overflow"};
    return static_cast<std::int64_t>(v);
  }

  std::int64_t expr() {
    tick();
    std::int64_t v = term();
    for (;;) {
      if (eat('+')) {
        v = checked(static_cast<__int128>(v) + term());
      } else if (eat('-')) {
        v = checked(static_cast<__int128>(v) - term());
      } else {
        return v;
      }
    }
  }

  std::int64_t term() {
    tick();
    std::int64_t v = factor();
    for (;;) {
      if (eat('*')) {
        v = checked(static_cast<__int128>(v) * factor());
      } else if (eat('/')) {
        const std::int64_t d = factor();
        if (d == 0) throw Fault{"division by zero"};
        v = checked(static_cast<__int128>(v) / d);
      } else {
        return v;
      }
    }
  }

  std::int64_t factor() {
    tick();
    skip();
    if (i_ >= s_.size()) throw Fault{"unexpected end of statement"};
    const char c = s_[i_];
    if (c == '(') {
      ++i_;
      const std::int64_t v = expr();
      if (!eat(')')) throw Fault{"expected ')'"};
      return v;
    }
    if (c == '-') {
      ++i_;
      return checked(-static_cast<__int128>(factor()));
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      __int128 v = 0;
      while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) {
        v = v * 10 + (s_[i_++] - '0');
        checked(v);
      }
      return static_cast<std::int64_t>(v);
    }
    const std::string name = ident();
    if (name.empty()) throw Fault{std::string("unexpected character '") + c + "'"};
    auto it = out_.variables.find(name);
    if (it == out_.variables.end()) throw Fault{"undefined variable '" + name + "'"};
    return it->second;
  }

  std::string_view s_;
  std::size_t i_ = 0;
  EvalOutcome& out_;
  std::size_t budget_;
};

}  // namespace

EvalOutcome ToyEvaluator::run(std::string_view program) const {
  EvalOutcome out;
  std::size_t pos = 0;
  while (pos <= program.size()) {
    const auto nl = program.find('\n', pos);
    const auto end = nl == std::string_view::npos ? program.size() : nl;
    const auto line = program.substr(pos, end - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
      try {
        StatementEval(line, out, budget_).run();
      } catch (const Fault& f) {
        out.ok = false;
        out.fault = f.message;
        return out;
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

}  // namespace smcgen
