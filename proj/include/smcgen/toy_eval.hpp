#pragma once

// Interpreter for the toy assignment language checked by the checked-eval
// potential. One statement per line:
//
//   stmt   := ident '=' expr          (blank lines are skipped)
//   expr   := term (('+' | '-') term)*
//   term   := factor (('*' | '/') factor)*
//   factor := integer | ident | '(' expr ')' | '-' factor
//
// Arithmetic is on 64-bit integers with truncating division. Division by
// zero, reading an unassigned variable, overflow and syntax errors are
// runtime faults. Every evaluation step counts against a budget so the
// interpreter always terminates.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "smcgen/common.hpp"

namespace smcgen {

class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

struct EvalOutcome {
  bool ok = true;
  std::string fault;  // empty when ok
  std::size_t steps = 0;
  std::map<std::string, std::int64_t> variables;
};

class ToyEvaluator {
 public:
  explicit ToyEvaluator(std::size_t step_budget = 100000) : budget_(step_budget) {}

  /// Runs the whole program. Throws BudgetExhausted if the budget runs out.
  EvalOutcome run(std::string_view program) const;

  std::size_t step_budget() const { return budget_; }

 private:
  std::size_t budget_;
};

}  // namespace smcgen
