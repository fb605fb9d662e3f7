#pragma once

// Experiment plumbing shared by the command-line tool and the Python module:
// run specifications, their validation, and the train / run / enumerate /
// quality / compare / bench commands.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "smcgen/enumerate.hpp"
#include "smcgen/estimators.hpp"
#include "smcgen/inference.hpp"
#include "smcgen/instances.hpp"

namespace smcgen {

/// Validation failure; the message starts with a JSON path such as
/// "$.lm.path".
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& message);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Environment variable that overrides the remote LM endpoint.
inline constexpr const char* kEndpointEnv = "SMCGEN_LM_ENDPOINT";

struct LmSource {
  std::string kind = "instance";  // instance | ngram | remote | uniform
  std::string path;               // ngram model file
  std::string endpoint;           // remote server URL
  std::size_t timeout_ms = 10000;
};

struct SeedSpec {
  bool range = true;
  std::uint64_t start = 0;
  std::uint64_t count = 1;
  std::vector<std::uint64_t> list;

  std::vector<std::uint64_t> expand() const;
};

struct RunSpec {
  std::string instance;
  std::string grammar;  // optional BNF file replacing the instance grammar
  LmSource lm;
  std::optional<nlohmann::json> potentials;  // registry entries; instance defaults when absent
  std::string method = "FullSMC";
  std::vector<std::string> methods;  // for quality
  std::string proposal = "exact";
  std::size_t particles = 10;
  std::string step_unit = "token";
  std::optional<std::size_t> max_steps;
  double ess_threshold = 1.0 / 3.0;
  bool resample_complete = true;
  std::string fault_policy = "zero";
  SeedSpec seeds;
  std::size_t workers = 1;
  std::string out;

  /// Canonical form; from_json(to_json()) reproduces it exactly.
  nlohmann::json to_json() const;
  /// Validates every field; throws ConfigError with the offending path.
  static RunSpec from_json(const nlohmann::json& j);
  static RunSpec load(const std::string& path);

  /// FNV-1a 64 of the canonical dump, as 16 hex digits.
  std::string hash() const;
};

/// An instance and method configuration ready to run.
struct Prepared {
  Instance instance;
  MethodConfig config;
  std::vector<std::string> warnings;
};

Prepared prepare(const RunSpec& spec, Method method);

/// Runs one seed per task on a worker pool; results are in seed order.
std::vector<RunResult> run_seeds(const Prepared& prepared, const std::vector<std::uint64_t>& seeds,
                                 std::size_t workers);

// ---------------------------------------------------------------------------
// Commands. Each returns a process exit code and writes human-readable
// progress to `log`.

struct TrainOptions {
  std::string corpus_path;
  std::string out_path;
  std::size_t order = 2;
  double smoothing = 1.0;
  char delimiter = '\n';
  std::vector<std::string> merges;
  std::size_t heldout_every = 10;  // every k-th document is held out
};

struct TrainReport {
  std::size_t vocab_size = 0;
  std::size_t train_documents = 0;
  std::size_t heldout_documents = 0;
  double heldout_perplexity = 0.0;
};

TrainReport cmd_train(const TrainOptions& opts, std::ostream& log);

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> particles;
  std::optional<std::size_t> workers;
  std::optional<std::string> out;
  std::optional<std::string> method;
};

RunSpec apply_overrides(RunSpec spec, const RunOverrides& o);

/// Writes one JSON line per seed. Returns 0, or 2 if any run ended all-dead.
int cmd_run(const RunSpec& spec, std::ostream& out, std::ostream& log);

/// Oracle file for an enumerable instance.
nlohmann::json cmd_enumerate(const std::string& instance, std::size_t node_cap);

struct QualityReport {
  std::string csv;
  nlohmann::json summary;
};

/// Largest quality estimate consistent with an oracle: log of the target
/// mass plus its truncation tail, two standard errors, and 1e-9 for rounding.
double quality_bound(const Enumeration& oracle, QualityTarget target, double std_error);

/// Requires at least two methods.
QualityReport cmd_quality(const RunSpec& spec, std::ostream& log);

/// Pairwise Welch tests over a quality CSV (method,instance,seed,estimate,accepted).
nlohmann::json cmd_compare(const std::string& csv_text);

struct BenchOptions {
  std::size_t vocab_size = 1000;
  std::size_t particles = 10;
  std::size_t runs = 5;
  std::size_t max_steps = 64;
  std::uint64_t seed = 1;
  double budget_ms = 10.0;
};

/// Per-token FullSMC step timing with the character proposal.
nlohmann::json cmd_bench(const BenchOptions& opts, std::ostream& log);

}  // namespace smcgen
