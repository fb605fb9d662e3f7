#pragma once

// Importance sampling and sequential Monte Carlo over token sequences, and
// the seven method configurations built from them.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "smcgen/lm.hpp"
#include "smcgen/potential.hpp"
#include "smcgen/proposal.hpp"
#include "smcgen/rng.hpp"

namespace smcgen {

enum class Method { BaseLM, LocalDecoding, GrammarOnlyIS, GrammarOnlySMC, SampleRerank, FullIS, FullSMC };

const std::vector<Method>& all_methods();
std::string method_name(Method m);
/// Throws Error listing every valid name when `name` is unknown.
Method parse_method(const std::string& name);

bool method_uses_efficient(Method m);    // proposal samples from the local product
bool method_weights_normalizers(Method m);  // weights include the local normalizers
bool method_weights_expensive(Method m);  // weights include expensive potentials
bool method_resamples(Method m);

enum class ProposalKind { Exact, CharacterTrie };
enum class StepUnit { Token, SemanticUnit };

std::string proposal_name(ProposalKind k);
ProposalKind parse_proposal(const std::string& name);

struct MethodConfig {
  Method method = Method::FullSMC;
  ProposalKind proposal = ProposalKind::Exact;
  std::vector<PotentialPtr> efficient;
  std::vector<PotentialPtr> expensive;
  std::size_t particles = 10;
  std::size_t max_steps = 256;
  StepUnit step_unit = StepUnit::Token;
  unsigned char unit_boundary = '\n';
  double ess_threshold = 1.0 / 3.0;
  bool resample_complete = true;
  FaultPolicy fault_policy = FaultPolicy::ZeroScore;
  std::size_t workers = 1;
};

struct Particle {
  std::vector<TokenId> tokens;  // ends with EOS iff complete
  double log_weight = 0.0;
  bool complete = false;
  std::uint64_t lineage = 0;

  std::vector<PotentialStatePtr> efficient_states;
  std::vector<PotentialStatePtr> expensive_states;
  std::vector<double> expensive_scores;  // last evaluated log score per expensive potential

  double log_lm = 0.0;          // log p_lm of the tokens so far
  double log_proposal = 0.0;    // log q of the tokens so far; NaN once intractable
  double log_normalizers = 0.0; // Σ log L (or log W̃_S) over steps
  std::string truncation;       // nonempty when killed by max_steps

  bool dead() const { return log_weight == kNegInf; }
  bool live_incomplete() const { return !complete && !dead(); }
};

/// (Σw)² / Σw² computed from log weights; 0 when every weight is zero.
double ess(std::span<const double> log_weights);

/// Weights and resampling bookkeeping for a fixed population of particles.
class ParticleSystem {
 public:
  ParticleSystem(std::vector<Particle> particles, double ess_threshold, bool resample_complete,
                 std::uint64_t seed);

  std::vector<Particle>& particles() { return particles_; }
  const std::vector<Particle>& particles() const { return particles_; }
  std::size_t size() const { return particles_.size(); }

  std::vector<double> log_weights() const;
  double log_total_weight() const;
  double current_ess() const;
  std::size_t resample_count() const { return resamples_; }

  /// Resamples iff ESS < threshold·N. Returns whether it did.
  bool maybe_resample();

  /// Multinomial resampling; every new weight is W/N and lineage ids are
  /// refreshed. Throws Error when W = 0.
  void resample_multinomial();

  std::uint64_t fresh_lineage() { return next_lineage_++; }

 private:
  std::vector<Particle> particles_;
  double threshold_;
  bool resample_complete_;
  std::uint64_t seed_;
  std::uint64_t next_lineage_;
  std::size_t resamples_ = 0;
};

struct StepDiagnostic {
  std::size_t step = 0;
  double ess = 0.0;  // before resampling
  bool resampled = false;
  double log_mean_weight = kNegInf;
  std::size_t live_incomplete = 0;
  double wall_ms = 0.0;
};

struct ParticleRecord {
  std::vector<TokenId> tokens;
  std::string text;
  double log_weight = kNegInf;
  bool complete = false;
  double log_lm = 0.0;
  double log_proposal = 0.0;
  double log_normalizers = 0.0;
  double log_phi_efficient = kNegInf;  // Φ_eff of the final sequence (complete particles)
  double log_phi_expensive = kNegInf;  // Φ_exp of the final sequence (complete particles)
};

enum class RunStatus { Ok, AllDead };

struct RunResult {
  Method method = Method::FullSMC;
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::Ok;
  std::vector<ParticleRecord> particles;
  std::vector<StepDiagnostic> steps;
  std::vector<std::string> diagnostics;
  double log_evidence = kNegInf;  // log of the mean final weight
  std::size_t resample_count = 0;

  /// Normalized weights over complete particles (all zero when all dead).
  std::vector<double> normalized_weights() const;
  /// Posterior mass per decoded output string.
  std::map<std::string, double> posterior() const;
  /// Index of one particle drawn from the normalized weights.
  std::optional<std::size_t> sample_output(Rng& rng) const;

  nlohmann::json to_json(bool include_steps = true) const;
};

/// One full run of the configured method.
RunResult run(const MethodConfig& config, const LanguageModel& lm, std::uint64_t seed);

/// Extend every live incomplete particle by one token (or one unit), then
/// reweight it. Exposed for tests; run() loops over this.
void extend_and_reweight(const MethodConfig& config, const LanguageModel& lm, std::uint64_t seed,
                         std::vector<Particle>& particles, std::vector<std::string>& diagnostics);

struct Group {
  std::string key;
  double mass = 0.0;
  double score = 0.0;
  std::size_t members = 0;
};

/// Groups particles by key(record) and sums normalized weights per group.
std::vector<Group> group_and_score(const RunResult& result,
                                   const std::function<std::string(const ParticleRecord&)>& key,
                                   const std::function<double(const std::string& key)>& score);

/// Pearson correlation coefficient (single pass, Welford-style).
double pearson(std::span<const double> x, std::span<const double> y);

/// Total variation distance between two distributions over strings.
double total_variation(const std::map<std::string, double>& p, const std::map<std::string, double>& q);

}  // namespace smcgen
