#pragma once

// Lower-bound estimators of approximation quality, log Z − KL(method ∥ target),
// their rejection-sampled variants, and a Welch comparison between methods.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "smcgen/inference.hpp"

namespace smcgen {

/// Which unnormalized target a method's estimate refers to.
enum class QualityTarget {
  Global,     // p · Φ_eff · Φ_exp
  Efficient,  // p · Φ_eff
  Rerank,     // l_eff · Φ_exp
};

QualityTarget method_target(Method m);
std::string target_label(QualityTarget t);

/// Methods whose output density is tractable and scored one sample per run.
bool single_sample_method(Method m);

struct QualityEstimate {
  double point = kNegInf;
  double std_error = 0.0;
  std::size_t runs = 0;
  std::string method;
  std::string target;

  nlohmann::json to_json() const;
};

/// Mean and standard error of run-level values; any −inf makes the point −inf.
QualityEstimate summarize(std::span<const double> per_run, const std::string& method, const std::string& target);

/// log σ̃(x) − log q(x) for one ancestral sample scored against `target`.
double single_sample_value(const ParticleRecord& r, QualityTarget target);

/// log of the mean particle weight of one IS run.
double k_particle_is_value(std::span<const double> log_weights);

/// log evidence of one SMC run.
double smc_value(const RunResult& r);

/// The run-level estimate appropriate for the run's method.
double run_quality_value(const RunResult& r);

/// Whether the run's chosen output has positive score under `target`.
bool run_accepted(const RunResult& r, QualityTarget target);

struct RejectionQuality {
  std::size_t attempted = 0;
  std::size_t accepted = 0;
  double acceptance_rate = 0.0;
  double log_acceptance = kNegInf;
  QualityEstimate accepted_estimate;   // mean over accepted runs, uncorrected
  QualityEstimate corrected;           // log acceptance + accepted mean
  std::vector<double> corrected_samples;  // accepted run values shifted by log acceptance
  std::string diagnostic;

  nlohmann::json to_json() const;
};

/// Combines run values with per-run acceptance flags.
RejectionQuality rejection_quality(std::span<const double> values, std::span<const char> accepted,
                                   const std::string& method, const std::string& target);

/// Runs `config` once per seed in [first_seed, first_seed + runs) and
/// returns the rejection-corrected quality against the method's target.
RejectionQuality rejection_quality(const MethodConfig& config, const LanguageModel& lm, std::uint64_t first_seed,
                                   std::size_t runs);

struct WelchReport {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  std::string band;  // "***", "**" or "ns"
  bool identical = false;

  nlohmann::json to_json() const;
};

/// Two-sided Welch t-test. Requires at least 30 finite samples per side.
WelchReport compare_methods(std::span<const double> a, std::span<const double> b);

}  // namespace smcgen
