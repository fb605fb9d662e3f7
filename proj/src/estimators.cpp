#include "smcgen/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

namespace smcgen {

QualityTarget method_target(Method m) {
  switch (m) {
    case Method::GrammarOnlyIS:
    case Method::GrammarOnlySMC:
      return QualityTarget::Efficient;
    case Method::SampleRerank:
      return QualityTarget::Rerank;
    default:
      return QualityTarget::Global;
  }
}

std::string target_label(QualityTarget t) {
  switch (t) {
    case QualityTarget::Global:
      return "p*phi_eff*phi_exp";
    case QualityTarget::Efficient:
      return "p*phi_eff";
    case QualityTarget::Rerank:
      return "l_eff*phi_exp";
  }
  return "?";
}

bool single_sample_method(Method m) { return m == Method::BaseLM || m == Method::LocalDecoding; }

namespace {
nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }
}  // namespace

nlohmann::json QualityEstimate::to_json() const {
  return {{"point", num(point)}, {"std_error", num(std_error)}, {"runs", runs}, {"method", method}, {"target", target}};
}

QualityEstimate summarize(std::span<const double> per_run, const std::string& method, const std::string& target) {
  QualityEstimate q;
  q.method = method;
  q.target = target;
  q.runs = per_run.size();
  if (per_run.empty()) return q;
  if (std::any_of(per_run.begin(), per_run.end(), [](double v) { return v == kNegInf; })) {
    q.point = kNegInf;
    q.std_error = std::nan("");
    return q;
  }
  const double n = static_cast<double>(per_run.size());
  const double mean = std::accumulate(per_run.begin(), per_run.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : per_run) ss += (v - mean) * (v - mean);
  q.point = mean;
  q.std_error = per_run.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return q;
}

double single_sample_value(const ParticleRecord& r, QualityTarget target) {
  if (!r.complete || std::isnan(r.log_proposal)) return kNegInf;
  double log_sigma;
  double log_q = r.log_proposal;
  switch (target) {
    case QualityTarget::Global:
      log_sigma = r.log_lm + r.log_phi_efficient + r.log_phi_expensive;
      break;
    case QualityTarget::Efficient:
      log_sigma = r.log_lm + r.log_phi_efficient;
      break;
    case QualityTarget::Rerank:
      // σ̃ = l_eff·Φ_exp and q = l_eff for local decoding.
      log_sigma = r.log_proposal + r.log_phi_expensive;
      break;
  }
  if (log_sigma == kNegInf || std::isnan(log_sigma)) return kNegInf;
  return log_sigma - log_q;
}

double k_particle_is_value(std::span<const double> log_weights) { return log_mean_exp(log_weights); }

double smc_value(const RunResult& r) { return r.log_evidence; }

double run_quality_value(const RunResult& r) {
  if (single_sample_method(r.method)) {
    if (r.particles.empty()) return kNegInf;
    return single_sample_value(r.particles.front(), method_target(r.method));
  }
  if (method_resamples(r.method)) return smc_value(r);
  std::vector<double> lw;
  for (const auto& p : r.particles) lw.push_back(p.complete ? p.log_weight : kNegInf);
  return k_particle_is_value(lw);
}

bool run_accepted(const RunResult& r, QualityTarget target) {
  if (single_sample_method(r.method)) {
    if (r.particles.empty()) return false;
    const auto& p = r.particles.front();
    if (!p.complete) return false;
    switch (target) {
      case QualityTarget::Global:
        return p.log_phi_efficient > kNegInf && p.log_phi_expensive > kNegInf;
      case QualityTarget::Efficient:
        return p.log_phi_efficient > kNegInf;
      case QualityTarget::Rerank:
        return p.log_phi_expensive > kNegInf;
    }
  }
  // Weighted methods output a particle drawn from the normalized weights,
  // which always scores positively unless every weight is zero.
  return r.status == RunStatus::Ok && std::isfinite(r.log_evidence);
}

nlohmann::json RejectionQuality::to_json() const {
  return {{"attempted", attempted},
          {"accepted", accepted},
          {"acceptance_rate", acceptance_rate},
          {"log_acceptance", num(log_acceptance)},
          {"accepted_estimate", accepted_estimate.to_json()},
          {"corrected", corrected.to_json()},
          {"diagnostic", diagnostic}};
}

RejectionQuality rejection_quality(std::span<const double> values, std::span<const char> accepted,
                                   const std::string& method, const std::string& target) {
  if (values.size() != accepted.size()) throw Error("rejection_quality: length mismatch");
  RejectionQuality rq;
  rq.attempted = values.size();
  std::vector<double> kept;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (accepted[i]) kept.push_back(values[i]);
  rq.accepted = kept.size();
  rq.accepted_estimate = summarize(kept, method, target);
  rq.corrected.method = method;
  rq.corrected.target = target;
  rq.corrected.runs = rq.attempted;
  if (rq.attempted == 0 || rq.accepted == 0) {
    rq.acceptance_rate = 0.0;
    rq.diagnostic = "no accepted runs out of " + std::to_string(rq.attempted);
    rq.corrected.point = kNegInf;
    rq.corrected.std_error = std::nan("");
    return rq;
  }
  const double a = static_cast<double>(rq.accepted) / static_cast<double>(rq.attempted);
  rq.acceptance_rate = a;
  rq.log_acceptance = std::log(a);
  for (double v : kept) rq.corrected_samples.push_back(v + rq.log_acceptance);
  rq.corrected.point = rq.log_acceptance + rq.accepted_estimate.point;
  // Delta-method variance of log(acceptance) added to the sample variance.
  const double var_log_a = (1.0 - a) / (a * static_cast<double>(rq.attempted));
  rq.corrected.std_error = std::sqrt(rq.accepted_estimate.std_error * rq.accepted_estimate.std_error + var_log_a);
  return rq;
}

RejectionQuality rejection_quality(const MethodConfig& config, const LanguageModel& lm, std::uint64_t first_seed,
                                   std::size_t runs) {
  MethodConfig c = config;
  if (single_sample_method(c.method)) c.particles = 1;
  const QualityTarget target = method_target(c.method);
  std::vector<double> values;
  std::vector<char> accepted;
  for (std::size_t i = 0; i < runs; ++i) {
    const RunResult r = run(c, lm, first_seed + i);
    accepted.push_back(run_accepted(r, target) ? 1 : 0);
    values.push_back(run_quality_value(r));
  }
  return rejection_quality(values, accepted, method_name(c.method), target_label(target));
}

nlohmann::json WelchReport::to_json() const {
  return {{"mean_a", mean_a}, {"mean_b", mean_b}, {"t", num(t)},        {"df", num(df)},
          {"p_value", p_value}, {"band", band},    {"identical", identical}};
}

WelchReport compare_methods(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 30 || b.size() < 30) throw Error("compare_methods needs at least 30 runs per method");
  auto finite = [](std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
  };
  if (!finite(a) || !finite(b)) throw Error("compare_methods: samples must be finite");

  auto moments = [](std::span<const double> xs) {
    const double n = static_cast<double>(xs.size());
    const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : xs) ss += (v - m) * (v - m);
    return std::pair{m, ss / (n - 1.0)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  WelchReport rep;
  rep.mean_a = ma;
  rep.mean_b = mb;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double sa = va / na;
  const double sb = vb / nb;
  if (sa + sb == 0.0) {
    if (ma == mb) {
      rep.identical = true;
      rep.p_value = 1.0;
      rep.band = "ns";
    } else {
      rep.t = ma > mb ? INFINITY : -INFINITY;
      rep.df = na + nb - 2.0;
      rep.p_value = 0.0;
      rep.band = "***";
    }
    return rep;
  }
  rep.t = (ma - mb) / std::sqrt(sa + sb);
  rep.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  boost::math::students_t dist(rep.df);
  rep.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(rep.t)));
  rep.band = rep.p_value < 0.001 ? "***" : rep.p_value < 0.01 ? "**" : "ns";
  return rep;
}

}  // namespace smcgen
