#include "smcgen/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "smcgen/thread_pool.hpp"

namespace smcgen {

namespace {

constexpr std::uint64_t kResampleStream = ~std::uint64_t{0};

struct MethodInfo {
  Method method;
  const char* name;
};

const MethodInfo kMethods[] = {
    {Method::BaseLM, "BaseLM"},
    {Method::LocalDecoding, "LocalDecoding"},
    {Method::GrammarOnlyIS, "GrammarOnlyIS"},
    {Method::GrammarOnlySMC, "GrammarOnlySMC"},
    {Method::SampleRerank, "SampleRerank"},
    {Method::FullIS, "FullIS"},
    {Method::FullSMC, "FullSMC"},
};

}  // namespace

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = [] {
    std::vector<Method> v;
    for (const auto& m : kMethods) v.push_back(m.method);
    return v;
  }();
  return methods;
}

std::string method_name(Method m) {
  for (const auto& info : kMethods)
    if (info.method == m) return info.name;
  return "?";
}

Method parse_method(const std::string& name) {
  std::string valid;
  for (const auto& info : kMethods) {
    if (name == info.name) return info.method;
    valid += valid.empty() ? "" : ", ";
    valid += info.name;
  }
  throw Error("unknown method '" + name + "'; valid methods: " + valid);
}

bool method_uses_efficient(Method m) { return m != Method::BaseLM; }

bool method_weights_normalizers(Method m) {
  return m == Method::GrammarOnlyIS || m == Method::GrammarOnlySMC || m == Method::FullIS || m == Method::FullSMC;
}

bool method_weights_expensive(Method m) {
  return m == Method::SampleRerank || m == Method::FullIS || m == Method::FullSMC;
}

bool method_resamples(Method m) { return m == Method::GrammarOnlySMC || m == Method::FullSMC; }

std::string proposal_name(ProposalKind k) { return k == ProposalKind::Exact ? "exact" : "character"; }

ProposalKind parse_proposal(const std::string& name) {
  if (name == "exact") return ProposalKind::Exact;
  if (name == "character" || name == "character-trie") return ProposalKind::CharacterTrie;
  throw Error("unknown proposal '" + name + "'; valid proposals: exact, character");
}

// ---------------------------------------------------------------------------

double ess(std::span<const double> log_weights) {
  double hi = kNegInf;
  for (double lw : log_weights) hi = std::max(hi, lw);
  if (hi == kNegInf) return 0.0;
  double s1 = 0.0, s2 = 0.0;
  for (double lw : log_weights) {
    if (lw == kNegInf) continue;
    const double w = std::exp(lw - hi);
    s1 += w;
    s2 += w * w;
  }
  return s1 * s1 / s2;
}

ParticleSystem::ParticleSystem(std::vector<Particle> particles, double ess_threshold, bool resample_complete,
                               std::uint64_t seed)
    : particles_(std::move(particles)),
      threshold_(ess_threshold),
      resample_complete_(resample_complete),
      seed_(seed),
      next_lineage_(particles_.size()) {
  if (particles_.empty()) throw Error("particle system needs at least one particle");
  if (!(ess_threshold > 0.0 && ess_threshold <= 1.0)) throw Error("ess threshold must be in (0, 1]");
}

std::vector<double> ParticleSystem::log_weights() const {
  std::vector<double> w;
  w.reserve(particles_.size());
  for (const auto& p : particles_) w.push_back(p.log_weight);
  return w;
}

double ParticleSystem::log_total_weight() const {
  const auto w = log_weights();
  return log_sum_exp(w);
}

double ParticleSystem::current_ess() const {
  const auto w = log_weights();
  return ess(w);
}

bool ParticleSystem::maybe_resample() {
  if (log_total_weight() == kNegInf) return false;
  if (current_ess() < threshold_ * static_cast<double>(particles_.size())) {
    resample_multinomial();
    return true;
  }
  return false;
}

void ParticleSystem::resample_multinomial() {
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < particles_.size(); ++i)
    if (resample_complete_ || !particles_[i].complete) slots.push_back(i);
  if (slots.empty()) return;

  std::vector<double> lw;
  lw.reserve(slots.size());
  for (std::size_t i : slots) lw.push_back(particles_[i].log_weight);
  const double log_total = log_sum_exp(lw);
  if (log_total == kNegInf) {
    if (resample_complete_) throw Error("cannot resample: total weight is zero");
    return;
  }
  const double new_lw = log_total - std::log(static_cast<double>(slots.size()));

  Rng rng(seed_, kResampleStream, resamples_);
  std::vector<Particle> chosen;
  chosen.reserve(slots.size());
  for (std::size_t k = 0; k < slots.size(); ++k) chosen.push_back(particles_[slots[rng.log_categorical(lw)]]);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    Particle& p = particles_[slots[k]];
    p = std::move(chosen[k]);
    p.log_weight = new_lw;
    p.lineage = next_lineage_++;
  }
  ++resamples_;
}

// ---------------------------------------------------------------------------

namespace {

struct Engine {
  const MethodConfig& config;
  const LanguageModel& lm;
  const Vocabulary& vocab;
  std::uint64_t seed;
  bool use_efficient;
  const CfgPotential* cfg = nullptr;  // set for the character proposal

  Engine(const MethodConfig& c, const LanguageModel& l, std::uint64_t s)
      : config(c), lm(l), vocab(l.vocabulary()), seed(s), use_efficient(method_uses_efficient(c.method)) {
    for (const auto& p : config.efficient)
      if (p->potential_class() != PotentialClass::Efficient)
        throw Error("potential '" + p->name() + "' is not efficient but was listed as efficient");
    if (use_efficient && config.proposal == ProposalKind::CharacterTrie && !config.efficient.empty()) {
      if (config.efficient.size() != 1) throw Error("the character proposal needs exactly one grammar potential");
      cfg = dynamic_cast<const CfgPotential*>(config.efficient.front().get());
      if (!cfg) throw Error("the character proposal needs a grammar (cfg) potential");
    }
    for (const auto& p : config.efficient)
      if (!(p->vocabulary() == vocab)) throw Error("potential '" + p->name() + "' uses a different vocabulary");
    for (const auto& p : config.expensive)
      if (!(p->vocabulary() == vocab)) throw Error("potential '" + p->name() + "' uses a different vocabulary");
  }

  Particle initial_particle(std::uint64_t lineage, std::vector<std::string>& diag) const {
    Particle p;
    p.lineage = lineage;
    double lw = 0.0;
    if (use_efficient) {
      for (const auto& pot : config.efficient) {
        p.efficient_states.push_back(pot->initial_state());
        if (method_weights_normalizers(config.method))
          lw += guarded_score(*pot, *p.efficient_states.back(), false, config.fault_policy, &diag);
      }
    }
    if (method_weights_expensive(config.method)) {
      for (const auto& pot : config.expensive) {
        p.expensive_states.push_back(pot->initial_state());
        const double s = guarded_score(*pot, *p.expensive_states.back(), false, config.fault_policy, &diag);
        p.expensive_scores.push_back(s);
        lw += s;
      }
    }
    p.log_weight = std::isnan(lw) ? kNegInf : lw;
    return p;
  }

  void kill(Particle& p) const { p.log_weight = kNegInf; }

  void extend(Particle& p, std::vector<std::string>& diag) const {
    for (;;) {
      if (p.tokens.size() >= config.max_steps) {
        p.truncation = "max_steps reached after " + std::to_string(p.tokens.size()) + " tokens";
        diag.push_back("particle " + std::to_string(p.lineage) + ": " + p.truncation);
        kill(p);
        return;
      }
      const TokenDistribution dist = lm.next_distribution(p.tokens);
      Rng rng(seed, p.lineage, p.tokens.size());

      WeightedToken wt;
      const bool weighted_proposal = use_efficient && !config.efficient.empty();
      if (!weighted_proposal) {
        wt = exact_local_step(dist.logprobs, rng);
        wt.log_set_weight = 0.0;
        wt.log_proposal_prob = dist.logprob(wt.token);
      } else if (cfg) {
        wt = character_proposal(cfg->trie(), dist, CfgPotential::recognizer(*p.efficient_states[0]), rng);
      } else {
        std::vector<std::vector<double>> factors;
        factors.reserve(config.efficient.size());
        for (std::size_t k = 0; k < config.efficient.size(); ++k)
          factors.push_back(config.efficient[k]->next_token_log_scores(p.efficient_states[k]));
        const auto log_sigma = local_log_weights(dist, factors);
        try {
          wt = exact_local_step(log_sigma, rng);
        } catch (const DeadEndError&) {
          wt = WeightedToken{};
        }
      }
      if (wt.dead()) {
        diag.push_back("particle " + std::to_string(p.lineage) + ": proposal dead end");
        kill(p);
        return;
      }

      const TokenId tok = wt.token;
      p.log_lm += dist.logprob(tok);
      p.log_proposal += wt.log_proposal_prob;
      p.log_normalizers += wt.log_set_weight;
      if (method_weights_normalizers(config.method)) p.log_weight += wt.log_set_weight;
      if (weighted_proposal)
        for (std::size_t k = 0; k < config.efficient.size(); ++k)
          p.efficient_states[k] = config.efficient[k]->advance(p.efficient_states[k], tok);
      p.tokens.push_back(tok);
      p.complete = vocab.is_eos(tok);

      if (method_weights_expensive(config.method)) {
        for (std::size_t k = 0; k < config.expensive.size(); ++k) {
          const auto& pot = config.expensive[k];
          p.expensive_states[k] = pot->advance(p.expensive_states[k], tok);
          if (!p.complete && !pot->stride().closes_unit(vocab, tok)) continue;
          const double s = guarded_score(*pot, *p.expensive_states[k], p.complete, config.fault_policy, &diag);
          const double inc = s == kNegInf ? kNegInf : s - p.expensive_scores[k];
          p.expensive_scores[k] = s;
          p.log_weight += inc;
          if (p.dead()) break;
        }
      }
      if (p.dead() || p.complete) return;
      if (config.step_unit == StepUnit::Token) return;
      if (vocab.token_bytes(tok).find(static_cast<char>(config.unit_boundary)) != std::string::npos) return;
    }
  }

  ParticleRecord record(const Particle& p, std::vector<std::string>& diag) const {
    ParticleRecord r;
    r.tokens = p.tokens;
    r.text = vocab.decode(p.tokens);
    r.log_weight = p.log_weight;
    r.complete = p.complete;
    r.log_lm = p.log_lm;
    r.log_proposal = p.log_proposal;
    r.log_normalizers = p.log_normalizers;
    if (!p.complete) return r;
    std::vector<TokenId> body(p.tokens.begin(), p.tokens.end() - 1);
    double eff = 0.0;
    if (use_efficient) {
      for (std::size_t k = 0; k < config.efficient.size() && eff != kNegInf; ++k)
        eff += guarded_score(*config.efficient[k], *p.efficient_states[k], true, config.fault_policy, &diag);
    } else {
      PotentialProduct pp(nullptr, config.efficient, config.fault_policy);
      eff = pp.log_score(body, true, &diag);
    }
    r.log_phi_efficient = eff;
    double exp = 0.0;
    if (method_weights_expensive(config.method)) {
      for (double s : p.expensive_scores) exp = s == kNegInf ? kNegInf : exp + s;
      if (p.dead()) exp = kNegInf;
    } else {
      PotentialProduct pp(nullptr, config.expensive, config.fault_policy);
      exp = pp.log_score(body, true, &diag);
    }
    r.log_phi_expensive = exp;
    return r;
  }
};

}  // namespace

void extend_and_reweight(const MethodConfig& config, const LanguageModel& lm, std::uint64_t seed,
                         std::vector<Particle>& particles, std::vector<std::string>& diagnostics) {
  Engine engine(config, lm, seed);
  for (auto& p : particles)
    if (p.live_incomplete()) engine.extend(p, diagnostics);
}

RunResult run(const MethodConfig& config, const LanguageModel& lm, std::uint64_t seed) {
  if (config.particles == 0) throw Error("particles must be at least 1");
  if (config.max_steps == 0) throw Error("max_steps must be at least 1");
  Engine engine(config, lm, seed);

  RunResult result;
  result.method = config.method;
  result.seed = seed;

  std::vector<Particle> init;
  init.reserve(config.particles);
  for (std::size_t i = 0; i < config.particles; ++i) init.push_back(engine.initial_particle(i, result.diagnostics));
  ParticleSystem sys(std::move(init), config.ess_threshold, config.resample_complete, seed);
  ThreadPool pool(std::min(config.workers, config.particles));

  const double log_n = std::log(static_cast<double>(config.particles));
  std::vector<std::vector<std::string>> per_particle(config.particles);
  auto any_live_incomplete = [&] {
    return std::any_of(sys.particles().begin(), sys.particles().end(),
                       [](const Particle& p) { return p.live_incomplete(); });
  };

  std::size_t step = 0;
  while (any_live_incomplete()) {
    const auto t0 = std::chrono::steady_clock::now();
    pool.parallel_for(config.particles, [&](std::size_t i) {
      Particle& p = sys.particles()[i];
      if (p.live_incomplete()) engine.extend(p, per_particle[i]);
    });
    for (auto& d : per_particle) {
      for (auto& s : d) result.diagnostics.push_back(std::move(s));
      d.clear();
    }

    StepDiagnostic diag;
    diag.step = step++;
    diag.ess = sys.current_ess();
    const double log_total = sys.log_total_weight();
    diag.log_mean_weight = log_total == kNegInf ? kNegInf : log_total - log_n;
    if (log_total == kNegInf) {
      result.status = RunStatus::AllDead;
      result.diagnostics.push_back("all particles dead after step " + std::to_string(diag.step));
    } else if (method_resamples(config.method) && any_live_incomplete()) {
      diag.resampled = sys.maybe_resample();
    }
    diag.live_incomplete = static_cast<std::size_t>(std::count_if(
        sys.particles().begin(), sys.particles().end(), [](const Particle& p) { return p.live_incomplete(); }));
    diag.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.steps.push_back(diag);
    if (result.status == RunStatus::AllDead) break;
  }

  std::vector<double> final_lw;
  for (const auto& p : sys.particles()) {
    result.particles.push_back(engine.record(p, result.diagnostics));
    final_lw.push_back(p.complete ? p.log_weight : kNegInf);
  }
  result.log_evidence = log_mean_exp(final_lw);
  if (result.log_evidence == kNegInf) result.status = RunStatus::AllDead;
  result.resample_count = sys.resample_count();
  return result;
}

// ---------------------------------------------------------------------------

std::vector<double> RunResult::normalized_weights() const {
  std::vector<double> lw;
  for (const auto& p : particles) lw.push_back(p.complete ? p.log_weight : kNegInf);
  std::vector<double> out(lw.size(), 0.0);
  const double total = log_sum_exp(lw);
  if (total == kNegInf) return out;
  for (std::size_t i = 0; i < lw.size(); ++i) out[i] = lw[i] == kNegInf ? 0.0 : std::exp(lw[i] - total);
  return out;
}

std::map<std::string, double> RunResult::posterior() const {
  std::map<std::string, double> out;
  const auto w = normalized_weights();
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] > 0.0) out[particles[i].text] += w[i];
  return out;
}

std::optional<std::size_t> RunResult::sample_output(Rng& rng) const {
  const auto w = normalized_weights();
  double total = 0.0;
  for (double x : w) total += x;
  if (!(total > 0.0)) return std::nullopt;
  return rng.categorical(w);
}

namespace {
nlohmann::json number_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }
}  // namespace

nlohmann::json RunResult::to_json(bool include_steps) const {
  nlohmann::json j;
  j["method"] = method_name(method);
  j["seed"] = seed;
  j["status"] = status == RunStatus::Ok ? "ok" : "all_dead";
  j["log_evidence"] = number_or_null(log_evidence);
  j["resample_count"] = resample_count;
  auto ps = nlohmann::json::array();
  for (const auto& p : particles) {
    ps.push_back({{"tokens", p.tokens},
                  {"text", p.text},
                  {"log_weight", number_or_null(p.log_weight)},
                  {"complete", p.complete}});
  }
  j["particles"] = ps;
  auto post = nlohmann::json::object();
  for (const auto& [k, v] : posterior()) post[k] = v;
  j["posterior"] = post;
  if (include_steps) {
    auto st = nlohmann::json::array();
    for (const auto& s : steps) {
      st.push_back({{"step", s.step},
                    {"ess", s.ess},
                    {"resampled", s.resampled},
                    {"log_mean_weight", number_or_null(s.log_mean_weight)},
                    {"live_incomplete", s.live_incomplete},
                    {"wall_ms", s.wall_ms}});
    }
    j["steps"] = st;
  }
  j["diagnostics"] = diagnostics;
  return j;
}

// ---------------------------------------------------------------------------

std::vector<Group> group_and_score(const RunResult& result,
                                   const std::function<std::string(const ParticleRecord&)>& key,
                                   const std::function<double(const std::string& key)>& score) {
  const auto w = result.normalized_weights();
  std::map<std::string, Group> groups;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    const std::string k = key(result.particles[i]);
    Group& g = groups[k];
    g.key = k;
    g.mass += w[i];
    ++g.members;
  }
  std::vector<Group> out;
  for (auto& [k, g] : groups) {
    g.score = score(k);
    out.push_back(g);
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("pearson: length mismatch");
  if (x.size() < 2) throw Error("pearson: need at least two points");
  double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    mx += dx / n;
    my += dy / n;
    sxx += dx * (x[i] - mx);
    syy += dy * (y[i] - my);
    sxy += dx * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nan("");
  return sxy / std::sqrt(sxx * syy);
}

double total_variation(const std::map<std::string, double>& p, const std::map<std::string, double>& q) {
  double tv = 0.0;
  for (const auto& [k, v] : p) {
    auto it = q.find(k);
    tv += std::abs(v - (it == q.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : q)
    if (!p.count(k)) tv += std::abs(v);
  return 0.5 * tv;
}

}  // namespace smcgen
