#include "smcgen/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "smcgen/remote_lm.hpp"
#include "smcgen/thread_pool.hpp"

namespace smcgen {

ConfigError::ConfigError(const std::string& path, const std::string& message)
    : Error(path + ": " + message), path_(path) {}

std::vector<std::uint64_t> SeedSpec::expand() const {
  if (!range) return list;
  std::vector<std::uint64_t> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(start + i);
  return out;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json num_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : ", ") + x;
  return out;
}

std::size_t positive_int(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) throw ConfigError(path, "must be a positive integer");
  return v.get<std::size_t>();
}

std::uint64_t nonnegative_int(const nlohmann::json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError(path, "must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::string string_field(const nlohmann::json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "must be a string");
  return v.get<std::string>();
}

std::string one_of(const nlohmann::json& v, const std::string& path, const std::vector<std::string>& valid) {
  const std::string s = string_field(v, path);
  if (std::find(valid.begin(), valid.end(), s) == valid.end())
    throw ConfigError(path, "'" + s + "' is not one of: " + join(valid));
  return s;
}

std::vector<std::string> method_names() {
  std::vector<std::string> out;
  for (Method m : all_methods()) out.push_back(method_name(m));
  return out;
}

std::string validated_method(const nlohmann::json& v, const std::string& path) {
  const std::string s = string_field(v, path);
  try {
    parse_method(s);
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

nlohmann::json RunSpec::to_json() const {
  nlohmann::json j;
  j["instance"] = instance;
  j["grammar"] = grammar;
  j["lm"] = {{"kind", lm.kind}, {"path", lm.path}, {"endpoint", lm.endpoint}, {"timeout_ms", lm.timeout_ms}};
  j["potentials"] = potentials ? *potentials : nlohmann::json(nullptr);
  j["method"] = method;
  j["methods"] = methods;
  j["proposal"] = proposal;
  j["particles"] = particles;
  j["step_unit"] = step_unit;
  j["max_steps"] = max_steps ? nlohmann::json(*max_steps) : nlohmann::json(nullptr);
  j["ess_threshold"] = ess_threshold;
  j["resample_complete"] = resample_complete;
  j["fault_policy"] = fault_policy;
  if (seeds.range)
    j["seeds"] = {{"start", seeds.start}, {"count", seeds.count}};
  else
    j["seeds"] = seeds.list;
  j["workers"] = workers;
  j["out"] = out;
  return j;
}

RunSpec RunSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("$", "run spec must be a JSON object");
  static const std::set<std::string> known = {
      "instance", "grammar", "lm", "potentials", "method", "methods", "proposal", "particles", "step_unit",
      "max_steps", "ess_threshold", "resample_complete", "fault_policy", "seeds", "workers", "out"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("$." + k, "unknown field");

  RunSpec s;
  if (!j.contains("instance")) throw ConfigError("$.instance", "required");
  s.instance = one_of(j["instance"], "$.instance", instance_names());

  if (j.contains("grammar") && !j["grammar"].is_null()) {
    s.grammar = string_field(j["grammar"], "$.grammar");
    if (!s.grammar.empty() && !std::filesystem::exists(s.grammar))
      throw ConfigError("$.grammar", "file '" + s.grammar + "' does not exist");
  }

  if (j.contains("lm") && !j["lm"].is_null()) {
    const auto& lm = j["lm"];
    if (!lm.is_object()) throw ConfigError("$.lm", "must be an object");
    for (const auto& [k, v] : lm.items())
      if (k != "kind" && k != "path" && k != "endpoint" && k != "timeout_ms") throw ConfigError("$.lm." + k, "unknown field");
    if (lm.contains("kind")) s.lm.kind = one_of(lm["kind"], "$.lm.kind", {"instance", "ngram", "remote", "uniform"});
    if (lm.contains("path")) s.lm.path = string_field(lm["path"], "$.lm.path");
    if (lm.contains("endpoint")) s.lm.endpoint = string_field(lm["endpoint"], "$.lm.endpoint");
    if (lm.contains("timeout_ms")) s.lm.timeout_ms = positive_int(lm["timeout_ms"], "$.lm.timeout_ms");
    if (s.lm.kind == "ngram") {
      if (s.lm.path.empty()) throw ConfigError("$.lm.path", "required for an ngram model");
      if (!std::filesystem::exists(s.lm.path)) throw ConfigError("$.lm.path", "file '" + s.lm.path + "' does not exist");
    }
    if (s.lm.kind == "remote" && s.lm.endpoint.empty() && !std::getenv(kEndpointEnv))
      throw ConfigError("$.lm.endpoint", std::string("required for a remote model (or set ") + kEndpointEnv + ")");
  }

  if (j.contains("potentials") && !j["potentials"].is_null()) {
    const auto& ps = j["potentials"];
    if (!ps.is_array()) throw ConfigError("$.potentials", "must be an array");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const std::string path = "$.potentials[" + std::to_string(i) + "]";
      if (!ps[i].is_object()) throw ConfigError(path, "must be an object");
      if (!ps[i].contains("name")) throw ConfigError(path + ".name", "required");
      one_of(ps[i]["name"], path + ".name", potential_names());
    }
    s.potentials = ps;
  }

  if (j.contains("method")) s.method = validated_method(j["method"], "$.method");
  if (j.contains("methods")) {
    if (!j["methods"].is_array()) throw ConfigError("$.methods", "must be an array of method names");
    for (std::size_t i = 0; i < j["methods"].size(); ++i)
      s.methods.push_back(validated_method(j["methods"][i], "$.methods[" + std::to_string(i) + "]"));
  }
  if (j.contains("proposal")) s.proposal = one_of(j["proposal"], "$.proposal", {"exact", "character"});
  if (j.contains("particles")) s.particles = positive_int(j["particles"], "$.particles");
  if (j.contains("step_unit")) s.step_unit = one_of(j["step_unit"], "$.step_unit", {"token", "semantic_unit"});
  if (j.contains("max_steps") && !j["max_steps"].is_null()) s.max_steps = positive_int(j["max_steps"], "$.max_steps");
  if (j.contains("ess_threshold")) {
    const auto& v = j["ess_threshold"];
    if (!v.is_number() || !(v.get<double>() > 0.0 && v.get<double>() <= 1.0))
      throw ConfigError("$.ess_threshold", "must be a number in (0, 1]");
    s.ess_threshold = v.get<double>();
  }
  if (j.contains("resample_complete")) {
    if (!j["resample_complete"].is_boolean()) throw ConfigError("$.resample_complete", "must be a boolean");
    s.resample_complete = j["resample_complete"];
  }
  if (j.contains("fault_policy")) s.fault_policy = one_of(j["fault_policy"], "$.fault_policy", {"zero", "raise"});
  if (j.contains("seeds")) {
    const auto& v = j["seeds"];
    if (v.is_object()) {
      for (const auto& [k, x] : v.items())
        if (k != "start" && k != "count") throw ConfigError("$.seeds." + k, "unknown field");
      s.seeds.range = true;
      if (v.contains("start")) {
        s.seeds.start = nonnegative_int(v["start"], "$.seeds.start");
      }
      if (v.contains("count")) s.seeds.count = positive_int(v["count"], "$.seeds.count");
    } else if (v.is_array()) {
      if (v.empty()) throw ConfigError("$.seeds", "must not be empty");
      s.seeds.range = false;
      for (std::size_t i = 0; i < v.size(); ++i) {
        s.seeds.list.push_back(nonnegative_int(v[i], "$.seeds[" + std::to_string(i) + "]"));
      }
    } else {
      throw ConfigError("$.seeds", "must be {\"start\", \"count\"} or an array of integers");
    }
  }
  if (j.contains("workers")) s.workers = positive_int(j["workers"], "$.workers");
  if (j.contains("out") && !j["out"].is_null()) s.out = string_field(j["out"], "$.out");
  return s;
}

RunSpec RunSpec::load(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("$", std::string("invalid JSON: ") + e.what());
  }
  return from_json(j);
}

std::string RunSpec::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json().dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

Prepared prepare(const RunSpec& spec, Method method) {
  Prepared p;
  Instance& inst = p.instance;
  inst = make_instance(spec.instance);

  std::shared_ptr<const LanguageModel> lm = inst.lm;
  if (spec.lm.kind == "ngram") {
    try {
      lm = std::make_shared<NgramModel>(NgramModel::load(spec.lm.path));
    } catch (const Error& e) {
      throw ConfigError("$.lm.path", e.what());
    }
  } else if (spec.lm.kind == "remote") {
    const char* env = std::getenv(kEndpointEnv);
    const std::string endpoint = env && *env ? std::string(env) : spec.lm.endpoint;
    if (endpoint.empty()) throw ConfigError("$.lm.endpoint", "no endpoint configured");
    lm = std::make_shared<RemoteModel>(endpoint, *inst.vocab, static_cast<double>(spec.lm.timeout_ms) / 1000.0);
  } else if (spec.lm.kind == "uniform") {
    lm = std::make_shared<CategoricalModel>(CategoricalModel::uniform(*inst.vocab));
  }
  if (lm != inst.lm) {
    if (!(lm->vocabulary() == *inst.vocab)) {
      inst.enumerable = false;
      inst.analytic_z.reset();
      p.warnings.push_back("LM vocabulary differs from the instance's; potentials rebuilt for the new vocabulary");
    }
    inst.lm = lm;
    inst.vocab = std::make_shared<const Vocabulary>(lm->vocabulary());
    if (spec.lm.kind != "uniform") inst.analytic_z.reset();
  }

  if (!spec.grammar.empty()) {
    try {
      inst.grammar_text = read_file(spec.grammar);
      inst.grammar = std::make_shared<const Grammar>(parse_grammar(inst.grammar_text));
    } catch (const Error& e) {
      throw ConfigError("$.grammar", e.what());
    }
    inst.analytic_z.reset();
  }

  const nlohmann::json specs = spec.potentials ? *spec.potentials : inst.potential_specs;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    try {
      make_potential(specs[i], inst.vocab, inst.grammar);
    } catch (const Error& e) {
      throw ConfigError("$.potentials[" + std::to_string(i) + "]", e.what());
    }
  }
  install_potentials(inst, specs);
  if (spec.potentials || !spec.grammar.empty()) inst.analytic_z.reset();

  MethodConfig& c = p.config;
  c.method = method;
  c.proposal = parse_proposal(spec.proposal);
  c.efficient = inst.efficient;
  c.expensive = inst.expensive;
  c.particles = spec.particles;
  c.max_steps = spec.max_steps ? *spec.max_steps : inst.max_tokens + 1;
  c.step_unit = spec.step_unit == "token" ? StepUnit::Token : StepUnit::SemanticUnit;
  c.ess_threshold = spec.ess_threshold;
  c.resample_complete = spec.resample_complete;
  c.fault_policy = spec.fault_policy == "raise" ? FaultPolicy::Raise : FaultPolicy::ZeroScore;
  c.workers = 1;

  if (method == Method::BaseLM && !inst.efficient.empty())
    p.warnings.push_back("BaseLM ignores the grammar and efficient potentials while sampling");
  if ((method == Method::GrammarOnlyIS || method == Method::GrammarOnlySMC || method == Method::LocalDecoding) &&
      !inst.expensive.empty())
    p.warnings.push_back(method_name(method) + " ignores expensive potentials while sampling");
  if (c.proposal == ProposalKind::CharacterTrie && c.efficient.size() > 1)
    throw ConfigError("$.proposal", "the character proposal supports exactly one grammar potential");
  return p;
}

std::vector<RunResult> run_seeds(const Prepared& prepared, const std::vector<std::uint64_t>& seeds,
                                 std::size_t workers) {
  std::vector<RunResult> results(seeds.size());
  ThreadPool pool(std::min(std::max<std::size_t>(workers, 1), std::max<std::size_t>(seeds.size(), 1)));
  pool.parallel_for(seeds.size(),
                    [&](std::size_t i) { results[i] = run(prepared.config, *prepared.instance.lm, seeds[i]); });
  return results;
}

// ---------------------------------------------------------------------------

TrainReport cmd_train(const TrainOptions& opts, std::ostream& log) {
  if (opts.order == 0) throw ConfigError("--order", "must be at least 1");
  if (opts.smoothing < 0.0 || !std::isfinite(opts.smoothing)) throw ConfigError("--smoothing", "must be >= 0");
  const std::string corpus = read_file(opts.corpus_path);
  if (corpus.empty()) throw Error("corpus '" + opts.corpus_path + "' is empty");

  std::string alphabet;
  for (char c : corpus)
    if (c != opts.delimiter) alphabet.push_back(c);
  if (alphabet.empty()) throw Error("corpus '" + opts.corpus_path + "' has no text besides delimiters");
  Vocabulary vocab = opts.merges.empty() ? Vocabulary::bytes(alphabet) : merged_vocabulary(alphabet, opts.merges);

  NgramOptions nopts;
  nopts.order = opts.order;
  nopts.smoothing = opts.smoothing;
  nopts.delimiter = opts.delimiter;
  NgramModel model(vocab, nopts);

  const auto docs = split_documents(corpus, opts.delimiter);
  TrainReport rep;
  rep.vocab_size = vocab.size();
  std::string heldout;
  const bool split = docs.size() >= 2 && opts.heldout_every >= 2;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& [doc, terminated] = docs[i];
    if (split && i % opts.heldout_every == opts.heldout_every - 1) {
      heldout += doc;
      if (terminated) heldout.push_back(opts.delimiter);
      ++rep.heldout_documents;
    } else {
      model.add_document(vocab.tokenize(doc), terminated);
      ++rep.train_documents;
    }
  }
  if (heldout.empty()) heldout = corpus;
  try {
    rep.heldout_perplexity = model.perplexity(heldout);
  } catch (const CoverageError& e) {
    rep.heldout_perplexity = std::numeric_limits<double>::infinity();
    log << "warning: " << e.what() << "\n";
  }

  std::filesystem::path out(opts.out_path);
  if (out.has_parent_path() && !std::filesystem::exists(out.parent_path()))
    throw Error("cannot write '" + opts.out_path + "': directory does not exist");
  {
    std::ofstream f(opts.out_path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write '" + opts.out_path + "'");
  }
  model.save(opts.out_path);

  log << "vocabulary size: " << rep.vocab_size << "\n";
  log << "documents: " << rep.train_documents << " train, " << rep.heldout_documents << " held out\n";
  log << "held-out perplexity: " << std::setprecision(6) << rep.heldout_perplexity << "\n";
  return rep;
}

RunSpec apply_overrides(RunSpec spec, const RunOverrides& o) {
  if (o.seed) {
    spec.seeds.range = false;
    spec.seeds.list = {*o.seed};
  }
  if (o.particles) {
    if (*o.particles == 0) throw ConfigError("--particles", "must be a positive integer");
    spec.particles = *o.particles;
  }
  if (o.workers) {
    if (*o.workers == 0) throw ConfigError("--workers", "must be a positive integer");
    spec.workers = *o.workers;
  }
  if (o.out) spec.out = *o.out;
  if (o.method) spec.method = validated_method(*o.method, "--method");
  return spec;
}

int cmd_run(const RunSpec& spec, std::ostream& out, std::ostream& log) {
  const Prepared p = prepare(spec, parse_method(spec.method));
  for (const auto& w : p.warnings) log << "warning: " << w << "\n";
  const std::string hash = spec.hash();
  const auto results = run_seeds(p, spec.seeds.expand(), spec.workers);
  int code = 0;
  for (const auto& r : results) {
    nlohmann::json rec = r.to_json();
    rec["format"] = "smcgen-run";
    rec["version"] = 1;
    rec["config_hash"] = hash;
    rec["instance"] = spec.instance;
    rec["proposal"] = spec.proposal;
    rec["particles_requested"] = spec.particles;
    out << rec.dump() << "\n";
    if (r.status == RunStatus::AllDead) code = 2;
  }
  out.flush();
  if (code) log << "one or more runs ended with every particle dead\n";
  return code;
}

nlohmann::json cmd_enumerate(const std::string& instance, std::size_t node_cap) {
  const Instance inst = make_instance(instance);
  if (!inst.enumerable) throw Error("instance '" + instance + "' is not enumerable");
  const Enumeration e = enumerate_instance(inst, node_cap);
  nlohmann::json j = e.to_json();
  j["instance"] = instance;
  j["max_tokens"] = inst.max_tokens;
  j["analytic_Z"] = inst.analytic_z ? nlohmann::json(*inst.analytic_z) : nlohmann::json(nullptr);
  return j;
}

double quality_bound(const Enumeration& oracle, QualityTarget target, double std_error) {
  double z = oracle.z + oracle.truncation_bound;
  if (target == QualityTarget::Efficient) z = oracle.z_efficient + oracle.truncation_bound;
  if (target == QualityTarget::Rerank) z = oracle.z_rerank + oracle.rerank_truncation_bound;
  return std::log(z) + 2.0 * (std::isfinite(std_error) ? std_error : 0.0) + 1e-9;
}

QualityReport cmd_quality(const RunSpec& spec, std::ostream& log) {
  if (spec.methods.size() < 2) throw ConfigError("$.methods", "quality needs at least two methods");
  const auto seeds = spec.seeds.expand();
  const std::string hash = spec.hash();

  std::optional<Enumeration> oracle;
  {
    const Prepared probe = prepare(spec, parse_method(spec.methods.front()));
    if (probe.instance.enumerable && !spec.potentials && spec.grammar.empty() && spec.lm.kind == "instance") {
      EnumerationOptions eo;
      eo.max_tokens = probe.config.max_steps - 1;
      oracle = enumerate_target(*probe.instance.lm, probe.instance.efficient, probe.instance.expensive, eo);
    }
  }
  auto oracle_log_z = [&](QualityTarget t) -> std::optional<double> {
    if (!oracle) return std::nullopt;
    const double z = t == QualityTarget::Global      ? oracle->z
                     : t == QualityTarget::Efficient ? oracle->z_efficient
                                                     : oracle->z_rerank;
    return std::log(z);
  };

  std::ostringstream csv;
  csv << std::setprecision(17);
  csv << "method,instance,seed,target,accepted,estimate,corrected\n";
  nlohmann::json summary;
  summary["format"] = "smcgen-quality";
  summary["version"] = 1;
  summary["config_hash"] = hash;
  summary["instance"] = spec.instance;
  summary["runs"] = seeds.size();
  summary["oracle"] = oracle ? nlohmann::json{{"log_Z", num_or_null(std::log(oracle->z))},
                                              {"log_Z_efficient", num_or_null(std::log(oracle->z_efficient))},
                                              {"log_Z_rerank", num_or_null(std::log(oracle->z_rerank))},
                                              {"truncation_bound", oracle->truncation_bound},
                                              {"rerank_truncation_bound", oracle->rerank_truncation_bound}}
                             : nlohmann::json(nullptr);
  summary["methods"] = nlohmann::json::object();

  std::vector<std::pair<std::string, std::vector<double>>> samples;
  for (const auto& name : spec.methods) {
    const Method m = parse_method(name);
    Prepared p = prepare(spec, m);
    for (const auto& w : p.warnings) log << "warning: " << w << "\n";
    if (single_sample_method(m)) p.config.particles = 1;
    const auto results = run_seeds(p, seeds, spec.workers);
    const QualityTarget target = method_target(m);
    std::vector<double> values;
    std::vector<char> accepted;
    for (const auto& r : results) {
      values.push_back(run_quality_value(r));
      accepted.push_back(run_accepted(r, target) ? 1 : 0);
    }
    const RejectionQuality rq = rejection_quality(values, accepted, name, target_label(target));
    for (std::size_t i = 0; i < results.size(); ++i) {
      csv << name << "," << spec.instance << "," << seeds[i] << "," << target_label(target) << ","
          << (accepted[i] ? 1 : 0) << ",";
      if (accepted[i] && std::isfinite(values[i]))
        csv << values[i] << "," << values[i] + rq.log_acceptance;
      else
        csv << ",";
      csv << "\n";
    }
    nlohmann::json mj = rq.to_json();
    if (auto lz = oracle_log_z(target)) {
      mj["oracle_log_Z"] = num_or_null(*lz);
      mj["bound_respected"] = rq.corrected.point <= quality_bound(*oracle, target, rq.corrected.std_error);
    }
    summary["methods"][name] = mj;
    samples.emplace_back(name, rq.corrected_samples);
    log << name << ": " << rq.corrected.point << " +/- " << rq.corrected.std_error << " (acceptance "
        << rq.acceptance_rate << ")\n";
  }

  auto comps = nlohmann::json::array();
  for (std::size_t a = 0; a < samples.size(); ++a) {
    for (std::size_t b = a + 1; b < samples.size(); ++b) {
      nlohmann::json c{{"a", samples[a].first}, {"b", samples[b].first}};
      try {
        c["welch"] = compare_methods(samples[a].second, samples[b].second).to_json();
      } catch (const Error& e) {
        c["skipped"] = e.what();
      }
      comps.push_back(c);
    }
  }
  summary["comparisons"] = comps;
  return {csv.str(), summary};
}

nlohmann::json cmd_compare(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) throw Error("compare: empty CSV");
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  auto col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error("compare: CSV has no '" + name + "' column");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t mcol = col("method");
  const std::size_t ccol = col("corrected");
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> by_method;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    while (cells.size() < header.size()) cells.emplace_back();
    const std::string& m = cells[mcol];
    if (!by_method.count(m)) order.push_back(m);
    auto& v = by_method[m];
    if (!cells[ccol].empty()) v.push_back(std::stod(cells[ccol]));
  }
  if (order.size() < 2) throw Error("compare: need at least two methods in the CSV");
  auto out = nlohmann::json::array();
  for (std::size_t a = 0; a < order.size(); ++a) {
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      nlohmann::json c{{"a", order[a]}, {"b", order[b]}};
      try {
        c["welch"] = compare_methods(by_method[order[a]], by_method[order[b]]).to_json();
      } catch (const Error& e) {
        c["skipped"] = e.what();
      }
      out.push_back(c);
    }
  }
  return {{"comparisons", out}};
}

nlohmann::json cmd_bench(const BenchOptions& opts, std::ostream& log) {
  const Vocabulary vocab = synthetic_vocabulary(benchmark_alphabet(), opts.vocab_size, 4, opts.seed);
  auto lm = std::make_shared<SyntheticModel>(vocab, opts.seed, 1.0, 4.0);
  auto vptr = std::make_shared<const Vocabulary>(vocab);
  auto grammar = std::make_shared<const Grammar>(parse_grammar(benchmark_grammar_text()));

  MethodConfig c;
  c.method = Method::FullSMC;
  c.proposal = ProposalKind::CharacterTrie;
  c.efficient = {std::make_shared<CfgPotential>(grammar, vptr)};
  c.particles = opts.particles;
  c.max_steps = opts.max_steps;
  c.workers = 1;

  std::vector<double> step_ms;
  std::size_t tokens = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t r = 0; r < opts.runs; ++r) {
    const RunResult res = run(c, *lm, opts.seed + r);
    for (const auto& s : res.steps) step_ms.push_back(s.wall_ms);
    for (const auto& p : res.particles) tokens += p.tokens.size();
  }
  const double total_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (step_ms.empty()) throw Error("bench: no steps were executed");
  std::vector<double> sorted = step_ms;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  double mean = 0.0;
  for (double x : step_ms) mean += x;
  mean /= static_cast<double>(step_ms.size());

  nlohmann::json rep{{"format", "smcgen-bench"},
                     {"version", 1},
                     {"benchmark", "fullsmc_character_step"},
                     {"vocab_size", vocab.size()},
                     {"grammar_rules", grammar->rules().size()},
                     {"particles", opts.particles},
                     {"runs", opts.runs},
                     {"steps_measured", step_ms.size()},
                     {"tokens_generated", tokens},
                     {"median_step_ms", quantile(0.5)},
                     {"p90_step_ms", quantile(0.9)},
                     {"mean_step_ms", mean},
                     {"max_step_ms", sorted.back()},
                     {"total_ms", total_ms},
                     {"budget_ms", opts.budget_ms},
                     {"within_budget", quantile(0.5) <= opts.budget_ms}};
  log << "median FullSMC step: " << quantile(0.5) << " ms over " << step_ms.size() << " steps (budget "
      << opts.budget_ms << " ms)\n";
  return rep;
}

}  // namespace smcgen
