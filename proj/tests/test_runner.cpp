#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "smcgen/runner.hpp"

using namespace smcgen;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_error_path(const json& j) {
  try {
    RunSpec::from_json(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "smcgen_runner_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("runner") {
  TEST_CASE("specs round-trip through canonical JSON") {
    const json raw = {{"instance", "nested-parens"},
                      {"method", "FullIS"},
                      {"methods", {"FullIS", "LocalDecoding"}},
                      {"particles", 7},
                      {"seeds", {3, 5, 8}},
                      {"max_steps", 30},
                      {"potentials", json::array({{{"name", "cfg"}}})}};
    const auto spec = RunSpec::from_json(raw);
    const auto canon = spec.to_json();
    const auto again = RunSpec::from_json(canon);
    CHECK(again.to_json() == canon);
    CHECK(again.hash() == spec.hash());
    CHECK(spec.hash().size() == 16);
    CHECK(spec.seeds.expand() == std::vector<std::uint64_t>{3, 5, 8});
    auto other = spec;
    other.particles = 8;
    CHECK(other.hash() != spec.hash());
  }

  TEST_CASE("validation errors name the offending field") {
    const json ok = {{"instance", "ab-ba"}};
    CHECK(config_error_path(ok) == "<no error>");
    auto with = [&](const std::string& k, const json& v) {
      json j = ok;
      j[k] = v;
      return j;
    };
    CHECK(config_error_path(with("instance", "nope")) == "$.instance");
    CHECK(config_error_path(with("particels", 3)) == "$.particels");
    CHECK(config_error_path(with("particles", 0)) == "$.particles");
    CHECK(config_error_path(with("method", "Beam")) == "$.method");
    CHECK(config_error_path(with("methods", {"FullIS", "Beam"})) == "$.methods[1]");
    CHECK(config_error_path(with("proposal", "greedy")) == "$.proposal");
    CHECK(config_error_path(with("ess_threshold", 1.5)) == "$.ess_threshold");
    CHECK(config_error_path(with("step_unit", "line")) == "$.step_unit");
    CHECK(config_error_path(with("fault_policy", "ignore")) == "$.fault_policy");
    CHECK(config_error_path(with("workers", 0)) == "$.workers");
    CHECK(config_error_path(with("lm", {{"kind", "ngram"}, {"path", "/no/such/file.json"}})) == "$.lm.path");
    CHECK(config_error_path(with("lm", {{"kind", "ngram"}, {"pth", "x"}})) == "$.lm.pth");
    CHECK(config_error_path(with("lm", {{"kind", "magic"}})) == "$.lm.kind");
    CHECK(config_error_path(with("potentials", json::array({{{"name", "nope"}}}))) == "$.potentials[0].name");
    CHECK(config_error_path(with("grammar", "/no/such/grammar.bnf")) == "$.grammar");
    try {
      RunSpec::from_json(with("method", "Beam"));
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("GrammarOnlySMC") != std::string::npos);
    }
  }

  TEST_CASE("bad potential parameters fail before any run") {
    const auto spec = RunSpec::from_json(
        {{"instance", "nested-parens"}, {"potentials", json::array({{{"name", "depth_limit"}}})}});
    CHECK_THROWS_AS(prepare(spec, Method::FullSMC), ConfigError);
  }

  TEST_CASE("run writes one record per seed with the config hash") {
    const auto spec = RunSpec::from_json(
        {{"instance", "ab-ba"}, {"method", "FullSMC"}, {"particles", 10}, {"seeds", {{"start", 0}, {"count", 10}}}});
    std::ostringstream out, log;
    CHECK(cmd_run(spec, out, log) == 0);
    std::istringstream lines(out.str());
    std::string line;
    std::size_t n = 0;
    double mass_ab = 0.0;
    while (std::getline(lines, line)) {
      const auto rec = json::parse(line);
      CHECK(rec["config_hash"] == spec.hash());
      CHECK(rec["seed"] == n);
      for (const auto& [k, v] : rec["posterior"].items()) {
        CHECK((k == "ab" || k == "ba"));
        if (k == "ab") mass_ab += v.get<double>();
      }
      ++n;
    }
    CHECK(n == 10);
    CHECK(mass_ab / 10.0 == doctest::Approx(0.5).epsilon(0.2));
  }

  TEST_CASE("run returns 2 when every particle dies") {
    const auto spec = RunSpec::from_json({{"instance", "early-kill"}, {"particles", 4}, {"max_steps", 3}});
    std::ostringstream out, log;
    CHECK(cmd_run(spec, out, log) == 2);
    CHECK(log.str().find("every particle dead") != std::string::npos);
  }

  TEST_CASE("BaseLM with a grammar warns") {
    const auto spec = RunSpec::from_json({{"instance", "ab-ba"}, {"method", "BaseLM"}});
    const auto p = prepare(spec, Method::BaseLM);
    REQUIRE_FALSE(p.warnings.empty());
    CHECK(p.warnings.front().find("BaseLM") != std::string::npos);
  }

  TEST_CASE("seed and worker overrides apply and are validated") {
    auto spec = RunSpec::from_json({{"instance", "ab-ba"}});
    RunOverrides o;
    o.seed = 42;
    o.particles = 3;
    spec = apply_overrides(spec, o);
    CHECK(spec.seeds.expand() == std::vector<std::uint64_t>{42});
    CHECK(spec.particles == 3);
    RunOverrides bad;
    bad.workers = 0;
    CHECK_THROWS_AS(apply_overrides(spec, bad), ConfigError);
  }

  TEST_CASE("train is deterministic and writes a loadable model") {
    TrainOptions opts;
    opts.corpus_path = std::string(SMCGEN_DATA_DIR) + "/parens.txt";
    opts.out_path = scratch("m1.json").string();
    std::ostringstream log;
    const auto rep = cmd_train(opts, log);
    CHECK(rep.vocab_size == 3);
    CHECK(rep.heldout_documents > 0);
    CHECK(std::isfinite(rep.heldout_perplexity));
    CHECK(log.str().find("held-out perplexity:") != std::string::npos);
    auto opts2 = opts;
    opts2.out_path = scratch("m2.json").string();
    cmd_train(opts2, log);
    CHECK(slurp(opts.out_path) == slurp(opts2.out_path));
    CHECK(NgramModel::load(opts.out_path).vocabulary().size() == 3);

    auto zero = opts;
    zero.order = 0;
    CHECK_THROWS_WITH_AS(cmd_train(zero, log), doctest::Contains("--order"), ConfigError);
    auto missing = opts;
    missing.corpus_path = "/no/such/corpus.txt";
    CHECK_THROWS_AS(cmd_train(missing, log), Error);
    auto nodir = opts;
    nodir.out_path = "/no/such/dir/model.json";
    CHECK_THROWS_AS(cmd_train(nodir, log), Error);
  }

  TEST_CASE("a trained model plugs into a run spec") {
    TrainOptions opts;
    opts.corpus_path = std::string(SMCGEN_DATA_DIR) + "/parens.txt";
    opts.out_path = scratch("m3.json").string();
    std::ostringstream log;
    cmd_train(opts, log);
    const auto spec = RunSpec::from_json({{"instance", "nested-parens"},
                                          {"lm", {{"kind", "ngram"}, {"path", opts.out_path}}},
                                          {"particles", 5},
                                          {"seeds", {{"start", 0}, {"count", 2}}}});
    std::ostringstream out;
    CHECK(cmd_run(spec, out, log) == 0);
  }

  TEST_CASE("enumerate reports the analytic value") {
    const auto j = cmd_enumerate("ab-ba", 100000);
    CHECK(j["Z"].get<double>() == doctest::Approx(2.0 / 27.0));
    CHECK(j["analytic_Z"].get<double>() == doctest::Approx(2.0 / 27.0));
    CHECK_THROWS_AS(cmd_enumerate("toy-arithmetic", 1000), Error);
  }

  TEST_CASE("compare runs pairwise Welch tests over a CSV") {
    std::ostringstream csv;
    csv << "method,instance,seed,target,accepted,estimate,corrected\n";
    for (int i = 0; i < 40; ++i) {
      csv << "A,x," << i << ",t,1," << (i % 7) * 0.1 << "," << (i % 7) * 0.1 << "\n";
      csv << "B,x," << i << ",t,1," << 5 + (i % 5) * 0.1 << "," << 5 + (i % 5) * 0.1 << "\n";
      csv << "C,x," << i << ",t,0,,\n";
    }
    const auto j = cmd_compare(csv.str());
    REQUIRE(j["comparisons"].size() == 3);
    CHECK(j["comparisons"][0]["welch"]["band"] == "***");
    CHECK(j["comparisons"][1].contains("skipped"));
    CHECK_THROWS_AS(cmd_compare("method,estimate\n"), Error);
  }

  TEST_CASE("quality needs two methods and reports against the oracle") {
    auto spec = RunSpec::from_json({{"instance", "ab-ba"}, {"methods", {"FullIS"}}});
    std::ostringstream log;
    CHECK_THROWS_AS(cmd_quality(spec, log), ConfigError);
    spec = RunSpec::from_json({{"instance", "ab-ba"},
                               {"methods", {"FullIS", "LocalDecoding"}},
                               {"particles", 4},
                               {"seeds", {{"start", 0}, {"count", 30}}}});
    const auto rep = cmd_quality(spec, log);
    CHECK(rep.csv.rfind("method,instance,seed,target,accepted,estimate,corrected\n", 0) == 0);
    CHECK(rep.summary["oracle"]["log_Z"].get<double>() == doctest::Approx(std::log(2.0 / 27.0)));
  }
}
