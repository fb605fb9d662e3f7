#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "smcgen/runner.hpp"

namespace {

constexpr int kExitError = 1;
constexpr int kExitConfig = 3;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw smcgen::Error("cannot write '" + path + "'");
  f << text;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw smcgen::Error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smcgen: sequential Monte Carlo for constrained generation"};
  app.require_subcommand(1);

  smcgen::TrainOptions train;
  std::string delimiter = "\\n";
  auto* train_cmd = app.add_subcommand("train", "train a byte-level n-gram model on a corpus");
  train_cmd->add_option("--corpus", train.corpus_path, "corpus file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out_path, "model file to write")->required();
  train_cmd->add_option("--order", train.order, "n-gram order (>= 1)")->capture_default_str();
  train_cmd->add_option("--smoothing", train.smoothing, "additive smoothing")->capture_default_str();
  train_cmd->add_option("--delimiter", delimiter, "document delimiter (\\n, ; ...)")->capture_default_str();
  train_cmd->add_option("--merge", train.merges, "multi-byte token to add to the vocabulary (repeatable)");
  train_cmd->add_option("--heldout-every", train.heldout_every, "hold out every k-th document")
      ->capture_default_str();

  std::string spec_path;
  smcgen::RunOverrides overrides;
  auto* run_cmd = app.add_subcommand("run", "run one method for every seed in a spec; writes JSON lines");
  run_cmd->add_option("--spec", spec_path, "run spec (JSON)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", overrides.seed, "run a single seed");
  run_cmd->add_option("--particles", overrides.particles, "particle count");
  run_cmd->add_option("--out", overrides.out, "output file (default: spec 'out' or stdout)");
  run_cmd->add_option("--workers", overrides.workers, "worker threads");
  run_cmd->add_option("--method", overrides.method, "method name");

  std::string instance;
  std::string enum_out;
  std::size_t node_cap = 2000000;
  auto* enum_cmd = app.add_subcommand("enumerate", "exhaustive oracle for an enumerable instance");
  enum_cmd->add_option("--instance", instance, "instance name")->required();
  enum_cmd->add_option("--out", enum_out, "oracle file (default stdout)");
  enum_cmd->add_option("--node-cap", node_cap, "maximum prefixes visited")->capture_default_str();

  std::string quality_spec;
  smcgen::RunOverrides quality_overrides;
  auto* quality_cmd = app.add_subcommand("quality", "quality estimates for two or more methods");
  quality_cmd->add_option("--spec", quality_spec, "run spec with 'methods'")->required()->check(CLI::ExistingFile);
  quality_cmd->add_option("--particles", quality_overrides.particles, "particle count");
  quality_cmd->add_option("--workers", quality_overrides.workers, "worker threads");
  quality_cmd->add_option("--out", quality_overrides.out, "output prefix; writes <prefix>.csv and <prefix>.json");

  std::string compare_csv;
  std::string compare_out;
  auto* compare_cmd = app.add_subcommand("compare", "pairwise Welch tests over a quality CSV");
  compare_cmd->add_option("--csv", compare_csv, "CSV produced by 'quality'")->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--out", compare_out, "summary file (default stdout)");

  smcgen::BenchOptions bench;
  std::string bench_out;
  auto* bench_cmd = app.add_subcommand("bench", "time per-token FullSMC steps with the character proposal");
  bench_cmd->add_option("--vocab-size", bench.vocab_size)->capture_default_str();
  bench_cmd->add_option("--particles", bench.particles)->capture_default_str();
  bench_cmd->add_option("--runs", bench.runs)->capture_default_str();
  bench_cmd->add_option("--max-steps", bench.max_steps)->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed)->capture_default_str();
  bench_cmd->add_option("--budget-ms", bench.budget_ms)->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "report file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      if (delimiter == "\\n")
        train.delimiter = '\n';
      else if (delimiter.size() == 1)
        train.delimiter = delimiter[0];
      else
        throw smcgen::ConfigError("--delimiter", "must be a single byte or \\n");
      smcgen::cmd_train(train, std::cerr);
      return 0;
    }
    if (*run_cmd) {
      const smcgen::RunSpec spec = smcgen::apply_overrides(smcgen::RunSpec::load(spec_path), overrides);
      if (spec.out.empty() || spec.out == "-") return smcgen::cmd_run(spec, std::cout, std::cerr);
      std::ofstream f(spec.out, std::ios::binary | std::ios::trunc);
      if (!f) throw smcgen::Error("cannot write '" + spec.out + "'");
      return smcgen::cmd_run(spec, f, std::cerr);
    }
    if (*enum_cmd) {
      write_text(enum_out, smcgen::cmd_enumerate(instance, node_cap).dump(2) + "\n");
      return 0;
    }
    if (*quality_cmd) {
      const smcgen::RunSpec spec = smcgen::apply_overrides(smcgen::RunSpec::load(quality_spec), quality_overrides);
      const auto report = smcgen::cmd_quality(spec, std::cerr);
      if (spec.out.empty() || spec.out == "-") {
        std::cout << report.csv << "\n" << report.summary.dump(2) << "\n";
      } else {
        write_text(spec.out + ".csv", report.csv);
        write_text(spec.out + ".json", report.summary.dump(2) + "\n");
      }
      return 0;
    }
    if (*compare_cmd) {
      write_text(compare_out, smcgen::cmd_compare(read_text(compare_csv)).dump(2) + "\n");
      return 0;
    }
    if (*bench_cmd) {
      write_text(bench_out, smcgen::cmd_bench(bench, std::cerr).dump(2) + "\n");
      return 0;
    }
  } catch (const smcgen::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return 0;
}
