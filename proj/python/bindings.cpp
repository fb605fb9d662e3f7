#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "smcgen/runner.hpp"

namespace py = pybind11;
using smcgen::RunSpec;

namespace {

// JSON crosses the boundary as text; the Python wrapper decodes it.
RunSpec spec_from(const std::string& text) { return RunSpec::from_json(nlohmann::json::parse(text)); }

std::string run_spec(const std::string& spec_json) {
  const RunSpec spec = spec_from(spec_json);
  const auto prepared = smcgen::prepare(spec, smcgen::parse_method(spec.method));
  const auto results = smcgen::run_seeds(prepared, spec.seeds.expand(), spec.workers);
  auto out = nlohmann::json::array();
  const std::string hash = spec.hash();
  for (const auto& r : results) {
    nlohmann::json j = r.to_json();
    j["config_hash"] = hash;
    out.push_back(std::move(j));
  }
  return out.dump();
}

py::tuple quality(const std::string& spec_json) {
  std::ostringstream log;
  const auto report = smcgen::cmd_quality(spec_from(spec_json), log);
  return py::make_tuple(report.csv, report.summary.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sequential Monte Carlo for constrained generation";

  py::register_exception<smcgen::Error>(m, "SmcgenError", PyExc_RuntimeError);
  py::register_exception<smcgen::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("instance_names", &smcgen::instance_names);
  m.def("method_names", [] {
    std::vector<std::string> out;
    for (auto method : smcgen::all_methods()) out.push_back(smcgen::method_name(method));
    return out;
  });
  m.def("recognize",
        [](const std::string& grammar, const py::bytes& text) {
          const auto g = smcgen::parse_grammar(grammar);
          const auto r = smcgen::recognize(g, std::string(text));
          return py::make_tuple(r.valid_prefix, r.complete_member);
        },
        py::arg("grammar"), py::arg("text"));
  m.def("ess", [](const std::vector<double>& log_weights) { return smcgen::ess(log_weights); });
  m.def("welch",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          return smcgen::compare_methods(a, b).to_json().dump();
        });
  m.def("enumerate_json", [](const std::string& instance, std::size_t node_cap) {
    return smcgen::cmd_enumerate(instance, node_cap).dump();
  });
  m.def("validate_spec_json", [](const std::string& spec_json) { return spec_from(spec_json).to_json().dump(); });
  m.def("spec_hash", [](const std::string& spec_json) { return spec_from(spec_json).hash(); });
  m.def("run_json", &run_spec, py::call_guard<py::gil_scoped_release>());
  m.def("quality_json", &quality);
  m.def("compare_json", [](const std::string& csv) { return smcgen::cmd_compare(csv).dump(); });
  m.def("bench_json", [](std::size_t vocab_size, std::size_t particles, std::size_t runs) {
    smcgen::BenchOptions o;
    o.vocab_size = vocab_size;
    o.particles = particles;
    o.runs = runs;
    std::ostringstream log;
    return smcgen::cmd_bench(o, log).dump();
  });
}
