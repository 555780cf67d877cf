#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ilab/bounds.hpp"
#include "ilab/harness.hpp"
#include "ilab/info.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

// Structured values cross the boundary as JSON text; the Python side decodes.
std::string bound_text(const std::string& id, const std::map<std::string, double>& params) {
    return ilab::bound_json(ilab::evaluate_bound(id, params)).dump();
}

std::string scaling_text(int d, double K, const std::vector<double>& grid) {
    return ilab::scaling_json(ilab::sweep_scaling(d, K, grid)).dump();
}

std::string scenario_text(const std::string& config, int threads) {
    const auto cfg = ilab::parse_scenario(json::parse(config));
    return ilab::result_json(ilab::run_scenario(cfg, threads)).dump();
}

std::string builtin_text(const std::string& name) { return ilab::builtin_scenario(name).dump(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    py::register_exception<ilab::ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("bound_ids", &ilab::bound_ids);
    m.def("_evaluate_bound", &bound_text, py::arg("bound_id"), py::arg("params"));
    m.def("_sweep_scaling", &scaling_text, py::arg("d"), py::arg("K"), py::arg("budgets"));
    m.def("log_grid", &ilab::log_grid, py::arg("lo"), py::arg("hi"), py::arg("points"));
    m.def("builtin_scenario_names", &ilab::builtin_scenario_names);
    m.def("_builtin_scenario", &builtin_text, py::arg("name"));
    m.def("_run_scenario", &scenario_text, py::arg("config"), py::arg("threads") = 1,
          py::call_guard<py::gil_scoped_release>());

    m.def("lambert_w", &ilab::lambert_w, py::arg("x"));
    m.def("binary_kl_logits", &ilab::binary_kl_logits, py::arg("x"), py::arg("y"));
    m.def("dirmult_expected_unique", &ilab::dirmult_expected_unique, py::arg("n"), py::arg("K"), py::arg("N"));
    m.def("crp_expected_unique", &ilab::crp_expected_unique, py::arg("n"), py::arg("K"));
    m.def("entropy", [](const std::vector<double>& p) { return ilab::entropy_pmf(p); }, py::arg("p"));
    m.def("kl", [](const std::vector<double>& p, const std::vector<double>& q) { return ilab::kl_pmf(p, q); },
          py::arg("p"), py::arg("q"));
}
