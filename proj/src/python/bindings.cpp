#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "blis/cli.hpp"
#include "blis/forecaster.hpp"
#include "blis/metrics.hpp"
#include "blis/protocol.hpp"
#include "blis/sim_engine.hpp"

namespace py = pybind11;
using namespace blis;

namespace {

std::string run_json(const std::string& config_json, std::optional<std::uint64_t> seed, const std::string& base_dir) {
    const auto config = sim::parse_scenario(nlohmann::json::parse(config_json), base_dir);
    sim::RunResult result;
    {
        py::gil_scoped_release release;
        result = sim::run_scenario(config, seed.value_or(config.seed));
    }
    auto j = metrics::to_json(metrics::compute_metrics(result.log));
    j["aborted"] = result.stats.aborted;
    j["audit_failures"] = result.stats.audit_failures;
    j["manager_energy_j"] = result.stats.manager_energy_j;
    j["task_energy_j"] = result.stats.task_energy_j;
    return j.dump();
}

py::tuple cli_main(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::cli_dispatch(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
}

double forecast_rmse(const std::vector<double>& powers, double interval_s, const std::string& model, int epochs,
                     std::uint64_t seed) {
    std::vector<energy::TraceSample> samples;
    for (std::size_t k = 0; k < powers.size(); ++k) samples.push_back({static_cast<double>(k) * interval_s, powers[k]});
    const energy::HarvesterTrace trace(std::move(samples));
    const auto kind = forecast::parse_model_kind(model);
    if (!kind) throw Error(ErrorCode::InvalidArgument, "unknown model " + model);
    forecast::LstmConfig cfg;
    cfg.epochs = epochs;
    cfg.seed = seed;
    py::gil_scoped_release release;
    const auto m = forecast::make_model(*kind, trace.powers(), cfg, 0.5);
    return forecast::rmse(forecast::evaluate(m, trace));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Battery-less IoT network simulator";
    py::register_exception<Error>(m, "BlisError");

    m.def("run_json", &run_json, py::arg("config_json"), py::arg("seed") = py::none(), py::arg("base_dir") = "",
          "Run one scenario given as JSON text; returns the metrics as JSON text.");
    m.def("cli_main", &cli_main, py::arg("args"), "Run the CLI; returns (exit_code, stdout, stderr).");
    m.def(
        "describe_packet", [](const std::string& hex) { return protocol::describe_packet(protocol::parse_hex(hex)); },
        py::arg("hex"));
    m.def("forecast_rmse", &forecast_rmse, py::arg("powers"), py::arg("interval_s") = 1.0, py::arg("model") = "ewma",
          py::arg("epochs") = 400, py::arg("seed") = 1);
    m.attr("SCHEMA_VERSION") = metrics::kSchemaVersion;
}
