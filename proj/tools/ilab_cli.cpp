#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ilab/harness.hpp"

using nlohmann::json;

namespace {

struct Common {
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string out;
    std::string format = "csv";
};

ilab::Format format_of(const std::string& s) { return s == "json" ? ilab::Format::json : ilab::Format::csv; }

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
    cmd->add_option("--seed", c.seed, "override the master seed");
    cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
    if (with_out) cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

void print_rows(const ilab::ScenarioResult& r) {
    for (const auto& row : r.rows)
        fmt::print("{} {} T={} {} {}: empirical {:.6g} +- {:.3g} vs {:.6g} (margin {:.3g})\n",
                   row.pass ? "PASS" : "FAIL", r.scenario_id, row.horizon, row.bound_id, ilab::side_name(row.side),
                   row.empirical, row.std_err, row.bound, row.margin);
}

int cmd_simulate(const std::string& config, const Common& c) {
    auto cfg = ilab::load_scenario(config);
    if (c.seed) cfg.master_seed = *c.seed;
    const auto r = ilab::run_scenario(cfg, c.threads);
    ilab::write_outputs(r, c.out.empty() ? cfg.output_dir : c.out, format_of(c.format));
    print_rows(r);
    return r.passed ? 0 : 1;
}

int cmd_bounds(const std::string& id, const std::string& params, const Common& c) {
    json p;
    try {
        p = json::parse(params);
    } catch (const json::parse_error& e) {
        throw ilab::ConfigError(std::string("--params is not valid JSON: ") + e.what());
    }
    if (!p.is_object()) throw ilab::ConfigError("--params must be a JSON object");
    std::map<std::string, double> m;
    for (const auto& [k, v] : p.items()) {
        if (!v.is_number()) throw ilab::ConfigError("parameter '" + k + "' must be a number");
        m[k] = v.get<double>();
    }
    const auto b = ilab::evaluate_bound(id, m);
    if (format_of(c.format) == ilab::Format::json)
        std::cout << ilab::bound_json(b).dump(2) << "\n";
    else
        std::cout << ilab::bounds_csv({b});
    return b.valid ? 0 : 1;
}

int cmd_verify(const std::string& manifest, const Common& c) {
    const auto m = ilab::load_manifest(manifest);
    const auto s = ilab::verify_suite(m, c.threads, c.seed, c.out.empty() ? std::nullopt : std::optional(c.out),
                                      format_of(c.format));
    for (const auto& r : s.results) print_rows(r);
    for (const auto& w : s.warnings) spdlog::warn("{}", w);
    for (const auto& f : s.failures) spdlog::error("{}", f);
    fmt::print("{}: {} scenarios, {} failures\n", s.passed ? "PASS" : "FAIL", s.results.size(), s.failures.size());
    return s.passed ? 0 : 1;
}

int cmd_sweep(int d, double K, double c_min, double c_max, int points, const Common& c) {
    const auto sw = ilab::sweep_scaling(d, K, ilab::log_grid(c_min, c_max, points));
    for (double C : sw.skipped) spdlog::warn("budget C={} is infeasible and was skipped", ilab::fmt_double(C));
    const bool json_out = format_of(c.format) == ilab::Format::json;
    const std::string body = json_out ? ilab::scaling_json(sw).dump(2) + "\n" : ilab::scaling_csv(sw);
    if (!c.out.empty())
        ilab::write_atomic(c.out + (json_out ? "/scaling.json" : "/scaling.csv"), body);
    std::cout << body;
    if (!json_out)
        fmt::print("# slope {} +- {}\n", ilab::fmt_double(sw.slope), ilab::fmt_double(sw.slope_half_width));
    return 0;
}

// Quick end-to-end pass over cheap checks; the full suite is the acceptance binary.
int cmd_selftest(const Common& c) {
    bool ok = true;
    auto check = [&](bool pass, const std::string& what) {
        fmt::print("{} {}\n", pass ? "PASS" : "FAIL", what);
        ok = ok && pass;
    };
    const auto b = ilab::linreg_upper(5, 0.25, 100);
    check(b.valid && b.value > 0.0, "linreg_upper evaluates");
    const auto sw = ilab::sweep_scaling(4, 4, ilab::log_grid(1e6, 1e10, 9));
    check(sw.rows.size() == 9, "scaling sweep covers the grid");
    auto cfg = ilab::parse_scenario(ilab::builtin_scenario("linreg_baseline"));
    cfg.replicates = 200;
    if (c.seed) cfg.master_seed = *c.seed;
    const auto r1 = ilab::run_scenario(cfg, c.threads);
    const auto r2 = ilab::run_scenario(cfg, c.threads);
    check(ilab::curve_csv(r1) == ilab::curve_csv(r2), "scenario output is reproducible");
    check(r1.passed, "linreg sandwich at 200 replicates");
    try {
        ilab::evaluate_bound("no_such_bound", {});
        check(false, "unknown bound id rejected");
    } catch (const std::invalid_argument&) {
        check(true, "unknown bound id rejected");
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ilab: Bayesian sequential prediction error experiments"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "log progress");

    Common common;
    std::string config, bound_id, params = "{}", manifest;
    int d = 4, points = 9;
    double K = 4, c_min = 1e6, c_max = 1e10;

    auto* sim = app.add_subcommand("simulate", "run one scenario (built-in name or JSON file)");
    sim->add_option("config", config)->required();
    add_common(sim, common);

    auto* bnd = app.add_subcommand("bounds", "evaluate a closed-form bound");
    bnd->add_option("bound_id", bound_id)->required();
    bnd->add_option("--params", params, "JSON object of parameters");
    add_common(bnd, common, false);

    auto* ver = app.add_subcommand("verify", "run a manifest of scenarios (or 'desk_suite')");
    ver->add_option("manifest", manifest)->required();
    add_common(ver, common);

    auto* swp = app.add_subcommand("sweep-scaling", "compute-optimal width over a budget grid");
    swp->add_option("--d", d)->check(CLI::PositiveNumber);
    swp->add_option("--K", K);
    swp->add_option("--c-min", c_min);
    swp->add_option("--c-max", c_max);
    swp->add_option("--points", points)->check(CLI::PositiveNumber);
    add_common(swp, common);

    auto* self = app.add_subcommand("selftest", "fast smoke checks");
    add_common(self, common, false);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

    try {
        if (*sim) return cmd_simulate(config, common);
        if (*bnd) return cmd_bounds(bound_id, params, common);
        if (*ver) return cmd_verify(manifest, common);
        if (*swp) return cmd_sweep(d, K, c_min, c_max, points, common);
        if (*self) return cmd_selftest(common);
    } catch (const std::invalid_argument& e) {
        spdlog::error("config error: {}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 1;
}
