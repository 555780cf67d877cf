#include "ilab/harness.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace ilab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Strict view of a JSON object: every key must be consumed by a known name.
class Fields {
public:
    Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    bool has(const std::string& k) const { return j_.contains(k); }

    const json& at(const std::string& k) {
        seen_.insert(k);
        if (!j_.contains(k)) throw ConfigError(where_ + ": missing key '" + k + "'");
        return j_.at(k);
    }

    double num(const std::string& k) {
        const auto& v = at(k);
        if (!v.is_number()) throw ConfigError(where_ + ": key '" + k + "' must be a number");
        return v.get<double>();
    }
    double num(const std::string& k, double fallback) { return has(k) ? num(k) : (seen_.insert(k), fallback); }

    long integer(const std::string& k) {
        const auto& v = at(k);
        if (!v.is_number_integer()) throw ConfigError(where_ + ": key '" + k + "' must be an integer");
        return v.get<long>();
    }
    long integer(const std::string& k, long fallback) { return has(k) ? integer(k) : (seen_.insert(k), fallback); }

    std::string str(const std::string& k) {
        const auto& v = at(k);
        if (!v.is_string()) throw ConfigError(where_ + ": key '" + k + "' must be a string");
        return v.get<std::string>();
    }
    std::string str(const std::string& k, const std::string& fallback) {
        return has(k) ? str(k) : (seen_.insert(k), fallback);
    }

    std::vector<double> vec(const std::string& k) {
        const auto& v = at(k);
        if (!v.is_array()) throw ConfigError(where_ + ": key '" + k + "' must be an array");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(where_ + ": key '" + k + "' must hold numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    // Rejects whatever was not read.
    void done() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

int as_int(long v, const char* what) {
    if (v < 0 || v > 1'000'000'000) throw ConfigError(std::string("value of '") + what + "' is out of range");
    return static_cast<int>(v);
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

const std::set<std::string>& meta_bound_ids() {
    static const std::set<std::string> ids{"linrep_upper", "icl_upper"};
    return ids;
}

int tasks_of(const ProcessSpec& spec) {
    if (const auto* s = std::get_if<LinRepSpec>(&spec)) return s->tasks;
    if (const auto* s = std::get_if<IclSpec>(&spec)) return s->tasks;
    return 1;
}

}  // namespace

ProcessSpec parse_process(const json& j) {
    Fields f(j, "process");
    const std::string kind = f.str("kind");
    ProcessSpec spec;
    if (kind == "linreg") {
        LinRegSpec s;
        s.d = as_int(f.integer("d"), "d");
        s.sigma2 = f.num("sigma2");
        s.prior_var = f.num("prior_var", 0.0);
        spec = s;
    } else if (kind == "logreg") {
        spec = LogRegSpec{as_int(f.integer("d"), "d")};
    } else if (kind == "deepnet") {
        DeepNetSpec s;
        s.d = as_int(f.integer("d"), "d");
        s.width = as_int(f.integer("width"), "width");
        s.depth = as_int(f.integer("depth"), "depth");
        s.sigma2 = f.num("sigma2");
        spec = s;
    } else if (kind == "dirichlet_net") {
        DirichletNetSpec s;
        s.d = as_int(f.integer("d"), "d");
        s.K = f.num("K");
        s.sigma2 = f.num("sigma2", 1.0);
        s.tail_tol = f.num("tail_tol", 1e-8);
        const auto scale = f.str("scale", "sqrt_k");
        if (scale == "sqrt_k")
            s.scale = OutputScale::sqrt_k;
        else if (scale == "sqrt_k_plus_one")
            s.scale = OutputScale::sqrt_k_plus_one;
        else
            throw ConfigError("process: unknown scale '" + scale + "'");
        const auto link = f.str("link", "gaussian");
        if (link == "gaussian")
            s.link = Link::gaussian;
        else if (link == "logistic")
            s.link = Link::logistic;
        else
            throw ConfigError("process: unknown link '" + link + "'");
        spec = s;
    } else if (kind == "binary_ark") {
        spec = make_ark_spec(as_int(f.integer("d"), "d"), as_int(f.integer("K"), "K"));
    } else if (kind == "transformer") {
        const auto vp = f.str("v_prior", "sphere_rows");
        if (vp != "sphere_rows" && vp != "gaussian") throw ConfigError("process: unknown v_prior '" + vp + "'");
        auto s = make_transformer_spec(as_int(f.integer("vocab"), "vocab"), as_int(f.integer("r"), "r"),
                                       as_int(f.integer("depth"), "depth"), as_int(f.integer("context"), "context"),
                                       vp == "gaussian" ? VPrior::gaussian : VPrior::sphere_rows);
        s.v_var = f.num("v_var", 0.0);
        spec = s;
    } else if (kind == "linrep") {
        LinRepSpec s;
        s.d = as_int(f.integer("d"), "d");
        s.r = as_int(f.integer("r"), "r");
        s.tasks = as_int(f.integer("tasks"), "tasks");
        spec = s;
    } else if (kind == "icl") {
        spec = make_icl_spec(f.integer("N"), f.num("R"), as_int(f.integer("vocab"), "vocab"), as_int(f.integer("r"), "r"),
                             as_int(f.integer("depth"), "depth"), as_int(f.integer("context"), "context"),
                             as_int(f.integer("tasks"), "tasks"), as_int(f.integer("per_task"), "per_task"));
    } else {
        throw ConfigError("process: unknown kind '" + kind + "'");
    }
    f.done();
    try {
        validate(spec);
    } catch (const std::domain_error& e) {
        throw ConfigError(std::string("process: ") + e.what());
    }
    return spec;
}

PredictorKind parse_predictor(const json& j) {
    Fields f(j, "predictor");
    const std::string kind = f.str("kind");
    PredictorKind out;
    if (kind == "conjugate") {
        ConjugateKind k;
        if (f.has("sigma2")) k.sigma2 = f.num("sigma2");
        out = k;
    } else if (kind == "ensemble") {
        EnsembleKind k;
        k.S = as_int(f.integer("S", k.S), "S");
        k.resample_ess_frac = f.num("resample_ess_frac", k.resample_ess_frac);
        k.move_steps = as_int(f.integer("move_steps", k.move_steps), "move_steps");
        k.xi_grid = as_int(f.integer("xi_grid", k.xi_grid), "xi_grid");
        if (k.S < 2) throw ConfigError("predictor: key 'S' must be at least 2");
        if (!(k.resample_ess_frac > 0.0 && k.resample_ess_frac <= 1.0))
            throw ConfigError("predictor: key 'resample_ess_frac' must lie in (0, 1]");
        out = k;
    } else if (kind == "omniscient") {
        out = OmniscientKind{};
    } else if (kind == "misspecified_conjugate") {
        MisspecifiedConjugateKind k;
        k.prior_mean = to_vec(f.vec("prior_mean"));
        if (f.has("prior_cov_diag") == f.has("prior_cov"))
            throw ConfigError("predictor: give exactly one of 'prior_cov_diag' and 'prior_cov'");
        if (f.has("prior_cov_diag")) {
            k.prior_cov = to_vec(f.vec("prior_cov_diag")).asDiagonal();
        } else {
            const auto& rows = f.at("prior_cov");
            if (!rows.is_array()) throw ConfigError("predictor: key 'prior_cov' must be an array of rows");
            const auto n = static_cast<Eigen::Index>(rows.size());
            k.prior_cov.resize(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto& row = rows[static_cast<std::size_t>(i)];
                if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
                    throw ConfigError("predictor: key 'prior_cov' must be square");
                for (Eigen::Index c = 0; c < n; ++c) k.prior_cov(i, c) = row[static_cast<std::size_t>(c)].get<double>();
            }
        }
        if (k.prior_cov.rows() != k.prior_mean.size())
            throw ConfigError("predictor: prior mean and covariance sizes differ");
        if (f.has("sigma2")) k.sigma2 = f.num("sigma2");
        out = k;
    } else if (kind == "misspecified_width") {
        MisspecifiedWidthKind k;
        k.n = as_int(f.integer("n"), "n");
        k.eps = f.num("eps", 0.0);
        k.S = as_int(f.integer("S", k.S), "S");
        k.resample_ess_frac = f.num("resample_ess_frac", k.resample_ess_frac);
        out = k;
    } else if (kind == "oracle_meta") {
        OracleMetaKind k;
        k.xi_grid = as_int(f.integer("xi_grid", k.xi_grid), "xi_grid");
        out = k;
    } else if (kind == "enumeration") {
        throw ConfigError("predictor: 'enumeration' needs an explicit latent list and is not configurable from JSON");
    } else {
        throw ConfigError("predictor: unknown kind '" + kind + "'");
    }
    f.done();
    return out;
}

ScenarioConfig parse_scenario(const json& j) {
    Fields f(j, "scenario");
    const long version = f.integer("version");
    if (version != kConfigVersion) throw ConfigError(fmt::format("scenario: unsupported version {}", version));
    ScenarioConfig c;
    c.scenario_id = f.str("scenario_id");
    if (c.scenario_id.empty() || c.scenario_id.find_first_of("/\\") != std::string::npos)
        throw ConfigError("scenario: key 'scenario_id' must be a plain name");
    c.process = parse_process(f.at("process"));
    c.predictor = parse_predictor(f.at("predictor"));
    if (f.has("reference")) c.reference = parse_predictor(f.at("reference"));
    for (double h : f.vec("horizons")) {
        if (h != std::floor(h) || h < 1) throw ConfigError("scenario: key 'horizons' must hold positive integers");
        c.horizons.push_back(static_cast<int>(h));
    }
    if (c.horizons.empty()) throw ConfigError("scenario: key 'horizons' is empty");
    for (std::size_t i = 1; i < c.horizons.size(); ++i)
        if (c.horizons[i] <= c.horizons[i - 1]) throw ConfigError("scenario: key 'horizons' must be strictly increasing");
    if (is_meta(c.process) && c.horizons.size() != 1)
        throw ConfigError("scenario: key 'horizons' must hold one per-task length for meta processes");
    const long reps = f.integer("replicates");
    if (reps < 2) throw ConfigError("scenario: key 'replicates' must be at least 2");
    c.replicates = as_int(reps, "replicates");
    const auto& seed = f.at("master_seed");
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long>() >= 0))
        throw ConfigError("scenario: key 'master_seed' must be a nonnegative integer");
    c.master_seed = seed.get<std::uint64_t>();
    c.output_dir = f.str("output_dir", c.output_dir);
    const auto ex = f.str("error_source", "kl");
    if (ex == "kl")
        c.excess = ExcessKind::kl;
    else if (ex == "loss_vs_omniscient")
        c.excess = ExcessKind::loss_vs_omniscient;
    else if (ex == "loss_vs_rate")
        c.excess = ExcessKind::loss_vs_rate;
    else if (ex == "kl_vs_reference")
        c.excess = ExcessKind::kl_vs_reference;
    else
        throw ConfigError("scenario: unknown error_source '" + ex + "'");
    if ((c.excess == ExcessKind::kl_vs_reference) != c.reference.has_value())
        throw ConfigError("scenario: key 'reference' goes together with error_source 'kl_vs_reference'");
    if (c.excess == ExcessKind::loss_vs_rate && !irreducible_rate(c.process))
        throw ConfigError("scenario: error_source 'loss_vs_rate' needs a closed-form irreducible rate");
    if (f.has("bounds")) {
        const auto& bs = f.at("bounds");
        if (!bs.is_array()) throw ConfigError("scenario: key 'bounds' must be an array");
        const auto known = bound_ids();
        for (const auto& b : bs) {
            Fields bf(b, "bound");
            BoundCheck chk;
            chk.id = bf.str("id");
            if (std::find(known.begin(), known.end(), chk.id) == known.end())
                throw ConfigError("scenario: unknown bound id '" + chk.id + "'");
            if (bf.has("params")) {
                const auto& p = bf.at("params");
                if (!p.is_object()) throw ConfigError("bound: key 'params' must be an object");
                for (const auto& [k, v] : p.items()) {
                    if (!v.is_number()) throw ConfigError("bound: parameter '" + k + "' must be a number");
                    chk.params[k] = v.get<double>();
                }
            }
            bf.done();
            c.bounds.push_back(std::move(chk));
        }
    }
    if (f.has("tolerance")) {
        Fields tf(f.at("tolerance"), "tolerance");
        c.se_multiplier = tf.num("se_multiplier", 3.0);
        tf.done();
        if (!(c.se_multiplier >= 0.0)) throw ConfigError("tolerance: key 'se_multiplier' must be nonnegative");
    }
    f.done();
    return c;
}

std::vector<std::string> builtin_scenario_names() {
    return {"linreg_baseline", "logreg_small", "ark_small", "mean_misspec", "missing_feature"};
}

json builtin_scenario(const std::string& name) {
    if (name == "linreg_baseline")
        return json{{"version", 1},
                    {"scenario_id", "linreg_baseline"},
                    {"process", {{"kind", "linreg"}, {"d", 5}, {"sigma2", 0.25}}},
                    {"predictor", {{"kind", "conjugate"}}},
                    {"horizons", {20, 100, 500}},
                    {"replicates", 2000},
                    {"master_seed", 20240501},
                    {"error_source", "kl"},
                    {"bounds",
                     {{{"id", "linreg_upper"}, {"params", {{"d", 5}, {"sigma2", 0.25}}}},
                      {{"id", "linreg_lower"}, {"params", {{"d", 5}, {"sigma2", 0.25}}}}}}};
    if (name == "logreg_small")
        return json{{"version", 1},
                    {"scenario_id", "logreg_small"},
                    {"process", {{"kind", "logreg"}, {"d", 3}}},
                    {"predictor", {{"kind", "ensemble"}, {"S", 1024}}},
                    {"horizons", {50, 200}},
                    {"replicates", 100},
                    {"master_seed", 11},
                    {"bounds", {{{"id", "logreg_upper"}, {"params", {{"d", 3}}}}}}};
    if (name == "ark_small")
        return json{{"version", 1},
                    {"scenario_id", "ark_small"},
                    {"process", {{"kind", "binary_ark"}, {"d", 2}, {"K", 2}}},
                    {"predictor", {{"kind", "ensemble"}, {"S", 1024}}},
                    {"horizons", {50, 200}},
                    {"replicates", 100},
                    {"master_seed", 12},
                    {"bounds", {{{"id", "ark_upper"}, {"params", {{"d", 2}, {"K", 2}}}}}}};
    if (name == "mean_misspec")
        return json{{"version", 1},
                    {"scenario_id", "mean_misspec"},
                    {"process", {{"kind", "linreg"}, {"d", 5}, {"sigma2", 0.25}, {"prior_var", 1.0}}},
                    {"predictor",
                     {{"kind", "misspecified_conjugate"},
                      {"prior_mean", {0.5, 0.5, 0.5, 0.5, 0.0}},
                      {"prior_cov_diag", {1, 1, 1, 1, 1}}}},
                    {"reference", {{"kind", "conjugate"}}},
                    {"error_source", "kl_vs_reference"},
                    {"horizons", {10, 100}},
                    {"replicates", 500},
                    {"master_seed", 13},
                    {"bounds", {{{"id", "mean_misspec_upper"}, {"params", {{"mu_norm2", 1.0}}}}}}};
    if (name == "missing_feature")
        return json{{"version", 1},
                    {"scenario_id", "missing_feature"},
                    {"process", {{"kind", "linreg"}, {"d", 4}, {"sigma2", 1.0}}},
                    {"predictor",
                     {{"kind", "misspecified_conjugate"}, {"prior_mean", {0, 0, 0, 0}}, {"prior_cov_diag", {1, 1, 1, 0}}}},
                    {"horizons", {100, 500}},
                    {"replicates", 200},
                    {"master_seed", 14},
                    {"bounds", {{{"id", "missing_feature_upper"}, {"params", {{"d", 4}, {"sigma2", 1.0}}}}}}};
    throw ConfigError("unknown scenario '" + name + "'");
}

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

bool is_builtin(const std::string& name) {
    const auto names = builtin_scenario_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

}  // namespace

ScenarioConfig load_scenario(const std::string& name_or_path) {
    if (is_builtin(name_or_path)) return parse_scenario(builtin_scenario(name_or_path));
    return parse_scenario(read_json_file(name_or_path));
}

ScenarioResult run_scenario(const ScenarioConfig& c, int threads) {
    if (c.replicates < 2) throw ConfigError("scenario: key 'replicates' must be at least 2");
    if (c.horizons.empty()) throw ConfigError("scenario: key 'horizons' is empty");
    const int T = c.horizons.back();
    const bool meta = is_meta(c.process);
    const int M = tasks_of(c.process);
    const RngStream root(c.master_seed);
    spdlog::debug("scenario {}: {} replicates, T={}", c.scenario_id, c.replicates, T);

    std::vector<std::vector<double>> excess;
    if (c.excess == ExcessKind::kl_vs_reference) {
        for (auto& r : run_paired_replicates(c.process, *c.reference, c.predictor, T, c.replicates, root, threads))
            excess.push_back(std::move(r.kl_ab));
    } else {
        const auto irr = irreducible_rate(c.process);
        const ErrorSource src = c.excess == ExcessKind::kl                   ? ErrorSource::kl
                                : c.excess == ExcessKind::loss_vs_omniscient ? ErrorSource::loss_vs_omniscient
                                                                             : ErrorSource::loss_vs_rate;
        for (const auto& r : run_replicates(c.process, c.predictor, T, c.replicates, root, threads))
            excess.push_back(excess_sequence(r, src, irr));
    }

    ScenarioResult out;
    out.scenario_id = c.scenario_id;
    out.curve_horizons = c.horizons;
    out.curve = aggregate_error_curve(excess, meta ? std::vector<int>{M * T} : c.horizons);

    for (std::size_t hi = 0; hi < c.horizons.size(); ++hi) {
        const int h = c.horizons[hi];
        for (const auto& chk : c.bounds) {
            auto params = chk.params;
            params.try_emplace("T", h);
            if (meta_bound_ids().count(chk.id)) params.try_emplace("M", M);
            const auto b = evaluate_bound(chk.id, params);
            out.bounds.push_back(b);
            VerificationRow row;
            row.scenario_id = c.scenario_id;
            row.horizon = h;
            row.bound_id = chk.id;
            row.side = b.side;
            row.empirical = out.curve.cumulative_error[hi];
            row.std_err = out.curve.std_err[hi];
            row.bound = b.value;
            const double slack = c.se_multiplier * row.std_err;
            if (!b.valid) {
                row.pass = false;
                row.margin = std::nan("");
            } else if (b.side == Side::upper) {
                row.margin = b.value - (row.empirical - slack);
                row.pass = row.margin >= 0.0;
            } else {
                row.margin = (row.empirical + slack) - b.value;
                row.pass = row.margin >= 0.0;
            }
            out.passed = out.passed && row.pass;
            out.rows.push_back(row);
        }
    }
    return out;
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

std::string curve_csv(const ScenarioResult& r) {
    std::string s = "horizon,mean_error,std_err,replicates,scenario_id\n";
    for (std::size_t i = 0; i < r.curve.cumulative_error.size(); ++i)
        s += fmt::format("{},{},{},{},{}\n", r.curve_horizons[i], fmt_double(r.curve.cumulative_error[i]),
                         fmt_double(r.curve.std_err[i]), r.curve.replicates, r.scenario_id);
    return s;
}

nlohmann::json bound_json(const BoundReport& b) {
    json p = json::object();
    for (const auto& [k, v] : b.params) p[k] = v;
    json j{{"bound_id", b.id}, {"side", side_name(b.side)}, {"params", p}, {"valid", b.valid}, {"note", b.note}};
    j["value"] = b.valid ? json(b.value) : json(nullptr);
    return j;
}

std::string bounds_csv(const std::vector<BoundReport>& bs) {
    std::string s = "bound_id,side,params_json,value,valid\n";
    for (const auto& b : bs) {
        std::string pj = "{";
        for (std::size_t i = 0; i < b.params.size(); ++i)
            pj += fmt::format("{}\"\"{}\"\":{}", i ? "," : "", b.params[i].first, fmt_double(b.params[i].second));
        pj += "}";
        s += fmt::format("{},{},\"{}\",{},{}\n", b.id, side_name(b.side), pj, b.valid ? fmt_double(b.value) : "",
                         b.valid ? "true" : "false");
    }
    return s;
}

std::string verification_csv(const std::vector<VerificationRow>& rows) {
    std::string s = "scenario_id,horizon,bound_id,side,empirical,std_err,bound,pass,margin\n";
    for (const auto& r : rows)
        s += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.scenario_id, r.horizon, r.bound_id, side_name(r.side),
                         fmt_double(r.empirical), fmt_double(r.std_err), fmt_double(r.bound),
                         r.pass ? "true" : "false", fmt_double(r.margin));
    return s;
}

std::string scaling_csv(const ScalingSweep& sw) {
    std::string s = "C,n_star,T_star,bound_value,sqrt_cap\n";
    for (const auto& r : sw.rows)
        s += fmt::format("{},{},{},{},{}\n", fmt_double(r.C), r.n, fmt_double(r.T), fmt_double(r.value),
                         fmt_double(r.sqrt_cap));
    return s;
}

nlohmann::json result_json(const ScenarioResult& r) {
    json curve = json::array();
    for (std::size_t i = 0; i < r.curve.cumulative_error.size(); ++i)
        curve.push_back({{"horizon", r.curve_horizons[i]},
                         {"mean_error", r.curve.cumulative_error[i]},
                         {"std_err", r.curve.std_err[i]},
                         {"per_step_error", r.curve.per_step_error[i]},
                         {"per_step_se", r.curve.per_step_se[i]},
                         {"replicates", r.curve.replicates}});
    json bounds = json::array();
    for (const auto& b : r.bounds) bounds.push_back(bound_json(b));
    json rows = json::array();
    for (const auto& v : r.rows)
        rows.push_back({{"horizon", v.horizon},
                        {"bound_id", v.bound_id},
                        {"side", side_name(v.side)},
                        {"empirical", v.empirical},
                        {"std_err", v.std_err},
                        {"bound", v.bound},
                        {"pass", v.pass},
                        {"margin", std::isnan(v.margin) ? json(nullptr) : json(v.margin)}});
    return json{{"scenario_id", r.scenario_id}, {"passed", r.passed}, {"curve", curve}, {"bounds", bounds}, {"verification", rows}};
}

nlohmann::json scaling_json(const ScalingSweep& s) {
    json rows = json::array();
    for (const auto& r : s.rows)
        rows.push_back({{"C", r.C}, {"n_star", r.n}, {"T_star", r.T}, {"bound_value", r.value}, {"sqrt_cap", r.sqrt_cap}});
    return json{{"rows", rows},
                {"slope", s.slope},
                {"intercept", s.intercept},
                {"slope_half_width", s.slope_half_width},
                {"skipped", s.skipped}};
}

void write_atomic(const std::string& path, const std::string& content) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, p);
}

void write_outputs(const ScenarioResult& r, const std::string& dir, Format f) {
    const fs::path base = fs::path(dir) / r.scenario_id;
    if (f == Format::csv) {
        write_atomic((base / "curve.csv").string(), curve_csv(r));
        write_atomic((base / "bounds.csv").string(), bounds_csv(r.bounds));
        write_atomic((base / "verification.csv").string(), verification_csv(r.rows));
    } else {
        write_atomic((base / "result.json").string(), result_json(r).dump(2) + "\n");
    }
}

json load_manifest(const std::string& name_or_path) {
    if (name_or_path == "desk_suite") {
        json list = json::array();
        for (const auto& n : builtin_scenario_names()) list.push_back(n);
        return json{{"version", kConfigVersion}, {"scenarios", list}};
    }
    json m = read_json_file(name_or_path);
    // Relative scenario paths are taken from the manifest's directory.
    if (m.is_object() && m.contains("scenarios") && m["scenarios"].is_array()) {
        const fs::path base = fs::path(name_or_path).parent_path();
        for (auto& e : m["scenarios"])
            if (e.is_string() && !is_builtin(e.get<std::string>()) && fs::path(e.get<std::string>()).is_relative())
                e = (base / e.get<std::string>()).string();
    }
    return m;
}

SuiteResult verify_suite(const json& manifest, int threads, std::optional<std::uint64_t> seed,
                         const std::optional<std::string>& out_dir, Format f) {
    Fields mf(manifest, "manifest");
    if (mf.integer("version") != kConfigVersion) throw ConfigError("manifest: unsupported version");
    const auto& list = mf.at("scenarios");
    if (!list.is_array()) throw ConfigError("manifest: key 'scenarios' must be an array");
    mf.done();
    SuiteResult out;
    if (list.empty()) {
        out.warnings.push_back("manifest lists no scenarios");
        spdlog::warn("manifest lists no scenarios");
        return out;
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
        const auto& item = list[i];
        const std::string label = item.is_string() ? item.get<std::string>() : fmt::format("entry {}", i);
        try {
            ScenarioConfig c = item.is_string() ? load_scenario(item.get<std::string>()) : parse_scenario(item);
            if (seed) c.master_seed = *seed;
            auto r = run_scenario(c, threads);
            if (out_dir) write_outputs(r, *out_dir, f);
            for (const auto& row : r.rows)
                if (!row.pass)
                    out.failures.push_back(fmt::format("{} T={} {} {}: empirical {} se {} bound {} margin {}",
                                                       r.scenario_id, row.horizon, row.bound_id, side_name(row.side),
                                                       fmt_double(row.empirical), fmt_double(row.std_err),
                                                       fmt_double(row.bound), fmt_double(row.margin)));
            out.passed = out.passed && r.passed;
            out.results.push_back(std::move(r));
        } catch (const std::exception& e) {
            out.passed = false;
            out.failures.push_back(label + ": " + e.what());
        }
    }
    return out;
}

}  // namespace ilab
