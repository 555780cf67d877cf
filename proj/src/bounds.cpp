#include "ilab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "ilab/info.hpp"

namespace ilab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kE = std::numbers::e;

BoundReport make(std::string id, Side side, BoundParams params) {
    BoundReport r;
    r.id = std::move(id);
    r.side = side;
    r.params = std::move(params);
    return r;
}

BoundReport invalid(BoundReport r, std::string why) {
    r.valid = false;
    r.value = kNaN;
    r.note = std::move(why);
    return r;
}

double pos(double x) { return std::max(0.0, x); }

// ln(1 + e^a / eps) without forming e^a.
double log1p_ratio(double log_a, double eps) { return softplus(log_a - std::log(eps)); }

void need_eps(double eps) {
    if (!(eps > 0.0)) throw std::domain_error("rate-distortion: eps must be positive");
}

}  // namespace

std::string side_name(Side s) { return s == Side::upper ? "upper" : "lower"; }

BoundReport linreg_upper(int d, double sigma2, double T) {
    auto r = make("linreg_upper", Side::upper, {{"d", d}, {"sigma2", sigma2}, {"T", T}});
    if (d < 1 || !(sigma2 > 0.0) || !(T > 0.0)) return invalid(r, "requires d >= 1, sigma2 > 0, T > 0");
    r.value = pos(d / (2.0 * T) * std::log(T / (sigma2 * d))) + std::log1p(d / T) / (2.0 * T);
    return r;
}

BoundReport linreg_lower(int d, double sigma2, double T) {
    auto r = make("linreg_lower", Side::lower, {{"d", d}, {"sigma2", sigma2}, {"T", T}});
    if (d <= 2) return invalid(r, "requires d > 2");
    if (!(sigma2 > 0.0) || !(T > 0.0)) return invalid(r, "requires sigma2 > 0, T > 0");
    const double c = 8.0 + d * sigma2 / (d - 2.0);
    r.value = d / (2.0 * T) * lambert_w(2.0 * T / (d * c));
    return r;
}

BoundReport logreg_upper(int d, double T) {
    auto r = make("logreg_upper", Side::upper, {{"d", d}, {"T", T}});
    if (d < 1 || !(T > 0.0)) return invalid(r, "requires d >= 1, T > 0");
    r.value = d / (2.0 * T) * (1.0 + std::log1p(T / (4.0 * d)));
    return r;
}

long deepnet_param_count(int d, int N, int L) {
    if (d < 1 || N < 1 || L < 2) throw std::domain_error("deepnet_param_count: requires d, N >= 1 and L >= 2");
    return static_cast<long>(L - 2) * N * N + N + static_cast<long>(d) * N;
}

BoundReport deepnet_upper(int d, int N, int L, double sigma2, double T) {
    auto r = make("deepnet_upper", Side::upper, {{"d", d}, {"N", N}, {"L", L}, {"sigma2", sigma2}, {"T", T}});
    if (d < 1 || N < 1 || L < 2 || !(sigma2 > 0.0) || !(T > 0.0))
        return invalid(r, "requires d, N >= 1, L >= 2, sigma2 > 0, T > 0");
    const double P = static_cast<double>(deepnet_param_count(d, N, L));
    r.value = P / (2.0 * T) * (1.0 + std::log1p(2.0 * L * T / (sigma2 * P)));
    r.note = "P=" + std::to_string(static_cast<long>(P));
    return r;
}

BoundReport dirichlet_upper(int d, double K, double sigma2, double T) {
    auto r = make("dirichlet_upper", Side::upper, {{"d", d}, {"K", K}, {"sigma2", sigma2}, {"T", T}});
    if (d < 1 || !(K > 0.0) || !(sigma2 > 0.0) || !(T > 0.0)) return invalid(r, "requires d >= 1, K, sigma2, T > 0");
    const double u = T / (sigma2 * d);
    if (u < 1.0) return invalid(r, "requires T >= sigma2 d (the first logarithm turns negative)");
    r.value = K / T * std::log1p(u) * std::log(u) + 2.0 * d * K / T * (1.0 + std::log1p(u) * std::log1p(T / (d * K)));
    return r;
}

BoundReport ark_upper(int d, int K, double T) {
    auto r = make("ark_upper", Side::upper, {{"d", d}, {"K", K}, {"T", T}});
    if (d < 1 || K < 1 || !(T > 0.0)) return invalid(r, "requires d, K >= 1, T > 0");
    const double dk = static_cast<double>(d) * K;
    r.value = dk / (2.0 * T) * (1.0 + std::log1p(T / (4.0 * dk)));
    return r;
}

BoundReport transformer_upper(int rr, int d, int L, int K, double T) {
    auto r = make("transformer_upper", Side::upper, {{"r", rr}, {"d", d}, {"L", L}, {"K", K}, {"T", T}});
    if (rr < 1 || d < 1 || L < 1 || K < 1 || !(T > 0.0)) return invalid(r, "requires r, d, L, K >= 1, T > 0");
    const double c = static_cast<double>(rr) * std::max(rr, d);
    const double arg = 2.0 * K * T * T / L;
    if (arg < 1.0) return invalid(r, "requires 2 K T^2 >= L");
    r.value = c * L * L * std::log(8.0 * kE * K * (1.0 + 16.0 * K)) / T + c * L * std::log(arg) / T;
    return r;
}

BoundReport linrep_upper(int d, int rr, double M, double T) {
    auto r = make("linrep_upper", Side::upper, {{"d", d}, {"r", rr}, {"M", M}, {"T", T}});
    if (d < 1 || rr < 1 || !(M >= 1.0) || !(T >= 1.0)) return invalid(r, "requires d, r, M, T >= 1");
    r.value = d * rr * (1.0 + std::log1p(M / rr)) / (2.0 * M * T) + rr * (1.0 + std::log1p(2.0 * T / rr)) / (2.0 * T);
    return r;
}

BoundReport linrep_intra_upper(int rr, double T) {
    auto r = make("linrep_intra_upper", Side::upper, {{"r", rr}, {"T", T}});
    if (rr < 1 || !(T >= 1.0)) return invalid(r, "requires r, T >= 1");
    r.value = rr * (1.0 + std::log1p(2.0 * T / rr)) / (2.0 * T);
    return r;
}

IclTerms icl_terms(int rr, int d, int L, int K, double R, double N, double M, double T) {
    if (rr < 1 || d < 1 || L < 1 || K < 1 || !(R > 0.0) || !(N >= 1.0) || !(M >= 1.0) || !(T >= 1.0))
        throw std::domain_error("icl bound: dimensions must be positive");
    const double c = static_cast<double>(rr) * std::max(rr, d) * R * std::log1p(M / R) / (M * T);
    IclTerms t;
    t.parameters = c * L * L * std::log(8.0 * K * kE * (1.0 + 16.0 * K));
    t.horizon = c * L * std::log(2.0 * K * M * T * T / L);
    t.index = std::log(N) / T;
    return t;
}

BoundReport icl_upper(int rr, int d, int L, int K, double R, double N, double M, double T) {
    auto r = make("icl_upper", Side::upper,
                  {{"r", rr}, {"d", d}, {"L", L}, {"K", K}, {"R", R}, {"N", N}, {"M", M}, {"T", T}});
    if (rr < 1 || d < 1 || L < 1 || K < 1 || !(R > 0.0) || !(N >= 1.0) || !(M >= 1.0) || !(T >= 1.0))
        return invalid(r, "requires positive dimensions, N, M, T >= 1");
    if (R > N) return invalid(r, "requires R <= N");
    if (2.0 * K * M * T * T < L) return invalid(r, "requires 2 K M T^2 >= L");
    const auto t = icl_terms(rr, d, L, K, R, N, M, T);
    r.value = t.parameters + t.horizon + t.index;
    return r;
}

BoundReport mean_misspec_upper(double mu_norm2, double T) {
    auto r = make("mean_misspec_upper", Side::upper, {{"mu_norm2", mu_norm2}, {"T", T}});
    if (!(mu_norm2 >= 0.0) || !(T >= 1.0)) return invalid(r, "requires |mu|^2 >= 0, T >= 1");
    r.value = mu_norm2 / (2.0 * T);
    return r;
}

double missing_feature_floor(int d, double sigma2) {
    if (d < 2 || !(sigma2 > 0.0)) throw std::domain_error("missing feature: requires d >= 2, sigma2 > 0");
    return 1.0 / (2.0 * d * sigma2);
}

BoundReport missing_feature_upper(int d, double sigma2, double T) {
    auto r = make("missing_feature_upper", Side::upper, {{"d", d}, {"sigma2", sigma2}, {"T", T}});
    if (d < 2 || !(sigma2 > 0.0) || !(T >= 1.0)) return invalid(r, "requires d >= 2, sigma2 > 0, T >= 1");
    const double floor = missing_feature_floor(d, sigma2);
    r.value = (d - 1.0) / (2.0 * T) * (std::log(T) + 1.0 / (d * sigma2)) + floor;
    r.note = "floor=" + std::to_string(floor);
    return r;
}

// ---- rate-distortion ----

double linreg_rd_upper(int d, double sigma2, double eps) {
    need_eps(eps);
    if (d < 1 || !(sigma2 > 0.0)) throw std::domain_error("linreg rd: requires d >= 1, sigma2 > 0");
    if (eps >= 0.5 * std::log1p(1.0 / sigma2)) return 0.0;
    return pos(-0.5 * d * std::log(sigma2 * std::expm1(2.0 * eps)));
}

double linreg_rd_lower(int d, double sigma2, double eps) {
    need_eps(eps);
    if (d <= 2 || !(sigma2 > 0.0)) throw std::domain_error("linreg rd lower: requires d > 2, sigma2 > 0");
    return pos(-0.5 * d * std::log((8.0 + d * sigma2 / (d - 2.0)) * eps));
}

double logreg_rd(int d, double eps) {
    need_eps(eps);
    if (d < 1) throw std::domain_error("logreg rd: requires d >= 1");
    return 0.5 * d * std::log1p(1.0 / (8.0 * eps));
}

double deepnet_rd(long P, int L, double sigma2, double eps) {
    need_eps(eps);
    if (P < 1 || L < 1 || !(sigma2 > 0.0)) throw std::domain_error("deepnet rd: requires P, L >= 1, sigma2 > 0");
    return 0.5 * P * std::log1p(1.0 / (sigma2 * std::expm1(2.0 * eps / L)));
}

double dirichlet_rd(int d, double K, double sigma2, double eps) {
    need_eps(eps);
    if (d < 1 || !(K > 0.0) || !(sigma2 > 0.0)) throw std::domain_error("dirichlet rd: requires d >= 1, K, sigma2 > 0");
    const double a = std::log1p(2.0 / (sigma2 * eps));
    return K * a * std::log(2.0 * K / (sigma2 * eps)) + 2.0 * d * K * a * std::log1p(4.0 / eps);
}

double ark_rd(int d, int K, double eps) {
    need_eps(eps);
    if (d < 1 || K < 1) throw std::domain_error("ark rd: requires d, K >= 1");
    return 0.5 * d * K * std::log1p(1.0 / (8.0 * eps));
}

double transformer_rd(int r, int d, int L, int K, double T, double eps) {
    need_eps(eps);
    if (r < 1 || d < 1 || L < 1 || K < 1 || !(T > 0.0)) throw std::domain_error("transformer rd: bad dimensions");
    const double c = static_cast<double>(r) * std::max(r, d);
    const double log_a = std::log(c * K * L * T) + L * std::log(8.0 * K * (1.0 + 16.0 * K));
    return c * L * log1p_ratio(log_a, eps);
}

double meta_rd(int d, int r, double M, double T, double eps) {
    need_eps(eps);
    if (d < 1 || r < 1 || !(M >= 1.0) || !(T >= 1.0)) throw std::domain_error("meta rd: bad dimensions");
    return d * r / (2.0 * M * T) * std::log1p(d / (r * std::expm1(2.0 * eps * T / r)));
}

double intra_rd(int r, double eps) {
    need_eps(eps);
    if (r < 1) throw std::domain_error("intra rd: requires r >= 1");
    return 0.5 * r * std::log1p(1.0 / eps);
}

double icl_rd(int r, int d, int L, int K, double R, double N, double M, double T, double eps) {
    need_eps(eps);
    if (!(R > 0.0) || !(N >= 1.0) || !(M >= 1.0)) throw std::domain_error("icl rd: bad sizes");
    return M * std::log(N) + R * std::log1p(M / R) * transformer_rd(r, d, L, K, T, eps);
}

std::vector<double> eps_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 7 * 64; ++i) g.push_back(std::pow(10.0, -6.0 + i / 64.0));
    return g;
}

EpsOptimum rd_upper_from_rate(const std::function<double(double)>& rate, double steps, const std::vector<double>& extra) {
    if (!(steps > 0.0)) throw std::domain_error("rd_upper_from_rate: steps must be positive");
    auto pts = eps_grid();
    pts.insert(pts.end(), extra.begin(), extra.end());
    EpsOptimum best{std::numeric_limits<double>::infinity(), 0.0};
    for (double e : pts) {
        if (!(e > 0.0)) continue;
        const double v = rate(e) / steps + e;
        if (v < best.value) best = {v, e};
    }
    return best;
}

EpsOptimum rd_lower_from_rate(const std::function<double(double)>& rate, double steps, const std::vector<double>& extra) {
    if (!(steps > 0.0)) throw std::domain_error("rd_lower_from_rate: steps must be positive");
    auto pts = eps_grid();
    pts.insert(pts.end(), extra.begin(), extra.end());
    EpsOptimum best{0.0, 0.0};
    for (double e : pts) {
        if (!(e > 0.0)) continue;
        const double v = std::min(rate(e) / steps, e);
        if (v > best.value) best = {v, e};
    }
    return best;
}

// ---- scaling ----

BoundReport scaling_bound(int d, double K, double n, double T) {
    auto r = make("scaling_upper", Side::upper, {{"d", d}, {"K", K}, {"n", n}, {"T", T}});
    if (d < 1 || !(T > 0.0)) return invalid(r, "requires d >= 1, T > 0");
    if (!(n >= 3.0) || !(K >= 2.0)) return invalid(r, "requires n >= 3 and K >= 2");
    r.value = d * K * std::log1p(n / K) * (std::log(36.0 * kE * T * K) + 2.0 / d * std::log(2.0 * n)) / (2.0 * T) +
              3.0 * K / n;
    return r;
}

BoundReport loss_ub(int d, double K, double n, double T, double eps) {
    auto r = make("loss_ub", Side::upper, {{"d", d}, {"K", K}, {"n", n}, {"T", T}, {"eps", eps}});
    if (d < 1 || !(K > 0.0) || !(n >= 1.0) || !(T > 0.0) || !(eps > 0.0))
        return invalid(r, "requires d, n >= 1 and K, T, eps > 0");
    r.value = K * std::log1p(n / K) * (std::log(2.0 * n) + d * std::log(3.0 / eps)) / T +
              3.0 * K * (1.0 + d * eps * eps) / n;
    return r;
}

std::vector<double> log_grid(double lo, double hi, int points) {
    if (!(lo > 0.0) || !(hi >= lo) || points < 1) throw std::domain_error("log_grid: bad range");
    std::vector<double> g;
    for (int i = 0; i < points; ++i)
        g.push_back(points == 1 ? lo : std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (points - 1)));
    return g;
}

OptimalWidth scaling_optimal_width(int d, double K, double C) {
    if (d < 1 || !(K >= 2.0)) throw std::domain_error("scaling_optimal_width: requires d >= 1, K >= 2");
    if (!(C >= 3.0 * d)) throw std::domain_error("scaling_optimal_width: budget admits no width n >= 3");
    const double nmax = std::floor(C / d);
    auto f = [&](double n) { return scaling_bound(d, K, n, C / (d * n)).value; };

    // log-spaced scan
    const auto grid = log_grid(3.0, nmax, 256);
    std::size_t gi = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (f(grid[i]) < f(grid[gi])) gi = i;

    // golden section on ln n between the scan neighbours
    double a = std::log(grid[gi == 0 ? 0 : gi - 1]), b = std::log(grid[std::min(gi + 1, grid.size() - 1)]);
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = f(std::exp(x1)), f2 = f(std::exp(x2));
    for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(std::exp(x1));
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(std::exp(x2));
        }
    }
    const double cont = std::exp(0.5 * (a + b));

    OptimalWidth best;
    best.value = std::numeric_limits<double>::infinity();
    auto consider = [&](double center) {
        const long c = std::lround(center);
        for (long n = c - 8; n <= c + 8; ++n) {
            if (n < 3 || static_cast<double>(n) > nmax) continue;
            const double v = f(static_cast<double>(n));
            if (v < best.value) best = {n, C / (d * static_cast<double>(n)), v};
        }
    };
    consider(cont);
    consider(grid[gi]);
    return best;
}

ScalingSweep sweep_scaling(int d, double K, const std::vector<double>& C_grid) {
    if (C_grid.size() < 3) throw std::domain_error("sweep_scaling: need at least three budgets");
    const auto [lo, hi] = std::minmax_element(C_grid.begin(), C_grid.end());
    if (!(*lo > 0.0) || *hi / *lo < 1e3 * (1.0 - 1e-12))
        throw std::domain_error("sweep_scaling: budgets must span at least three decades");
    ScalingSweep out;
    auto sorted = C_grid;
    std::sort(sorted.begin(), sorted.end());
    for (double C : sorted) {
        if (!(C >= 3.0 * d)) {
            out.skipped.push_back(C);
            continue;
        }
        const auto w = scaling_optimal_width(d, K, C);
        out.rows.push_back({C, w.n, w.T, w.value, std::sqrt(3.0 * C) / d});
    }
    const auto m = out.rows.size();
    if (m < 3) throw std::domain_error("sweep_scaling: fewer than three feasible budgets");
    double sx = 0, sy = 0;
    for (const auto& r : out.rows) {
        sx += std::log(r.C);
        sy += std::log(static_cast<double>(r.n));
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0, sxy = 0;
    for (const auto& r : out.rows) {
        const double x = std::log(r.C) - mx, y = std::log(static_cast<double>(r.n)) - my;
        sxx += x * x;
        sxy += x * y;
    }
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    double rss = 0;
    for (const auto& r : out.rows) {
        const double e = std::log(static_cast<double>(r.n)) - out.intercept - out.slope * std::log(r.C);
        rss += e * e;
    }
    if (m > 2) {
        const boost::math::students_t t(static_cast<double>(m - 2));
        out.slope_half_width = boost::math::quantile(boost::math::complement(t, 0.025)) * std::sqrt(rss / (m - 2) / sxx);
    }
    return out;
}

// ---- lookup ----

namespace {

struct Args {
    const std::string& id;
    const std::map<std::string, double>& p;
    double num(const std::string& k) const {
        const auto it = p.find(k);
        if (it == p.end()) throw std::invalid_argument("bound " + id + ": missing parameter '" + k + "'");
        return it->second;
    }
    int integer(const std::string& k) const {
        const double v = num(k);
        if (v != std::floor(v) || std::abs(v) > 1e9)
            throw std::invalid_argument("bound " + id + ": parameter '" + k + "' must be an integer");
        return static_cast<int>(v);
    }
    void only(std::initializer_list<const char*> keys) const {
        for (const auto& [k, v] : p) {
            bool ok = false;
            for (const char* a : keys) ok = ok || k == a;
            if (!ok) throw std::invalid_argument("bound " + id + ": unknown parameter '" + k + "'");
        }
    }
};

using Evaluator = std::function<BoundReport(const Args&)>;

const std::map<std::string, Evaluator>& registry() {
    static const std::map<std::string, Evaluator> r{
        {"linreg_upper",
         [](const Args& a) {
             a.only({"d", "sigma2", "T"});
             return linreg_upper(a.integer("d"), a.num("sigma2"), a.num("T"));
         }},
        {"linreg_lower",
         [](const Args& a) {
             a.only({"d", "sigma2", "T"});
             return linreg_lower(a.integer("d"), a.num("sigma2"), a.num("T"));
         }},
        {"logreg_upper",
         [](const Args& a) {
             a.only({"d", "T"});
             return logreg_upper(a.integer("d"), a.num("T"));
         }},
        {"deepnet_upper",
         [](const Args& a) {
             a.only({"d", "N", "L", "sigma2", "T"});
             return deepnet_upper(a.integer("d"), a.integer("N"), a.integer("L"), a.num("sigma2"), a.num("T"));
         }},
        {"dirichlet_upper",
         [](const Args& a) {
             a.only({"d", "K", "sigma2", "T"});
             return dirichlet_upper(a.integer("d"), a.num("K"), a.num("sigma2"), a.num("T"));
         }},
        {"ark_upper",
         [](const Args& a) {
             a.only({"d", "K", "T"});
             return ark_upper(a.integer("d"), a.integer("K"), a.num("T"));
         }},
        {"transformer_upper",
         [](const Args& a) {
             a.only({"r", "d", "L", "K", "T"});
             return transformer_upper(a.integer("r"), a.integer("d"), a.integer("L"), a.integer("K"), a.num("T"));
         }},
        {"linrep_upper",
         [](const Args& a) {
             a.only({"d", "r", "M", "T"});
             return linrep_upper(a.integer("d"), a.integer("r"), a.num("M"), a.num("T"));
         }},
        {"linrep_intra_upper",
         [](const Args& a) {
             a.only({"r", "T"});
             return linrep_intra_upper(a.integer("r"), a.num("T"));
         }},
        {"icl_upper",
         [](const Args& a) {
             a.only({"r", "d", "L", "K", "R", "N", "M", "T"});
             return icl_upper(a.integer("r"), a.integer("d"), a.integer("L"), a.integer("K"), a.num("R"), a.num("N"),
                              a.num("M"), a.num("T"));
         }},
        {"mean_misspec_upper",
         [](const Args& a) {
             a.only({"mu_norm2", "T"});
             return mean_misspec_upper(a.num("mu_norm2"), a.num("T"));
         }},
        {"missing_feature_upper",
         [](const Args& a) {
             a.only({"d", "sigma2", "T"});
             return missing_feature_upper(a.integer("d"), a.num("sigma2"), a.num("T"));
         }},
        {"scaling_upper",
         [](const Args& a) {
             a.only({"d", "K", "n", "T"});
             return scaling_bound(a.integer("d"), a.num("K"), a.num("n"), a.num("T"));
         }},
        {"loss_ub",
         [](const Args& a) {
             a.only({"d", "K", "n", "T", "eps"});
             return loss_ub(a.integer("d"), a.num("K"), a.num("n"), a.num("T"), a.num("eps"));
         }},
    };
    return r;
}

}  // namespace

BoundReport evaluate_bound(const std::string& id, const std::map<std::string, double>& params) {
    const auto& reg = registry();
    const auto it = reg.find(id);
    if (it == reg.end()) throw std::invalid_argument("unknown bound id '" + id + "'");
    return it->second(Args{id, params});
}

std::vector<std::string> bound_ids() {
    std::vector<std::string> out;
    for (const auto& [k, v] : registry()) out.push_back(k);
    return out;
}

}  // namespace ilab
