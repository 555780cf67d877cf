#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ilab {

enum class Side { upper, lower };
std::string side_name(Side s);

using BoundParams = std::vector<std::pair<std::string, double>>;

// value is in nats per step and NaN when valid is false.
struct BoundReport {
    std::string id;
    Side side = Side::upper;
    BoundParams params;
    double value = 0.0;
    bool valid = true;
    std::string note;
};

// ---- estimation error bounds ----
BoundReport linreg_upper(int d, double sigma2, double T);
BoundReport linreg_lower(int d, double sigma2, double T);  // needs d > 2
BoundReport logreg_upper(int d, double T);
long deepnet_param_count(int d, int N, int L);  // (L-2) N^2 + N + d N
BoundReport deepnet_upper(int d, int N, int L, double sigma2, double T);
BoundReport dirichlet_upper(int d, double K, double sigma2, double T);
BoundReport ark_upper(int d, int K, double T);
// r: embedding dimension, d: vocabulary size, L: depth, K: context length.
BoundReport transformer_upper(int r, int d, int L, int K, double T);
BoundReport linrep_upper(int d, int r, double M, double T);
BoundReport linrep_intra_upper(int r, double T);  // the second term on its own
struct IclTerms {
    double parameters = 0.0, horizon = 0.0, index = 0.0;  // index = ln(N)/T
};
IclTerms icl_terms(int r, int d, int L, int K, double R, double N, double M, double T);
BoundReport icl_upper(int r, int d, int L, int K, double R, double N, double M, double T);
BoundReport mean_misspec_upper(double mu_norm2, double T);
// note carries the irreducible floor 1/(2 d sigma2).
BoundReport missing_feature_upper(int d, double sigma2, double T);
double missing_feature_floor(int d, double sigma2);

// ---- rate-distortion functions (nats) ----
double linreg_rd_upper(int d, double sigma2, double eps);
double linreg_rd_lower(int d, double sigma2, double eps);
double logreg_rd(int d, double eps);
double deepnet_rd(long P, int L, double sigma2, double eps);
double dirichlet_rd(int d, double K, double sigma2, double eps);
double ark_rd(int d, int K, double eps);
double transformer_rd(int r, int d, int L, int K, double T, double eps);
double meta_rd(int d, int r, double M, double T, double eps);  // already divided by M T
double intra_rd(int r, double eps);
double icl_rd(int r, int d, int L, int K, double R, double N, double M, double T, double eps);

// 64 log-spaced points per decade over [1e-6, 10].
std::vector<double> eps_grid();

// inf_eps rate(eps)/steps + eps over the grid plus the given extra points.
struct EpsOptimum {
    double value = 0.0;
    double eps = 0.0;
};
EpsOptimum rd_upper_from_rate(const std::function<double(double)>& rate, double steps,
                              const std::vector<double>& extra = {});
// sup_eps min(rate(eps)/steps, eps) over the grid plus extras; rate must be a lower bound on H_eps.
EpsOptimum rd_lower_from_rate(const std::function<double(double)>& rate, double steps,
                              const std::vector<double>& extra = {});

// ---- compute-optimal scaling ----
// d K ln(1+n/K)(ln(36 e T K) + (2/d) ln(2n)) / (2T) + 3K/n; valid for n >= 3, K >= 2.
BoundReport scaling_bound(int d, double K, double n, double T);
// The pre-optimization form at cover radius eps.
BoundReport loss_ub(int d, double K, double n, double T, double eps);

struct OptimalWidth {
    long n = 0;
    double T = 0.0;  // C / (d n)
    double value = 0.0;
};
OptimalWidth scaling_optimal_width(int d, double K, double C);

struct ScalingRow {
    double C = 0.0;
    long n = 0;
    double T = 0.0;
    double value = 0.0;
    double sqrt_cap = 0.0;  // sqrt(3C)/d
};
struct ScalingSweep {
    std::vector<ScalingRow> rows;
    std::vector<double> skipped;  // infeasible budgets
    double slope = 0.0;
    double intercept = 0.0;
    double slope_half_width = 0.0;  // 95% Student-t interval
};
// Least-squares slope of ln n* on ln C; the grid must span at least three decades.
ScalingSweep sweep_scaling(int d, double K, const std::vector<double>& C_grid);
std::vector<double> log_grid(double lo, double hi, int points);

// ---- lookup by id ----
// Evaluates a bound named by id from named parameters; unknown ids or
// missing parameters raise std::invalid_argument naming the key.
BoundReport evaluate_bound(const std::string& id, const std::map<std::string, double>& params);
std::vector<std::string> bound_ids();

}  // namespace ilab
