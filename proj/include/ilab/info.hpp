#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ilab {

struct GaussianParams {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

// Entropies and divergences are in nats with 0 ln 0 = 0.
double entropy_pmf(std::span<const double> p);
double kl_pmf(std::span<const double> p, std::span<const double> q);  // may be +inf
double kl_gaussian(const GaussianParams& p, const GaussianParams& q);
double kl_gaussian_1d(double mean_p, double var_p, double mean_q, double var_q);

// KL between Bernoulli(sigmoid(x)) and Bernoulli(sigmoid(y)).
double binary_kl_logits(double x, double y);

// Principal branch, x >= 0.
double lambert_w(double x);

// I(theta; Y | X) for Y = X theta + W, theta ~ N(0, prior_var I), W ~ N(0, sigma2 I).
double linreg_mi_given_inputs(const Eigen::MatrixXd& X, double prior_var, double sigma2);

// Expected distinct classes after n draws from a Dirichlet-multinomial with
// symmetric concentration K/N over N classes, and its N -> inf limit.
double dirmult_expected_unique(long n, double K, long N);
double crp_expected_unique(long n, double K);

// Joint-pmf helpers; rows index the first variable.
double mutual_information(const Eigen::MatrixXd& joint);
double conditional_entropy(const Eigen::MatrixXd& joint);  // H(row | col)

double log_sum_exp(std::span<const double> v);
double softplus(double x);  // ln(1 + e^x)
double log_sigmoid(double x);
double sigmoid(double x);
Eigen::VectorXd softmax(const Eigen::VectorXd& z);

// Gauss-Hermite rule for E[f(Z)], Z ~ N(0,1): nodes and probability weights.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
QuadratureRule gauss_hermite_normal(int n);

// Sample mean and its standard error (n - 1 denominator).
struct MeanSE {
    double mean = 0.0;
    double se = 0.0;
};
MeanSE mean_se(std::span<const double> v);

void validate_pmf(std::span<const double> p, const char* who);

}  // namespace ilab
