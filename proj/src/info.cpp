#include "ilab/info.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace ilab {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void validate_pmf(std::span<const double> p, const char* who) {
    if (p.empty()) throw std::domain_error(std::string(who) + ": empty pmf");
    double s = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::domain_error(std::string(who) + ": invalid probability");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::domain_error(std::string(who) + ": pmf does not sum to 1");
}

MeanSE mean_se(std::span<const double> v) {
    if (v.empty()) throw std::domain_error("mean_se: empty sample");
    const auto n = static_cast<double>(v.size());
    double m = 0.0;
    for (double x : v) m += x;
    m /= n;
    if (v.size() < 2) return {m, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / (n - 1.0) / n)};
}

double entropy_pmf(std::span<const double> p) {
    validate_pmf(p, "entropy_pmf");
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return std::max(h, 0.0);
}

double kl_pmf(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::domain_error("kl_pmf: mismatched lengths");
    validate_pmf(p, "kl_pmf");
    validate_pmf(q, "kl_pmf");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) return kInf;
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(kl, 0.0);
}

double kl_gaussian(const GaussianParams& p, const GaussianParams& q) {
    const auto k = p.mean.size();
    if (q.mean.size() != k || p.covariance.rows() != k || q.covariance.rows() != k)
        throw std::domain_error("kl_gaussian: dimension mismatch");
    Eigen::LLT<Eigen::MatrixXd> lq(q.covariance);
    if (lq.info() != Eigen::Success || lq.matrixL().toDenseMatrix().diagonal().minCoeff() <= 0.0)
        throw std::domain_error("kl_gaussian: q covariance is singular");
    Eigen::LLT<Eigen::MatrixXd> lp(p.covariance);
    if (lp.info() != Eigen::Success) return kInf;
    const Eigen::VectorXd diag_p = lp.matrixL().toDenseMatrix().diagonal();
    if (diag_p.minCoeff() <= 0.0) return kInf;
    const Eigen::VectorXd dm = q.mean - p.mean;
    const double trace = lq.solve(p.covariance).trace();
    const double maha = dm.dot(lq.solve(dm));
    const double logdet_q = 2.0 * lq.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double logdet_p = 2.0 * diag_p.array().log().sum();
    return std::max(0.0, 0.5 * (trace + maha - static_cast<double>(k) + logdet_q - logdet_p));
}

double kl_gaussian_1d(double mean_p, double var_p, double mean_q, double var_q) {
    if (!(var_q > 0.0)) throw std::domain_error("kl_gaussian_1d: q variance must be positive");
    if (!(var_p > 0.0)) return kInf;
    const double dm = mean_q - mean_p;
    const double r = var_p / var_q;
    return std::max(0.0, 0.5 * (r + dm * dm / var_q - 1.0 - std::log(r)));
}

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double log_sigmoid(double x) { return -softplus(-x); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double binary_kl_logits(double x, double y) {
    // sigma(x) [sp(-y) - sp(-x)] + sigma(-x) [sp(y) - sp(x)]
    const double v = sigmoid(x) * (softplus(-y) - softplus(-x)) + sigmoid(-x) * (softplus(y) - softplus(x));
    return std::max(v, 0.0);
}

double lambert_w(double x) {
    if (std::isnan(x) || x < 0.0) throw std::domain_error("lambert_w: argument must be nonnegative");
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return x;
    double w = std::log1p(x);
    for (int it = 0; it < 64; ++it) {
        const double ew = std::exp(w);
        const double f = w * ew - x;
        const double wp1 = w + 1.0;
        const double step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(w))) break;
    }
    if (std::isfinite(w) && std::abs(w * std::exp(w) - x) <= 1e-12 * x) return w;
    double lo = 0.0, hi = std::log1p(x) + 1.0;
    for (int it = 0; it < 2000 && hi - lo > 1e-16 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (mid * std::exp(mid) < x ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double linreg_mi_given_inputs(const Eigen::MatrixXd& X, double prior_var, double sigma2) {
    if (!(sigma2 > 0.0)) throw std::domain_error("linreg_mi_given_inputs: noise variance must be positive");
    if (!(prior_var >= 0.0)) throw std::domain_error("linreg_mi_given_inputs: negative prior variance");
    if (X.size() == 0 || prior_var == 0.0) return 0.0;
    const double c = prior_var / sigma2;
    // det(I_T + c X X^T) = det(I_d + c X^T X); factor the smaller one.
    Eigen::MatrixXd G = X.rows() >= X.cols() ? Eigen::MatrixXd(X.transpose() * X) : Eigen::MatrixXd(X * X.transpose());
    G *= c;
    G.diagonal().array() += 1.0;
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success) throw std::runtime_error("linreg_mi_given_inputs: factorization failed");
    return llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double dirmult_expected_unique(long n, double K, long N) {
    if (n < 1 || !(K > 0.0) || N < 1) throw std::domain_error("dirmult_expected_unique: arguments must be positive");
    const double a = K / static_cast<double>(N);
    double log_miss = 0.0;
    for (long i = 0; i < n; ++i) log_miss += std::log1p(-a / (K + static_cast<double>(i)));
    return -static_cast<double>(N) * std::expm1(log_miss);
}

double crp_expected_unique(long n, double K) {
    if (n < 1 || !(K > 0.0)) throw std::domain_error("crp_expected_unique: arguments must be positive");
    double s = 0.0;
    for (long i = 0; i < n; ++i) s += K / (K + static_cast<double>(i));
    return s;
}

double mutual_information(const Eigen::MatrixXd& joint) {
    const Eigen::VectorXd pr = joint.rowwise().sum();
    const Eigen::RowVectorXd pc = joint.colwise().sum();
    double mi = 0.0;
    for (Eigen::Index i = 0; i < joint.rows(); ++i)
        for (Eigen::Index j = 0; j < joint.cols(); ++j) {
            const double p = joint(i, j);
            if (p > 0.0) mi += p * std::log(p / (pr[i] * pc[j]));
        }
    return mi;
}

double conditional_entropy(const Eigen::MatrixXd& joint) {
    const Eigen::RowVectorXd pc = joint.colwise().sum();
    double h = 0.0;
    for (Eigen::Index i = 0; i < joint.rows(); ++i)
        for (Eigen::Index j = 0; j < joint.cols(); ++j) {
            const double p = joint(i, j);
            if (p > 0.0) h -= p * std::log(p / pc[j]);
        }
    return h;
}

double log_sum_exp(std::span<const double> v) {
    double m = -kInf;
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
    const double m = z.maxCoeff();
    Eigen::VectorXd e = (z.array() - m).exp();
    return e / e.sum();
}

QuadratureRule gauss_hermite_normal(int n) {
    if (n < 1) throw std::domain_error("gauss_hermite_normal: need at least one node");
    // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = es.eigenvalues()[i];
        const double v = es.eigenvectors()(0, i);
        rule.weights[i] = v * v;
    }
    return rule;
}

}  // namespace ilab
