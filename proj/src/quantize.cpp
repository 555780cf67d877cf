#include "ilab/quantize.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ilab {

double gaussian_quantizer_rate(int d, double delta2, double prior_var) {
    if (d < 1 || !(delta2 > 0.0) || !(prior_var > 0.0))
        throw std::domain_error("gaussian_quantizer_rate: arguments must be positive");
    if (std::isinf(delta2)) return 0.0;
    return 0.5 * d * std::log1p(prior_var * d / delta2);
}

double gaussian_delta2_for_eps(double eps, double sigma2) {
    if (!(eps > 0.0) || !(sigma2 > 0.0)) throw std::domain_error("gaussian_delta2_for_eps: arguments must be positive");
    const double a = sigma2 * std::expm1(2.0 * eps);
    if (a >= 1.0) return std::numeric_limits<double>::infinity();
    return a / (1.0 - a);
}

GaussianQuantized gaussian_quantize(const Eigen::VectorXd& theta, double delta2, double prior_var, double sigma2,
                                    RngStream& rng, int probes) {
    const auto d = static_cast<int>(theta.size());
    if (d < 1) throw std::domain_error("gaussian_quantize: empty latent");
    if (!(delta2 > 0.0)) throw std::domain_error("gaussian_quantize: delta2 must be positive");
    if (!(sigma2 > 0.0) || !(prior_var > 0.0)) throw std::domain_error("gaussian_quantize: variances must be positive");
    if (probes < 2) throw std::domain_error("gaussian_quantize: need at least two probes");
    GaussianQuantized out;
    const double v = delta2 / d;
    out.theta_tilde = theta + sample_gaussian(rng, d, std::isinf(v) ? 0.0 : v);
    out.report.rate_nats = gaussian_quantizer_rate(d, delta2, prior_var);
    const double c = std::isinf(v) ? prior_var : prior_var * v / (prior_var + v);
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < probes; ++i) {
        const double g = 0.5 * std::log1p(c * sample_gaussian(rng, d, 1.0).squaredNorm() / sigma2);
        s += g;
        s2 += g * g;
    }
    const double m = s / probes;
    out.report.distortion = m;
    out.report.distortion_se = std::sqrt(std::max(0.0, s2 / probes - m * m) / (probes - 1));
    out.report.target_eps = std::isinf(delta2) ? 0.5 * std::log1p(1.0 / sigma2)
                                               : 0.5 * std::log1p(delta2 / ((1.0 + delta2) * sigma2));
    out.report.surrogate = "I(Y;theta|theta_tilde,X)";
    out.surrogate_bound = out.report.target_eps;
    return out;
}

FiniteNet multinomial_width_reduce(const DirichletLatent& latent, double output_scale, int m, RngStream& rng) {
    return width_reduce_snap(latent, output_scale, m, nullptr, rng);
}

FiniteNet width_reduce_snap(const DirichletLatent& latent, double output_scale, int n, const SphereCover* cover,
                            RngStream& rng) {
    if (n < 1) throw std::domain_error("width reduction: width must be positive");
    const auto& w = latent.draw.weights;
    if (w.empty() || latent.signs.size() != w.size()) throw std::domain_error("width reduction: malformed latent");
    const int d = static_cast<int>(latent.draw.atoms.front().size());
    FiniteNet net;
    net.atoms.resize(n, d);
    net.coef.resize(n);
    // The truncated tail is dropped; its mass is below the truncation tolerance.
    const auto picks = sample_weighted_n(rng, w, static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto c = picks[static_cast<std::size_t>(i)];
        net.atoms.row(i) = latent.draw.atoms[c].transpose();
        net.coef[i] = output_scale * latent.signs[c] / n;
    }
    return cover ? snap_to_cover(std::move(net), *cover) : net;
}

double SphereCover::size_bound() const { return std::pow(3.0 / (eps * eps), d); }

namespace {

Eigen::MatrixXd sphere_points(RngStream& rng, int d, int n) {
    Eigen::MatrixXd P(n, d);
    for (int i = 0; i < n; ++i) P.row(i) = sample_unit_sphere(rng, d).transpose();
    return P;
}

// Distance from every row of P to its nearest atom.
Eigen::VectorXd nearest_distance(const Eigen::MatrixXd& P, const Eigen::MatrixXd& atoms) {
    // Unit vectors: |p - a|^2 = 2 - 2 p.a
    const Eigen::VectorXd best = (P * atoms.transpose()).rowwise().maxCoeff();
    return (2.0 - 2.0 * best.array()).max(0.0).sqrt();
}

}  // namespace

SphereCover build_sphere_cover(int d, double eps, RngStream& rng, int probes) {
    if (d < 1 || d > 3) throw std::domain_error("build_sphere_cover: only d <= 3 is supported");
    if (!(eps >= 0.05)) throw std::domain_error("build_sphere_cover: eps below 0.05 is out of budget");
    SphereCover cover;
    cover.d = d;
    cover.eps = eps;
    if (d == 1) {
        cover.atoms = (Eigen::MatrixXd(2, 1) << 1.0, -1.0).finished();
        cover.radius = 0.0;
        return cover;
    }
    // Greedy farthest-point selection on a dense pool, aiming inside eps so
    // that fresh probes land within eps as well.
    const int pool_n = d == 2 ? 20000 : 60000;
    const Eigen::MatrixXd pool = sphere_points(rng, d, pool_n);
    const double target = 0.85 * eps;
    std::vector<Eigen::Index> chosen{0};
    Eigen::VectorXd best_dot = pool * pool.row(0).transpose();
    constexpr std::size_t kMaxAtoms = 200000;
    while (true) {
        Eigen::Index far;
        const double min_dot = best_dot.minCoeff(&far);
        if (std::sqrt(std::max(0.0, 2.0 - 2.0 * min_dot)) <= target) break;
        if (chosen.size() >= kMaxAtoms) throw std::runtime_error("build_sphere_cover: atom budget exceeded");
        chosen.push_back(far);
        best_dot = best_dot.cwiseMax(pool * pool.row(far).transpose());
    }
    std::vector<Eigen::VectorXd> atoms;
    for (auto i : chosen) atoms.push_back(pool.row(i).transpose());
    auto pack = [&] {
        Eigen::MatrixXd A(static_cast<Eigen::Index>(atoms.size()), d);
        for (std::size_t i = 0; i < atoms.size(); ++i) A.row(static_cast<Eigen::Index>(i)) = atoms[i].transpose();
        return A;
    };
    cover.atoms = pack();
    // Probes that fall outside eps become atoms; the reported radius comes from a fresh probe set.
    const Eigen::MatrixXd patch = sphere_points(rng, d, probes);
    const Eigen::VectorXd gap = nearest_distance(patch, cover.atoms);
    for (Eigen::Index i = 0; i < patch.rows(); ++i)
        if (gap[i] > target) atoms.push_back(patch.row(i).transpose());
    cover.atoms = pack();
    cover.radius = nearest_distance(sphere_points(rng, d, probes), cover.atoms).maxCoeff();
    if (cover.radius > eps) throw std::runtime_error("build_sphere_cover: probe verification failed");
    return cover;
}

Eigen::Index quantize_to_cover(const SphereCover& cover, const Eigen::VectorXd& v) {
    if (v.size() != cover.d) throw std::domain_error("quantize_to_cover: dimension mismatch");
    Eigen::Index best;
    (cover.atoms * v).maxCoeff(&best);
    return best;
}

FiniteNet snap_to_cover(FiniteNet net, const SphereCover& cover) {
    for (Eigen::Index i = 0; i < net.atoms.rows(); ++i)
        net.atoms.row(i) = cover.atoms.row(quantize_to_cover(cover, net.atoms.row(i).transpose()));
    return net;
}

FiniteNet misspecified_width_prior_sample(const DirichletNetSpec& spec, int n, const SphereCover* cover, RngStream& rng) {
    const auto lat = std::get<DirichletLatent>(sample_latent(spec, rng));
    return width_reduce_snap(lat, spec.output_scale(), n, cover, rng);
}

MeanSE net_sq_distance(const FiniteNet& F, const FiniteNet& G, RngStream& rng, int probes) {
    if (probes < 2) throw std::domain_error("net_sq_distance: need at least two probes");
    const auto d = F.atoms.cols();
    if (G.atoms.cols() != d) throw std::domain_error("net_sq_distance: input dimensions differ");
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < probes; ++i) {
        const Eigen::VectorXd x = sample_gaussian(rng, d, 1.0);
        const double e = F(x) - G(x);
        s += e * e;
        s2 += e * e * e * e;
    }
    const double m = s / probes;
    return {m, std::sqrt(std::max(0.0, s2 / probes - m * m) / (probes - 1))};
}

}  // namespace ilab
