#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ilab/info.hpp"
#include "ilab/process.hpp"
#include "ilab/rng.hpp"

namespace ilab {

struct QuantizerReport {
    double rate_nats = 0.0;
    double distortion = 0.0;
    double distortion_se = 0.0;
    double target_eps = 0.0;
    std::string surrogate;  // what `distortion` measures
};

// theta_tilde = theta + V, V ~ N(0, delta2/d I), for theta ~ N(0, prior_var I).
// The rate is I(theta; theta_tilde); the distortion is a Monte-Carlo estimate
// of I(Y; theta | theta_tilde, X) = E[1/2 ln(1 + c |X|^2 / sigma2)], with c the
// per-coordinate posterior variance of theta given theta_tilde.
struct GaussianQuantized {
    Eigen::VectorXd theta_tilde;
    QuantizerReport report;
    double surrogate_bound = 0.0;  // 1/2 ln(1 + delta2 / ((1 + delta2) sigma2)) at prior_var = 1/d
};
GaussianQuantized gaussian_quantize(const Eigen::VectorXd& theta, double delta2, double prior_var, double sigma2,
                                    RngStream& rng, int probes = 4096);
double gaussian_quantizer_rate(int d, double delta2, double prior_var);
// Noise level whose surrogate distortion equals eps; infinite once eps reaches 1/2 ln(1 + 1/sigma2).
double gaussian_delta2_for_eps(double eps, double sigma2);

// Width-m multinomial reduction of a Dirichlet-process network:
// (c/m) sum_i sign_{c_i} ReLU(A_{c_i}^T x), c_i ~ Categorical(weights), c the output scale.
FiniteNet multinomial_width_reduce(const DirichletLatent& latent, double output_scale, int m, RngStream& rng);

struct SphereCover {
    int d = 1;
    double eps = 0.0;
    Eigen::MatrixXd atoms;  // one unit vector per row
    double radius = 0.0;    // max over verification probes of the distance to the nearest atom
    double size_bound() const;  // (3/eps^2)^d
};
SphereCover build_sphere_cover(int d, double eps, RngStream& rng, int probes = 100000);
Eigen::Index quantize_to_cover(const SphereCover& cover, const Eigen::VectorXd& v);
FiniteNet snap_to_cover(FiniteNet net, const SphereCover& cover);

// A draw of the width-n misspecified model: fresh Dirichlet-process latent,
// multinomial reduction, then atoms snapped to the cover (no snapping when
// cover is null).
FiniteNet misspecified_width_prior_sample(const DirichletNetSpec& spec, int n, const SphereCover* cover, RngStream& rng);
// Reduction of a given latent with snapping; the distortion instrument.
FiniteNet width_reduce_snap(const DirichletLatent& latent, double output_scale, int n, const SphereCover* cover,
                            RngStream& rng);

// E[(F(X) - G(X))^2] over X ~ N(0, I_d) by Monte Carlo.
MeanSE net_sq_distance(const FiniteNet& F, const FiniteNet& G, RngStream& rng, int probes);

}  // namespace ilab
