#pragma once

#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ilab/info.hpp"
#include "ilab/predictive.hpp"
#include "ilab/process.hpp"
#include "ilab/rng.hpp"

namespace ilab {

// Exact Gaussian posterior for linear regression. Empty fields take the
// process prior N(0, theta_var I) and its noise variance.
struct ConjugateKind {
    std::optional<Eigen::VectorXd> prior_mean;
    std::optional<Eigen::MatrixXd> prior_cov;
    std::optional<double> sigma2;
};

// Exact posterior over a finite list of latents.
struct EnumerationKind {
    std::vector<LatentParams> support;
    std::vector<double> prior;
};

// Importance-weighted prior draws with ESS-triggered multinomial resampling.
// Gaussian-prior processes rejuvenate after each resampling with move_steps
// random-walk Metropolis sweeps. Linear representation processes integrate
// each task vector on a Gauss-Hermite grid with xi_grid nodes per axis.
struct EnsembleKind {
    int S = 2048;
    double resample_ess_frac = 0.5;
    int move_steps = 2;
    int xi_grid = 10;
};

struct OmniscientKind {};

// Conjugate update under a wrong Gaussian prior; the covariance may be
// singular, in which case the posterior stays on the prior's support.
struct MisspecifiedConjugateKind {
    Eigen::VectorXd prior_mean;
    Eigen::MatrixXd prior_cov;
    std::optional<double> sigma2;
};

// Ensemble over width-n reductions of fresh Dirichlet-process latents,
// atoms snapped to an eps-cover (eps = 0: no snapping).
struct MisspecifiedWidthKind {
    int n = 8;
    double eps = 0.0;
    int S = 2048;
    double resample_ess_frac = 0.5;
};

// Linear representation learner that is handed the true representation and
// only infers the task vectors.
struct OracleMetaKind {
    int xi_grid = 40;
};

using PredictorKind = std::variant<ConjugateKind, EnumerationKind, EnsembleKind, OmniscientKind,
                                   MisspecifiedConjugateKind, MisspecifiedWidthKind, OracleMetaKind>;

std::string predictor_name(const PredictorKind& kind);
bool needs_latent(const PredictorKind& kind);

class Predictor {
public:
    // latent may be null unless the kind needs the true latent.
    Predictor(const PredictorKind& kind, const ProcessSpec& spec, const LatentParams* latent, RngStream rng);
    ~Predictor();
    Predictor(Predictor&&) noexcept;
    Predictor& operator=(Predictor&&) noexcept;

    void observe(const Observation& obs);
    PredictiveDistribution predict(const Eigen::VectorXd& x, int task = 0);

    const History& history() const;
    // Posterior of the conjugate kinds; nullopt otherwise.
    std::optional<GaussianParams> posterior() const;
    // Normalized log-weights of the enumeration and ensemble kinds; empty otherwise.
    Eigen::VectorXd log_weights() const;
    int resample_count() const;
    double acceptance_rate() const;  // mean over rejuvenation sweeps, NaN if none ran

    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
};

// Tensor Gauss-Hermite grid for N(0, var I_dim): nodes as columns, probability weights.
struct GaussianGrid {
    Eigen::MatrixXd nodes;
    Eigen::VectorXd weights;
};
GaussianGrid gaussian_grid(int dim, int per_axis, double var);

}  // namespace ilab
