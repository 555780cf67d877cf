#pragma once

#include <variant>
#include <vector>

namespace ilab {

struct GaussianPred {
    double mean = 0.0;
    double var = 1.0;
};

// Equal-variance Gaussian mixture; produced by ensemble predictors on
// real-valued processes.
struct GaussianMixturePred {
    std::vector<double> weights;
    std::vector<double> means;
    double var = 1.0;
};

// Bernoulli over {0,1}; the logit is kept so extreme probabilities stay exact.
struct BernoulliPred {
    double logit = 0.0;
    double p1() const;
    static BernoulliPred from_log_probs(double log_p1, double log_p0);
};

// Categorical over outcomes first, first+1, ...
struct CategoricalPred {
    std::vector<double> pmf;
    int first = 1;
};

using PredictiveDistribution = std::variant<GaussianPred, GaussianMixturePred, BernoulliPred, CategoricalPred>;

// -ln pred(y); density for real labels; +inf for a zero-mass outcome.
double log_loss(const PredictiveDistribution& pred, double y);

// KL(p || q) when p is the true conditional. Exact for discrete and
// Gaussian pairs; Gauss-Hermite quadrature when q is a Gaussian mixture.
double predictive_kl(const PredictiveDistribution& p, const PredictiveDistribution& q);

// Entropy (differential for Gaussians) of a non-mixture predictive.
double predictive_entropy(const PredictiveDistribution& p);

}  // namespace ilab
