#include "ilab/predictive.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "ilab/info.hpp"

namespace ilab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLn2Pi = 1.8378770664093454836;

double mixture_log_density(const GaussianMixturePred& m, double y) {
    const double h = 0.5 / m.var;
    auto term = [&](std::size_t i) {
        const double z = y - m.means[i];
        return std::log(m.weights[i]) - h * z * z;
    };
    double mx = -kInf;
    for (std::size_t i = 0; i < m.means.size(); ++i)
        if (m.weights[i] > 0.0) mx = std::max(mx, term(i));
    if (mx == -kInf) return -kInf;
    double s = 0.0;
    for (std::size_t i = 0; i < m.means.size(); ++i)
        if (m.weights[i] > 0.0) s += std::exp(term(i) - mx);
    return mx + std::log(s) - 0.5 * (kLn2Pi + std::log(m.var));
}

}  // namespace

double BernoulliPred::p1() const { return sigmoid(logit); }

BernoulliPred BernoulliPred::from_log_probs(double log_p1, double log_p0) {
    return BernoulliPred{log_p1 - log_p0};
}

double log_loss(const PredictiveDistribution& pred, double y) {
    return std::visit(
        [y](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GaussianPred>) {
                const double z = y - p.mean;
                return 0.5 * (kLn2Pi + std::log(p.var)) + 0.5 * z * z / p.var;
            } else if constexpr (std::is_same_v<T, GaussianMixturePred>) {
                return -mixture_log_density(p, y);
            } else if constexpr (std::is_same_v<T, BernoulliPred>) {
                if (y == 1.0) return softplus(-p.logit);
                if (y == 0.0) return softplus(p.logit);
                return kInf;
            } else {
                const long idx = std::lround(y) - p.first;
                if (idx < 0 || idx >= static_cast<long>(p.pmf.size())) return kInf;
                const double q = p.pmf[static_cast<std::size_t>(idx)];
                return q > 0.0 ? -std::log(q) : kInf;
            }
        },
        pred);
}

double predictive_kl(const PredictiveDistribution& p, const PredictiveDistribution& q) {
    if (const auto* gp = std::get_if<GaussianPred>(&p)) {
        if (const auto* gq = std::get_if<GaussianPred>(&q)) return kl_gaussian_1d(gp->mean, gp->var, gq->mean, gq->var);
        if (const auto* mq = std::get_if<GaussianMixturePred>(&q)) {
            static const QuadratureRule rule = gauss_hermite_normal(48);
            const double sd = std::sqrt(gp->var);
            double cross = 0.0;
            for (std::size_t i = 0; i < rule.nodes.size(); ++i)
                cross -= rule.weights[i] * mixture_log_density(*mq, gp->mean + sd * rule.nodes[i]);
            const double h = 0.5 * (kLn2Pi + 1.0 + std::log(gp->var));
            return std::max(0.0, cross - h);
        }
    } else if (const auto* bp = std::get_if<BernoulliPred>(&p)) {
        if (const auto* bq = std::get_if<BernoulliPred>(&q)) return binary_kl_logits(bp->logit, bq->logit);
    } else if (const auto* cp = std::get_if<CategoricalPred>(&p)) {
        if (const auto* cq = std::get_if<CategoricalPred>(&q)) {
            if (cp->first != cq->first || cp->pmf.size() != cq->pmf.size())
                throw std::domain_error("predictive_kl: categorical supports differ");
            double kl = 0.0;
            for (std::size_t i = 0; i < cp->pmf.size(); ++i) {
                if (cp->pmf[i] == 0.0) continue;
                if (cq->pmf[i] == 0.0) return kInf;
                kl += cp->pmf[i] * std::log(cp->pmf[i] / cq->pmf[i]);
            }
            return std::max(kl, 0.0);
        }
    }
    throw std::domain_error("predictive_kl: unsupported pair of predictive types");
}

double predictive_entropy(const PredictiveDistribution& p) {
    if (const auto* g = std::get_if<GaussianPred>(&p)) return 0.5 * (kLn2Pi + 1.0 + std::log(g->var));
    if (const auto* b = std::get_if<BernoulliPred>(&p)) {
        const double q = b->p1();
        return q * softplus(-b->logit) + (1.0 - q) * softplus(b->logit);
    }
    if (const auto* c = std::get_if<CategoricalPred>(&p)) {
        double h = 0.0;
        for (double v : c->pmf)
            if (v > 0.0) h -= v * std::log(v);
        return h;
    }
    throw std::domain_error("predictive_entropy: mixtures have no closed form");
}

}  // namespace ilab
