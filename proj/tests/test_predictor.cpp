#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "ilab/predictor.hpp"

using namespace ilab;

namespace {

Observation obs_xy(Eigen::VectorXd x, double y) {
    Observation o;
    o.x = std::move(x);
    o.y = y;
    return o;
}

double mixture_mean(const PredictiveDistribution& p) {
    if (const auto* g = std::get_if<GaussianPred>(&p)) return g->mean;
    const auto& m = std::get<GaussianMixturePred>(p);
    double s = 0.0;
    for (std::size_t i = 0; i < m.means.size(); ++i) s += m.weights[i] * m.means[i];
    return s;
}

}  // namespace

TEST_CASE("conjugate prior predictive variance") {
    LinRegSpec s{.d = 4, .sigma2 = 0.3};
    Predictor p(ConjugateKind{}, s, nullptr, RngStream(1));
    const Eigen::VectorXd x = Eigen::VectorXd::Ones(4);
    const auto g = std::get<GaussianPred>(p.predict(x));
    CHECK(g.mean == 0.0);
    CHECK(g.var == doctest::Approx(1.3).epsilon(1e-14));
}

TEST_CASE("enumeration over two mirrored hypotheses predicts one half") {
    LogRegSpec s{.d = 1};
    EnumerationKind k;
    k.support = {VectorLatent{Eigen::VectorXd::Constant(1, 1.5)}, VectorLatent{Eigen::VectorXd::Constant(1, -1.5)}};
    k.prior = {0.5, 0.5};
    Predictor p(k, s, nullptr, RngStream(2));
    const auto b = std::get<BernoulliPred>(p.predict(Eigen::VectorXd::Constant(1, 0.8)));
    CHECK(b.p1() == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("ensemble prior predictive mean agrees with the conjugate prior") {
    LinRegSpec s{.d = 3, .sigma2 = 0.5};
    Predictor e(EnsembleKind{.S = 2048}, s, nullptr, RngStream(3));
    Eigen::VectorXd x(3);
    x << 0.5, -1.0, 2.0;
    const auto m = std::get<GaussianMixturePred>(e.predict(x));
    const double mean = mixture_mean(m);
    double v = 0.0;
    for (std::size_t i = 0; i < m.means.size(); ++i) v += m.weights[i] * (m.means[i] - mean) * (m.means[i] - mean);
    CHECK(std::abs(mean) <= 3.0 * std::sqrt(v / 2048.0));
    // spread of the particle means matches the prior variance of theta.x
    CHECK(v == doctest::Approx(x.squaredNorm() / 3.0).epsilon(0.1));
}

TEST_CASE("conjugate posterior variance shrinks along a repeated input") {
    LinRegSpec s{.d = 2, .sigma2 = 1.0};
    Predictor p(ConjugateKind{}, s, nullptr, RngStream(4));
    double last = p.posterior()->covariance(0, 0);
    for (int t = 0; t < 10; ++t) {
        p.observe(obs_xy(Eigen::Vector2d(1.0, 0.0), 0.3 * t));
        const double v = p.posterior()->covariance(0, 0);
        CHECK(v < last);
        last = v;
    }
    CHECK(p.posterior()->covariance(1, 1) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("enumeration weights are prior times likelihood") {
    LogRegSpec s{.d = 2};
    const std::vector<Eigen::Vector2d> th{{1.0, 0.0}, {-0.5, 2.0}, {0.3, -1.2}};
    EnumerationKind k;
    for (const auto& t : th) k.support.push_back(VectorLatent{t});
    k.prior = {0.2, 0.5, 0.3};
    Predictor p(k, s, nullptr, RngStream(5));
    const std::vector<std::pair<Eigen::Vector2d, double>> data{
        {{0.4, 1.0}, 1.0}, {{-1.0, 0.2}, 0.0}, {{2.0, -0.5}, 1.0}, {{0.1, 0.1}, 0.0}};
    for (const auto& [x, y] : data) p.observe(obs_xy(x, y));
    std::vector<double> w(3);
    double tot = 0.0;
    for (int i = 0; i < 3; ++i) {
        double l = k.prior[static_cast<std::size_t>(i)];
        for (const auto& [x, y] : data) {
            const double q = 1.0 / (1.0 + std::exp(-th[static_cast<std::size_t>(i)].dot(x)));
            l *= y == 1.0 ? q : 1.0 - q;
        }
        tot += (w[static_cast<std::size_t>(i)] = l);
    }
    const Eigen::VectorXd lw = p.log_weights();
    CHECK(lw.array().exp().sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (int i = 0; i < 3; ++i) CHECK(std::exp(lw[i]) == doctest::Approx(w[static_cast<std::size_t>(i)] / tot).epsilon(1e-12));
}

TEST_CASE("singular misspecified prior keeps the dead coordinate at zero") {
    LinRegSpec s{.d = 3, .sigma2 = 0.5};
    MisspecifiedConjugateKind k{Eigen::VectorXd::Zero(3), Eigen::Vector3d(1.0, 1.0, 0.0).asDiagonal(), std::nullopt};
    Predictor p(k, s, nullptr, RngStream(6));
    RngStream rng(7);
    for (int t = 0; t < 50; ++t) {
        p.observe(obs_xy(sample_gaussian(rng, 3, 1.0), rng.normal()));
        CHECK(p.posterior()->mean[2] == 0.0);
        CHECK(p.posterior()->covariance(2, 2) == 0.0);
    }
}

TEST_CASE("conjugate matches enumeration on a discretized prior") {
    LinRegSpec s{.d = 1, .sigma2 = 1.0};
    const auto rule = gauss_hermite_normal(16);
    EnumerationKind k;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        k.support.push_back(VectorLatent{Eigen::VectorXd::Constant(1, rule.nodes[i])});
        k.prior.push_back(rule.weights[i]);
    }
    Predictor c(ConjugateKind{}, s, nullptr, RngStream(8)), e(k, s, nullptr, RngStream(9));
    const std::vector<std::pair<double, double>> data{{0.7, 0.4}, {-1.2, -0.9}, {0.3, 1.1}};
    for (const auto& [x, y] : data) {
        const Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, x);
        CHECK(predictive_kl(c.predict(xv), e.predict(xv)) < 1e-3);
        c.observe(obs_xy(xv, y));
        e.observe(obs_xy(xv, y));
    }
    const Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, 1.0);
    CHECK(predictive_kl(c.predict(xv), e.predict(xv)) < 1e-3);
}

TEST_CASE("omniscient predictor returns the true conditional") {
    LinRegSpec s{.d = 2, .sigma2 = 0.7};
    const LatentParams lat = VectorLatent{Eigen::Vector2d(0.3, -0.8)};
    Predictor p(OmniscientKind{}, s, &lat, RngStream(10));
    const Eigen::Vector2d x(1.5, 2.0);
    const auto g = std::get<GaussianPred>(p.predict(x));
    CHECK(g.mean == doctest::Approx(0.3 * 1.5 - 0.8 * 2.0).epsilon(1e-15));
    CHECK(g.var == 0.7);
    const Observation o = obs_xy(x, 0.25);
    History h;
    CHECK(log_loss(g, o.y) == doctest::Approx(-cond_logprob(s, lat, h, o.x, o.y)).epsilon(1e-13));
    CHECK_THROWS_AS(Predictor(OmniscientKind{}, s, nullptr, RngStream(11)), std::domain_error);
}

TEST_CASE("categorical predictives are normalized") {
    LinRepSpec s{.d = 5, .r = 2, .tasks = 2};
    Predictor p(EnsembleKind{.S = 64, .xi_grid = 4}, s, nullptr, RngStream(12));
    RngStream rng(13);
    RngStream lrng(14);
    const auto lat = sample_latent(s, lrng);
    History h;
    for (int t = 0; t < 20; ++t) {
        const int task = t % 2;
        const auto pred = p.predict(Eigen::VectorXd(), task);
        const auto& c = std::get<CategoricalPred>(pred);
        double sum = 0.0;
        for (double v : c.pmf) sum += v;
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        const Observation o = meta_step(s, lat, task, h, rng);
        p.observe(o);
        h.append(o);
    }
}

TEST_CASE("log loss reference values") {
    CHECK(log_loss(BernoulliPred{0.0}, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(log_loss(GaussianPred{0.0, 1.0}, 0.0) == doctest::Approx(0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
    CHECK(std::isinf(log_loss(CategoricalPred{{1.0, 0.0}, 1}, 2.0)));
}

TEST_CASE("recursive conjugate update equals the batch posterior") {
    LinRegSpec s{.d = 3, .sigma2 = 0.4};
    Predictor p(ConjugateKind{}, s, nullptr, RngStream(15));
    RngStream rng(16);
    std::vector<Eigen::VectorXd> xs;
    std::vector<double> ys;
    for (int t = 0; t < 40; ++t) {
        xs.push_back(sample_gaussian(rng, 3, 1.0));
        ys.push_back(rng.normal());
        p.observe(obs_xy(xs.back(), ys.back()));
        Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(3, 3) * 3.0;
        Eigen::VectorXd b = Eigen::VectorXd::Zero(3);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            prec += xs[i] * xs[i].transpose() / s.sigma2;
            b += xs[i] * ys[i] / s.sigma2;
        }
        const Eigen::MatrixXd cov = prec.inverse();
        const auto post = *p.posterior();
        CHECK((post.covariance - cov).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((post.mean - cov * b).cwiseAbs().maxCoeff() < 1e-8);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(post.covariance);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("ensemble approaches the conjugate predictive as it grows") {
    LinRegSpec s{.d = 3, .sigma2 = 0.5};
    auto mean_kl = [&](int S) {
        double tot = 0.0;
        const int seeds = 12;
        for (int r = 0; r < seeds; ++r) {
            RngStream data(static_cast<std::uint64_t>(900 + r));
            const auto lat = sample_latent(s, data);
            Predictor c(ConjugateKind{}, s, nullptr, RngStream(17));
            Predictor e(EnsembleKind{.S = S}, s, nullptr, RngStream(static_cast<std::uint64_t>(1000 + r)));
            History h;
            for (int t = 0; t < 15; ++t) {
                const Observation o = step(s, lat, h, data);
                c.observe(o);
                e.observe(o);
                h.append(o);
            }
            const Eigen::VectorXd x = sample_gaussian(data, 3, 1.0);
            tot += predictive_kl(c.predict(x), e.predict(x));
        }
        return tot / seeds;
    };
    const double small = mean_kl(512), large = mean_kl(4096);
    CHECK(large <= 0.5 * small);
}

TEST_CASE("ensemble bookkeeping") {
    LinRegSpec s{.d = 2, .sigma2 = 0.1};
    Predictor e(EnsembleKind{.S = 256}, s, nullptr, RngStream(18));
    RngStream data(19);
    const auto lat = sample_latent(s, data);
    History h;
    for (int t = 0; t < 30; ++t) {
        const Observation o = step(s, lat, h, data);
        e.observe(o);
        h.append(o);
        CHECK(e.log_weights().array().exp().sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(e.resample_count() > 0);
    CHECK(e.acceptance_rate() > 0.0);
    CHECK(e.history().size() == 30);
    CHECK_THROWS_AS(Predictor(EnsembleKind{.S = 1}, s, nullptr, RngStream(20)), std::domain_error);
    CHECK_THROWS_AS(Predictor(ConjugateKind{}, LogRegSpec{.d = 2}, nullptr, RngStream(21)), std::domain_error);
}

TEST_CASE("tensor gauss-hermite grid moments") {
    const auto g = gaussian_grid(2, 5, 0.5);
    CHECK(g.nodes.cols() == 25);
    CHECK(g.weights.sum() == doctest::Approx(1.0).epsilon(1e-13));
    const Eigen::VectorXd m2 = g.nodes.array().square().matrix() * g.weights;
    CHECK(m2[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m2[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(gaussian_grid(8, 10, 1.0), std::domain_error);
}
