#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ilab/info.hpp"
#include "ilab/process.hpp"

using namespace ilab;

TEST_CASE("validation rejects malformed specs") {
    CHECK_THROWS_AS(validate(LinRegSpec{0, 1.0}), std::domain_error);
    CHECK_THROWS_AS(validate(LinRegSpec{3, 0.0}), std::domain_error);
    CHECK_THROWS_AS(validate(LinRepSpec{2, 3, 1}), std::domain_error);
    auto ark = make_ark_spec(4, 2);
    ark.phi0 *= 1.001;
    CHECK_THROWS_AS(validate(ark), std::domain_error);
    auto icl = make_icl_spec(4, 5.0, 3, 3, 1, 2, 2, 4);
    CHECK_THROWS_AS(validate(icl), std::domain_error);
    CHECK_NOTHROW(validate(make_transformer_spec(5, 3, 2, 4)));
}

TEST_CASE("embeddings are unit norm") {
    for (auto [c, d] : {std::pair{3, 5}, std::pair{5, 3}, std::pair{2, 1}, std::pair{64, 8}})
        for (const auto& e : default_embeddings(c, d)) CHECK(std::abs(e.norm() - 1.0) < 1e-12);
    CHECK(default_embeddings(3, 5)[1] == Eigen::VectorXd::Unit(5, 1));
}

TEST_CASE("prior second moments") {
    RngStream rng(10);
    {
        const ProcessSpec s = LinRegSpec{10000, 1.0};
        double acc = 0.0;
        for (int i = 0; i < 1000; ++i) acc += std::get<VectorLatent>(sample_latent(s, rng)).theta.squaredNorm();
        CHECK(std::abs(acc / 1000 - 1.0) < 0.05);
    }
    {
        const ProcessSpec s = DeepNetSpec{3, 6, 3, 1.0};
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(3, 3);
        double last = 0.0;
        const int n = 4000;
        for (int i = 0; i < n; ++i) {
            const auto lat = std::get<DeepNetLatent>(sample_latent(s, rng));
            acc += lat.layers[0].transpose() * lat.layers[0];
            last += lat.layers[2].squaredNorm();
            REQUIRE(lat.layers[1].rows() == 6);
            REQUIRE(lat.layers[2].rows() == 1);
        }
        acc /= n;
        // Entries of A1^T A1 have variance about N/d^2 per draw.
        const double se = std::sqrt(6.0 / 9.0 / n);
        CHECK((acc - 2.0 * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 4.0 * se * 2.0);
        CHECK(std::abs(last / n - 1.0) < 0.05);
    }
    {
        const ProcessSpec s = make_ark_spec(3, 4);
        double acc = 0.0;
        for (int i = 0; i < 2000; ++i) {
            const auto lat = std::get<ARKLatent>(sample_latent(s, rng));
            for (const auto& t : lat.theta) acc += t.squaredNorm();
        }
        CHECK(std::abs(acc / 2000 - 3.0) < 0.1);
    }
    {
        const ProcessSpec s = LinRepSpec{6, 2, 5};
        for (int i = 0; i < 200; ++i) {
            const auto lat = std::get<LinRepLatent>(sample_latent(s, rng));
            REQUIRE((lat.psi.transpose() * lat.psi - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
            REQUIRE(lat.xi.size() == 5);
        }
    }
}

TEST_CASE("linear regression emission and log probability") {
    RngStream rng(12);
    const ProcessSpec s = LinRegSpec{3, 1.0};
    const LatentParams zero = VectorLatent{Eigen::VectorXd::Zero(3)};
    History h;
    double acc = 0.0, acc2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const auto o = step(s, zero, h, rng);
        acc += o.y;
        acc2 += o.y * o.y;
    }
    const double m = acc / n;
    CHECK(std::abs(acc2 / n - m * m - 1.0) < 0.02);
    CHECK(cond_logprob(s, zero, h, Eigen::VectorXd::Ones(3), 0.0) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)));
    CHECK(*irreducible_rate(s) == doctest::Approx(0.5 * std::log(2 * std::numbers::pi * std::numbers::e)));
    CHECK(*irreducible_rate(LinRegSpec{3, 0.25}) ==
          doctest::Approx(0.5 * std::log(2 * std::numbers::pi * std::numbers::e * 0.25)));
    CHECK_FALSE(irreducible_rate(LogRegSpec{3}).has_value());
    CHECK(initial_history(s, zero, rng).size() == 0);
}

TEST_CASE("logistic regression label law") {
    const ProcessSpec s = LogRegSpec{2};
    const LatentParams lat = VectorLatent{Eigen::Vector2d(1.0, -1.0)};
    History h;
    const Eigen::Vector2d x(0.5, 0.5);
    CHECK(std::exp(cond_logprob(s, lat, h, x, 1.0)) == doctest::Approx(0.5));
    const Eigen::Vector2d x2(0.3, -0.9);
    CHECK(cond_logprob(s, lat, h, x2, 1.0) == doctest::Approx(-std::log1p(std::exp(-1.2))).epsilon(1e-14));
}

TEST_CASE("binary AR process") {
    RngStream rng(13);
    const ProcessSpec s = make_ark_spec(3, 4);
    const auto lat = sample_latent(s, rng);
    History h = initial_history(s, lat, rng);
    CHECK(h.size() == 4);
    for (const auto& o : h.obs) CHECK((o.y == 0.0 || o.y == 1.0));
    CHECK(h.scored_count() == 0);
    for (int t = 0; t < 50; ++t) {
        const double p1 = std::exp(cond_logprob(s, lat, h, {}, 1.0));
        const double p0 = std::exp(cond_logprob(s, lat, h, {}, 0.0));
        REQUIRE(p1 + p0 == doctest::Approx(1.0).epsilon(1e-12));
        REQUIRE(p1 > 0.0);
        REQUIRE(p1 < 1.0);
        h.append(step(s, lat, h, rng));
    }
    History short_h;
    CHECK_THROWS_AS(step(s, lat, short_h, rng), std::domain_error);
}

TEST_CASE("relu network") {
    std::vector<Eigen::MatrixXd> zero{Eigen::MatrixXd::Zero(4, 3), Eigen::MatrixXd::Zero(1, 4)};
    CHECK(relu_forward(zero, Eigen::Vector3d(1, 2, 3)) == 0.0);
    std::vector<Eigen::MatrixXd> lin{(Eigen::MatrixXd(1, 3) << 1.0, -2.0, 0.5).finished()};
    CHECK(relu_forward(lin, Eigen::Vector3d(1, 2, 3)) == doctest::Approx(-1.5));
    std::vector<Eigen::MatrixXd> bad{Eigen::MatrixXd::Zero(4, 2), Eigen::MatrixXd::Zero(1, 4)};
    CHECK_THROWS_AS(relu_forward(bad, Eigen::Vector3d(1, 2, 3)), std::domain_error);
    RngStream rng(14);
    for (int i = 0; i < 10000; ++i) {
        const Eigen::VectorXd a = sample_gaussian(rng, 5, 1.0), b = sample_gaussian(rng, 5, 1.0);
        REQUIRE((a.cwiseMax(0.0) - b.cwiseMax(0.0)).norm() <= (a - b).norm() + 1e-15);
    }
}

TEST_CASE("dirichlet network") {
    RngStream rng(15);
    DirichletNetSpec spec{3, 2.0, 0.5, 1e-8};
    const ProcessSpec s = spec;
    double mean = 0.0;
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
        const auto lat = std::get<DirichletLatent>(sample_latent(s, rng));
        REQUIRE(lat.draw.tail_mass < spec.tail_tol);
        // The truncated tail adds at most K * tail^2 * E[ReLU^2] <= K * tail^2 * |x|^2 variance.
        REQUIRE(spec.K * lat.draw.tail_mass * lat.draw.tail_mass * 3.0 < spec.tail_tol);
        mean += lat.net(sample_gaussian(rng, 3, 1.0));
    }
    CHECK(std::abs(mean / n) < 0.1);
    CHECK(spec.output_scale() == doctest::Approx(std::sqrt(2.0)));
    spec.scale = OutputScale::sqrt_k_plus_one;
    CHECK(spec.output_scale() == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("attention layer") {
    RngStream rng(16);
    const Eigen::MatrixXd U0 = Eigen::MatrixXd::Zero(3, 4);
    const Eigen::MatrixXd A = Eigen::MatrixXd::Random(3, 3);
    const Eigen::MatrixXd P = attention_matrix(U0, A);
    CHECK((P.array() - 0.25).abs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(attention_layer(U0, A, Eigen::MatrixXd::Zero(3, 2)), std::domain_error);
    const int r = 3, K = 4;
    for (int i = 0; i < 1000; ++i) {
        Eigen::MatrixXd U(r, K), W(r, K), Am(r, r), V(r, r);
        for (int k = 0; k < K; ++k) {
            U.col(k) = sample_unit_sphere(rng, r) * rng.uniform();
            W.col(k) = sample_unit_sphere(rng, r) * rng.uniform();
        }
        for (int a = 0; a < r; ++a) {
            V.row(a) = sample_unit_sphere(rng, r).transpose();
            for (int b = 0; b < r; ++b) Am(a, b) = rng.normal();
        }
        const Eigen::MatrixXd At = attention_matrix(U, Am);
        REQUIRE((At.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
        const Eigen::MatrixXd out = attention_layer(U, Am, V);
        REQUIRE(out.colwise().norm().maxCoeff() <= 1.0 + 1e-12);
        const Eigen::MatrixXd raw = V * U * At;
        REQUIRE((clip_columns(raw).colwise().norm() - raw.colwise().norm().cwiseMin(1.0)).cwiseAbs().maxCoeff() < 1e-12);
        // Layer Lipschitz bound in squared Frobenius norm.
        const double sv = Eigen::JacobiSVD<Eigen::MatrixXd>(V).singularValues()[0];
        const double sa = Eigen::JacobiSVD<Eigen::MatrixXd>(Am).singularValues()[0];
        const double lhs = (attention_layer(U, Am, V) - attention_layer(W, Am, V)).squaredNorm();
        REQUIRE(lhs <= 2.0 * K * sv * sv * (1.0 + 4.0 * K * sa * sa / r) * (U - W).squaredNorm() + 1e-12);
    }
}

TEST_CASE("transformer process") {
    RngStream rng(17);
    const ProcessSpec s = make_transformer_spec(5, 3, 2, 3);
    const auto lat = sample_latent(s, rng);
    const auto& tl = std::get<TransformerLatent>(lat);
    for (const auto& V : tl.V)
        for (Eigen::Index i = 0; i < V.rows(); ++i) CHECK(std::abs(V.row(i).norm() - 1.0) < 1e-12);
    CHECK(tl.V.back().rows() == 5);
    History h = initial_history(s, lat, rng);
    CHECK(h.size() == 3);
    for (int t = 0; t < 40; ++t) {
        const auto pred = std::get<CategoricalPred>(cond_predictive(s, lat, h, {}));
        double sum = 0.0;
        for (double p : pred.pmf) {
            REQUIRE(p > 0.0);
            sum += p;
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-9);
        const auto o = step(s, lat, h, rng);
        REQUIRE(o.y >= 1.0);
        REQUIRE(o.y <= 5.0);
        h.append(o);
    }
}

TEST_CASE("linear representation tasks") {
    RngStream rng(18);
    const ProcessSpec s = LinRepSpec{5, 2, 3};
    auto lat = std::get<LinRepLatent>(sample_latent(s, rng));
    History h;
    const auto pred = std::get<CategoricalPred>(cond_predictive(s, lat, h, {}, 1));
    double sum = 0.0;
    for (double p : pred.pmf) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    lat.xi[0].setZero();
    const auto flat = std::get<CategoricalPred>(cond_predictive(s, LatentParams{lat}, h, {}, 0));
    for (double p : flat.pmf) CHECK(p == doctest::Approx(0.2).epsilon(1e-14));
    const auto o = meta_step(s, LatentParams{lat}, 2, h, rng);
    CHECK(o.task == 2);
    CHECK_THROWS_AS(cond_predictive(s, LatentParams{lat}, h, {}, 3), std::domain_error);
}

TEST_CASE("icl mixture with one component is a transformer") {
    const IclSpec icl = make_icl_spec(1, 1.0, 4, 3, 1, 2, 3, 5);
    RngStream rng(19);
    const auto lat = std::get<IclLatent>(sample_latent(icl, rng));
    CHECK(lat.components.size() == 1);
    RngStream matched = rng.derive(Label::component, 0);
    const auto direct = sample_transformer_latent(icl.inner, matched);
    const auto& comp = lat.components.at(0);
    CHECK(comp.A[0] == direct.A[0]);
    CHECK(comp.V[0] == direct.V[0]);
    // Same component weights give the same next-token law.
    History h;
    RngStream tok(3);
    for (int m = 0; m < 3; ++m)
        for (auto& o : start_task(icl, m, tok)) h.append(o);
    const std::vector<int> ctx{static_cast<int>(h.obs[4].y), static_cast<int>(h.obs[5].y)};
    const auto p = std::get<CategoricalPred>(cond_predictive(icl, lat, h, {}, 2)).pmf;
    const auto q = transformer_next_pmf(icl.inner, direct, ctx);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(q[static_cast<Eigen::Index>(i)]).epsilon(1e-15));
}

TEST_CASE("icl mixture draws few components") {
    RngStream rng(20);
    for (long N : {100L, 1000000L}) {
        const IclSpec icl = make_icl_spec(N, 2.0, 4, 3, 1, 2, 60, 3);
        double acc = 0.0;
        const int reps = 200;
        for (int i = 0; i < reps; ++i) {
            RngStream r = rng.derive(Label::replicate, static_cast<std::uint64_t>(i) + N);
            acc += static_cast<double>(std::get<IclLatent>(sample_latent(icl, r)).components.size());
        }
        CHECK(std::abs(acc / reps - dirmult_expected_unique(60, 2.0, N)) < 0.6);
    }
}

TEST_CASE("flat gaussian parameterization round trips") {
    RngStream rng(21);
    for (const ProcessSpec& s : {ProcessSpec{LinRegSpec{3, 1.0}}, ProcessSpec{DeepNetSpec{2, 3, 3, 1.0}},
                                 ProcessSpec{make_ark_spec(2, 3)},
                                 ProcessSpec{make_transformer_spec(3, 2, 2, 2, VPrior::gaussian)}}) {
        const auto lat = sample_latent(s, rng);
        const Eigen::VectorXd f = flatten(s, lat);
        CHECK(f.size() == prior_variances(s).size());
        CHECK(flatten(s, unflatten(s, f)) == f);
    }
    CHECK_FALSE(has_gaussian_prior(LinRepSpec{3, 1, 1}));
    CHECK_THROWS_AS(prior_variances(make_transformer_spec(3, 2, 1, 2)), std::domain_error);
}
