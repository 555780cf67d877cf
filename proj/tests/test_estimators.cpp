#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "ilab/estimators.hpp"

using namespace ilab;

namespace {

EnumerationModel reveal_model() {
    EnumerationModel m;
    m.prior = {0.5, 0.5};
    m.alphabet = 2;
    m.cond = {(Eigen::MatrixXd(1, 2) << 1.0, 0.0).finished(), (Eigen::MatrixXd(1, 2) << 0.0, 1.0).finished()};
    return m;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("omniscient loss reaches the irreducible rate") {
    LinRegSpec s{.d = 2, .sigma2 = 0.6};
    const auto recs = run_replicates(s, OmniscientKind{}, 5, 1000, RngStream(1));
    std::vector<double> per;
    for (const auto& r : recs) per.push_back(mean_of(r.loss));
    const auto m = mean_se(per);
    const double rate = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * s.sigma2);
    CHECK(std::abs(m.mean - rate) <= 3.0 * m.se);
    CHECK(*irreducible_rate(s) == doctest::Approx(rate).epsilon(1e-14));
}

TEST_CASE("replicates are deterministic and independent of the thread count") {
    LinRegSpec s{.d = 3, .sigma2 = 0.5};
    const RngStream root(2);
    const auto a = run_replicate(s, ConjugateKind{}, 20, root);
    const auto b = run_replicate(s, ConjugateKind{}, 20, root);
    CHECK(a.loss == b.loss);
    CHECK(a.kl == b.kl);
    const auto one = run_replicates(s, EnsembleKind{.S = 64}, 10, 6, root, 1);
    const auto three = run_replicates(s, EnsembleKind{.S = 64}, 10, 6, root, 3);
    for (std::size_t i = 0; i < one.size(); ++i) CHECK(one[i].loss == three[i].loss);
}

TEST_CASE("conjugate losses dominate omniscient losses on average") {
    LinRegSpec s{.d = 3, .sigma2 = 0.5};
    const auto recs = run_replicates(s, ConjugateKind{}, 10, 400, RngStream(3));
    std::vector<double> gap;
    for (const auto& r : recs) gap.push_back(mean_of(excess_sequence(r, ErrorSource::loss_vs_omniscient)));
    const auto m = mean_se(gap);
    CHECK(m.mean > -3.0 * m.se);
    CHECK(m.mean > 0.0);
}

TEST_CASE("error curve aggregation") {
    LinRegSpec s{.d = 2, .sigma2 = 1.0};
    const auto irr = irreducible_rate(s);
    const std::vector<int> hz{1, 4, 16};

    const auto omni = run_replicates(s, OmniscientKind{}, 16, 300, RngStream(4));
    std::vector<std::vector<double>> ex;
    for (const auto& r : omni) ex.push_back(excess_sequence(r, ErrorSource::loss_vs_rate, irr));
    const auto c0 = aggregate_error_curve(ex, hz);
    for (std::size_t i = 0; i < hz.size(); ++i) {
        CHECK(std::abs(c0.cumulative_error[i]) <= 3.0 * c0.std_err[i]);
        CHECK(c0.std_err[i] >= 0.0);
    }

    const auto conj = run_replicates(s, ConjugateKind{}, 16, 1600, RngStream(5));
    std::vector<std::vector<double>> half, full;
    for (std::size_t i = 0; i < conj.size(); ++i) {
        full.push_back(excess_sequence(conj[i], ErrorSource::loss_vs_rate, irr));
        if (i < 800) half.push_back(full.back());
    }
    const auto ch = aggregate_error_curve(half, hz), cf = aggregate_error_curve(full, hz);
    for (std::size_t i = 0; i < hz.size(); ++i) {
        const double ratio = ch.std_err[i] / cf.std_err[i];
        CHECK(ratio >= 0.8 * std::sqrt(2.0));
        CHECK(ratio <= 1.2 * std::sqrt(2.0));
    }

    auto rev = full;
    std::reverse(rev.begin(), rev.end());
    const auto cr = aggregate_error_curve(rev, hz);
    for (std::size_t i = 0; i < hz.size(); ++i) {
        CHECK(cr.cumulative_error[i] == doctest::Approx(cf.cumulative_error[i]).epsilon(1e-12));
        CHECK(cr.std_err[i] == doctest::Approx(cf.std_err[i]).epsilon(1e-9));
    }

    auto bad = full;
    bad[3].pop_back();
    CHECK_THROWS_AS(aggregate_error_curve(bad, hz), std::domain_error);
    CHECK_THROWS_AS(aggregate_error_curve(full, {4, 4}), std::domain_error);
    CHECK_THROWS_AS(aggregate_error_curve({full[0]}, hz), std::domain_error);
    CHECK_THROWS_AS(excess_sequence(conj[0], ErrorSource::loss_vs_rate), std::domain_error);
}

TEST_CASE("bootstrap mean of replicate errors sits within one SE of the plug-in mean") {
    LinRegSpec s{.d = 2, .sigma2 = 0.5};
    const auto recs = run_replicates(s, ConjugateKind{}, 8, 200, RngStream(6));
    std::vector<double> v;
    for (const auto& r : recs) v.push_back(mean_of(r.kl));
    const auto plug = mean_se(v);
    RngStream rng(7);
    double boot = 0.0;
    const int B = 500;
    for (int b = 0; b < B; ++b) {
        double s2 = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s2 += v[rng.below(v.size())];
        boot += s2 / static_cast<double>(v.size());
    }
    CHECK(std::abs(boot / B - plug.mean) <= plug.se);
}

TEST_CASE("exact mutual information by enumeration") {
    EnumerationModel indep;
    indep.prior = {0.3, 0.7};
    indep.alphabet = 3;
    indep.cond = {(Eigen::MatrixXd(1, 3) << 0.2, 0.3, 0.5).finished(), (Eigen::MatrixXd(1, 3) << 0.2, 0.3, 0.5).finished()};
    CHECK(std::abs(exact_mi_enumeration(indep, 5).mutual_information) < 1e-15);

    CHECK(exact_mi_enumeration(reveal_model(), 1).mutual_information == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    RngStream rng(8);
    const auto m = random_enumeration_model(rng, 4, 2, 0);
    const auto rep = exact_mi_enumeration(m, 6);
    CHECK(std::abs(rep.loss_gap - rep.mutual_information) <= 1e-9);
    CHECK(rep.mutual_information > 0.0);

    const auto big = random_enumeration_model(rng, 8, 4, 0);
    CHECK_THROWS_AS(exact_mi_enumeration(big, 12), std::length_error);
}

TEST_CASE("information identity on randomized instances") {
    RngStream rng(9);
    for (int i = 0; i < 30; ++i) {
        const int support = 2 + static_cast<int>(rng.below(7));
        const int alphabet = 2 + static_cast<int>(rng.below(3));
        const int order = static_cast<int>(rng.below(3));
        const int T = 1 + static_cast<int>(rng.below(alphabet == 4 ? 6 : 8));
        const auto m = random_enumeration_model(rng, support, alphabet, order, 1.0 + 2.0 * rng.uniform());
        const auto rep = exact_mi_enumeration(m, T);
        CHECK(std::abs(rep.loss_gap - rep.mutual_information) <= 1e-9);
        double sum = 0.0;
        for (double v : rep.per_step) sum += v;
        CHECK(std::abs(sum - rep.mutual_information) <= 1e-9);
    }
}

TEST_CASE("per-step information") {
    RngStream rng(10);
    for (int i = 0; i < 10; ++i) {
        const auto m = random_enumeration_model(rng, 3, 3, 0);
        const auto ps = per_step_info(m, 7);
        for (std::size_t t = 0; t + 1 < ps.size(); ++t) CHECK(ps[t + 1] <= ps[t] + 1e-15);
        // iid lower bound: the average error is at least the last step's information
        const auto rep = exact_mi_enumeration(m, 7);
        CHECK(rep.mutual_information / 7.0 >= ps.back());
    }
    const auto r = per_step_info(reveal_model(), 4);
    CHECK(r[0] == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    for (std::size_t t = 1; t < r.size(); ++t) CHECK(std::abs(r[t]) < 1e-15);
}

TEST_CASE("linear regression information by Monte Carlo") {
    const auto e = linreg_mi_mc(1, 1.0, 1, 4000, RngStream(11));
    const auto rule = gauss_hermite_normal(64);
    double q = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        q += rule.weights[i] * 0.5 * std::log1p(rule.nodes[i] * rule.nodes[i]);
    CHECK(std::abs(e.mean - q) <= 3.0 * e.se);
    CHECK(linreg_mi_mc(3, 1e6, 10, 10, RngStream(12)).mean < 1e-5);
    CHECK_THROWS_AS(linreg_mi_mc(3, 0.0, 10, 10, RngStream(12)), std::domain_error);
}

TEST_CASE("misspecification decomposition") {
    RngStream rng(13);
    const auto m = random_enumeration_model(rng, 3, 2, 1);
    const auto same = misspec_decomposition(m, m.prior, 5);
    CHECK(std::abs(same.misspecification_term) < 1e-15);
    CHECK(std::abs(same.residual) < 1e-9);

    EnumerationModel two;
    two.prior = {0.5, 0.5};
    two.alphabet = 2;
    two.cond = {(Eigen::MatrixXd(1, 2) << 0.8, 0.2).finished(), (Eigen::MatrixXd(1, 2) << 0.3, 0.7).finished()};
    const std::vector<double> wrong{0.75, 0.25};
    const auto r = misspec_decomposition(two, wrong, 3);
    CHECK(std::abs(r.residual) < 1e-9);
    const double kl = 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25);
    CHECK(r.prior_kl_bound == doctest::Approx(kl / 3.0).epsilon(1e-14));
    CHECK(r.misspecification_term <= r.prior_kl_bound);
    CHECK(r.misspecification_term > 0.0);

    const std::vector<double> dead{1.0, 0.0};
    CHECK(std::isinf(misspec_decomposition(two, dead, 3).prior_kl_bound));
}

TEST_CASE("misspecification term never exceeds the prior divergence") {
    RngStream rng(14);
    for (int i = 0; i < 20; ++i) {
        const auto m = random_enumeration_model(rng, 4, 3, static_cast<int>(rng.below(2)));
        const auto wrong = random_enumeration_model(rng, 4, 1, 0).prior;
        const auto r = misspec_decomposition(m, wrong, 4);
        CHECK(std::abs(r.residual) < 1e-9);
        CHECK(r.misspecification_term <= r.prior_kl_bound + 1e-12);
    }
}

TEST_CASE("exact posterior beats perturbed posteriors") {
    RngStream rng(15);
    for (int i = 0; i < 10; ++i) {
        const auto m = random_enumeration_model(rng, 4, 3, 0, 2.0);
        const double exact = perturbed_posterior_loss(m, 5, 0.0);
        CHECK(exact == doctest::Approx(exact_mi_enumeration(m, 5).bayes_loss).epsilon(1e-12));
        for (double a : {0.1, 0.3, 0.5}) CHECK(exact < perturbed_posterior_loss(m, 5, a));
    }
}

TEST_CASE("coarsened posterior beats plugging in the coarse latent") {
    RngStream rng(16);
    for (int i = 0; i < 10; ++i) {
        const auto m = random_enumeration_model(rng, 6, 3, static_cast<int>(rng.below(2)));
        const std::vector<int> g{0, 0, 2, 2, 2, 5};
        const auto [coarse, plug] = change_of_measure_pair(m, g, 4);
        CHECK(coarse <= plug + 1e-12);
        CHECK(coarse >= 0.0);
    }
}

TEST_CASE("rate-distortion sandwich over coarsenings") {
    RngStream rng(17);
    for (int i = 0; i < 12; ++i) {
        const int support = 2 + static_cast<int>(rng.below(5));
        const auto m = random_enumeration_model(rng, support, 2, static_cast<int>(rng.below(2)), 1.5);
        const int T = 1 + static_cast<int>(rng.below(7));
        const auto sw = rd_sandwich(m, T);
        CHECK(sw.lower <= sw.exact + 1e-12);
        CHECK(sw.exact <= sw.upper + 1e-12);
        for (const auto& p : sw.points) {
            CHECK(p.min_step >= -1e-12);
            CHECK(p.distortion >= -1e-12);
        }
    }
}

TEST_CASE("meta error split") {
    const EnsembleKind full{.S = 48, .xi_grid = 6};
    const OracleMetaKind oracle{.xi_grid = 6};

    LinRepSpec one{.d = 4, .r = 2, .tasks = 1};
    const auto a = meta_error_split(one, full, oracle, 16, 24, RngStream(18));
    CHECK(std::abs(a.closure.mean) <= 3.0 * a.closure.se + 1e-12);

    LinRepSpec square{.d = 2, .r = 2, .tasks = 3};
    const auto b = meta_error_split(square, full, oracle, 16, 24, RngStream(19));
    const double se = std::hypot(b.total.se, b.intra.se);
    CHECK(std::abs(b.total.mean - b.intra.mean) <= 3.0 * se);

    LinRepSpec mid{.d = 4, .r = 2, .tasks = 2};
    double last = 1e300, last_se = 0.0;
    for (int T : {8, 32, 128}) {
        const auto c = meta_error_split(mid, full, oracle, T, 16, RngStream(20));
        CHECK(c.intra.mean <= last + 3.0 * std::hypot(c.intra.se, last_se));
        last = c.intra.mean;
        last_se = c.intra.se;
    }

    IclSpec icl = make_icl_spec(4, 1.0, 3, 2, 1, 1, 2, 4);
    CHECK_THROWS_AS(meta_error_split(icl, full, oracle, 4, 4, RngStream(21)), std::domain_error);
}
