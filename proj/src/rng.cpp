#include "ilab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ilab {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

SeedSpec SeedSpec::child(Label label, std::uint64_t index) const {
    SeedSpec s = *this;
    s.path.emplace_back(label, index);
    return s;
}

std::uint64_t SeedSpec::key() const {
    std::uint64_t h = splitmix(master_seed ^ 0x6A09E667F3BCC909ULL);
    for (const auto& [label, index] : path) {
        h = splitmix(h ^ splitmix(static_cast<std::uint64_t>(label) * 0xD1B54A32D192ED03ULL));
        h = splitmix(h ^ index);
    }
    return h;
}

RngStream::RngStream(SeedSpec seed) : seed_(std::move(seed)) {
    const std::uint64_t k = seed_.key();
    const std::uint64_t k2 = splitmix(k);
    std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32),
                      static_cast<std::uint32_t>(k2), static_cast<std::uint32_t>(k2 >> 32)};
    eng_.seed(seq);
}

RngStream RngStream::derive(Label label, std::uint64_t index) const {
    return RngStream(seed_.child(label, index));
}

double RngStream::uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_pos() {
    return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() { return normal_(eng_); }

double RngStream::gamma(double shape) {
    std::gamma_distribution<double> g(shape, 1.0);
    return g(eng_);
}

std::uint64_t RngStream::below(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> u(0, n - 1);
    return u(eng_);
}

Eigen::VectorXd sample_gaussian(RngStream& rng, Eigen::Index n, double variance) {
    if (!(variance >= 0.0)) throw std::domain_error("sample_gaussian: negative variance");
    Eigen::VectorXd v(n);
    if (variance == 0.0) return v.setZero();
    const double sd = std::sqrt(variance);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = sd * rng.normal();
    return v;
}

Eigen::VectorXd sample_unit_sphere(RngStream& rng, int d) {
    if (d < 1) throw std::domain_error("sample_unit_sphere: dimension must be >= 1");
    Eigen::VectorXd v(d);
    if (d == 1) {
        v[0] = rng.uniform() < 0.5 ? -1.0 : 1.0;
        return v;
    }
    double n2 = 0.0;
    do {
        for (int i = 0; i < d; ++i) v[i] = rng.normal();
        n2 = v.squaredNorm();
    } while (n2 < 1e-300);
    return v / std::sqrt(n2);
}

std::size_t sample_categorical(RngStream& rng, std::span<const double> pmf) {
    if (pmf.empty()) throw std::domain_error("sample_categorical: empty pmf");
    double total = 0.0;
    for (double p : pmf) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw std::domain_error("sample_categorical: negative or non-finite mass");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::domain_error("sample_categorical: pmf does not sum to 1");
    return sample_weighted(rng, pmf);
}

std::size_t sample_weighted(RngStream& rng, std::span<const double> weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    const double u = rng.uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        last_positive = i;
        if (u < acc) return i;
    }
    return last_positive;
}

std::vector<std::size_t> sample_weighted_n(RngStream& rng, std::span<const double> weights, std::size_t n) {
    std::vector<double> cum(weights.size());
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] > 0.0) {
            acc += weights[i];
            last_positive = i;
        }
        cum[i] = acc;
    }
    std::vector<std::size_t> out(n);
    for (auto& o : out) {
        const double u = rng.uniform() * acc;
        const auto it = std::upper_bound(cum.begin(), cum.end(), u);
        o = it == cum.end() ? last_positive : static_cast<std::size_t>(it - cum.begin());
    }
    return out;
}

StickBreakingDraw sample_stick_breaking(RngStream& rng, double K, int d, double tail_tol) {
    if (!(K > 0.0)) throw std::domain_error("sample_stick_breaking: scale must be positive");
    if (!(tail_tol > 0.0 && tail_tol < 1.0)) throw std::domain_error("sample_stick_breaking: tail_tol must lie in (0,1)");
    StickBreakingDraw out;
    double tail = 1.0;
    while (tail >= tail_tol) {
        // Beta(1, K) by inversion.
        const double v = 1.0 - std::pow(rng.uniform_pos(), 1.0 / K);
        out.weights.push_back(tail * v);
        out.atoms.push_back(sample_unit_sphere(rng, d));
        tail *= (1.0 - v);
    }
    out.tail_mass = tail;
    return out;
}

std::vector<double> sample_log_dirichlet(RngStream& rng, std::span<const double> alpha) {
    std::vector<double> lg(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        const double a = alpha[i];
        if (!(a > 0.0)) throw std::domain_error("sample_log_dirichlet: concentration must be positive");
        // Gamma(a) = Gamma(a+1) * U^{1/a}; keeps small shapes away from underflow.
        lg[i] = std::log(rng.gamma(a + 1.0)) + std::log(rng.uniform_pos()) / a;
    }
    double m = -INFINITY;
    for (double v : lg) m = std::max(m, v);
    double s = 0.0;
    for (double v : lg) s += std::exp(v - m);
    const double lz = m + std::log(s);
    for (double& v : lg) v -= lz;
    return lg;
}

double sample_beta(RngStream& rng, double a, double b) {
    const double x = rng.gamma(a);
    const double y = rng.gamma(b);
    return x / (x + y);
}

}  // namespace ilab
