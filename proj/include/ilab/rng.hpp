#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ilab {

// Labels for the hierarchical seed path. Values are part of the hash, so
// never renumber them.
enum class Label : std::uint32_t {
    none = 0,
    replicate = 1,
    task = 2,
    layer = 3,
    latent = 4,
    data = 5,
    predictor = 6,
    component = 7,
    probe = 8,
    scenario = 9,
    particle = 10,
    aux = 11,
};

struct SeedSpec {
    std::uint64_t master_seed = 0;
    std::vector<std::pair<Label, std::uint64_t>> path;

    SeedSpec child(Label label, std::uint64_t index) const;
    // Mixed 64-bit key of (master_seed, path); equal specs give equal keys.
    std::uint64_t key() const;
    bool operator==(const SeedSpec&) const = default;
};

// One owner per stream. Children come from derive(), which depends only on
// the seed path, never on how many draws the parent has made.
class RngStream {
public:
    using result_type = std::uint64_t;

    explicit RngStream(SeedSpec seed);
    explicit RngStream(std::uint64_t master_seed) : RngStream(SeedSpec{master_seed, {}}) {}

    RngStream derive(Label label, std::uint64_t index) const;
    RngStream derive(std::uint64_t index) const { return derive(Label::none, index); }

    const SeedSpec& seed() const { return seed_; }

    result_type operator()() { return eng_(); }
    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }

    double uniform();      // [0, 1)
    double uniform_pos();  // (0, 1)
    double normal();       // N(0, 1)
    double gamma(double shape);
    std::uint64_t below(std::uint64_t n);  // uniform on {0..n-1}

private:
    SeedSpec seed_;
    std::mt19937_64 eng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

struct StickBreakingDraw {
    std::vector<double> weights;
    std::vector<Eigen::VectorXd> atoms;
    double tail_mass = 1.0;
};

Eigen::VectorXd sample_gaussian(RngStream& rng, Eigen::Index n, double variance);
Eigen::VectorXd sample_unit_sphere(RngStream& rng, int d);
std::size_t sample_categorical(RngStream& rng, std::span<const double> pmf);
// Same draw as sample_categorical without validating the pmf; the weights
// need only be nonnegative with a positive total.
std::size_t sample_weighted(RngStream& rng, std::span<const double> weights);
// n independent draws; same stream consumption and results as n sample_weighted calls.
std::vector<std::size_t> sample_weighted_n(RngStream& rng, std::span<const double> weights, std::size_t n);
StickBreakingDraw sample_stick_breaking(RngStream& rng, double K, int d, double tail_tol);
// Log of a Dirichlet(alpha) draw, stable for tiny concentrations.
std::vector<double> sample_log_dirichlet(RngStream& rng, std::span<const double> alpha);
double sample_beta(RngStream& rng, double a, double b);

}  // namespace ilab
