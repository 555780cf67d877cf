#pragma once

#include <map>
#include <span>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ilab/predictive.hpp"
#include "ilab/rng.hpp"

namespace ilab {

enum class VPrior { sphere_rows, gaussian };
enum class OutputScale { sqrt_k, sqrt_k_plus_one };
enum class Link { gaussian, logistic };

struct LinRegSpec {
    int d = 1;
    double sigma2 = 1.0;
    double prior_var = 0.0;  // per-coordinate prior variance; 0 selects 1/d
    double theta_var() const { return prior_var > 0.0 ? prior_var : 1.0 / d; }
};

struct LogRegSpec {
    int d = 1;
};

// Layer 1 is width x d, layers 2..L-1 are width x width, layer L is 1 x width.
struct DeepNetSpec {
    int d = 1;
    int width = 1;
    int depth = 2;
    double sigma2 = 1.0;
    long parameter_count() const;
};

struct DirichletNetSpec {
    int d = 1;
    double K = 1.0;
    double sigma2 = 1.0;
    double tail_tol = 1e-8;
    OutputScale scale = OutputScale::sqrt_k;
    Link link = Link::gaussian;
    double output_scale() const;
};

struct BinaryARKSpec {
    int d = 1;
    int K = 1;
    Eigen::VectorXd phi0, phi1;
};

struct TransformerSpec {
    int vocab = 2;
    int r = 2;
    int depth = 1;
    int context = 1;
    std::vector<Eigen::VectorXd> embeddings;  // vocab entries in R^r
    VPrior v_prior = VPrior::sphere_rows;
    double v_var = 0.0;  // Gaussian V entry variance; 0 selects 1/r
};

struct LinRepSpec {
    int d = 2;
    int r = 1;
    int tasks = 1;
};

struct IclSpec {
    long N = 1;
    double R = 1.0;
    TransformerSpec inner;
    int tasks = 1;
    int per_task = 1;
};

using ProcessSpec = std::variant<LinRegSpec, LogRegSpec, DeepNetSpec, DirichletNetSpec, BinaryARKSpec, TransformerSpec,
                                 LinRepSpec, IclSpec>;

// F(x) = sum_i coef_i ReLU(atoms.row(i) x); the shared representation of a
// Dirichlet-process network and of its finite-width reductions.
struct FiniteNet {
    Eigen::MatrixXd atoms;
    Eigen::VectorXd coef;
    double operator()(const Eigen::VectorXd& x) const;
};

struct VectorLatent {
    Eigen::VectorXd theta;
};
struct DeepNetLatent {
    std::vector<Eigen::MatrixXd> layers;
};
struct DirichletLatent {
    StickBreakingDraw draw;
    std::vector<int> signs;
    FiniteNet net;
};
struct WidthNetLatent {
    FiniteNet net;
};
struct ARKLatent {
    std::vector<Eigen::VectorXd> theta;  // theta[k-1] multiplies the embedding k-1 steps back
};
struct TransformerLatent {
    std::vector<Eigen::MatrixXd> A, V;
};
struct LinRepLatent {
    Eigen::MatrixXd psi;
    std::vector<Eigen::VectorXd> xi;
};
struct IclLatent {
    std::vector<double> log_alpha;  // empty when drawn through the urn
    std::vector<long> index;        // component of each task, 0-based
    std::map<long, TransformerLatent> components;
};

using LatentParams = std::variant<VectorLatent, DeepNetLatent, DirichletLatent, WidthNetLatent, ARKLatent,
                                  TransformerLatent, LinRepLatent, IclLatent>;

// x is the input (empty for token processes); y is the label, bit, or
// 1-based token; task tags meta-learning observations.
struct Observation {
    Eigen::VectorXd x;
    double y = 0.0;
    int task = 0;
    bool scored = true;  // false for the seed tokens of a sequence
};

struct History {
    std::vector<Observation> obs;
    std::size_t size() const { return obs.size(); }
    std::size_t scored_count() const;
    void append(Observation o) { obs.push_back(std::move(o)); }
};

std::string process_kind(const ProcessSpec& spec);
void validate(const ProcessSpec& spec);

// Deterministic unit-norm embeddings: standard basis when count <= dim,
// otherwise rows of a seeded random frame normalized to unit length.
std::vector<Eigen::VectorXd> default_embeddings(int count, int dim, std::uint64_t seed = 7);
BinaryARKSpec make_ark_spec(int d, int K);
TransformerSpec make_transformer_spec(int vocab, int r, int depth, int context, VPrior v_prior = VPrior::sphere_rows);

LatentParams sample_latent(const ProcessSpec& spec, RngStream& rng);
History initial_history(const ProcessSpec& spec, const LatentParams& latent, RngStream& rng);
Observation step(const ProcessSpec& spec, const LatentParams& latent, const History& history, RngStream& rng);
Observation meta_step(const ProcessSpec& spec, const LatentParams& latent, int task, const History& history,
                      RngStream& rng);
// Unscored seed tokens that open task m of a meta process (empty for iid tasks).
std::vector<Observation> start_task(const ProcessSpec& spec, int task, RngStream& rng);
// Draws a label from a predictive law.
double sample_label(const PredictiveDistribution& pred, RngStream& rng);
// Inputs of iid processes: N(0, I_d); empty for token processes.
Eigen::VectorXd sample_input(const ProcessSpec& spec, RngStream& rng);
// Input dimension d of iid processes, 0 for token processes.
int input_dim(const ProcessSpec& spec);
bool is_meta(const ProcessSpec& spec);
IclSpec make_icl_spec(long N, double R, int vocab, int r, int depth, int context, int tasks, int per_task);

// Law of the next label given the latent, the history so far, the input x,
// and (for meta processes) the task index.
PredictiveDistribution cond_predictive(const ProcessSpec& spec, const LatentParams& latent, const History& history,
                                       const Eigen::VectorXd& x, int task = 0);
// Same law with the history given as a span of past observations.
PredictiveDistribution cond_predictive_prefix(const ProcessSpec& spec, const LatentParams& latent,
                                              std::span<const Observation> past, const Eigen::VectorXd& x,
                                              int task = 0);
double cond_logprob(const ProcessSpec& spec, const LatentParams& latent, const History& history,
                    const Eigen::VectorXd& x, double y, int task = 0);

// Sum of log-probabilities of every scored observation in the history.
double history_loglik(const ProcessSpec& spec, const LatentParams& latent, const History& history);

// Per-step conditional entropy when it has a closed form; nullopt means the
// caller should use the omniscient predictor's Monte-Carlo loss.
std::optional<double> irreducible_rate(const ProcessSpec& spec);

double relu_forward(const std::vector<Eigen::MatrixXd>& layers, const Eigen::VectorXd& x);
Eigen::MatrixXd attention_matrix(const Eigen::MatrixXd& U, const Eigen::MatrixXd& A);
Eigen::MatrixXd clip_columns(Eigen::MatrixXd U);
Eigen::MatrixXd attention_layer(const Eigen::MatrixXd& U, const Eigen::MatrixXd& A, const Eigen::MatrixXd& V);
// Next-token pmf of a transformer given the last K tokens (1-based).
Eigen::VectorXd transformer_next_pmf(const TransformerSpec& spec, const TransformerLatent& latent,
                                     const std::vector<int>& context);
TransformerLatent sample_transformer_latent(const TransformerSpec& spec, RngStream& rng);

// Gaussian-prior parameterization used by ensemble rejuvenation moves.
bool has_gaussian_prior(const ProcessSpec& spec);
Eigen::VectorXd flatten(const ProcessSpec& spec, const LatentParams& latent);
LatentParams unflatten(const ProcessSpec& spec, const Eigen::VectorXd& flat);
Eigen::VectorXd prior_variances(const ProcessSpec& spec);

// Mean output of real-valued processes (theta^T x, the network, F(x)).
double mean_output(const ProcessSpec& spec, const LatentParams& latent, const Eigen::VectorXd& x);

}  // namespace ilab
