#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ilab/info.hpp"
#include "ilab/predictor.hpp"
#include "ilab/process.hpp"
#include "ilab/rng.hpp"

namespace ilab {

// One rollout: per scored step, the predictor's log-loss, the omniscient
// log-loss on the same observation, and KL(true conditional || predictor).
struct ReplicateRecord {
    std::vector<double> loss;
    std::vector<double> omniscient_loss;
    std::vector<double> kl;
    LatentParams latent;
};

// Meta processes run T steps in each of the process's tasks, task by task.
ReplicateRecord run_replicate(const ProcessSpec& spec, const PredictorKind& kind, int T, const RngStream& stream);

// Two predictors scored on one rollout, plus the per-step KL between them.
struct PairedRecord {
    ReplicateRecord a, b;
    std::vector<double> kl_ab, kl_ba;
};
PairedRecord run_paired_replicate(const ProcessSpec& spec, const PredictorKind& a, const PredictorKind& b, int T,
                                  const RngStream& stream);

// Replicate i uses stream.derive(Label::replicate, i); results do not depend on threads.
std::vector<ReplicateRecord> run_replicates(const ProcessSpec& spec, const PredictorKind& kind, int T, int replicates,
                                            const RngStream& stream, int threads = 1);
std::vector<PairedRecord> run_paired_replicates(const ProcessSpec& spec, const PredictorKind& a, const PredictorKind& b,
                                                int T, int replicates, const RngStream& stream, int threads = 1);

enum class ErrorSource { kl, loss_vs_omniscient, loss_vs_rate };
// Per-step excess loss of one replicate. loss_vs_rate needs the closed-form irreducible rate.
std::vector<double> excess_sequence(const ReplicateRecord& r, ErrorSource source,
                                    std::optional<double> irreducible = std::nullopt);

struct ErrorCurve {
    std::vector<int> horizons;
    std::vector<double> cumulative_error;  // mean over replicates of (1/t) sum_{s<=t} excess_s
    std::vector<double> std_err;
    std::vector<double> per_step_error;  // mean excess at step t
    std::vector<double> per_step_se;
    int replicates = 0;
};
ErrorCurve aggregate_error_curve(const std::vector<std::vector<double>>& excess, const std::vector<int>& horizons);

// Mean of linreg_mi_given_inputs over N(0, I) input matrices; prior_var 0 selects 1/d.
MeanSE linreg_mi_mc(int d, double sigma2, int T, int replicates, const RngStream& stream, double prior_var = 0.0);

// Finite latent support, finite alphabet, and next-symbol pmfs that depend on
// the last `order` symbols (positions before the start read as symbol 0).
struct EnumerationModel {
    std::vector<double> prior;
    int alphabet = 2;
    int order = 0;
    std::vector<Eigen::MatrixXd> cond;  // per hypothesis: alphabet^order rows, each a pmf
    void validate() const;
};
// Dirichlet(1) pmfs; `spread` > 1 sharpens them towards vertices.
EnumerationModel random_enumeration_model(RngStream& rng, int support, int alphabet, int order, double spread = 1.0);

struct EnumerationReport {
    double mutual_information = 0.0;  // I(theta; H_T) from the joint law
    double bayes_loss = 0.0;          // cumulative expected log-loss of the exact posterior predictive
    double irreducible = 0.0;         // cumulative conditional entropy given theta
    double loss_gap = 0.0;            // bayes_loss - irreducible
    std::vector<double> per_step;     // I(Y_{t+1}; theta | H_t), t = 0..T-1
};
// Throws std::length_error past 1e7 (hypothesis, history) states and
// std::runtime_error if the information identity fails by more than 1e-9.
EnumerationReport exact_mi_enumeration(const EnumerationModel& model, int T);
std::vector<double> per_step_info(const EnumerationModel& model, int T);

// All terms per step (divided by T).
struct DecompositionReport {
    double total_loss = 0.0;             // misspecified predictor's excess log-loss
    double information_term = 0.0;       // I(H_T; theta) / T
    double misspecification_term = 0.0; // mean KL(exact predictive || misspecified predictive)
    double residual = 0.0;
    double prior_kl_bound = 0.0;         // KL(prior || misspecified prior) / T, possibly +inf
};
DecompositionReport misspec_decomposition(const EnumerationModel& model, std::span<const double> misspecified_prior,
                                          int T);

// Cumulative expected log-loss when the posterior over the support is mixed
// with the uniform pmf at the given rate before predicting.
double perturbed_posterior_loss(const EnumerationModel& model, int T, double rate);

// For a coarsening theta~ = g(theta) with g mapping into the support:
// first = E sum_t KL(P* || P(.|theta~, H_t)), second = E sum_t KL(P* || P(.|theta = theta~, H_t)).
std::pair<double, double> change_of_measure_pair(const EnumerationModel& model, std::span<const int> g, int T);

struct RdPoint {
    double rate = 0.0;        // I(theta; theta~)
    double distortion = 0.0;  // I(H_T; theta | theta~) / T
    double min_step = 0.0;    // smallest per-step distortion I(Y_{t+1}; theta | theta~, H_t)
    std::string label;
};
// Rate-distortion sandwich over every deterministic coarsening (set partition
// of the support) plus the independent-history coarsening.
struct RdSandwich {
    std::vector<RdPoint> points;
    double exact = 0.0;  // I(H_T; theta) / T
    double lower = 0.0;  // sup_eps min(H_eps / T, eps) over the family
    double upper = 0.0;  // inf_eps H_eps / T + eps over the family
};
RdSandwich rd_sandwich(const EnumerationModel& model, int T);

// Linear representation learning: per replicate, the mean over all M T
// steps of KL(true || full learner) (total), KL(true || oracle-representation
// learner) (intra), and KL(oracle || full) (meta), on shared rollouts.
struct MetaSplit {
    MeanSE total, intra, meta, closure;  // closure = total - intra - meta
    int replicates = 0;
};
MetaSplit meta_error_split(const ProcessSpec& spec, const EnsembleKind& full, const OracleMetaKind& oracle, int T,
                           int replicates, const RngStream& stream, int threads = 1);

}  // namespace ilab
