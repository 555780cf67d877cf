#include "ilab/estimators.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace ilab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Runs body(i) for i in [0, n) on up to `threads` workers; the first
// exception is rethrown after all workers stop.
template <class F>
void parallel_for(int n, int threads, F&& body) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (int i; (i = next.fetch_add(1)) < n;) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!err) err = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

int task_count(const ProcessSpec& spec) {
    if (const auto* s = std::get_if<LinRepSpec>(&spec)) return s->tasks;
    if (const auto* s = std::get_if<IclSpec>(&spec)) return s->tasks;
    return 1;
}

// Shared rollout: one latent, one data stream, every predictor sees the same
// observations. on_step(truth, predictions, y) runs before the update.
template <class F>
LatentParams rollout(const ProcessSpec& spec, std::span<const PredictorKind> kinds, int T, const RngStream& stream,
                     F&& on_step) {
    if (T < 1) throw std::domain_error("rollout: T must be positive");
    validate(spec);
    RngStream lrng = stream.derive(Label::latent, 0);
    LatentParams latent = sample_latent(spec, lrng);
    RngStream data = stream.derive(Label::data, 0);
    std::vector<Predictor> preds;
    for (std::size_t i = 0; i < kinds.size(); ++i)
        preds.emplace_back(kinds[i], spec, &latent, stream.derive(Label::predictor, i));
    History h;
    auto feed = [&](const Observation& o) {
        for (auto& p : preds) p.observe(o);
        h.append(o);
    };
    std::vector<PredictiveDistribution> out(preds.size());
    auto advance = [&](const Eigen::VectorXd& x, int task) {
        const PredictiveDistribution truth = cond_predictive(spec, latent, h, x, task);
        Observation o;
        o.x = x;
        o.task = task;
        o.y = sample_label(truth, data);
        for (std::size_t i = 0; i < preds.size(); ++i) out[i] = preds[i].predict(x, task);
        on_step(truth, out, o.y);
        feed(o);
    };
    if (is_meta(spec)) {
        for (int m = 0; m < task_count(spec); ++m) {
            for (const auto& o : start_task(spec, m, data)) feed(o);
            for (int t = 0; t < T; ++t) advance(Eigen::VectorXd(), m);
        }
    } else {
        for (const auto& o : initial_history(spec, latent, data).obs) feed(o);
        for (int t = 0; t < T; ++t) advance(sample_input(spec, data), 0);
    }
    return latent;
}

void score(ReplicateRecord& r, const PredictiveDistribution& truth, const PredictiveDistribution& pred, double y) {
    r.loss.push_back(log_loss(pred, y));
    r.omniscient_loss.push_back(log_loss(truth, y));
    r.kl.push_back(predictive_kl(truth, pred));
}

}  // namespace

ReplicateRecord run_replicate(const ProcessSpec& spec, const PredictorKind& kind, int T, const RngStream& stream) {
    ReplicateRecord r;
    r.latent = rollout(spec, std::span<const PredictorKind>(&kind, 1), T, stream,
                       [&](const PredictiveDistribution& truth, const std::vector<PredictiveDistribution>& p, double y) {
                           score(r, truth, p[0], y);
                       });
    return r;
}

PairedRecord run_paired_replicate(const ProcessSpec& spec, const PredictorKind& a, const PredictorKind& b, int T,
                                  const RngStream& stream) {
    PairedRecord r;
    const std::vector<PredictorKind> kinds{a, b};
    r.a.latent = rollout(spec, kinds, T, stream,
                         [&](const PredictiveDistribution& truth, const std::vector<PredictiveDistribution>& p, double y) {
                             score(r.a, truth, p[0], y);
                             score(r.b, truth, p[1], y);
                             r.kl_ab.push_back(predictive_kl(p[0], p[1]));
                             r.kl_ba.push_back(predictive_kl(p[1], p[0]));
                         });
    r.b.latent = r.a.latent;
    return r;
}

std::vector<ReplicateRecord> run_replicates(const ProcessSpec& spec, const PredictorKind& kind, int T, int replicates,
                                            const RngStream& stream, int threads) {
    if (replicates < 1) throw std::domain_error("run_replicates: need at least one replicate");
    std::vector<ReplicateRecord> out(static_cast<std::size_t>(replicates));
    parallel_for(replicates, threads, [&](int i) {
        out[static_cast<std::size_t>(i)] =
            run_replicate(spec, kind, T, stream.derive(Label::replicate, static_cast<std::uint64_t>(i)));
    });
    return out;
}

std::vector<PairedRecord> run_paired_replicates(const ProcessSpec& spec, const PredictorKind& a, const PredictorKind& b,
                                                int T, int replicates, const RngStream& stream, int threads) {
    if (replicates < 1) throw std::domain_error("run_paired_replicates: need at least one replicate");
    std::vector<PairedRecord> out(static_cast<std::size_t>(replicates));
    parallel_for(replicates, threads, [&](int i) {
        out[static_cast<std::size_t>(i)] =
            run_paired_replicate(spec, a, b, T, stream.derive(Label::replicate, static_cast<std::uint64_t>(i)));
    });
    return out;
}

std::vector<double> excess_sequence(const ReplicateRecord& r, ErrorSource source, std::optional<double> irreducible) {
    switch (source) {
        case ErrorSource::kl:
            return r.kl;
        case ErrorSource::loss_vs_omniscient: {
            std::vector<double> out(r.loss.size());
            for (std::size_t t = 0; t < out.size(); ++t) out[t] = r.loss[t] - r.omniscient_loss[t];
            return out;
        }
        case ErrorSource::loss_vs_rate: {
            if (!irreducible) throw std::domain_error("excess_sequence: no closed-form irreducible rate");
            std::vector<double> out(r.loss.size());
            for (std::size_t t = 0; t < out.size(); ++t) out[t] = r.loss[t] - *irreducible;
            return out;
        }
    }
    return {};
}

ErrorCurve aggregate_error_curve(const std::vector<std::vector<double>>& excess, const std::vector<int>& horizons) {
    if (excess.size() < 2) throw std::domain_error("aggregate_error_curve: need at least two replicates");
    const std::size_t len = excess.front().size();
    for (const auto& e : excess)
        if (e.size() != len) throw std::domain_error("aggregate_error_curve: replicates have mismatched lengths");
    if (horizons.empty()) throw std::domain_error("aggregate_error_curve: no horizons");
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        if (horizons[i] < 1 || static_cast<std::size_t>(horizons[i]) > len)
            throw std::domain_error("aggregate_error_curve: horizon outside the rollout");
        if (i > 0 && horizons[i] <= horizons[i - 1])
            throw std::domain_error("aggregate_error_curve: horizons must be strictly increasing");
    }
    ErrorCurve c;
    c.horizons = horizons;
    c.replicates = static_cast<int>(excess.size());
    std::vector<double> cum(excess.size()), step(excess.size());
    for (int h : horizons) {
        for (std::size_t r = 0; r < excess.size(); ++r) {
            double s = 0.0;
            for (int t = 0; t < h; ++t) s += excess[r][static_cast<std::size_t>(t)];
            cum[r] = s / h;
            step[r] = excess[r][static_cast<std::size_t>(h - 1)];
        }
        const auto a = mean_se(cum), b = mean_se(step);
        c.cumulative_error.push_back(a.mean);
        c.std_err.push_back(a.se);
        c.per_step_error.push_back(b.mean);
        c.per_step_se.push_back(b.se);
    }
    return c;
}

MeanSE linreg_mi_mc(int d, double sigma2, int T, int replicates, const RngStream& stream, double prior_var) {
    if (d < 1 || T < 1 || replicates < 2) throw std::domain_error("linreg_mi_mc: bad sizes");
    if (!(sigma2 > 0.0)) throw std::domain_error("linreg_mi_mc: noise variance must be positive");
    const double pv = prior_var > 0.0 ? prior_var : 1.0 / d;
    std::vector<double> v(static_cast<std::size_t>(replicates));
    for (int r = 0; r < replicates; ++r) {
        RngStream rng = stream.derive(Label::replicate, static_cast<std::uint64_t>(r));
        Eigen::MatrixXd X(T, d);
        for (int i = 0; i < T; ++i)
            for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
        v[static_cast<std::size_t>(r)] = linreg_mi_given_inputs(X, pv, sigma2);
    }
    return mean_se(v);
}

// ---- enumeration ----

void EnumerationModel::validate() const {
    validate_pmf(prior, "enumeration model");
    if (alphabet < 1 || order < 0) throw std::domain_error("enumeration model: bad alphabet or order");
    if (cond.size() != prior.size()) throw std::domain_error("enumeration model: one table per hypothesis");
    const double rows = std::pow(static_cast<double>(alphabet), order);
    for (const auto& M : cond) {
        if (M.rows() != static_cast<Eigen::Index>(rows) || M.cols() != alphabet)
            throw std::domain_error("enumeration model: table has the wrong shape");
        for (Eigen::Index r = 0; r < M.rows(); ++r) {
            const Eigen::VectorXd row = M.row(r).transpose();
            validate_pmf(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), "enumeration model");
        }
    }
}

EnumerationModel random_enumeration_model(RngStream& rng, int support, int alphabet, int order, double spread) {
    if (support < 1 || alphabet < 1 || order < 0 || !(spread > 0.0))
        throw std::domain_error("random_enumeration_model: bad sizes");
    auto draw = [&](int k, double a) {
        const std::vector<double> alpha(static_cast<std::size_t>(k), a);
        auto lg = sample_log_dirichlet(rng, alpha);
        std::vector<double> p(lg.size());
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::exp(lg[i]));
        for (auto& v : p) v /= s;
        return p;
    };
    EnumerationModel m;
    m.prior = draw(support, 1.0);
    m.alphabet = alphabet;
    m.order = order;
    int rows = 1;
    for (int i = 0; i < order; ++i) rows *= alphabet;
    for (int h = 0; h < support; ++h) {
        Eigen::MatrixXd M(rows, alphabet);
        for (int r = 0; r < rows; ++r) {
            const auto p = draw(alphabet, 1.0 / spread);
            for (int y = 0; y < alphabet; ++y) M(r, y) = p[static_cast<std::size_t>(y)];
        }
        m.cond.push_back(std::move(M));
    }
    return m;
}

namespace {

// p(h | theta) for every history of length t, histories indexed in base
// `alphabet` with the newest symbol least significant.
class Enumerator {
public:
    Enumerator(const EnumerationModel& m, int T) : m_(m), T_(T) {
        m.validate();
        if (T < 0) throw std::domain_error("enumeration: T must be nonnegative");
        if (static_cast<double>(m.prior.size()) * std::pow(static_cast<double>(m.alphabet), T) > 1e7)
            throw std::length_error("enumeration: state space exceeds 1e7");
        ctx_mod_ = 1;
        for (int i = 0; i < m.order; ++i) ctx_mod_ *= m.alphabet;
        n_ = static_cast<Eigen::Index>(m.prior.size());
        pi_ = Eigen::Map<const Eigen::VectorXd>(m.prior.data(), n_);
    }

    Eigen::Index n() const { return n_; }
    int alphabet() const { return m_.alphabet; }
    const Eigen::VectorXd& prior() const { return pi_; }

    // Next-symbol pmf of hypothesis i after history index h.
    auto row(Eigen::Index i, Eigen::Index h) const { return m_.cond[static_cast<std::size_t>(i)].row(h % ctx_mod_); }

    Eigen::MatrixXd extend(const Eigen::MatrixXd& P) const {
        const Eigen::Index H = P.cols(), A = m_.alphabet;
        Eigen::MatrixXd next(n_, H * A);
        for (Eigen::Index h = 0; h < H; ++h)
            for (Eigen::Index i = 0; i < n_; ++i) {
                const auto r = row(i, h);
                for (Eigen::Index y = 0; y < A; ++y) next(i, h * A + y) = P(i, h) * r(y);
            }
        return next;
    }

    std::vector<Eigen::MatrixXd> levels() const {
        std::vector<Eigen::MatrixXd> out{Eigen::MatrixXd::Ones(n_, 1)};
        for (int t = 0; t < T_; ++t) out.push_back(extend(out.back()));
        return out;
    }

private:
    const EnumerationModel& m_;
    int T_;
    Eigen::Index ctx_mod_ = 1, n_ = 0;
    Eigen::VectorXd pi_;
};

double kl_rows(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& q) {
    double kl = 0.0;
    for (Eigen::Index y = 0; y < p.size(); ++y) {
        if (p[y] == 0.0) continue;
        if (q[y] == 0.0) return kInf;
        kl += p[y] * std::log(p[y] / q[y]);
    }
    return kl;
}

double entropy_row(const Eigen::RowVectorXd& p) {
    double h = 0.0;
    for (Eigen::Index y = 0; y < p.size(); ++y)
        if (p[y] > 0.0) h -= p[y] * std::log(p[y]);
    return h;
}

// Mixture of the hypotheses' next-symbol pmfs under weights w (unnormalized).
Eigen::RowVectorXd mix_rows(const Enumerator& e, const Eigen::VectorXd& w, Eigen::Index h) {
    Eigen::RowVectorXd p = Eigen::RowVectorXd::Zero(e.alphabet());
    const double tot = w.sum();
    for (Eigen::Index i = 0; i < e.n(); ++i)
        if (w[i] > 0.0) p += (w[i] / tot) * e.row(i, h);
    return p;
}

// sum over (theta, h) of prior * p(h|theta) * ln(p(h|theta) / p(h))
double mi_of_level(const Eigen::VectorXd& pi, const Eigen::MatrixXd& P) {
    double mi = 0.0;
    for (Eigen::Index h = 0; h < P.cols(); ++h) {
        const double m = pi.dot(P.col(h));
        if (m <= 0.0) continue;
        for (Eigen::Index i = 0; i < P.rows(); ++i) {
            const double j = pi[i] * P(i, h);
            if (j > 0.0) mi += j * std::log(P(i, h) / m);
        }
    }
    return std::max(mi, 0.0);
}

}  // namespace

EnumerationReport exact_mi_enumeration(const EnumerationModel& model, int T) {
    const Enumerator e(model, T);
    EnumerationReport rep;
    Eigen::MatrixXd P = Eigen::MatrixXd::Ones(e.n(), 1);
    for (int t = 0; t < T; ++t) {
        double step = 0.0;
        for (Eigen::Index h = 0; h < P.cols(); ++h) {
            const Eigen::VectorXd joint = e.prior().cwiseProduct(P.col(h));
            const double m = joint.sum();
            if (m <= 0.0) continue;
            const Eigen::RowVectorXd phat = mix_rows(e, joint, h);
            for (Eigen::Index i = 0; i < e.n(); ++i) {
                if (joint[i] <= 0.0) continue;
                rep.irreducible += joint[i] * entropy_row(e.row(i, h));
                step += joint[i] * kl_rows(e.row(i, h), phat);
            }
            rep.bayes_loss += m * entropy_row(phat);
        }
        rep.per_step.push_back(step);
        P = e.extend(P);
    }
    rep.mutual_information = mi_of_level(e.prior(), P);
    rep.loss_gap = rep.bayes_loss - rep.irreducible;
    double sum = 0.0;
    for (double v : rep.per_step) sum += v;
    const double tol = 1e-9 * std::max(1.0, rep.mutual_information);
    if (std::abs(rep.loss_gap - rep.mutual_information) > tol || std::abs(sum - rep.mutual_information) > tol)
        throw std::runtime_error("exact_mi_enumeration: information identity violated");
    return rep;
}

std::vector<double> per_step_info(const EnumerationModel& model, int T) { return exact_mi_enumeration(model, T).per_step; }

DecompositionReport misspec_decomposition(const EnumerationModel& model, std::span<const double> misspecified_prior,
                                          int T) {
    if (T < 1) throw std::domain_error("misspec_decomposition: T must be positive");
    const Enumerator e(model, T);
    if (static_cast<Eigen::Index>(misspecified_prior.size()) != e.n())
        throw std::domain_error("misspec_decomposition: misspecified prior has the wrong support");
    validate_pmf(misspecified_prior, "misspec_decomposition");
    const Eigen::Map<const Eigen::VectorXd> pit(misspecified_prior.data(), e.n());
    double loss = 0.0, irr = 0.0, mis = 0.0;
    Eigen::MatrixXd P = Eigen::MatrixXd::Ones(e.n(), 1);
    for (int t = 0; t < T; ++t) {
        for (Eigen::Index h = 0; h < P.cols(); ++h) {
            const Eigen::VectorXd joint = e.prior().cwiseProduct(P.col(h));
            const double m = joint.sum();
            if (m <= 0.0) continue;
            const Eigen::RowVectorXd phat = mix_rows(e, joint, h);
            const Eigen::VectorXd jt = pit.cwiseProduct(P.col(h));
            for (Eigen::Index i = 0; i < e.n(); ++i)
                if (joint[i] > 0.0) irr += joint[i] * entropy_row(e.row(i, h));
            if (jt.sum() <= 0.0) {
                loss = mis = kInf;
                continue;
            }
            const Eigen::RowVectorXd ptil = mix_rows(e, jt, h);
            const double kl = kl_rows(phat, ptil);
            mis += m * kl;
            loss += m * (entropy_row(phat) + kl);
        }
        P = e.extend(P);
    }
    DecompositionReport r;
    r.information_term = mi_of_level(e.prior(), P) / T;
    r.total_loss = (loss - irr) / T;
    r.misspecification_term = mis / T;
    r.residual = r.total_loss - r.information_term - r.misspecification_term;
    const Eigen::VectorXd pv = e.prior();
    r.prior_kl_bound = kl_pmf(std::span<const double>(pv.data(), static_cast<std::size_t>(pv.size())), misspecified_prior) / T;
    return r;
}

double perturbed_posterior_loss(const EnumerationModel& model, int T, double rate) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw std::domain_error("perturbed_posterior_loss: rate must lie in [0,1]");
    const Enumerator e(model, T);
    double loss = 0.0;
    Eigen::MatrixXd P = Eigen::MatrixXd::Ones(e.n(), 1);
    for (int t = 0; t < T; ++t) {
        for (Eigen::Index h = 0; h < P.cols(); ++h) {
            const Eigen::VectorXd joint = e.prior().cwiseProduct(P.col(h));
            const double m = joint.sum();
            if (m <= 0.0) continue;
            const Eigen::VectorXd w =
                (1.0 - rate) * joint / m + Eigen::VectorXd::Constant(e.n(), rate / static_cast<double>(e.n()));
            const Eigen::RowVectorXd phat = mix_rows(e, joint, h), q = mix_rows(e, w, h);
            loss += m * (entropy_row(phat) + kl_rows(phat, q));
        }
        P = e.extend(P);
    }
    return loss;
}

std::pair<double, double> change_of_measure_pair(const EnumerationModel& model, std::span<const int> g, int T) {
    const Enumerator e(model, T);
    if (static_cast<Eigen::Index>(g.size()) != e.n()) throw std::domain_error("change_of_measure_pair: map size");
    for (int v : g)
        if (v < 0 || v >= e.n()) throw std::domain_error("change_of_measure_pair: map leaves the support");
    double coarse = 0.0, plug = 0.0;
    Eigen::MatrixXd P = Eigen::MatrixXd::Ones(e.n(), 1);
    for (int t = 0; t < T; ++t) {
        for (Eigen::Index h = 0; h < P.cols(); ++h) {
            const Eigen::VectorXd joint = e.prior().cwiseProduct(P.col(h));
            for (Eigen::Index i = 0; i < e.n(); ++i) {
                if (joint[i] <= 0.0) continue;
                const int c = g[static_cast<std::size_t>(i)];
                Eigen::VectorXd cls = Eigen::VectorXd::Zero(e.n());
                for (Eigen::Index j = 0; j < e.n(); ++j)
                    if (g[static_cast<std::size_t>(j)] == c) cls[j] = joint[j];
                coarse += joint[i] * kl_rows(e.row(i, h), mix_rows(e, cls, h));
                plug += joint[i] * kl_rows(e.row(i, h), e.row(c, h));
            }
        }
        P = e.extend(P);
    }
    return {coarse, plug};
}

namespace {

// Restricted growth strings enumerate the set partitions of {0..n-1}.
template <class F>
void for_each_partition(int n, F&& f) {
    std::vector<int> a(static_cast<std::size_t>(n), 0), mx(static_cast<std::size_t>(n), 0);
    while (true) {
        f(a);
        int i = n - 1;
        while (i > 0 && a[static_cast<std::size_t>(i)] > mx[static_cast<std::size_t>(i - 1)]) --i;
        if (i <= 0) return;
        ++a[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < n; ++j) {
            a[static_cast<std::size_t>(j)] = 0;
        }
        for (int j = i; j < n; ++j)
            mx[static_cast<std::size_t>(j)] =
                std::max(j > 0 ? mx[static_cast<std::size_t>(j - 1)] : 0, a[static_cast<std::size_t>(j)]);
    }
}

}  // namespace

RdSandwich rd_sandwich(const EnumerationModel& model, int T) {
    if (T < 1) throw std::domain_error("rd_sandwich: T must be positive");
    const Enumerator e(model, T);
    if (e.n() > 8) throw std::length_error("rd_sandwich: support larger than 8");
    if (std::pow(static_cast<double>(e.alphabet()), T) > 1024.0)
        throw std::length_error("rd_sandwich: more than 1024 histories");
    const auto L = e.levels();
    const Eigen::VectorXd& pi = e.prior();
    std::vector<double> info(L.size());
    for (std::size_t t = 0; t < L.size(); ++t) info[t] = mi_of_level(pi, L[t]);

    RdSandwich out;
    out.exact = info.back() / T;
    for_each_partition(static_cast<int>(e.n()), [&](const std::vector<int>& g) {
        const int k = *std::max_element(g.begin(), g.end()) + 1;
        Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(k, e.n());
        for (Eigen::Index i = 0; i < e.n(); ++i) agg(g[static_cast<std::size_t>(i)], i) = pi[i];
        const Eigen::VectorXd q = agg.rowwise().sum();
        RdPoint p;
        for (Eigen::Index c = 0; c < k; ++c)
            if (q[c] > 0.0) p.rate -= q[c] * std::log(q[c]);
        std::vector<double> resid(L.size());
        for (std::size_t t = 0; t < L.size(); ++t)
            resid[t] = info[t] - mutual_information(agg * L[t]);
        p.distortion = resid.back() / T;
        p.min_step = kInf;
        for (std::size_t t = 0; t + 1 < L.size(); ++t) p.min_step = std::min(p.min_step, resid[t + 1] - resid[t]);
        p.label = "partition:" + std::to_string(k);
        out.points.push_back(p);
    });
    {
        // theta~ = an independent history of length T drawn under the same theta.
        const Eigen::MatrixXd& PT = L.back();
        RdPoint p;
        p.rate = info.back();
        std::vector<double> resid(L.size());
        for (std::size_t t = 0; t < L.size(); ++t) resid[t] = info[t] - mutual_information(PT.transpose() * pi.asDiagonal() * L[t]);
        p.distortion = resid.back() / T;
        p.min_step = kInf;
        for (std::size_t t = 0; t + 1 < L.size(); ++t) p.min_step = std::min(p.min_step, resid[t + 1] - resid[t]);
        p.label = "history_copy";
        out.points.push_back(p);
    }
    auto pts = out.points;
    std::sort(pts.begin(), pts.end(), [](const RdPoint& a, const RdPoint& b) { return a.distortion < b.distortion; });
    out.upper = kInf;
    for (const auto& p : pts) out.upper = std::min(out.upper, p.rate / T + p.distortion);
    // Below the smallest distortion the feasible set is empty and the rate is infinite.
    out.lower = std::max(0.0, pts.front().distortion);
    double h = kInf;
    for (std::size_t j = 0; j < pts.size(); ++j) {
        h = std::min(h, pts[j].rate);
        const double next = j + 1 < pts.size() ? pts[j + 1].distortion : kInf;
        out.lower = std::max(out.lower, std::min(h / T, next));
    }
    return out;
}

MetaSplit meta_error_split(const ProcessSpec& spec, const EnsembleKind& full, const OracleMetaKind& oracle, int T,
                           int replicates, const RngStream& stream, int threads) {
    if (std::holds_alternative<IclSpec>(spec))
        throw std::domain_error("meta_error_split: the mixture-of-transformers process has no tractable oracle learner");
    if (!std::holds_alternative<LinRepSpec>(spec))
        throw std::domain_error("meta_error_split: requires a linear representation process");
    if (replicates < 2) throw std::domain_error("meta_error_split: need at least two replicates");
    const auto recs = run_paired_replicates(spec, full, oracle, T, replicates, stream, threads);
    std::vector<double> total, intra, meta, closure;
    auto avg = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    for (const auto& r : recs) {
        total.push_back(avg(r.a.kl));
        intra.push_back(avg(r.b.kl));
        meta.push_back(avg(r.kl_ba));
        closure.push_back(total.back() - intra.back() - meta.back());
    }
    return {mean_se(total), mean_se(intra), mean_se(meta), mean_se(closure), replicates};
}

}  // namespace ilab
