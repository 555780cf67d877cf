#include "ilab/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ilab/quantize.hpp"

namespace ilab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLn2Pi = 1.8378770664093454836;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

enum class Family { gaussian, bernoulli, categorical };

Family family_of(const ProcessSpec& spec) {
    return std::visit(overloaded{[](const LinRegSpec&) { return Family::gaussian; },
                                 [](const DeepNetSpec&) { return Family::gaussian; },
                                 [](const DirichletNetSpec& s) {
                                     return s.link == Link::logistic ? Family::bernoulli : Family::gaussian;
                                 },
                                 [](const LogRegSpec&) { return Family::bernoulli; },
                                 [](const BinaryARKSpec&) { return Family::bernoulli; },
                                 [](const auto&) { return Family::categorical; }},
                      spec);
}

double noise_var(const ProcessSpec& spec) {
    return std::visit(overloaded{[](const LinRegSpec& s) { return s.sigma2; },
                                 [](const DeepNetSpec& s) { return s.sigma2; },
                                 [](const DirichletNetSpec& s) { return s.sigma2; },
                                 [](const auto&) { return 0.0; }},
                      spec);
}

double normalize_log(Eigen::VectorXd& logw) {
    const double z = log_sum_exp(std::span<const double>(logw.data(), static_cast<std::size_t>(logw.size())));
    logw.array() -= z;
    return z;
}

// Per-particle summary of a predictive law: the mean (Gaussian family), the
// logit (Bernoulli), or the log-pmf row (categorical).
void put_row(Family f, double var, const PredictiveDistribution& p, Eigen::MatrixXd& out, Eigen::Index s) {
    switch (f) {
        case Family::gaussian: {
            const auto& g = std::get<GaussianPred>(p);
            if (std::abs(g.var - var) > 1e-12 * var) throw std::domain_error("ensemble: members disagree on noise variance");
            out(s, 0) = g.mean;
            break;
        }
        case Family::bernoulli:
            out(s, 0) = std::get<BernoulliPred>(p).logit;
            break;
        case Family::categorical: {
            const auto& c = std::get<CategoricalPred>(p);
            if (static_cast<Eigen::Index>(c.pmf.size()) != out.cols())
                throw std::domain_error("ensemble: members disagree on the outcome set");
            for (std::size_t k = 0; k < c.pmf.size(); ++k)
                out(s, static_cast<Eigen::Index>(k)) = c.pmf[k] > 0.0 ? std::log(c.pmf[k]) : -kInf;
            break;
        }
    }
}

Eigen::VectorXd output_loglik(Family f, double var, const Eigen::MatrixXd& out, double y) {
    switch (f) {
        case Family::gaussian:
            return (-0.5 * (kLn2Pi + std::log(var)) - (y - out.col(0).array()).square() / (2.0 * var)).matrix();
        case Family::bernoulli: {
            Eigen::VectorXd ll(out.rows());
            for (Eigen::Index s = 0; s < out.rows(); ++s)
                ll[s] = y == 1.0 ? -softplus(-out(s, 0)) : y == 0.0 ? -softplus(out(s, 0)) : -kInf;
            return ll;
        }
        case Family::categorical: {
            const long k = std::lround(y) - 1;
            if (k < 0 || k >= out.cols()) return Eigen::VectorXd::Constant(out.rows(), -kInf);
            return out.col(k);
        }
    }
    return {};
}

PredictiveDistribution mixture(Family f, double var, const Eigen::MatrixXd& out, const Eigen::VectorXd& logw) {
    const double top = logw.maxCoeff();
    switch (f) {
        case Family::gaussian: {
            // Components 40 nats below the heaviest carry < 1e-17 relative mass.
            GaussianMixturePred m;
            m.var = var;
            double tot = 0.0;
            for (Eigen::Index s = 0; s < logw.size(); ++s)
                if (logw[s] > top - 40.0) {
                    m.weights.push_back(std::exp(logw[s] - top));
                    m.means.push_back(out(s, 0));
                    tot += m.weights.back();
                }
            for (auto& w : m.weights) w /= tot;
            if (m.weights.size() == 1) return GaussianPred{m.means[0], var};
            return m;
        }
        case Family::bernoulli: {
            Eigen::VectorXd a(logw.size()), b(logw.size());
            for (Eigen::Index s = 0; s < logw.size(); ++s) {
                a[s] = logw[s] + log_sigmoid(out(s, 0));
                b[s] = logw[s] + log_sigmoid(-out(s, 0));
            }
            auto lse = [](const Eigen::VectorXd& v) {
                return log_sum_exp(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
            };
            return BernoulliPred::from_log_probs(lse(a), lse(b));
        }
        case Family::categorical: {
            const Eigen::VectorXd w = (logw.array() - top).exp().matrix();
            Eigen::VectorXd p = Eigen::VectorXd::Zero(out.cols());
            for (Eigen::Index s = 0; s < out.rows(); ++s)
                if (w[s] > 0.0) p += w[s] * out.row(s).transpose().array().exp().matrix();
            p /= p.sum();
            return CategoricalPred{std::vector<double>(p.data(), p.data() + p.size()), 1};
        }
    }
    throw std::logic_error("mixture: unknown family");
}

void check_psd(const Eigen::MatrixXd& C, const char* who) {
    if (C.rows() != C.cols()) throw std::domain_error(std::string(who) + ": covariance must be square");
    const double scale = std::max(1.0, C.cwiseAbs().maxCoeff());
    if ((C - C.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw std::domain_error(std::string(who) + ": covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
    if (C.rows() > 0 && es.eigenvalues().minCoeff() < -1e-10 * scale)
        throw std::domain_error(std::string(who) + ": covariance must be positive semidefinite");
}

}  // namespace

struct Predictor::Impl {
    History hist;
    int resamples = 0;
    double accept_sum = 0.0;
    int accept_n = 0;

    virtual ~Impl() = default;
    // Absorbs the observation and appends it to the history.
    virtual void update(const Observation& o) = 0;
    virtual PredictiveDistribution predict(const Eigen::VectorXd& x, int task) = 0;
    virtual std::optional<GaussianParams> posterior() const { return std::nullopt; }
    virtual Eigen::VectorXd log_weights() const { return {}; }
};

namespace {

struct ConjugateImpl final : Predictor::Impl {
    Eigen::VectorXd mu;
    Eigen::MatrixXd cov;
    double s2;

    ConjugateImpl(Eigen::VectorXd m, Eigen::MatrixXd c, double noise) : mu(std::move(m)), cov(std::move(c)), s2(noise) {
        if (mu.size() != cov.rows()) throw std::domain_error("conjugate: prior mean and covariance sizes differ");
        if (!(s2 > 0.0)) throw std::domain_error("conjugate: noise variance must be positive");
        check_psd(cov, "conjugate");
    }

    void update(const Observation& o) override {
        if (o.scored) {
            if (o.x.size() != mu.size()) throw std::domain_error("conjugate: input dimension mismatch");
            const Eigen::VectorXd sx = cov * o.x;
            const double denom = s2 + o.x.dot(sx);
            mu += sx * ((o.y - mu.dot(o.x)) / denom);
            cov -= sx * sx.transpose() / denom;
            cov = 0.5 * (cov + cov.transpose()).eval();
        }
        hist.append(o);
    }

    PredictiveDistribution predict(const Eigen::VectorXd& x, int) override {
        if (x.size() != mu.size()) throw std::domain_error("conjugate: input dimension mismatch");
        return GaussianPred{mu.dot(x), s2 + x.dot(cov * x)};
    }

    std::optional<GaussianParams> posterior() const override { return GaussianParams{mu, cov}; }
};

struct OmniscientImpl final : Predictor::Impl {
    ProcessSpec spec;
    LatentParams latent;

    OmniscientImpl(ProcessSpec s, LatentParams l) : spec(std::move(s)), latent(std::move(l)) {}
    void update(const Observation& o) override { hist.append(o); }
    PredictiveDistribution predict(const Eigen::VectorXd& x, int task) override {
        return cond_predictive(spec, latent, hist, x, task);
    }
};

struct EnumerationImpl final : Predictor::Impl {
    ProcessSpec spec;
    std::vector<LatentParams> support;
    Eigen::VectorXd logw;
    Family fam;
    double var;

    EnumerationImpl(ProcessSpec s, const EnumerationKind& k)
        : spec(std::move(s)), support(k.support), fam(family_of(spec)), var(noise_var(spec)) {
        if (support.empty() || support.size() != k.prior.size())
            throw std::domain_error("enumeration: support and prior sizes differ");
        validate_pmf(k.prior, "enumeration");
        logw.resize(static_cast<Eigen::Index>(support.size()));
        for (std::size_t i = 0; i < support.size(); ++i)
            logw[static_cast<Eigen::Index>(i)] = k.prior[i] > 0.0 ? std::log(k.prior[i]) : -kInf;
    }

    void update(const Observation& o) override {
        if (o.scored) {
            for (std::size_t i = 0; i < support.size(); ++i) {
                auto& w = logw[static_cast<Eigen::Index>(i)];
                if (w > -kInf) w += cond_logprob(spec, support[i], hist, o.x, o.y, o.task);
            }
            normalize_log(logw);
        }
        hist.append(o);
    }

    PredictiveDistribution predict(const Eigen::VectorXd& x, int task) override {
        Eigen::MatrixXd out;
        for (std::size_t i = 0; i < support.size(); ++i) {
            const auto p = cond_predictive(spec, support[i], hist, x, task);
            if (i == 0) {
                const Eigen::Index k =
                    fam == Family::categorical ? static_cast<Eigen::Index>(std::get<CategoricalPred>(p).pmf.size()) : 1;
                out.resize(static_cast<Eigen::Index>(support.size()), k);
            }
            put_row(fam, var, p, out, static_cast<Eigen::Index>(i));
        }
        return mixture(fam, var, out, logw);
    }

    Eigen::VectorXd log_weights() const override { return logw; }
};

// ---- ensembles ----

class ParticleModel {
public:
    virtual ~ParticleModel() = default;
    virtual Eigen::Index size() const = 0;
    // One row per particle; see put_row.
    virtual Eigen::MatrixXd outputs(const History& past, const Eigen::VectorXd& x, int task) const = 0;
    virtual void absorb(const History&, const Observation&) {}
    virtual void select(const std::vector<Eigen::Index>& idx) = 0;
    virtual bool movable() const { return false; }
    // One Metropolis sweep over all particles; cum holds each particle's
    // history log-likelihood. Returns the acceptance fraction.
    virtual double move(RngStream&, const History&, Eigen::VectorXd&) { return std::nan(""); }
};

template <class M>
void select_columns(M& m, const std::vector<Eigen::Index>& idx) {
    M out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(idx[j]);
    m = std::move(out);
}

// Particles stored as flat Gaussian-prior parameter vectors, one per column.
class FlatModel : public ParticleModel {
public:
    FlatModel(ProcessSpec spec, int S, const RngStream& rng)
        : spec_(std::move(spec)), fam_(family_of(spec_)), var_(noise_var(spec_)), prior_var_(prior_variances(spec_)) {
        P_.resize(prior_var_.size(), S);
        for (int s = 0; s < S; ++s) {
            RngStream sub = rng.derive(Label::particle, static_cast<std::uint64_t>(s));
            P_.col(s) = flatten(spec_, sample_latent(spec_, sub));
        }
    }

    Eigen::Index size() const override { return P_.cols(); }

    Eigen::MatrixXd outputs(const History& past, const Eigen::VectorXd& x, int task) const override {
        return outputs_of(P_, past, x, task);
    }

    void select(const std::vector<Eigen::Index>& idx) override { select_columns(P_, idx); }
    bool movable() const override { return true; }

    double move(RngStream& rng, const History& h, Eigen::VectorXd& cum) override {
        const Eigen::Index p = P_.rows(), S = P_.cols();
        const Eigen::VectorXd mean = P_.rowwise().mean();
        const Eigen::MatrixXd D = P_.colwise() - mean;
        Eigen::MatrixXd C = (D * D.transpose()) / static_cast<double>(S - 1) * (2.38 * 2.38 / static_cast<double>(p));
        C.diagonal() += 1e-8 * prior_var_;
        Eigen::LLT<Eigen::MatrixXd> llt(C);
        Eigen::MatrixXd L = llt.info() == Eigen::Success ? Eigen::MatrixXd(llt.matrixL())
                                                          : Eigen::MatrixXd(C.diagonal().cwiseSqrt().asDiagonal());
        Eigen::MatrixXd Z(p, S);
        for (Eigen::Index j = 0; j < S; ++j)
            for (Eigen::Index i = 0; i < p; ++i) Z(i, j) = rng.normal();
        const Eigen::MatrixXd Q = P_ + L * Z;
        const Eigen::VectorXd ll = history_loglik_of(Q, h);
        const Eigen::ArrayXd inv = prior_var_.cwiseInverse().array();
        const Eigen::VectorXd lp_old = -0.5 * (P_.array().square().colwise() * inv).colwise().sum().transpose();
        const Eigen::VectorXd lp_new = -0.5 * (Q.array().square().colwise() * inv).colwise().sum().transpose();
        Eigen::Index accepted = 0;
        for (Eigen::Index s = 0; s < S; ++s) {
            const double a = (lp_new[s] + ll[s]) - (lp_old[s] + cum[s]);
            if (std::log(rng.uniform_pos()) < a) {
                P_.col(s) = Q.col(s);
                cum[s] = ll[s];
                ++accepted;
            }
        }
        return static_cast<double>(accepted) / static_cast<double>(S);
    }

protected:
    virtual Eigen::MatrixXd outputs_of(const Eigen::MatrixXd& P, const History& past, const Eigen::VectorXd& x,
                                       int task) const {
        const Eigen::Index k =
            fam_ == Family::categorical ? static_cast<Eigen::Index>(std::get<TransformerSpec>(spec_).vocab) : 1;
        Eigen::MatrixXd out(P.cols(), k);
        for (Eigen::Index s = 0; s < P.cols(); ++s)
            put_row(fam_, var_, cond_predictive(spec_, unflatten(spec_, P.col(s)), past, x, task), out, s);
        return out;
    }

    virtual Eigen::VectorXd history_loglik_of(const Eigen::MatrixXd& P, const History& h) const {
        Eigen::VectorXd ll(P.cols());
        for (Eigen::Index s = 0; s < P.cols(); ++s) ll[s] = history_loglik(spec_, unflatten(spec_, P.col(s)), h);
        return ll;
    }

    ProcessSpec spec_;
    Family fam_;
    double var_;
    Eigen::VectorXd prior_var_;
    Eigen::MatrixXd P_;
};

// Processes whose mean or logit is linear in the flat parameters: linear and
// logistic regression, binary AR(K).
class LinearModel final : public FlatModel {
public:
    using FlatModel::FlatModel;

    void absorb(const History& past, const Observation& o) override {
        if (!o.scored) return;
        const Eigen::VectorXd f = feature(past, o.x);
        if (rows_ == Phi_.rows()) Phi_.conservativeResize(std::max<Eigen::Index>(16, 2 * rows_), f.size());
        if (rows_ == y_.size()) y_.conservativeResize(Phi_.rows());
        Phi_.row(rows_) = f.transpose();
        y_[rows_] = o.y;
        ++rows_;
    }

protected:
    Eigen::MatrixXd outputs_of(const Eigen::MatrixXd& P, const History& past, const Eigen::VectorXd& x,
                               int) const override {
        return P.transpose() * feature(past, x);
    }

    Eigen::VectorXd history_loglik_of(const Eigen::MatrixXd& P, const History&) const override {
        if (rows_ == 0) return Eigen::VectorXd::Zero(P.cols());
        const Eigen::MatrixXd Z = Phi_.topRows(rows_) * P;
        const auto y = y_.head(rows_).array();
        if (fam_ == Family::gaussian) {
            return (-0.5 * static_cast<double>(rows_) * (kLn2Pi + std::log(var_)) -
                    (Z.array().colwise() - y).square().colwise().sum().transpose() / (2.0 * var_))
                .matrix();
        }
        // y z - ln(1 + e^z), evaluated stably
        const Eigen::ArrayXXd a = Z.array();
        const Eigen::ArrayXXd sp = a.max(0.0) + (-a.abs()).exp().log1p();
        return ((a.colwise() * y) - sp).colwise().sum().transpose().matrix();
    }

private:
    Eigen::VectorXd feature(const History& past, const Eigen::VectorXd& x) const {
        if (const auto* s = std::get_if<BinaryARKSpec>(&spec_)) {
            if (static_cast<int>(past.size()) < s->K) throw std::domain_error("binary AR: history shorter than the context");
            Eigen::VectorXd f(static_cast<Eigen::Index>(s->K) * s->d);
            for (int k = 1; k <= s->K; ++k) {
                const double bit = past.obs[past.size() - static_cast<std::size_t>(k)].y;
                f.segment(static_cast<Eigen::Index>(k - 1) * s->d, s->d) = bit == 1.0 ? s->phi1 : s->phi0;
            }
            return f;
        }
        if (x.size() != P_.rows()) throw std::domain_error("ensemble: input dimension mismatch");
        return x;
    }

    Eigen::MatrixXd Phi_;
    Eigen::VectorXd y_;
    Eigen::Index rows_ = 0;
};

class DeepNetModel final : public FlatModel {
public:
    DeepNetModel(ProcessSpec spec, int S, const RngStream& rng) : FlatModel(std::move(spec), S, rng) {
        const auto& s = std::get<DeepNetSpec>(spec_);
        Eigen::Index off = 0;
        for (int l = 1; l <= s.depth; ++l) {
            const Eigen::Index rows = l == s.depth ? 1 : s.width, cols = l == 1 ? s.d : s.width;
            shapes_.push_back({off, rows, cols});
            off += rows * cols;
        }
    }

    void absorb(const History&, const Observation& o) override {
        if (!o.scored) return;
        if (cols_ == X_.cols()) {
            X_.conservativeResize(o.x.size(), std::max<Eigen::Index>(16, 2 * cols_));
            y_.conservativeResize(X_.cols());
        }
        X_.col(cols_) = o.x;
        y_[cols_] = o.y;
        ++cols_;
    }

protected:
    Eigen::MatrixXd outputs_of(const Eigen::MatrixXd& P, const History&, const Eigen::VectorXd& x, int) const override {
        Eigen::MatrixXd out(P.cols(), 1);
        for (Eigen::Index s = 0; s < P.cols(); ++s) out(s, 0) = forward(P.col(s), x)(0, 0);
        return out;
    }

    Eigen::VectorXd history_loglik_of(const Eigen::MatrixXd& P, const History&) const override {
        Eigen::VectorXd ll = Eigen::VectorXd::Zero(P.cols());
        if (cols_ == 0) return ll;
        const double c = -0.5 * static_cast<double>(cols_) * (kLn2Pi + std::log(var_));
        for (Eigen::Index s = 0; s < P.cols(); ++s) {
            const Eigen::MatrixXd f = forward(P.col(s), X_.leftCols(cols_));
            ll[s] = c - (f.row(0).transpose() - y_.head(cols_)).squaredNorm() / (2.0 * var_);
        }
        return ll;
    }

private:
    struct Shape {
        Eigen::Index offset, rows, cols;
    };

    template <class Col, class In>
    Eigen::MatrixXd forward(const Col& theta, const In& X) const {
        Eigen::MatrixXd U = X;
        for (std::size_t l = 0; l < shapes_.size(); ++l) {
            const auto& sh = shapes_[l];
            const Eigen::Map<const Eigen::MatrixXd> A(theta.data() + sh.offset, sh.rows, sh.cols);
            U = A * U;
            if (l + 1 < shapes_.size()) U = U.cwiseMax(0.0);
        }
        return U;
    }

    std::vector<Shape> shapes_;
    Eigen::MatrixXd X_;
    Eigen::VectorXd y_;
    Eigen::Index cols_ = 0;
};

// Particles held as full latents; no rejuvenation.
class GenericModel final : public ParticleModel {
public:
    GenericModel(ProcessSpec spec, std::vector<LatentParams> particles)
        : spec_(std::move(spec)), fam_(family_of(spec_)), var_(noise_var(spec_)), particles_(std::move(particles)) {}

    Eigen::Index size() const override { return static_cast<Eigen::Index>(particles_.size()); }

    Eigen::MatrixXd outputs(const History& past, const Eigen::VectorXd& x, int task) const override {
        Eigen::MatrixXd out;
        for (std::size_t i = 0; i < particles_.size(); ++i) {
            const auto p = cond_predictive(spec_, particles_[i], past, x, task);
            if (i == 0) {
                const Eigen::Index k =
                    fam_ == Family::categorical ? static_cast<Eigen::Index>(std::get<CategoricalPred>(p).pmf.size()) : 1;
                out.resize(size(), k);
            }
            put_row(fam_, var_, p, out, static_cast<Eigen::Index>(i));
        }
        return out;
    }

    void select(const std::vector<Eigen::Index>& idx) override {
        std::vector<LatentParams> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(particles_[static_cast<std::size_t>(i)]);
        particles_ = std::move(out);
    }

private:
    ProcessSpec spec_;
    Family fam_;
    double var_;
    std::vector<LatentParams> particles_;
};

// Linear representation learning with the task vectors integrated out on a
// fixed grid: each particle is a representation psi, and per task the grid
// weights are its exact (discretized) task posterior.
class NestedLinRepModel final : public ParticleModel {
public:
    NestedLinRepModel(const LinRepSpec& spec, const std::vector<Eigen::MatrixXd>& psis, int per_axis) : spec_(spec) {
        const GaussianGrid grid = gaussian_grid(spec.r, per_axis, 1.0 / spec.r);
        const Eigen::Index G = grid.nodes.cols(), S = static_cast<Eigen::Index>(psis.size());
        P_.assign(static_cast<std::size_t>(spec.d), Eigen::MatrixXd(G, S));
        for (Eigen::Index s = 0; s < S; ++s) {
            const auto& psi = psis[static_cast<std::size_t>(s)];
            if (psi.rows() != spec.d || psi.cols() != spec.r) throw std::domain_error("linrep: representation shape mismatch");
            const Eigen::MatrixXd logits = psi * grid.nodes;  // d x G
            for (Eigen::Index g = 0; g < G; ++g) {
                const Eigen::VectorXd p = softmax(logits.col(g));
                for (int k = 0; k < spec.d; ++k) P_[static_cast<std::size_t>(k)](g, s) = p[k];
            }
        }
        W_.assign(static_cast<std::size_t>(spec.tasks), grid.weights.replicate(1, S));
    }

    Eigen::Index size() const override { return P_.front().cols(); }

    Eigen::MatrixXd outputs(const History&, const Eigen::VectorXd&, int task) const override {
        const auto& W = weights(task);
        Eigen::MatrixXd out(size(), spec_.d);
        for (int k = 0; k < spec_.d; ++k)
            out.col(k) = (W.array() * P_[static_cast<std::size_t>(k)].array()).colwise().sum().transpose().log().matrix();
        return out;
    }

    void absorb(const History&, const Observation& o) override {
        if (!o.scored) return;
        const long k = std::lround(o.y) - 1;
        if (k < 0 || k >= spec_.d) throw std::domain_error("linrep: token out of range");
        auto& W = W_[static_cast<std::size_t>(checked(o.task))];
        W.array() *= P_[static_cast<std::size_t>(k)].array();
        W.array().rowwise() /= W.colwise().sum().array();
    }

    void select(const std::vector<Eigen::Index>& idx) override {
        for (auto& M : P_) select_columns(M, idx);
        for (auto& M : W_) select_columns(M, idx);
    }

private:
    int checked(int task) const {
        if (task < 0 || task >= spec_.tasks) throw std::domain_error("linrep: task index out of range");
        return task;
    }
    const Eigen::MatrixXd& weights(int task) const { return W_[static_cast<std::size_t>(checked(task))]; }

    LinRepSpec spec_;
    std::vector<Eigen::MatrixXd> P_;  // per outcome k: G x S likelihoods
    std::vector<Eigen::MatrixXd> W_;  // per task: G x S normalized grid weights
};

struct EnsembleImpl final : Predictor::Impl {
    std::unique_ptr<ParticleModel> model;
    Family fam;
    double var;
    Eigen::VectorXd logw, cum;
    double ess_frac;
    int move_steps;
    RngStream rng;

    std::size_t cache_size = static_cast<std::size_t>(-1);
    Eigen::VectorXd cache_x;
    int cache_task = 0;
    Eigen::MatrixXd cache_out;

    EnsembleImpl(std::unique_ptr<ParticleModel> m, const ProcessSpec& spec, double frac, int steps, RngStream r)
        : model(std::move(m)), fam(family_of(spec)), var(noise_var(spec)), ess_frac(frac), move_steps(steps),
          rng(std::move(r)) {
        if (!(frac > 0.0 && frac <= 1.0)) throw std::domain_error("ensemble: resample_ess_frac must lie in (0,1]");
        if (steps < 0) throw std::domain_error("ensemble: move_steps must be nonnegative");
        const Eigen::Index S = model->size();
        logw = Eigen::VectorXd::Constant(S, -std::log(static_cast<double>(S)));
        cum = Eigen::VectorXd::Zero(S);
    }

    const Eigen::MatrixXd& outputs(const Eigen::VectorXd& x, int task) {
        if (cache_size != hist.size() || cache_task != task || cache_x.size() != x.size() || cache_x != x) {
            cache_out = model->outputs(hist, x, task);
            cache_size = hist.size();
            cache_x = x;
            cache_task = task;
        }
        return cache_out;
    }

    void update(const Observation& o) override {
        if (!o.scored) {
            model->absorb(hist, o);
            hist.append(o);
            return;
        }
        const Eigen::VectorXd ll = output_loglik(fam, var, outputs(o.x, o.task), o.y);
        logw += ll;
        cum += ll;
        model->absorb(hist, o);
        hist.append(o);
        normalize_log(logw);
        const double ess = 1.0 / logw.array().exp().square().sum();
        if (ess < ess_frac * static_cast<double>(model->size())) resample();
    }

    void resample() {
        const Eigen::Index S = model->size();
        const Eigen::VectorXd w = logw.array().exp().matrix();
        std::vector<Eigen::Index> idx;
        idx.reserve(static_cast<std::size_t>(S));
        for (auto i : sample_weighted_n(rng, std::span<const double>(w.data(), S), static_cast<std::size_t>(S)))
            idx.push_back(static_cast<Eigen::Index>(i));
        std::sort(idx.begin(), idx.end());
        model->select(idx);
        Eigen::VectorXd c(S);
        for (Eigen::Index j = 0; j < S; ++j) c[j] = cum[idx[static_cast<std::size_t>(j)]];
        cum = std::move(c);
        logw.setConstant(-std::log(static_cast<double>(S)));
        ++resamples;
        if (model->movable())
            for (int k = 0; k < move_steps; ++k) {
                accept_sum += model->move(rng, hist, cum);
                ++accept_n;
            }
        cache_size = static_cast<std::size_t>(-1);
    }

    PredictiveDistribution predict(const Eigen::VectorXd& x, int task) override {
        return mixture(fam, var, outputs(x, task), logw);
    }

    Eigen::VectorXd log_weights() const override { return logw; }
};

std::vector<Eigen::MatrixXd> prior_representations(const LinRepSpec& spec, int S, const RngStream& rng) {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) {
        RngStream sub = rng.derive(Label::particle, static_cast<std::uint64_t>(s));
        out.push_back(std::get<LinRepLatent>(sample_latent(spec, sub)).psi);
    }
    return out;
}

std::unique_ptr<ParticleModel> ensemble_model(const ProcessSpec& spec, const EnsembleKind& k, const RngStream& rng) {
    if (std::holds_alternative<LinRegSpec>(spec) || std::holds_alternative<LogRegSpec>(spec) ||
        std::holds_alternative<BinaryARKSpec>(spec))
        return std::make_unique<LinearModel>(spec, k.S, rng);
    if (std::holds_alternative<DeepNetSpec>(spec)) return std::make_unique<DeepNetModel>(spec, k.S, rng);
    if (const auto* s = std::get_if<LinRepSpec>(&spec)) {
        if (k.xi_grid < 1) throw std::domain_error("ensemble: xi_grid must be positive");
        return std::make_unique<NestedLinRepModel>(*s, prior_representations(*s, k.S, rng), k.xi_grid);
    }
    if (has_gaussian_prior(spec)) return std::make_unique<FlatModel>(spec, k.S, rng);
    std::vector<LatentParams> particles;
    particles.reserve(static_cast<std::size_t>(k.S));
    for (int s = 0; s < k.S; ++s) {
        RngStream sub = rng.derive(Label::particle, static_cast<std::uint64_t>(s));
        particles.push_back(sample_latent(spec, sub));
    }
    return std::make_unique<GenericModel>(spec, std::move(particles));
}

}  // namespace

std::string predictor_name(const PredictorKind& kind) {
    return std::visit(overloaded{[](const ConjugateKind&) { return std::string("conjugate"); },
                                 [](const EnumerationKind&) { return std::string("enumeration"); },
                                 [](const EnsembleKind&) { return std::string("ensemble"); },
                                 [](const OmniscientKind&) { return std::string("omniscient"); },
                                 [](const MisspecifiedConjugateKind&) { return std::string("misspecified_conjugate"); },
                                 [](const MisspecifiedWidthKind&) { return std::string("misspecified_width"); },
                                 [](const OracleMetaKind&) { return std::string("oracle_meta"); }},
                      kind);
}

bool needs_latent(const PredictorKind& kind) {
    return std::holds_alternative<OmniscientKind>(kind) || std::holds_alternative<OracleMetaKind>(kind);
}

GaussianGrid gaussian_grid(int dim, int per_axis, double var) {
    if (dim < 1 || per_axis < 1 || !(var > 0.0)) throw std::domain_error("gaussian_grid: arguments must be positive");
    if (std::pow(static_cast<double>(per_axis), dim) > 1e6) throw std::domain_error("gaussian_grid: grid too large");
    const QuadratureRule rule = gauss_hermite_normal(per_axis);
    Eigen::Index G = 1;
    for (int i = 0; i < dim; ++i) G *= per_axis;
    GaussianGrid out{Eigen::MatrixXd(dim, G), Eigen::VectorXd(G)};
    const double sd = std::sqrt(var);
    for (Eigen::Index g = 0; g < G; ++g) {
        Eigen::Index rest = g;
        double w = 1.0;
        for (int i = 0; i < dim; ++i) {
            const auto j = static_cast<std::size_t>(rest % per_axis);
            rest /= per_axis;
            out.nodes(i, g) = sd * rule.nodes[j];
            w *= rule.weights[j];
        }
        out.weights[g] = w;
    }
    out.weights /= out.weights.sum();
    return out;
}

Predictor::Predictor(const PredictorKind& kind, const ProcessSpec& spec, const LatentParams* latent, RngStream rng) {
    validate(spec);
    if (needs_latent(kind) && latent == nullptr)
        throw std::domain_error(predictor_name(kind) + " predictor requires the true latent");
    impl_ = std::visit(
        overloaded{
            [&](const ConjugateKind& k) -> std::unique_ptr<Impl> {
                const auto* s = std::get_if<LinRegSpec>(&spec);
                if (!s) throw std::domain_error("conjugate predictor requires a linear regression process");
                return std::make_unique<ConjugateImpl>(
                    k.prior_mean.value_or(Eigen::VectorXd::Zero(s->d)),
                    k.prior_cov.value_or(Eigen::MatrixXd::Identity(s->d, s->d) * s->theta_var()),
                    k.sigma2.value_or(s->sigma2));
            },
            [&](const MisspecifiedConjugateKind& k) -> std::unique_ptr<Impl> {
                const auto* s = std::get_if<LinRegSpec>(&spec);
                if (!s) throw std::domain_error("misspecified conjugate predictor requires a linear regression process");
                if (k.prior_mean.size() != s->d) throw std::domain_error("misspecified conjugate: prior mean size");
                return std::make_unique<ConjugateImpl>(k.prior_mean, k.prior_cov, k.sigma2.value_or(s->sigma2));
            },
            [&](const EnumerationKind& k) -> std::unique_ptr<Impl> { return std::make_unique<EnumerationImpl>(spec, k); },
            [&](const OmniscientKind&) -> std::unique_ptr<Impl> { return std::make_unique<OmniscientImpl>(spec, *latent); },
            [&](const EnsembleKind& k) -> std::unique_ptr<Impl> {
                if (k.S < 2) throw std::domain_error("ensemble: size must be at least 2");
                return std::make_unique<EnsembleImpl>(ensemble_model(spec, k, rng.derive(Label::aux, 0)), spec,
                                                      k.resample_ess_frac, k.move_steps, rng.derive(Label::aux, 1));
            },
            [&](const MisspecifiedWidthKind& k) -> std::unique_ptr<Impl> {
                const auto* s = std::get_if<DirichletNetSpec>(&spec);
                if (!s) throw std::domain_error("misspecified width predictor requires a Dirichlet network process");
                if (k.S < 2) throw std::domain_error("ensemble: size must be at least 2");
                if (k.n < 1) throw std::domain_error("misspecified width: n must be positive");
                if (k.eps < 0.0) throw std::domain_error("misspecified width: eps must be nonnegative");
                std::optional<SphereCover> cover;
                if (k.eps > 0.0) {
                    RngStream crng = rng.derive(Label::aux, 2);
                    cover = build_sphere_cover(s->d, k.eps, crng);
                }
                std::vector<LatentParams> particles;
                particles.reserve(static_cast<std::size_t>(k.S));
                const RngStream base = rng.derive(Label::aux, 0);
                for (int i = 0; i < k.S; ++i) {
                    RngStream sub = base.derive(Label::particle, static_cast<std::uint64_t>(i));
                    particles.push_back(
                        WidthNetLatent{misspecified_width_prior_sample(*s, k.n, cover ? &*cover : nullptr, sub)});
                }
                return std::make_unique<EnsembleImpl>(std::make_unique<GenericModel>(spec, std::move(particles)), spec,
                                                      k.resample_ess_frac, 0, rng.derive(Label::aux, 1));
            },
            [&](const OracleMetaKind& k) -> std::unique_ptr<Impl> {
                const auto* s = std::get_if<LinRepSpec>(&spec);
                if (!s) throw std::domain_error("oracle meta predictor requires a linear representation process");
                const auto* lat = std::get_if<LinRepLatent>(latent);
                if (!lat) throw std::domain_error("oracle meta predictor: latent does not match the process");
                if (k.xi_grid < 1) throw std::domain_error("oracle meta: xi_grid must be positive");
                return std::make_unique<EnsembleImpl>(
                    std::make_unique<NestedLinRepModel>(*s, std::vector<Eigen::MatrixXd>{lat->psi}, k.xi_grid), spec, 1.0,
                    0, rng.derive(Label::aux, 1));
            }},
        kind);
}

Predictor::~Predictor() = default;
Predictor::Predictor(Predictor&&) noexcept = default;
Predictor& Predictor::operator=(Predictor&&) noexcept = default;

void Predictor::observe(const Observation& obs) { impl_->update(obs); }
PredictiveDistribution Predictor::predict(const Eigen::VectorXd& x, int task) { return impl_->predict(x, task); }
const History& Predictor::history() const { return impl_->hist; }
std::optional<GaussianParams> Predictor::posterior() const { return impl_->posterior(); }
Eigen::VectorXd Predictor::log_weights() const { return impl_->log_weights(); }
int Predictor::resample_count() const { return impl_->resamples; }
double Predictor::acceptance_rate() const {
    return impl_->accept_n ? impl_->accept_sum / impl_->accept_n : std::nan("");
}

}  // namespace ilab
