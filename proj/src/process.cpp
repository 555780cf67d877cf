#include "ilab/process.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/QR>

#include "ilab/info.hpp"

namespace ilab {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

template <class T>
const T& latent_as(const LatentParams& latent, const char* who) {
    if (const auto* p = std::get_if<T>(&latent)) return *p;
    throw std::domain_error(std::string(who) + ": latent does not match the process");
}

void check_unit(const Eigen::VectorXd& v, int dim, const char* who) {
    if (v.size() != dim) throw std::domain_error(std::string(who) + ": embedding has the wrong dimension");
    if (std::abs(v.norm() - 1.0) > 1e-12) throw std::domain_error(std::string(who) + ": embedding is not unit norm");
}

void validate_transformer(const TransformerSpec& s) {
    if (s.vocab < 1 || s.r < 1 || s.depth < 1 || s.context < 1)
        throw std::domain_error("transformer: dimensions must be positive");
    if (static_cast<int>(s.embeddings.size()) != s.vocab)
        throw std::domain_error("transformer: need one embedding per token");
    for (const auto& e : s.embeddings) check_unit(e, s.r, "transformer");
    if (s.v_var < 0.0) throw std::domain_error("transformer: negative value variance");
}

// Last `count` tokens of the given task, oldest first, or empty if the
// task has fewer.
std::vector<int> trailing_tokens(std::span<const Observation> past, int task, int count, bool any_task) {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(count));
    for (auto it = past.rbegin(); it != past.rend() && static_cast<int>(out.size()) < count; ++it)
        if (any_task || it->task == task) out.push_back(static_cast<int>(std::lround(it->y)));
    if (static_cast<int>(out.size()) < count) return {};
    std::reverse(out.begin(), out.end());
    return out;
}

double ark_logit(const BinaryARKSpec& s, const ARKLatent& lat, std::span<const Observation> past) {
    if (static_cast<int>(past.size()) < s.K) throw std::domain_error("binary AR: history shorter than the context");
    double z = 0.0;
    for (int k = 1; k <= s.K; ++k) {
        const double bit = past[past.size() - static_cast<std::size_t>(k)].y;
        if (bit != 0.0 && bit != 1.0) throw std::domain_error("binary AR: history holds a non-binary value");
        z += lat.theta[static_cast<std::size_t>(k - 1)].dot(bit == 1.0 ? s.phi1 : s.phi0);
    }
    return z;
}

Eigen::MatrixXd sample_v(const TransformerSpec& s, int rows, RngStream& rng) {
    Eigen::MatrixXd V(rows, s.r);
    if (s.v_prior == VPrior::sphere_rows) {
        for (int i = 0; i < rows; ++i) V.row(i) = sample_unit_sphere(rng, s.r).transpose();
    } else {
        const double sd = std::sqrt(s.v_var > 0.0 ? s.v_var : 1.0 / s.r);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < s.r; ++j) V(i, j) = sd * rng.normal();
    }
    return V;
}

Eigen::MatrixXd orthonormal_columns(RngStream& rng, int rows, int cols) {
    Eigen::MatrixXd G(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) G(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    const Eigen::MatrixXd R = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    // Sign-fix so Q is Haar distributed rather than biased by the QR convention.
    for (int j = 0; j < cols; ++j)
        if (R(j, j) < 0.0) Q.col(j) *= -1.0;
    return Q;
}

IclLatent sample_icl(const IclSpec& s, RngStream& rng) {
    IclLatent lat;
    lat.index.resize(static_cast<std::size_t>(s.tasks));
    const double a = s.R / static_cast<double>(s.N);
    if (s.N <= 10000) {
        std::vector<double> alpha(static_cast<std::size_t>(s.N), a);
        lat.log_alpha = sample_log_dirichlet(rng, alpha);
        const double mx = *std::max_element(lat.log_alpha.begin(), lat.log_alpha.end());
        std::vector<double> w(lat.log_alpha.size());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(lat.log_alpha[i] - mx);
        for (auto& idx : lat.index) idx = static_cast<long>(sample_weighted(rng, w));
    } else {
        // Polya urn: integrating alpha out leaves a Dirichlet-multinomial sequence.
        std::map<long, long> counts;
        for (int m = 0; m < s.tasks; ++m) {
            const double seen = static_cast<double>(counts.size());
            const double p_new = a * (static_cast<double>(s.N) - seen) / (s.R + m);
            long pick;
            if (rng.uniform() < p_new) {
                do {
                    pick = static_cast<long>(rng.below(static_cast<std::uint64_t>(s.N)));
                } while (counts.count(pick));
            } else {
                std::vector<long> keys;
                std::vector<double> w;
                for (const auto& [c, n] : counts) {
                    keys.push_back(c);
                    w.push_back(a + static_cast<double>(n));
                }
                pick = keys[sample_weighted(rng, w)];
            }
            ++counts[pick];
            lat.index[static_cast<std::size_t>(m)] = pick;
        }
    }
    for (long c : lat.index)
        if (!lat.components.count(c)) {
            RngStream sub = rng.derive(Label::component, static_cast<std::uint64_t>(c));
            lat.components.emplace(c, sample_transformer_latent(s.inner, sub));
        }
    return lat;
}

}  // namespace

long DeepNetSpec::parameter_count() const {
    if (depth == 1) return d;
    return static_cast<long>(width) * d + static_cast<long>(depth - 2) * width * width + width;
}

double DirichletNetSpec::output_scale() const {
    return std::sqrt(scale == OutputScale::sqrt_k ? K : K + 1.0);
}

double FiniteNet::operator()(const Eigen::VectorXd& x) const {
    if (atoms.cols() != x.size()) throw std::domain_error("FiniteNet: input dimension mismatch");
    return coef.dot((atoms * x).cwiseMax(0.0));
}

std::size_t History::scored_count() const {
    return static_cast<std::size_t>(std::count_if(obs.begin(), obs.end(), [](const Observation& o) { return o.scored; }));
}

std::string process_kind(const ProcessSpec& spec) {
    return std::visit(overloaded{[](const LinRegSpec&) { return std::string("linreg"); },
                                 [](const LogRegSpec&) { return std::string("logreg"); },
                                 [](const DeepNetSpec&) { return std::string("deepnet"); },
                                 [](const DirichletNetSpec&) { return std::string("dirichlet_net"); },
                                 [](const BinaryARKSpec&) { return std::string("binary_ark"); },
                                 [](const TransformerSpec&) { return std::string("transformer"); },
                                 [](const LinRepSpec&) { return std::string("linrep"); },
                                 [](const IclSpec&) { return std::string("icl_mixture"); }},
                      spec);
}

void validate(const ProcessSpec& spec) {
    std::visit(overloaded{
                   [](const LinRegSpec& s) {
                       if (s.d < 1) throw std::domain_error("linreg: d must be positive");
                       if (!(s.sigma2 > 0.0)) throw std::domain_error("linreg: noise variance must be positive");
                       if (s.prior_var < 0.0) throw std::domain_error("linreg: negative prior variance");
                   },
                   [](const LogRegSpec& s) {
                       if (s.d < 1) throw std::domain_error("logreg: d must be positive");
                   },
                   [](const DeepNetSpec& s) {
                       if (s.d < 1 || s.width < 1 || s.depth < 1)
                           throw std::domain_error("deepnet: dimensions must be positive");
                       if (!(s.sigma2 > 0.0)) throw std::domain_error("deepnet: noise variance must be positive");
                   },
                   [](const DirichletNetSpec& s) {
                       if (s.d < 1) throw std::domain_error("dirichlet_net: d must be positive");
                       if (!(s.K > 0.0)) throw std::domain_error("dirichlet_net: scale must be positive");
                       if (!(s.sigma2 > 0.0)) throw std::domain_error("dirichlet_net: noise variance must be positive");
                       if (!(s.tail_tol > 0.0 && s.tail_tol < 1.0))
                           throw std::domain_error("dirichlet_net: tail_tol must lie in (0,1)");
                   },
                   [](const BinaryARKSpec& s) {
                       if (s.d < 1 || s.K < 1) throw std::domain_error("binary_ark: dimensions must be positive");
                       check_unit(s.phi0, s.d, "binary_ark");
                       check_unit(s.phi1, s.d, "binary_ark");
                   },
                   [](const TransformerSpec& s) { validate_transformer(s); },
                   [](const LinRepSpec& s) {
                       if (s.r < 1 || s.tasks < 1) throw std::domain_error("linrep: dimensions must be positive");
                       if (s.d < s.r) throw std::domain_error("linrep: requires d >= r");
                   },
                   [](const IclSpec& s) {
                       if (s.N < 1 || !(s.R > 0.0) || s.tasks < 1 || s.per_task < 1)
                           throw std::domain_error("icl_mixture: sizes must be positive");
                       if (s.R > static_cast<double>(s.N)) throw std::domain_error("icl_mixture: requires R <= N");
                       validate_transformer(s.inner);
                   }},
               spec);
}

std::vector<Eigen::VectorXd> default_embeddings(int count, int dim, std::uint64_t seed) {
    if (count < 1 || dim < 1) throw std::domain_error("default_embeddings: sizes must be positive");
    std::vector<Eigen::VectorXd> out;
    if (count <= dim) {
        for (int i = 0; i < count; ++i) out.push_back(Eigen::VectorXd::Unit(dim, i));
        return out;
    }
    RngStream rng(SeedSpec{seed, {{Label::aux, static_cast<std::uint64_t>(count) * 1000003u + dim}}});
    const Eigen::MatrixXd Q = orthonormal_columns(rng, count, dim);
    for (int i = 0; i < count; ++i) {
        Eigen::VectorXd v = Q.row(i).transpose();
        out.push_back(v / v.norm());
    }
    return out;
}

BinaryARKSpec make_ark_spec(int d, int K) {
    auto e = default_embeddings(2, d);
    return BinaryARKSpec{d, K, e[0], e[1]};
}

TransformerSpec make_transformer_spec(int vocab, int r, int depth, int context, VPrior v_prior) {
    TransformerSpec s;
    s.vocab = vocab;
    s.r = r;
    s.depth = depth;
    s.context = context;
    s.embeddings = default_embeddings(vocab, r);
    s.v_prior = v_prior;
    return s;
}

IclSpec make_icl_spec(long N, double R, int vocab, int r, int depth, int context, int tasks, int per_task) {
    IclSpec s;
    s.N = N;
    s.R = R;
    s.inner = make_transformer_spec(vocab, r, depth, context, VPrior::gaussian);
    s.inner.v_var = 1.0 / vocab;
    s.tasks = tasks;
    s.per_task = per_task;
    return s;
}

TransformerLatent sample_transformer_latent(const TransformerSpec& s, RngStream& rng) {
    TransformerLatent lat;
    for (int l = 1; l <= s.depth; ++l) {
        Eigen::MatrixXd A(s.r, s.r);
        for (int i = 0; i < s.r; ++i)
            for (int j = 0; j < s.r; ++j) A(i, j) = rng.normal();
        lat.A.push_back(std::move(A));
        lat.V.push_back(sample_v(s, l == s.depth ? s.vocab : s.r, rng));
    }
    return lat;
}

LatentParams sample_latent(const ProcessSpec& spec, RngStream& rng) {
    validate(spec);
    return std::visit(
        overloaded{
            [&](const LinRegSpec& s) -> LatentParams { return VectorLatent{sample_gaussian(rng, s.d, s.theta_var())}; },
            [&](const LogRegSpec& s) -> LatentParams { return VectorLatent{sample_gaussian(rng, s.d, 1.0 / s.d)}; },
            [&](const DeepNetSpec& s) -> LatentParams {
                DeepNetLatent lat;
                for (int l = 1; l <= s.depth; ++l) {
                    const int rows = l == s.depth ? 1 : s.width;
                    const int cols = l == 1 ? s.d : s.width;
                    const double sd = std::sqrt(1.0 / cols);
                    Eigen::MatrixXd A(rows, cols);
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < cols; ++j) A(i, j) = sd * rng.normal();
                    lat.layers.push_back(std::move(A));
                }
                return lat;
            },
            [&](const DirichletNetSpec& s) -> LatentParams {
                DirichletLatent lat;
                lat.draw = sample_stick_breaking(rng, s.K, s.d, s.tail_tol);
                const auto n = static_cast<Eigen::Index>(lat.draw.weights.size());
                lat.net.atoms.resize(n, s.d);
                lat.net.coef.resize(n);
                const double c = s.output_scale();
                for (Eigen::Index i = 0; i < n; ++i) {
                    const int sign = rng.uniform() < 0.5 ? 1 : -1;
                    lat.signs.push_back(sign);
                    lat.net.atoms.row(i) = lat.draw.atoms[static_cast<std::size_t>(i)].transpose();
                    lat.net.coef[i] = c * sign * lat.draw.weights[static_cast<std::size_t>(i)];
                }
                return lat;
            },
            [&](const BinaryARKSpec& s) -> LatentParams {
                ARKLatent lat;
                for (int k = 0; k < s.K; ++k) lat.theta.push_back(sample_gaussian(rng, s.d, 1.0 / s.K));
                return lat;
            },
            [&](const TransformerSpec& s) -> LatentParams { return sample_transformer_latent(s, rng); },
            [&](const LinRepSpec& s) -> LatentParams {
                LinRepLatent lat;
                lat.psi = orthonormal_columns(rng, s.d, s.r);
                for (int m = 0; m < s.tasks; ++m) lat.xi.push_back(sample_gaussian(rng, s.r, 1.0 / s.r));
                return lat;
            },
            [&](const IclSpec& s) -> LatentParams { return sample_icl(s, rng); }},
        spec);
}

int input_dim(const ProcessSpec& spec) {
    return std::visit(overloaded{[](const LinRegSpec& s) { return s.d; }, [](const LogRegSpec& s) { return s.d; },
                                 [](const DeepNetSpec& s) { return s.d; },
                                 [](const DirichletNetSpec& s) { return s.d; }, [](const auto&) { return 0; }},
                      spec);
}

bool is_meta(const ProcessSpec& spec) {
    return std::holds_alternative<LinRepSpec>(spec) || std::holds_alternative<IclSpec>(spec);
}

Eigen::VectorXd sample_input(const ProcessSpec& spec, RngStream& rng) {
    const int d = input_dim(spec);
    return d > 0 ? sample_gaussian(rng, d, 1.0) : Eigen::VectorXd();
}

double sample_label(const PredictiveDistribution& pred, RngStream& rng) {
    return std::visit(overloaded{
                          [&](const GaussianPred& g) { return g.mean + std::sqrt(g.var) * rng.normal(); },
                          [&](const GaussianMixturePred& g) {
                              const auto i = sample_weighted(rng, g.weights);
                              return g.means[i] + std::sqrt(g.var) * rng.normal();
                          },
                          [&](const BernoulliPred& b) { return rng.uniform() < b.p1() ? 1.0 : 0.0; },
                          [&](const CategoricalPred& c) {
                              return static_cast<double>(sample_weighted(rng, c.pmf)) + c.first;
                          }},
                      pred);
}

History initial_history(const ProcessSpec& spec, const LatentParams&, RngStream& rng) {
    History h;
    if (const auto* s = std::get_if<BinaryARKSpec>(&spec)) {
        for (int k = 0; k < s->K; ++k) h.append(Observation{{}, static_cast<double>(rng.below(2)), 0, false});
    } else if (const auto* s = std::get_if<TransformerSpec>(&spec)) {
        for (int k = 0; k < s->context; ++k)
            h.append(Observation{{}, static_cast<double>(rng.below(static_cast<std::uint64_t>(s->vocab)) + 1), 0, false});
    }
    return h;
}

std::vector<Observation> start_task(const ProcessSpec& spec, int task, RngStream& rng) {
    std::vector<Observation> out;
    if (const auto* s = std::get_if<IclSpec>(&spec)) {
        for (int k = 0; k < s->inner.context; ++k)
            out.push_back(
                Observation{{}, static_cast<double>(rng.below(static_cast<std::uint64_t>(s->inner.vocab)) + 1), task, false});
    }
    return out;
}

PredictiveDistribution cond_predictive_prefix(const ProcessSpec& spec, const LatentParams& latent,
                                              std::span<const Observation> past, const Eigen::VectorXd& x, int task) {
    return std::visit(
        overloaded{
            [&](const LinRegSpec& s) -> PredictiveDistribution {
                const auto& th = latent_as<VectorLatent>(latent, "linreg").theta;
                if (x.size() != s.d) throw std::domain_error("linreg: input dimension mismatch");
                return GaussianPred{th.dot(x), s.sigma2};
            },
            [&](const LogRegSpec& s) -> PredictiveDistribution {
                const auto& th = latent_as<VectorLatent>(latent, "logreg").theta;
                if (x.size() != s.d) throw std::domain_error("logreg: input dimension mismatch");
                return BernoulliPred{th.dot(x)};
            },
            [&](const DeepNetSpec& s) -> PredictiveDistribution {
                return GaussianPred{relu_forward(latent_as<DeepNetLatent>(latent, "deepnet").layers, x), s.sigma2};
            },
            [&](const DirichletNetSpec& s) -> PredictiveDistribution {
                double f;
                if (const auto* w = std::get_if<WidthNetLatent>(&latent))
                    f = w->net(x);
                else
                    f = latent_as<DirichletLatent>(latent, "dirichlet_net").net(x);
                if (s.link == Link::logistic) return BernoulliPred{f};
                return GaussianPred{f, s.sigma2};
            },
            [&](const BinaryARKSpec& s) -> PredictiveDistribution {
                return BernoulliPred{ark_logit(s, latent_as<ARKLatent>(latent, "binary_ark"), past)};
            },
            [&](const TransformerSpec& s) -> PredictiveDistribution {
                const auto ctx = trailing_tokens(past, 0, s.context, true);
                if (ctx.empty()) throw std::domain_error("transformer: history shorter than the context");
                const Eigen::VectorXd p = transformer_next_pmf(s, latent_as<TransformerLatent>(latent, "transformer"), ctx);
                return CategoricalPred{std::vector<double>(p.data(), p.data() + p.size()), 1};
            },
            [&](const LinRepSpec& s) -> PredictiveDistribution {
                const auto& lat = latent_as<LinRepLatent>(latent, "linrep");
                if (task < 0 || task >= static_cast<int>(lat.xi.size()) || task >= s.tasks)
                    throw std::domain_error("linrep: task index out of range");
                const Eigen::VectorXd p = softmax(lat.psi * lat.xi[static_cast<std::size_t>(task)]);
                return CategoricalPred{std::vector<double>(p.data(), p.data() + p.size()), 1};
            },
            [&](const IclSpec& s) -> PredictiveDistribution {
                const auto& lat = latent_as<IclLatent>(latent, "icl_mixture");
                if (task < 0 || task >= static_cast<int>(lat.index.size()))
                    throw std::domain_error("icl_mixture: task index out of range");
                const auto ctx = trailing_tokens(past, task, s.inner.context, false);
                if (ctx.empty()) throw std::domain_error("icl_mixture: task history shorter than the context");
                const Eigen::VectorXd p =
                    transformer_next_pmf(s.inner, lat.components.at(lat.index[static_cast<std::size_t>(task)]), ctx);
                return CategoricalPred{std::vector<double>(p.data(), p.data() + p.size()), 1};
            }},
        spec);
}

PredictiveDistribution cond_predictive(const ProcessSpec& spec, const LatentParams& latent, const History& history,
                                       const Eigen::VectorXd& x, int task) {
    return cond_predictive_prefix(spec, latent, history.obs, x, task);
}

double cond_logprob(const ProcessSpec& spec, const LatentParams& latent, const History& history,
                    const Eigen::VectorXd& x, double y, int task) {
    return -log_loss(cond_predictive(spec, latent, history, x, task), y);
}

double history_loglik(const ProcessSpec& spec, const LatentParams& latent, const History& history) {
    double ll = 0.0;
    const std::span<const Observation> all(history.obs);
    for (std::size_t t = 0; t < all.size(); ++t) {
        const auto& o = all[t];
        if (!o.scored) continue;
        ll -= log_loss(cond_predictive_prefix(spec, latent, all.first(t), o.x, o.task), o.y);
    }
    return ll;
}

Observation step(const ProcessSpec& spec, const LatentParams& latent, const History& history, RngStream& rng) {
    if (is_meta(spec)) throw std::domain_error("step: meta processes advance through meta_step");
    Observation o;
    o.x = sample_input(spec, rng);
    o.y = sample_label(cond_predictive(spec, latent, history, o.x), rng);
    return o;
}

Observation meta_step(const ProcessSpec& spec, const LatentParams& latent, int task, const History& history,
                      RngStream& rng) {
    if (!is_meta(spec)) throw std::domain_error("meta_step: not a meta process");
    Observation o;
    o.task = task;
    o.y = sample_label(cond_predictive(spec, latent, history, o.x, task), rng);
    return o;
}

std::optional<double> irreducible_rate(const ProcessSpec& spec) {
    constexpr double two_pi_e = 2.0 * std::numbers::pi * std::numbers::e;
    return std::visit(
        overloaded{[&](const LinRegSpec& s) -> std::optional<double> { return 0.5 * std::log(two_pi_e * s.sigma2); },
                   [&](const DeepNetSpec& s) -> std::optional<double> { return 0.5 * std::log(two_pi_e * s.sigma2); },
                   [&](const DirichletNetSpec& s) -> std::optional<double> {
                       if (s.link == Link::logistic) return std::nullopt;
                       return 0.5 * std::log(two_pi_e * s.sigma2);
                   },
                   [](const auto&) -> std::optional<double> { return std::nullopt; }},
        spec);
}

double relu_forward(const std::vector<Eigen::MatrixXd>& layers, const Eigen::VectorXd& x) {
    if (layers.empty()) throw std::domain_error("relu_forward: no layers");
    Eigen::VectorXd u = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].cols() != u.size()) throw std::domain_error("relu_forward: shape mismatch");
        u = layers[l] * u;
        if (l + 1 < layers.size()) u = u.cwiseMax(0.0);
    }
    if (u.size() != 1) throw std::domain_error("relu_forward: output layer must have one row");
    return u[0];
}

Eigen::MatrixXd attention_matrix(const Eigen::MatrixXd& U, const Eigen::MatrixXd& A) {
    if (A.rows() != U.rows() || A.cols() != U.rows()) throw std::domain_error("attention_matrix: shape mismatch");
    const Eigen::MatrixXd S = U.transpose() * A * U / std::sqrt(static_cast<double>(A.rows()));
    Eigen::MatrixXd P(S.rows(), S.cols());
    for (Eigen::Index j = 0; j < S.cols(); ++j) P.col(j) = softmax(S.col(j));
    return P;
}

Eigen::MatrixXd clip_columns(Eigen::MatrixXd U) {
    for (Eigen::Index j = 0; j < U.cols(); ++j) {
        const double n = U.col(j).norm();
        if (n > 1.0) U.col(j) /= n;
    }
    return U;
}

Eigen::MatrixXd attention_layer(const Eigen::MatrixXd& U, const Eigen::MatrixXd& A, const Eigen::MatrixXd& V) {
    if (V.cols() != U.rows()) throw std::domain_error("attention_layer: shape mismatch");
    return clip_columns(V * U * attention_matrix(U, A));
}

Eigen::VectorXd transformer_next_pmf(const TransformerSpec& spec, const TransformerLatent& latent,
                                     const std::vector<int>& context) {
    if (static_cast<int>(context.size()) != spec.context)
        throw std::domain_error("transformer: context has the wrong length");
    if (static_cast<int>(latent.A.size()) != spec.depth || latent.V.size() != latent.A.size())
        throw std::domain_error("transformer: latent depth mismatch");
    Eigen::MatrixXd U(spec.r, spec.context);
    for (int k = 0; k < spec.context; ++k) {
        const int tok = context[static_cast<std::size_t>(k)];
        if (tok < 1 || tok > spec.vocab) throw std::domain_error("transformer: token out of range");
        U.col(k) = spec.embeddings[static_cast<std::size_t>(tok - 1)];
    }
    for (int l = 0; l < spec.depth; ++l) U = attention_layer(U, latent.A[l], latent.V[l]);
    if (U.rows() != spec.vocab) throw std::domain_error("transformer: output layer must have vocab rows");
    return softmax(U.col(spec.context - 1));
}

bool has_gaussian_prior(const ProcessSpec& spec) {
    if (const auto* t = std::get_if<TransformerSpec>(&spec)) return t->v_prior == VPrior::gaussian;
    return std::holds_alternative<LinRegSpec>(spec) || std::holds_alternative<LogRegSpec>(spec) ||
           std::holds_alternative<DeepNetSpec>(spec) || std::holds_alternative<BinaryARKSpec>(spec);
}

namespace {

void append(std::vector<double>& out, const Eigen::MatrixXd& M) { out.insert(out.end(), M.data(), M.data() + M.size()); }

Eigen::MatrixXd take(const Eigen::VectorXd& flat, Eigen::Index& pos, Eigen::Index rows, Eigen::Index cols) {
    if (pos + rows * cols > flat.size()) throw std::domain_error("unflatten: vector too short");
    Eigen::MatrixXd M = Eigen::Map<const Eigen::MatrixXd>(flat.data() + pos, rows, cols);
    pos += rows * cols;
    return M;
}

}  // namespace

Eigen::VectorXd flatten(const ProcessSpec& spec, const LatentParams& latent) {
    if (!has_gaussian_prior(spec)) throw std::domain_error("flatten: process has no Gaussian parameterization");
    std::vector<double> out;
    std::visit(overloaded{[&](const VectorLatent& v) { append(out, v.theta); },
                          [&](const DeepNetLatent& v) {
                              for (const auto& A : v.layers) append(out, A);
                          },
                          [&](const ARKLatent& v) {
                              for (const auto& t : v.theta) append(out, t);
                          },
                          [&](const TransformerLatent& v) {
                              for (std::size_t l = 0; l < v.A.size(); ++l) {
                                  append(out, v.A[l]);
                                  append(out, v.V[l]);
                              }
                          },
                          [](const auto&) { throw std::domain_error("flatten: latent has no flat form"); }},
               latent);
    return Eigen::Map<const Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

LatentParams unflatten(const ProcessSpec& spec, const Eigen::VectorXd& flat) {
    Eigen::Index pos = 0;
    LatentParams out = std::visit(
        overloaded{
            [&](const LinRegSpec& s) -> LatentParams { return VectorLatent{take(flat, pos, s.d, 1)}; },
            [&](const LogRegSpec& s) -> LatentParams { return VectorLatent{take(flat, pos, s.d, 1)}; },
            [&](const DeepNetSpec& s) -> LatentParams {
                DeepNetLatent lat;
                for (int l = 1; l <= s.depth; ++l)
                    lat.layers.push_back(take(flat, pos, l == s.depth ? 1 : s.width, l == 1 ? s.d : s.width));
                return lat;
            },
            [&](const BinaryARKSpec& s) -> LatentParams {
                ARKLatent lat;
                for (int k = 0; k < s.K; ++k) lat.theta.push_back(take(flat, pos, s.d, 1));
                return lat;
            },
            [&](const TransformerSpec& s) -> LatentParams {
                TransformerLatent lat;
                for (int l = 1; l <= s.depth; ++l) {
                    lat.A.push_back(take(flat, pos, s.r, s.r));
                    lat.V.push_back(take(flat, pos, l == s.depth ? s.vocab : s.r, s.r));
                }
                return lat;
            },
            [](const auto&) -> LatentParams {
                throw std::domain_error("unflatten: process has no Gaussian parameterization");
            }},
        spec);
    if (pos != flat.size()) throw std::domain_error("unflatten: vector has the wrong length");
    return out;
}

Eigen::VectorXd prior_variances(const ProcessSpec& spec) {
    std::vector<double> v;
    auto fill = [&](Eigen::Index n, double var) { v.insert(v.end(), static_cast<std::size_t>(n), var); };
    std::visit(overloaded{[&](const LinRegSpec& s) { fill(s.d, s.theta_var()); },
                          [&](const LogRegSpec& s) { fill(s.d, 1.0 / s.d); },
                          [&](const DeepNetSpec& s) {
                              for (int l = 1; l <= s.depth; ++l) {
                                  const int rows = l == s.depth ? 1 : s.width;
                                  const int cols = l == 1 ? s.d : s.width;
                                  fill(static_cast<Eigen::Index>(rows) * cols, 1.0 / cols);
                              }
                          },
                          [&](const BinaryARKSpec& s) { fill(static_cast<Eigen::Index>(s.K) * s.d, 1.0 / s.K); },
                          [&](const TransformerSpec& s) {
                              if (s.v_prior != VPrior::gaussian)
                                  throw std::domain_error("prior_variances: sphere-row values are not Gaussian");
                              const double vv = s.v_var > 0.0 ? s.v_var : 1.0 / s.r;
                              for (int l = 1; l <= s.depth; ++l) {
                                  fill(static_cast<Eigen::Index>(s.r) * s.r, 1.0);
                                  fill(static_cast<Eigen::Index>(l == s.depth ? s.vocab : s.r) * s.r, vv);
                              }
                          },
                          [](const auto&) {
                              throw std::domain_error("prior_variances: process has no Gaussian parameterization");
                          }},
               spec);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double mean_output(const ProcessSpec& spec, const LatentParams& latent, const Eigen::VectorXd& x) {
    return std::visit(
        overloaded{[&](const LinRegSpec&) { return latent_as<VectorLatent>(latent, "linreg").theta.dot(x); },
                   [&](const LogRegSpec&) { return latent_as<VectorLatent>(latent, "logreg").theta.dot(x); },
                   [&](const DeepNetSpec&) { return relu_forward(latent_as<DeepNetLatent>(latent, "deepnet").layers, x); },
                   [&](const DirichletNetSpec&) {
                       if (const auto* w = std::get_if<WidthNetLatent>(&latent)) return w->net(x);
                       return latent_as<DirichletLatent>(latent, "dirichlet_net").net(x);
                   },
                   [](const auto&) -> double { throw std::domain_error("mean_output: token process"); }},
        spec);
}

}  // namespace ilab
