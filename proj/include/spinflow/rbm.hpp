#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spinflow/errors.hpp"
#include "spinflow/ising.hpp"
#include "spinflow/rng.hpp"

namespace spinflow {

// Restricted Boltzmann Machine with +-1 visible units and {0,1} hidden units.
// E(v, h) = -a.v - b.h - v^T W h.
struct RbmModel {
    Eigen::MatrixXd weights;      // n_visible x n_hidden
    Eigen::VectorXd visible_bias;  // a
    Eigen::VectorXd hidden_bias;   // b

    int n_visible() const { return static_cast<int>(weights.rows()); }
    int n_hidden() const { return static_cast<int>(weights.cols()); }

    void validate() const {
        if (weights.rows() < 1 || weights.cols() < 1)
            throw InvalidArgumentError("RbmModel: dimensions must be positive");
        if (visible_bias.size() != weights.rows() || hidden_bias.size() != weights.cols())
            throw InvalidArgumentError("RbmModel: bias dimensions inconsistent with weights");
        if (!weights.allFinite() || !visible_bias.allFinite() || !hidden_bias.allFinite())
            throw InvalidArgumentError("RbmModel: parameters must be finite");
    }

    static RbmModel zeros(int n_visible, int n_hidden) {
        RbmModel m;
        m.weights = Eigen::MatrixXd::Zero(n_visible, n_hidden);
        m.visible_bias = Eigen::VectorXd::Zero(n_visible);
        m.hidden_bias = Eigen::VectorXd::Zero(n_hidden);
        return m;
    }

    // Default initialization: W ~ N(0, 0.01^2) i.i.d., biases zero.
    static RbmModel init(int n_visible, int n_hidden, Rng& rng, double weight_sigma = 0.01) {
        RbmModel m = zeros(n_visible, n_hidden);
        for (int i = 0; i < n_visible; ++i)
            for (int j = 0; j < n_hidden; ++j) m.weights(i, j) = weight_sigma * rng.normal();
        return m;
    }
};

struct TrainConfig {
    int cd_steps = 1;
    double learning_rate = 0.05;
    int epochs = 1;
    int batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const {
        if (cd_steps < 1) throw InvalidArgumentError("TrainConfig: cd_steps must be positive");
        if (!(learning_rate >= 0.0))
            throw InvalidArgumentError("TrainConfig: learning_rate must be nonnegative");
        if (epochs < 0) throw InvalidArgumentError("TrainConfig: epochs must be nonnegative");
        if (batch_size < 1) throw InvalidArgumentError("TrainConfig: batch_size must be positive");
    }
};

namespace detail {

inline void check_visible(const Eigen::VectorXd& v, const RbmModel& m) {
    if (v.size() != m.n_visible())
        throw InvalidArgumentError("rbm: visible vector has wrong dimension");
}

inline void check_hidden(const Eigen::VectorXd& h, const RbmModel& m) {
    if (h.size() != m.n_hidden())
        throw InvalidArgumentError("rbm: hidden vector has wrong dimension");
}

inline double softplus(double x) {
    // log(1 + e^x), stable for |x| large.
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double logistic(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

inline double energy(const Eigen::VectorXd& v, const Eigen::VectorXd& h, const RbmModel& m) {
    detail::check_visible(v, m);
    detail::check_hidden(h, m);
    return -m.visible_bias.dot(v) - m.hidden_bias.dot(h) - v.dot(m.weights * h);
}

// F(v) = -a.v - sum_j softplus(b_j + sum_i W_ij v_i), so e^{-F(v)} equals the
// sum of e^{-E(v,h)} over all hidden states.
inline double free_energy(const Eigen::VectorXd& v, const RbmModel& m) {
    detail::check_visible(v, m);
    const Eigen::VectorXd activation = m.hidden_bias + m.weights.transpose() * v;
    double hidden_term = 0.0;
    for (int j = 0; j < activation.size(); ++j) hidden_term += detail::softplus(activation[j]);
    return -m.visible_bias.dot(v) - hidden_term;
}

// p(h_j = 1 | v) per hidden unit.
inline Eigen::VectorXd hidden_conditional(const Eigen::VectorXd& v, const RbmModel& m) {
    detail::check_visible(v, m);
    Eigen::VectorXd p = m.hidden_bias + m.weights.transpose() * v;
    for (int j = 0; j < p.size(); ++j) p[j] = detail::logistic(p[j]);
    return p;
}

// P(v_i = +1 | h). The factor 2 comes from normalizing e^{-E} over the two
// visible values +-1.
inline Eigen::VectorXd visible_conditional(const Eigen::VectorXd& h, const RbmModel& m) {
    detail::check_hidden(h, m);
    Eigen::VectorXd p = m.visible_bias + m.weights * h;
    for (int i = 0; i < p.size(); ++i) p[i] = detail::logistic(2.0 * p[i]);
    return p;
}

inline Eigen::VectorXd visible_from_index(std::uint32_t index, int n_visible) {
    Eigen::VectorXd v(n_visible);
    for (int i = 0; i < n_visible; ++i) v[i] = (index >> i) & 1u ? 1.0 : -1.0;
    return v;
}

inline std::uint32_t index_from_visible(const Eigen::VectorXd& v) {
    if (v.size() > 31) throw SizeLimitError("index_from_visible: more than 31 units");
    std::uint32_t idx = 0;
    for (int i = 0; i < v.size(); ++i)
        if (v[i] > 0.0) idx |= (1u << i);
    return idx;
}

inline Eigen::VectorXd visible_from_lattice(const SpinLattice& lat) {
    Eigen::VectorXd v(lat.site_count());
    for (int i = 0; i < lat.site_count(); ++i) v[i] = static_cast<double>(lat.spin(i));
    return v;
}

namespace detail {

inline void check_enumeration_bound(const RbmModel& m, const char* op) {
    if (m.n_visible() + m.n_hidden() > kEnumerationSiteLimit)
        throw SizeLimitError(std::string(op) + ": n_visible + n_hidden exceeds limit of " +
                             std::to_string(kEnumerationSiteLimit));
}

}  // namespace detail

// log sum_v e^{-F(v)} over all 2^{n_visible} states.
inline double exact_log_partition(const RbmModel& m) {
    detail::check_enumeration_bound(m, "exact_log_partition");
    const int n = m.n_visible();
    const std::size_t count = std::size_t{1} << n;
    std::vector<double> neg_f(count);
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t idx = 0; idx < count; ++idx) {
        neg_f[idx] = -free_energy(visible_from_index(static_cast<std::uint32_t>(idx), n), m);
        shift = std::max(shift, neg_f[idx]);
    }
    double sum = 0.0;
    for (double x : neg_f) sum += std::exp(x - shift);
    return shift + std::log(sum);
}

inline double exact_marginal(const Eigen::VectorXd& v, const RbmModel& m) {
    detail::check_enumeration_bound(m, "exact_marginal");
    return std::exp(-free_energy(v, m) - exact_log_partition(m));
}

// All 2^{n_visible} marginal probabilities, indexed by configuration index.
inline Eigen::VectorXd exact_visible_distribution(const RbmModel& m) {
    detail::check_enumeration_bound(m, "exact_visible_distribution");
    const int n = m.n_visible();
    const std::size_t count = std::size_t{1} << n;
    const double log_z = exact_log_partition(m);
    Eigen::VectorXd dist(static_cast<Eigen::Index>(count));
    for (std::size_t idx = 0; idx < count; ++idx)
        dist[static_cast<Eigen::Index>(idx)] =
            std::exp(-free_energy(visible_from_index(static_cast<std::uint32_t>(idx), n), m) -
                     log_z);
    return dist;
}

struct GibbsState {
    Eigen::VectorXd v;  // entries +-1
    Eigen::VectorXd h;  // entries {0, 1}
};

inline Eigen::VectorXd sample_hidden(const Eigen::VectorXd& v, const RbmModel& m, Rng& rng) {
    Eigen::VectorXd p = hidden_conditional(v, m);
    for (int j = 0; j < p.size(); ++j) p[j] = rng.bernoulli(p[j]) ? 1.0 : 0.0;
    return p;
}

inline Eigen::VectorXd sample_visible(const Eigen::VectorXd& h, const RbmModel& m, Rng& rng) {
    Eigen::VectorXd p = visible_conditional(h, m);
    for (int i = 0; i < p.size(); ++i) p[i] = rng.bernoulli(p[i]) ? 1.0 : -1.0;
    return p;
}

// k alternating hidden/visible updates starting from v0.
inline GibbsState gibbs_chain(const Eigen::VectorXd& v0, const RbmModel& m, int steps,
                              Rng& rng) {
    if (steps < 1) throw InvalidArgumentError("gibbs_chain: steps must be >= 1");
    detail::check_visible(v0, m);
    GibbsState state{v0, Eigen::VectorXd::Zero(m.n_hidden())};
    for (int k = 0; k < steps; ++k) {
        state.h = sample_hidden(state.v, m, rng);
        state.v = sample_visible(state.h, m, rng);
    }
    return state;
}

inline GibbsState gibbs_chain(const Eigen::VectorXd& v0, const RbmModel& m, int steps,
                              std::uint64_t seed) {
    Rng rng(seed);
    return gibbs_chain(v0, m, steps, rng);
}

// Contrastive-divergence gradient statistics. Mean-field hidden probabilities
// are used in both phases; the negative chains restart from the data batch.
struct CdGradient {
    Eigen::MatrixXd d_weights;
    Eigen::VectorXd d_visible_bias;
    Eigen::VectorXd d_hidden_bias;

    double dot(const CdGradient& o) const {
        return d_weights.cwiseProduct(o.d_weights).sum() +
               d_visible_bias.dot(o.d_visible_bias) + d_hidden_bias.dot(o.d_hidden_bias);
    }
    double norm() const { return std::sqrt(dot(*this)); }
};

inline CdGradient cd_k_gradient(std::span<const Eigen::VectorXd> batch, const RbmModel& m,
                                int cd_steps, Rng& rng) {
    if (batch.empty()) throw InvalidArgumentError("cd_k_gradient: empty batch");
    CdGradient g{Eigen::MatrixXd::Zero(m.n_visible(), m.n_hidden()),
                 Eigen::VectorXd::Zero(m.n_visible()), Eigen::VectorXd::Zero(m.n_hidden())};
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    for (const auto& v : batch) {
        const Eigen::VectorXd p_data = hidden_conditional(v, m);
        const GibbsState recon = gibbs_chain(v, m, cd_steps, rng);
        const Eigen::VectorXd p_model = hidden_conditional(recon.v, m);
        g.d_weights.noalias() += inv_batch * (v * p_data.transpose());
        g.d_weights.noalias() -= inv_batch * (recon.v * p_model.transpose());
        g.d_visible_bias += inv_batch * (v - recon.v);
        g.d_hidden_bias += inv_batch * (p_data - p_model);
    }
    return g;
}

inline RbmModel cd_k_update(std::span<const Eigen::VectorXd> batch, const RbmModel& m,
                            const TrainConfig& config, Rng& rng) {
    config.validate();
    const CdGradient g = cd_k_gradient(batch, m, config.cd_steps, rng);
    RbmModel next = m;
    next.weights += config.learning_rate * g.d_weights;
    next.visible_bias += config.learning_rate * g.d_visible_bias;
    next.hidden_bias += config.learning_rate * g.d_hidden_bias;
    return next;
}

inline RbmModel cd_k_update(std::span<const Eigen::VectorXd> batch, const RbmModel& m,
                            const TrainConfig& config) {
    Rng rng(config.seed);
    return cd_k_update(batch, m, config, rng);
}

// Exact log-likelihood gradient for enumerable models: positive phase from
// the batch, negative phase from the exact visible distribution.
inline CdGradient exact_gradient(std::span<const Eigen::VectorXd> batch, const RbmModel& m) {
    if (batch.empty()) throw InvalidArgumentError("exact_gradient: empty batch");
    detail::check_enumeration_bound(m, "exact_gradient");
    CdGradient g{Eigen::MatrixXd::Zero(m.n_visible(), m.n_hidden()),
                 Eigen::VectorXd::Zero(m.n_visible()), Eigen::VectorXd::Zero(m.n_hidden())};
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    for (const auto& v : batch) {
        const Eigen::VectorXd p = hidden_conditional(v, m);
        g.d_weights.noalias() += inv_batch * (v * p.transpose());
        g.d_visible_bias += inv_batch * v;
        g.d_hidden_bias += inv_batch * p;
    }
    const Eigen::VectorXd dist = exact_visible_distribution(m);
    for (Eigen::Index idx = 0; idx < dist.size(); ++idx) {
        const double w = dist[idx];
        if (w == 0.0) continue;
        const Eigen::VectorXd v = visible_from_index(static_cast<std::uint32_t>(idx), m.n_visible());
        const Eigen::VectorXd p = hidden_conditional(v, m);
        g.d_weights.noalias() -= w * (v * p.transpose());
        g.d_visible_bias -= w * v;
        g.d_hidden_bias -= w * p;
    }
    return g;
}

// KL(P_data || P_model) over all visible configurations. data_dist is indexed
// by configuration index; terms with P_data = 0 contribute zero.
inline double kl_exact(const Eigen::VectorXd& data_dist, const RbmModel& m) {
    if (m.n_visible() > 12 || m.n_hidden() > 12)
        throw SizeLimitError("kl_exact: model exceeds the 12-unit enumeration bound");
    const std::size_t count = std::size_t{1} << m.n_visible();
    if (static_cast<std::size_t>(data_dist.size()) != count)
        throw InvalidArgumentError("kl_exact: distribution has wrong length");
    const double log_z = exact_log_partition(m);
    double kl = 0.0;
    for (std::uint32_t idx = 0; idx < count; ++idx) {
        const double p = data_dist[idx];
        if (p <= 0.0) continue;
        const double log_model =
            -free_energy(visible_from_index(idx, m.n_visible()), m) - log_z;
        kl += p * (std::log(p) - log_model);
    }
    return kl;
}

// Mean-field reconstruction error: per-unit MSE between v and
// E[v | h = p(v)] = tanh(a + W p(v)). Deterministic, used as the training
// history metric when exact KL is out of reach.
inline double reconstruction_error(std::span<const Eigen::VectorXd> data, const RbmModel& m) {
    if (data.empty()) throw InvalidArgumentError("reconstruction_error: empty dataset");
    double total = 0.0;
    for (const auto& v : data) {
        const Eigen::VectorXd p = hidden_conditional(v, m);
        const Eigen::VectorXd mean = (m.visible_bias + m.weights * p).array().tanh();
        total += (v - mean).squaredNorm() / static_cast<double>(v.size());
    }
    return total / static_cast<double>(data.size());
}

struct TrainResult {
    RbmModel model;
    std::vector<double> history;  // one entry per epoch
    bool history_is_exact_kl = false;
};

// Shuffled mini-batch CD-k training. History records exact KL against the
// dataset's empirical distribution when the model is enumerable, otherwise
// the mean-field reconstruction error.
inline TrainResult train(std::span<const Eigen::VectorXd> dataset, const RbmModel& model0,
                         const TrainConfig& config) {
    config.validate();
    model0.validate();
    if (dataset.empty()) throw InvalidArgumentError("train: empty dataset");
    for (const auto& v : dataset) detail::check_visible(v, model0);

    TrainResult result{model0, {}, model0.n_visible() <= 12 && model0.n_hidden() <= 12};
    Eigen::VectorXd empirical;
    if (result.history_is_exact_kl) {
        empirical = Eigen::VectorXd::Zero(Eigen::Index{1} << model0.n_visible());
        const double w = 1.0 / static_cast<double>(dataset.size());
        for (const auto& v : dataset) empirical[index_from_visible(v)] += w;
    }

    Rng rng(config.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates on the sample order, seeded once for the whole run.
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);

        std::vector<Eigen::VectorXd> batch;
        batch.reserve(static_cast<std::size_t>(config.batch_size));
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            batch.clear();
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            for (std::size_t k = start; k < stop; ++k)
                batch.push_back(dataset[order[k]]);
            result.model = cd_k_update(batch, result.model, config, rng);
        }
        result.history.push_back(result.history_is_exact_kl
                                     ? kl_exact(empirical, result.model)
                                     : reconstruction_error(dataset, result.model));
    }
    return result;
}

}  // namespace spinflow
