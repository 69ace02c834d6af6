#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spinflow/errors.hpp"
#include "spinflow/ising.hpp"
#include "spinflow/rbm.hpp"
#include "spinflow/rng.hpp"

namespace spinflow {

enum class TieRule { plus_one, minus_one };

inline std::string to_string(TieRule t) { return t == TieRule::plus_one ? "plus_one" : "minus_one"; }

inline TieRule tie_rule_from_string(const std::string& s) {
    if (s == "plus_one") return TieRule::plus_one;
    if (s == "minus_one") return TieRule::minus_one;
    throw InvalidArgumentError("unknown tie rule '" + s + "'");
}

// Block-majority surjection from an L x L micro lattice onto an (L/B) x (L/B)
// macro lattice. Blocks with zero spin sum resolve to the tie rule's value.
struct BlockMap {
    int micro_side = 2;
    int block_side = 1;
    TieRule tie_rule = TieRule::plus_one;

    void validate() const {
        if (micro_side < 1 || block_side < 1)
            throw InvalidArgumentError("BlockMap: sides must be positive");
        if (micro_side % block_side != 0)
            throw InvalidArgumentError("BlockMap: block_side must divide micro_side");
    }

    int macro_side() const { return micro_side / block_side; }
    int block_count() const { return macro_side() * macro_side(); }

    // Index of the block containing micro site (r, c).
    int block_of_site(int site) const {
        const int r = site / micro_side;
        const int c = site % micro_side;
        return (r / block_side) * macro_side() + (c / block_side);
    }
};

inline SpinLattice block_spin(const SpinLattice& lat, const BlockMap& map) {
    map.validate();
    if (lat.rows() != map.micro_side || lat.cols() != map.micro_side)
        throw InvalidArgumentError("block_spin: lattice side does not match map");
    SpinLattice macro(map.macro_side(), map.macro_side(), lat.boundary());
    std::vector<int> block_sum(static_cast<std::size_t>(map.block_count()), 0);
    for (int site = 0; site < lat.site_count(); ++site)
        block_sum[static_cast<std::size_t>(map.block_of_site(site))] += lat.spin(site);
    for (int b = 0; b < map.block_count(); ++b) {
        const int sum = block_sum[static_cast<std::size_t>(b)];
        const int tie = map.tie_rule == TieRule::plus_one ? +1 : -1;
        macro.set_spin(b, sum > 0 ? +1 : sum < 0 ? -1 : tie);
    }
    return macro;
}

// nu(y) = sum over the fiber pi^{-1}(y) of mu(x). micro_dist is indexed by
// configuration index over 2^(L^2) states and must be normalized.
inline std::vector<double> pushforward_measure(std::span<const double> micro_dist,
                                               const BlockMap& map) {
    map.validate();
    const int n_micro = map.micro_side * map.micro_side;
    if (n_micro > kEnumerationSiteLimit)
        throw SizeLimitError("pushforward_measure: micro lattice too large");
    const std::size_t micro_count = std::size_t{1} << n_micro;
    if (micro_dist.size() != micro_count)
        throw InvalidArgumentError("pushforward_measure: distribution has wrong length");
    const double total = std::accumulate(micro_dist.begin(), micro_dist.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9)
        throw InvalidArgumentError("pushforward_measure: input measure is not normalized");

    std::vector<double> macro_dist(std::size_t{1} << map.block_count(), 0.0);
    for (std::size_t idx = 0; idx < micro_count; ++idx) {
        const SpinLattice micro = lattice_from_index(static_cast<std::uint32_t>(idx),
                                                     map.micro_side, map.micro_side,
                                                     Boundary::free);
        macro_dist[config_index(block_spin(micro, map))] += micro_dist[idx];
    }
    return macro_dist;
}

struct EffectiveEntry {
    double h_eff = 0.0;            // beta-absorbed: e^{-H_eff(y)} = sum_fiber e^{-beta H(x)}
    std::uint64_t multiplicity = 0;  // |pi^{-1}(y)|
    double entropy = 0.0;          // ln multiplicity (k_B = 1)
};

struct EffectiveTable {
    int macro_side = 0;
    std::vector<EffectiveEntry> entries;  // indexed by macro configuration index
    double z_eff = 0.0;                   // sum_y e^{-H_eff(y)}

    int macro_sites() const { return macro_side * macro_side; }
};

// Fiber-summed Boltzmann weights per macro state. H_eff absorbs beta so that
// sum_y e^{-H_eff(y)} reproduces the micro partition function exactly.
inline EffectiveTable effective_hamiltonian(int micro_side, Boundary boundary,
                                            const IsingParams& params, const BlockMap& map) {
    params.validate();
    map.validate();
    if (map.micro_side != micro_side)
        throw InvalidArgumentError("effective_hamiltonian: lattice side does not match map");
    const int n_micro = micro_side * micro_side;
    if (n_micro > kEnumerationSiteLimit)
        throw SizeLimitError("effective_hamiltonian: micro lattice exceeds enumeration limit");

    const LatticeBonds bonds(micro_side, micro_side, boundary);
    const double beta = params.inverse_temperature;
    const std::size_t micro_count = std::size_t{1} << n_micro;
    const std::size_t macro_count = std::size_t{1} << map.block_count();

    std::vector<double> fiber_weight(macro_count, 0.0);
    std::vector<std::uint64_t> fiber_size(macro_count, 0);
    std::vector<int> s(static_cast<std::size_t>(n_micro));
    std::vector<int> block_sum(static_cast<std::size_t>(map.block_count()));
    const int tie = map.tie_rule == TieRule::plus_one ? +1 : -1;

    for (std::size_t idx = 0; idx < micro_count; ++idx) {
        for (int i = 0; i < n_micro; ++i) s[static_cast<std::size_t>(i)] = (idx >> i) & 1u ? +1 : -1;
        int bond_sum = 0;
        for (auto [a, b] : bonds.bonds())
            bond_sum += s[static_cast<std::size_t>(a)] * s[static_cast<std::size_t>(b)];
        const double h = -params.coupling * bond_sum;

        std::fill(block_sum.begin(), block_sum.end(), 0);
        for (int i = 0; i < n_micro; ++i)
            block_sum[static_cast<std::size_t>(map.block_of_site(i))] += s[static_cast<std::size_t>(i)];
        std::uint32_t macro_idx = 0;
        for (int b = 0; b < map.block_count(); ++b) {
            const int sum = block_sum[static_cast<std::size_t>(b)];
            const int macro_spin = sum > 0 ? +1 : sum < 0 ? -1 : tie;
            if (macro_spin > 0) macro_idx |= (1u << b);
        }
        fiber_weight[macro_idx] += std::exp(-beta * h);
        fiber_size[macro_idx] += 1;
    }

    EffectiveTable table;
    table.macro_side = map.macro_side();
    table.entries.resize(macro_count);
    for (std::size_t y = 0; y < macro_count; ++y) {
        auto& entry = table.entries[y];
        entry.multiplicity = fiber_size[y];
        entry.entropy = fiber_size[y] > 0 ? std::log(static_cast<double>(fiber_size[y])) : 0.0;
        entry.h_eff = -std::log(fiber_weight[y]);  // +inf on empty fibers
        table.z_eff += fiber_weight[y];
    }
    return table;
}

// m = |pi^{-1}(y)| by enumeration, S = ln m.
inline std::pair<std::uint64_t, double> multiplicity_entropy(const BlockMap& map,
                                                             const SpinLattice& macro) {
    map.validate();
    if (macro.rows() != map.macro_side() || macro.cols() != map.macro_side())
        throw InvalidArgumentError("multiplicity_entropy: macro state does not match map");
    const int n_micro = map.micro_side * map.micro_side;
    if (n_micro > kEnumerationSiteLimit)
        throw SizeLimitError("multiplicity_entropy: micro lattice exceeds enumeration limit");

    const std::uint32_t target = config_index(macro);
    std::uint64_t count = 0;
    const std::size_t micro_count = std::size_t{1} << n_micro;
    for (std::size_t idx = 0; idx < micro_count; ++idx) {
        const SpinLattice micro = lattice_from_index(static_cast<std::uint32_t>(idx),
                                                     map.micro_side, map.micro_side,
                                                     macro.boundary());
        if (config_index(block_spin(micro, map)) == target) ++count;
    }
    return {count, count > 0 ? std::log(static_cast<double>(count)) : 0.0};
}

namespace detail {

inline void check_model_matches_map(const RbmModel& model, const BlockMap& map) {
    map.validate();
    if (model.n_visible() != map.micro_side * map.micro_side)
        throw InvalidArgumentError("model visible layer does not match the micro lattice");
}

// Dominant block of a hidden unit: argmax over blocks of the |W| mass inside,
// ties resolved to the lowest block index.
inline int dominant_block(const RbmModel& model, const BlockMap& map, int unit) {
    std::vector<double> mass(static_cast<std::size_t>(map.block_count()), 0.0);
    for (int i = 0; i < model.n_visible(); ++i)
        mass[static_cast<std::size_t>(map.block_of_site(i))] += std::abs(model.weights(i, unit));
    int best = 0;
    for (int b = 1; b < map.block_count(); ++b)
        if (mass[static_cast<std::size_t>(b)] > mass[static_cast<std::size_t>(best)]) best = b;
    return best;
}

}  // namespace detail

// Mean over hidden units of the |W| mass fraction inside the unit's dominant
// block. 1 for perfectly block-local weights, 1/block_count for uniform ones.
inline double rbm_weight_locality(const RbmModel& model, const BlockMap& map) {
    detail::check_model_matches_map(model, map);
    double score = 0.0;
    for (int j = 0; j < model.n_hidden(); ++j) {
        const int dom = detail::dominant_block(model, map, j);
        double total = 0.0, inside = 0.0;
        for (int i = 0; i < model.n_visible(); ++i) {
            const double w = std::abs(model.weights(i, j));
            total += w;
            if (map.block_of_site(i) == dom) inside += w;
        }
        score += total > 0.0 ? inside / total : 1.0 / map.block_count();
    }
    return score / model.n_hidden();
}

// Fraction of (sample, hidden unit) pairs where the unit's activation sign,
// mapped through the sign of its net dominant-block weight, matches the block
// majority spin. Any exact tie counts as disagreement.
inline double hidden_block_agreement(const RbmModel& model, const BlockMap& map,
                                     std::span<const SpinLattice> samples) {
    detail::check_model_matches_map(model, map);
    if (samples.empty()) throw InvalidArgumentError("hidden_block_agreement: empty ensemble");

    std::vector<int> dom(static_cast<std::size_t>(model.n_hidden()));
    std::vector<double> net(static_cast<std::size_t>(model.n_hidden()), 0.0);
    for (int j = 0; j < model.n_hidden(); ++j) {
        dom[static_cast<std::size_t>(j)] = detail::dominant_block(model, map, j);
        for (int i = 0; i < model.n_visible(); ++i)
            if (map.block_of_site(i) == dom[static_cast<std::size_t>(j)])
                net[static_cast<std::size_t>(j)] += model.weights(i, j);
    }

    std::uint64_t agreements = 0;
    for (const auto& lat : samples) {
        if (lat.site_count() != model.n_visible())
            throw InvalidArgumentError("hidden_block_agreement: sample size mismatch");
        std::vector<int> block_sum(static_cast<std::size_t>(map.block_count()), 0);
        for (int i = 0; i < lat.site_count(); ++i)
            block_sum[static_cast<std::size_t>(map.block_of_site(i))] += lat.spin(i);
        const Eigen::VectorXd p = hidden_conditional(visible_from_lattice(lat), model);
        for (int j = 0; j < model.n_hidden(); ++j) {
            const double act = p[j] - 0.5;
            const double w = net[static_cast<std::size_t>(j)];
            const int majority = block_sum[static_cast<std::size_t>(dom[static_cast<std::size_t>(j)])];
            if (act == 0.0 || w == 0.0 || majority == 0) continue;  // ties disagree
            const int vote = (act > 0.0 ? 1 : -1) * (w > 0.0 ? 1 : -1);
            if (vote == (majority > 0 ? 1 : -1)) ++agreements;
        }
    }
    return static_cast<double>(agreements) /
           (static_cast<double>(samples.size()) * model.n_hidden());
}

// Null distributions for the locality/agreement statistics: each shuffle
// applies one random relabeling of the visible sites to all hidden units,
// destroying geometry while preserving per-unit weight profiles.
inline RbmModel permute_visible_sites(const RbmModel& model, Rng& rng) {
    std::vector<int> perm(static_cast<std::size_t>(model.n_visible()));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[rng.below(i)]);
    RbmModel shuffled = model;
    for (int i = 0; i < model.n_visible(); ++i) {
        shuffled.weights.row(i) = model.weights.row(perm[static_cast<std::size_t>(i)]);
        shuffled.visible_bias[i] = model.visible_bias[perm[static_cast<std::size_t>(i)]];
    }
    return shuffled;
}

inline std::vector<double> locality_permutation_null(const RbmModel& model, const BlockMap& map,
                                                     int shuffles, Rng& rng) {
    std::vector<double> null_scores;
    null_scores.reserve(static_cast<std::size_t>(shuffles));
    for (int k = 0; k < shuffles; ++k)
        null_scores.push_back(rbm_weight_locality(permute_visible_sites(model, rng), map));
    return null_scores;
}

inline std::vector<double> agreement_permutation_null(const RbmModel& model, const BlockMap& map,
                                                      std::span<const SpinLattice> samples,
                                                      int shuffles, Rng& rng) {
    std::vector<double> null_rates;
    null_rates.reserve(static_cast<std::size_t>(shuffles));
    for (int k = 0; k < shuffles; ++k)
        null_rates.push_back(
            hidden_block_agreement(permute_visible_sites(model, rng), map, samples));
    return null_rates;
}

inline double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw InvalidArgumentError("quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace spinflow
