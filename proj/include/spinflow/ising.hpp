#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spinflow/errors.hpp"
#include "spinflow/rng.hpp"

namespace spinflow {

enum class Boundary { free, periodic };

inline std::string to_string(Boundary b) { return b == Boundary::free ? "free" : "periodic"; }

inline Boundary boundary_from_string(const std::string& s) {
    if (s == "free") return Boundary::free;
    if (s == "periodic") return Boundary::periodic;
    throw InvalidArgumentError("unknown boundary mode '" + s + "'");
}

struct IsingParams {
    double coupling = 1.0;             // J > 0
    double inverse_temperature = 1.0;  // beta > 0

    void validate() const {
        if (!(coupling > 0.0)) throw InvalidArgumentError("IsingParams: J must be positive");
        if (!(inverse_temperature > 0.0))
            throw InvalidArgumentError("IsingParams: beta must be positive");
    }
};

// Row-major grid of +-1 spins. Square L x L lattices are the primary case;
// general rows x cols is supported so small chains (1 x 2, 1 x 3, ...) can be
// enumerated exactly in tests.
class SpinLattice {
public:
    SpinLattice(int rows, int cols, Boundary boundary, int fill = +1)
        : rows_(rows), cols_(cols), boundary_(boundary),
          spins_(static_cast<std::size_t>(check_dims(rows, cols)), check_spin(fill)) {}

    static SpinLattice square(int side, Boundary boundary, int fill = +1) {
        return SpinLattice(side, side, boundary, fill);
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int site_count() const { return rows_ * cols_; }
    Boundary boundary() const { return boundary_; }

    // Side length of a square lattice.
    int side() const {
        if (rows_ != cols_) throw InvalidArgumentError("SpinLattice: lattice is not square");
        return rows_;
    }

    int spin(int site) const { return spins_[static_cast<std::size_t>(site)]; }
    int spin(int r, int c) const { return spins_[static_cast<std::size_t>(r * cols_ + c)]; }
    void set_spin(int site, int value) {
        spins_[static_cast<std::size_t>(site)] = static_cast<std::int8_t>(check_spin(value));
    }
    void flip(int site) { spins_[static_cast<std::size_t>(site)] *= -1; }

    const std::vector<std::int8_t>& spins() const { return spins_; }

    int magnetization() const {
        int m = 0;
        for (auto s : spins_) m += s;
        return m;
    }

    bool operator==(const SpinLattice& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && boundary_ == o.boundary_ &&
               spins_ == o.spins_;
    }

private:
    static int check_dims(int rows, int cols) {
        if (rows < 1 || cols < 1)
            throw InvalidArgumentError("SpinLattice: dimensions must be positive");
        return rows * cols;
    }
    static int check_spin(int v) {
        if (v != -1 && v != 1) throw InvalidArgumentError("SpinLattice: spins must be -1 or +1");
        return v;
    }

    int rows_, cols_;
    Boundary boundary_;
    std::vector<std::int8_t> spins_;
};

// Nearest-neighbor bond structure. Each unordered pair of sites appears at
// most once: on small periodic lattices (L = 2) the wrap-around bond joins
// the same pair as the interior bond and is dropped, and self-bonds (L = 1
// periodic) are excluded.
class LatticeBonds {
public:
    LatticeBonds(int rows, int cols, Boundary boundary) : sites_(rows * cols) {
        auto add = [&](int a, int b) {
            if (a == b) return;
            if (a > b) std::swap(a, b);
            bonds_.emplace_back(a, b);
        };
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                const int site = r * cols + c;
                if (c + 1 < cols) add(site, r * cols + (c + 1));
                else if (boundary == Boundary::periodic) add(site, r * cols);
                if (r + 1 < rows) add(site, (r + 1) * cols + c);
                else if (boundary == Boundary::periodic) add(site, c);
            }
        }
        std::sort(bonds_.begin(), bonds_.end());
        bonds_.erase(std::unique(bonds_.begin(), bonds_.end()), bonds_.end());

        neighbors_.resize(static_cast<std::size_t>(sites_));
        for (auto [a, b] : bonds_) {
            neighbors_[static_cast<std::size_t>(a)].push_back(b);
            neighbors_[static_cast<std::size_t>(b)].push_back(a);
        }
    }

    explicit LatticeBonds(const SpinLattice& lat)
        : LatticeBonds(lat.rows(), lat.cols(), lat.boundary()) {}

    const std::vector<std::pair<int, int>>& bonds() const { return bonds_; }
    const std::vector<int>& neighbors(int site) const {
        return neighbors_[static_cast<std::size_t>(site)];
    }
    int site_count() const { return sites_; }

private:
    int sites_;
    std::vector<std::pair<int, int>> bonds_;
    std::vector<std::vector<int>> neighbors_;
};

// H(s) = -J * sum over bonds of s_i s_j.
inline double hamiltonian(const SpinLattice& lat, const IsingParams& params,
                          const LatticeBonds& bonds) {
    params.validate();
    int bond_sum = 0;
    for (auto [a, b] : bonds.bonds()) bond_sum += lat.spin(a) * lat.spin(b);
    return -params.coupling * bond_sum;
}

inline double hamiltonian(const SpinLattice& lat, const IsingParams& params) {
    return hamiltonian(lat, params, LatticeBonds(lat));
}

// Canonical configuration <-> integer encoding: bit i of the index equals
// (s_i + 1) / 2 in row-major site order.
inline std::uint32_t config_index(const SpinLattice& lat) {
    if (lat.site_count() > 31) throw SizeLimitError("config_index: more than 31 sites");
    std::uint32_t idx = 0;
    for (int i = 0; i < lat.site_count(); ++i)
        if (lat.spin(i) > 0) idx |= (1u << i);
    return idx;
}

inline SpinLattice lattice_from_index(std::uint32_t index, int rows, int cols,
                                      Boundary boundary) {
    SpinLattice lat(rows, cols, boundary);
    for (int i = 0; i < lat.site_count(); ++i)
        lat.set_spin(i, (index >> i) & 1u ? +1 : -1);
    return lat;
}

// Exact Boltzmann table over all 2^(rows*cols) configurations.
struct ExactTable {
    int rows = 0, cols = 0;
    Boundary boundary = Boundary::free;
    double log_z = 0.0;
    double partition_z = 0.0;
    std::vector<double> energy;       // indexed by configuration index
    std::vector<double> probability;  // exp(-beta * E) / Z

    int site_count() const { return rows * cols; }
};

inline constexpr int kEnumerationSiteLimit = 20;

inline ExactTable exact_enumerate(int rows, int cols, Boundary boundary,
                                  const IsingParams& params) {
    params.validate();
    const int n = rows * cols;
    if (n < 1) throw InvalidArgumentError("exact_enumerate: empty lattice");
    if (n > kEnumerationSiteLimit)
        throw SizeLimitError("exact_enumerate: " + std::to_string(n) + " sites exceeds limit of " +
                             std::to_string(kEnumerationSiteLimit));

    const LatticeBonds bonds(rows, cols, boundary);
    const std::size_t count = std::size_t{1} << n;

    ExactTable table;
    table.rows = rows;
    table.cols = cols;
    table.boundary = boundary;
    table.energy.resize(count);

    std::vector<int> s(static_cast<std::size_t>(n));
    for (std::size_t idx = 0; idx < count; ++idx) {
        for (int i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = (idx >> i) & 1u ? +1 : -1;
        int bond_sum = 0;
        for (auto [a, b] : bonds.bonds())
            bond_sum += s[static_cast<std::size_t>(a)] * s[static_cast<std::size_t>(b)];
        table.energy[idx] = -params.coupling * bond_sum;
    }

    // log-sum-exp with max shift keeps the weights finite for any beta.
    const double beta = params.inverse_temperature;
    double max_exponent = -std::numeric_limits<double>::infinity();
    for (double e : table.energy) max_exponent = std::max(max_exponent, -beta * e);
    double shifted_sum = 0.0;
    for (double e : table.energy) shifted_sum += std::exp(-beta * e - max_exponent);
    table.log_z = max_exponent + std::log(shifted_sum);
    table.partition_z = std::exp(table.log_z);

    table.probability.resize(count);
    for (std::size_t idx = 0; idx < count; ++idx)
        table.probability[idx] = std::exp(-beta * table.energy[idx] - table.log_z);
    return table;
}

inline ExactTable exact_enumerate(int side, Boundary boundary, const IsingParams& params) {
    return exact_enumerate(side, side, boundary, params);
}

// Energy change for flipping one spin, respecting bond deduplication.
inline double flip_delta_energy(const SpinLattice& lat, int site, const IsingParams& params,
                                const LatticeBonds& bonds) {
    int nbr_sum = 0;
    for (int j : bonds.neighbors(site)) nbr_sum += lat.spin(j);
    return 2.0 * params.coupling * lat.spin(site) * nbr_sum;
}

// One Metropolis sweep: rows*cols single-flip proposals in raster order, each
// accepted iff u < min(1, exp(-beta dE)). Exactly one uniform is consumed per
// proposal so the stream position is deterministic.
inline void metropolis_sweep_inplace(SpinLattice& lat, const IsingParams& params,
                                     const LatticeBonds& bonds, Rng& rng) {
    const double beta = params.inverse_temperature;
    for (int site = 0; site < lat.site_count(); ++site) {
        const double d_e = flip_delta_energy(lat, site, params, bonds);
        const double accept = d_e <= 0.0 ? 1.0 : std::exp(-beta * d_e);
        if (rng.uniform01() < accept) lat.flip(site);
    }
}

inline SpinLattice metropolis_sweep(SpinLattice lat, const IsingParams& params, Rng& rng) {
    params.validate();
    const LatticeBonds bonds(lat);
    metropolis_sweep_inplace(lat, params, bonds, rng);
    return lat;
}

inline SpinLattice metropolis_sweep(const SpinLattice& lat, const IsingParams& params,
                                    std::uint64_t seed) {
    Rng rng(seed);
    return metropolis_sweep(lat, params, rng);
}

inline SpinLattice random_lattice(int rows, int cols, Boundary boundary, Rng& rng) {
    SpinLattice lat(rows, cols, boundary);
    for (int i = 0; i < lat.site_count(); ++i) lat.set_spin(i, rng.spin());
    return lat;
}

// Metropolis ensemble: burn_in sweeps from a uniformly random lattice, then
// one sample every sweeps_between sweeps.
inline std::vector<SpinLattice> sample_ensemble(int rows, int cols, Boundary boundary,
                                                const IsingParams& params, int n_samples,
                                                int sweeps_between, int burn_in,
                                                std::uint64_t seed) {
    params.validate();
    if (n_samples < 0) throw InvalidArgumentError("sample_ensemble: n_samples must be >= 0");
    if (sweeps_between < 1)
        throw InvalidArgumentError("sample_ensemble: sweeps_between must be positive");
    if (burn_in < 0) throw InvalidArgumentError("sample_ensemble: burn_in must be >= 0");

    Rng rng(seed);
    const LatticeBonds bonds(rows, cols, boundary);
    SpinLattice lat = random_lattice(rows, cols, boundary, rng);

    std::vector<SpinLattice> samples;
    samples.reserve(static_cast<std::size_t>(n_samples));
    for (int sweep = 0; sweep < burn_in; ++sweep)
        metropolis_sweep_inplace(lat, params, bonds, rng);
    for (int k = 0; k < n_samples; ++k) {
        for (int sweep = 0; sweep < sweeps_between; ++sweep)
            metropolis_sweep_inplace(lat, params, bonds, rng);
        samples.push_back(lat);
    }
    return samples;
}

inline std::vector<SpinLattice> sample_ensemble(int side, Boundary boundary,
                                                const IsingParams& params, int n_samples,
                                                int sweeps_between, int burn_in,
                                                std::uint64_t seed) {
    return sample_ensemble(side, side, boundary, params, n_samples, sweeps_between, burn_in,
                           seed);
}

struct EnsembleStats {
    double mean_energy_per_site = 0.0;
    double mean_abs_magnetization = 0.0;
};

inline EnsembleStats ensemble_stats(std::span<const SpinLattice> samples,
                                    const IsingParams& params) {
    if (samples.empty()) throw InvalidArgumentError("ensemble_stats: empty ensemble");
    const LatticeBonds bonds(samples.front());
    const double n_sites = samples.front().site_count();
    EnsembleStats stats;
    for (const auto& lat : samples) {
        stats.mean_energy_per_site += hamiltonian(lat, params, bonds) / n_sites;
        stats.mean_abs_magnetization += std::abs(static_cast<double>(lat.magnetization())) / n_sites;
    }
    stats.mean_energy_per_site /= static_cast<double>(samples.size());
    stats.mean_abs_magnetization /= static_cast<double>(samples.size());
    return stats;
}

// Empirical distribution over configuration indices; companion to ExactTable
// for total-variation comparisons against the exact law.
inline std::vector<double> empirical_distribution(std::span<const SpinLattice> samples) {
    if (samples.empty()) throw InvalidArgumentError("empirical_distribution: empty ensemble");
    const int n = samples.front().site_count();
    if (n > kEnumerationSiteLimit)
        throw SizeLimitError("empirical_distribution: lattice too large to tabulate");
    std::vector<double> dist(std::size_t{1} << n, 0.0);
    const double w = 1.0 / static_cast<double>(samples.size());
    for (const auto& lat : samples) dist[config_index(lat)] += w;
    return dist;
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw InvalidArgumentError("total_variation: size mismatch");
    double tv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
    return 0.5 * tv;
}

}  // namespace spinflow
