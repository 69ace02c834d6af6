#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "spinflow/errors.hpp"
#include "spinflow/linalg.hpp"
#include "spinflow/rng.hpp"

namespace spinflow {

inline constexpr double kPsdTolerance = 1e-10;       // min eigenvalue >= -kPsdTolerance
inline constexpr double kSymmetryTolerance = 1e-12;  // max |Sigma - Sigma^T| entry
inline constexpr double kRankRelTolerance = 1e-8;    // eigenvalues > tol * lambda_max count

// Linear latent-to-data transform x = W z with z ~ N(0, I_m).
struct Generator {
    Eigen::MatrixXd w;  // n x m

    int data_dim() const { return static_cast<int>(w.rows()); }
    int latent_dim() const { return static_cast<int>(w.cols()); }

    void validate() const {
        if (w.rows() < 1 || w.cols() < 1)
            throw InvalidArgumentError("Generator: dimensions must be positive");
        if (!w.allFinite()) throw InvalidArgumentError("Generator: entries must be finite");
    }
};

// Sigma = W W^T together with the rank bound min(n, m) inherited from its
// construction.
struct CovarianceSample {
    Eigen::MatrixXd sigma;
    int rank_bound = 0;

    int dim() const { return static_cast<int>(sigma.rows()); }
};

inline Eigen::VectorXd push_latent(const Generator& gen, const Eigen::VectorXd& z) {
    gen.validate();
    if (z.size() != gen.latent_dim())
        throw InvalidArgumentError("push_latent: latent vector has wrong dimension");
    return gen.w * z;
}

inline CovarianceSample covariance(const Generator& gen) {
    gen.validate();
    return {gen.w * gen.w.transpose(), std::min(gen.data_dim(), gen.latent_dim())};
}

inline Generator random_generator(int n, int m, Rng& rng) {
    Generator gen{Eigen::MatrixXd(n, m)};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gen.w(i, j) = rng.normal();
    return gen;
}

// count draws of Sigma = W W^T with W entries i.i.d. standard Gaussian, so
// Sigma ~ W_n(m, I).
inline std::vector<CovarianceSample> sample_wishart(int n, int m, int count,
                                                    std::uint64_t seed) {
    if (n < 1 || m < 1) throw InvalidArgumentError("sample_wishart: dimensions must be positive");
    if (count < 1) throw InvalidArgumentError("sample_wishart: count must be positive");
    Rng rng(seed);
    std::vector<CovarianceSample> samples;
    samples.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) samples.push_back(covariance(random_generator(n, m, rng)));
    return samples;
}

struct ConeDiagnostics {
    bool member = false;
    double min_eigenvalue = 0.0;
    int rank = 0;
};

inline int eigenvalue_rank(const Eigen::VectorXd& eigenvalues) {
    const double max_eig = eigenvalues.maxCoeff();
    if (max_eig <= 0.0) return 0;
    int rank = 0;
    for (int i = 0; i < eigenvalues.size(); ++i)
        if (eigenvalues[i] > kRankRelTolerance * max_eig) ++rank;
    return rank;
}

// Membership in the Wishart cone for parameters (n, m): positive
// semidefinite within tolerance and rank at most min(n, m).
inline ConeDiagnostics cone_membership(const Eigen::MatrixXd& sigma, int n, int m) {
    if (sigma.rows() != sigma.cols())
        throw InvalidArgumentError("cone_membership: matrix is not square");
    if (max_asymmetry(sigma) > kSymmetryTolerance)
        throw InvalidArgumentError("cone_membership: matrix is not symmetric");
    const Eigen::VectorXd eigs = symmetric_eigenvalues(symmetrized(sigma));
    ConeDiagnostics diag;
    diag.min_eigenvalue = eigs.minCoeff();
    diag.rank = eigenvalue_rank(eigs);
    diag.member = diag.min_eigenvalue >= -kPsdTolerance && diag.rank <= std::min(n, m);
    return diag;
}

// lambda * Sigma for lambda > 0; the witness generator is sqrt(lambda) * W.
inline CovarianceSample cone_scale(const CovarianceSample& s, double lambda) {
    if (!(lambda > 0.0)) throw InvalidArgumentError("cone_scale: lambda must be positive");
    return {lambda * s.sigma, s.rank_bound};
}

inline Generator cone_scale_witness(const Generator& gen, double lambda) {
    if (!(lambda > 0.0)) throw InvalidArgumentError("cone_scale_witness: lambda must be positive");
    return {std::sqrt(lambda) * gen.w};
}

// Sigma_1 + Sigma_2; the stacked witness [W_1 W_2] gives rank bound
// min(n, m_1 + m_2).
inline CovarianceSample cone_add(const CovarianceSample& a, const CovarianceSample& b) {
    if (a.dim() != b.dim()) throw InvalidArgumentError("cone_add: dimension mismatch");
    return {a.sigma + b.sigma, std::min(a.dim(), a.rank_bound + b.rank_bound)};
}

struct TraceDualityReport {
    double min_inner_product = 0.0;
    bool pass = false;
};

// Finite-dimensional self-duality proxy: tr(Sigma_1 Sigma_2) >= 0 for PSD
// pairs under the trace inner product.
inline TraceDualityReport trace_duality_check(
    std::span<const std::pair<CovarianceSample, CovarianceSample>> pairs) {
    if (pairs.empty()) throw InvalidArgumentError("trace_duality_check: no pairs");
    TraceDualityReport report;
    report.min_inner_product = std::numeric_limits<double>::infinity();
    for (const auto& [a, b] : pairs) {
        if (a.dim() != b.dim()) throw InvalidArgumentError("trace_duality_check: dimension mismatch");
        const double inner = a.sigma.cwiseProduct(b.sigma).sum();  // tr(A B) for symmetric A, B
        report.min_inner_product = std::min(report.min_inner_product, inner);
    }
    report.pass = report.min_inner_product >= -kPsdTolerance;
    return report;
}

}  // namespace spinflow
