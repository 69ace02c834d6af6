#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "spinflow/errors.hpp"
#include "spinflow/linalg.hpp"

namespace spinflow {

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Densities

struct GaussianDensity {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    GaussianDensity(Eigen::VectorXd mean_in, Eigen::MatrixXd cov_in)
        : mean(std::move(mean_in)), cov(std::move(cov_in)) {
        if (cov.rows() != cov.cols() || cov.rows() != mean.size())
            throw InvalidArgumentError("GaussianDensity: dimension mismatch");
        require_spd(cov, "GaussianDensity");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrized(cov));
        cov_inverse_ = solver.operatorInverseSqrt() * solver.operatorInverseSqrt();
        double log_det = 0.0;
        for (int i = 0; i < solver.eigenvalues().size(); ++i)
            log_det += std::log(solver.eigenvalues()[i]);
        log_norm_ = -0.5 * (static_cast<double>(mean.size()) * std::log(2.0 * kPi) + log_det);
    }

    static GaussianDensity standard(int dim) {
        return GaussianDensity(Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Identity(dim, dim));
    }

    int dim() const { return static_cast<int>(mean.size()); }

    double log_density(const Eigen::VectorXd& x) const {
        if (x.size() != mean.size())
            throw InvalidArgumentError("GaussianDensity: point has wrong dimension");
        const Eigen::VectorXd d = x - mean;
        return log_norm_ - 0.5 * d.dot(cov_inverse_ * d);
    }

    double operator()(const Eigen::VectorXd& x) const { return std::exp(log_density(x)); }

private:
    Eigen::MatrixXd cov_inverse_;
    double log_norm_ = 0.0;
};

struct GridAxis {
    double min = 0.0;
    double step = 1.0;
    int count = 2;  // number of nodes

    double max() const { return min + step * (count - 1); }
    double node(int i) const { return min + step * i; }

    void validate() const {
        if (count < 2 || !(step > 0.0)) throw InvalidArgumentError("GridAxis: invalid axis");
    }
};

// Nonnegative density values on a uniform grid, dimension 1 or 2. Values
// between nodes are obtained by multilinear interpolation; the trapezoidal
// integral is required to be 1 within 1e-6.
struct DensityGrid {
    int dim = 1;
    std::array<GridAxis, 2> axes{};
    std::vector<double> values;  // row-major: [ix] or [ix * axes[1].count + iy]

    static DensityGrid from_function(const GridAxis& axis,
                                     const std::function<double(double)>& f,
                                     bool normalize_mass = true) {
        DensityGrid g;
        g.dim = 1;
        g.axes[0] = axis;
        g.values.resize(static_cast<std::size_t>(axis.count));
        for (int i = 0; i < axis.count; ++i) g.values[static_cast<std::size_t>(i)] = f(axis.node(i));
        if (normalize_mass) g.normalize();
        g.validate();
        return g;
    }

    static DensityGrid from_function(const GridAxis& ax, const GridAxis& ay,
                                     const std::function<double(double, double)>& f,
                                     bool normalize_mass = true) {
        DensityGrid g;
        g.dim = 2;
        g.axes[0] = ax;
        g.axes[1] = ay;
        g.values.resize(static_cast<std::size_t>(ax.count) * static_cast<std::size_t>(ay.count));
        for (int ix = 0; ix < ax.count; ++ix)
            for (int iy = 0; iy < ay.count; ++iy)
                g.values[static_cast<std::size_t>(ix * ay.count + iy)] = f(ax.node(ix), ay.node(iy));
        if (normalize_mass) g.normalize();
        g.validate();
        return g;
    }

    double integral() const {
        if (dim == 1) {
            double sum = 0.0;
            for (int i = 0; i + 1 < axes[0].count; ++i)
                sum += 0.5 * (values[static_cast<std::size_t>(i)] + values[static_cast<std::size_t>(i + 1)]);
            return sum * axes[0].step;
        }
        double sum = 0.0;
        const int ny = axes[1].count;
        for (int ix = 0; ix + 1 < axes[0].count; ++ix)
            for (int iy = 0; iy + 1 < ny; ++iy) {
                const double corner_sum = values[static_cast<std::size_t>(ix * ny + iy)] +
                                          values[static_cast<std::size_t>(ix * ny + iy + 1)] +
                                          values[static_cast<std::size_t>((ix + 1) * ny + iy)] +
                                          values[static_cast<std::size_t>((ix + 1) * ny + iy + 1)];
                sum += 0.25 * corner_sum;
            }
        return sum * axes[0].step * axes[1].step;
    }

    void normalize() {
        const double mass = integral();
        if (!(mass > 0.0)) throw NumericalError("DensityGrid: cannot normalize zero mass");
        for (double& v : values) v /= mass;
    }

    void validate() const {
        if (dim != 1 && dim != 2) throw InvalidArgumentError("DensityGrid: dim must be 1 or 2");
        for (int d = 0; d < dim; ++d) axes[static_cast<std::size_t>(d)].validate();
        for (double v : values)
            if (!(v >= 0.0)) throw InvalidArgumentError("DensityGrid: negative density value");
        if (std::abs(integral() - 1.0) > 1e-6)
            throw InvalidArgumentError("DensityGrid: trapezoidal integral differs from 1");
    }

    bool in_support(const Eigen::VectorXd& x) const {
        if (x.size() != dim) return false;
        for (int d = 0; d < dim; ++d) {
            const auto& ax = axes[static_cast<std::size_t>(d)];
            if (x[d] < ax.min || x[d] > ax.max()) return false;
        }
        return true;
    }

    double value(const Eigen::VectorXd& x) const {
        if (x.size() != dim) throw InvalidArgumentError("DensityGrid: point has wrong dimension");
        if (!in_support(x)) throw InvalidArgumentError("DensityGrid: point outside grid support");
        if (dim == 1) {
            const auto [i, t] = locate(axes[0], x[0]);
            return values[static_cast<std::size_t>(i)] * (1.0 - t) +
                   values[static_cast<std::size_t>(i + 1)] * t;
        }
        const auto [ix, tx] = locate(axes[0], x[0]);
        const auto [iy, ty] = locate(axes[1], x[1]);
        const int ny = axes[1].count;
        const double v00 = values[static_cast<std::size_t>(ix * ny + iy)];
        const double v01 = values[static_cast<std::size_t>(ix * ny + iy + 1)];
        const double v10 = values[static_cast<std::size_t>((ix + 1) * ny + iy)];
        const double v11 = values[static_cast<std::size_t>((ix + 1) * ny + iy + 1)];
        return v00 * (1 - tx) * (1 - ty) + v01 * (1 - tx) * ty + v10 * tx * (1 - ty) +
               v11 * tx * ty;
    }

    // Cell index and fractional offset for an in-range coordinate.
    static std::pair<int, double> locate(const GridAxis& ax, double x) {
        int i = static_cast<int>(std::floor((x - ax.min) / ax.step));
        i = std::clamp(i, 0, ax.count - 2);
        const double t = std::clamp((x - ax.min) / ax.step - i, 0.0, 1.0);
        return {i, t};
    }
};

using Density = std::variant<GaussianDensity, DensityGrid>;

inline double density_value(const Density& density, const Eigen::VectorXd& x) {
    return std::visit(
        [&](const auto& d) -> double {
            if constexpr (std::is_same_v<std::decay_t<decltype(d)>, GaussianDensity>)
                return d(x);
            else
                return d.value(x);
        },
        density);
}

inline int density_dim(const Density& density) {
    return std::visit(
        [](const auto& d) -> int {
            if constexpr (std::is_same_v<std::decay_t<decltype(d)>, GaussianDensity>)
                return d.dim();
            else
                return d.dim;
        },
        density);
}

// ---------------------------------------------------------------------------
// Transport maps

struct LinearMap {
    Eigen::MatrixXd a;
    Eigen::VectorXd offset;

    LinearMap(Eigen::MatrixXd a_in, Eigen::VectorXd offset_in)
        : a(std::move(a_in)), offset(std::move(offset_in)) {
        if (a.rows() != a.cols() || a.rows() != offset.size())
            throw InvalidArgumentError("LinearMap: dimension mismatch");
    }
    explicit LinearMap(const Eigen::MatrixXd& a_in)
        : LinearMap(a_in, Eigen::VectorXd::Zero(a_in.rows())) {}
};

// Vector field sampled on a uniform grid. Values between nodes are
// interpolated; the Jacobian at a point is the central difference of node
// values around the nearest node, so the finite-difference step equals the
// grid spacing.
struct GridMap {
    int dim = 1;
    std::array<GridAxis, 2> axes{};
    std::vector<double> values;  // node-major, then component

    static GridMap from_function(const GridAxis& axis,
                                 const std::function<double(double)>& f) {
        GridMap m;
        m.dim = 1;
        m.axes[0] = axis;
        m.values.resize(static_cast<std::size_t>(axis.count));
        for (int i = 0; i < axis.count; ++i) m.values[static_cast<std::size_t>(i)] = f(axis.node(i));
        return m;
    }

    double fd_step() const { return axes[0].step; }
};

struct MapSpec {
    std::variant<LinearMap, GridMap> map;
    // For linear maps: when > 0, the Jacobian is computed by central
    // differences with this step instead of returning A directly.
    double numeric_jacobian_step = 0.0;

    int dim() const {
        if (const auto* lin = std::get_if<LinearMap>(&map)) return static_cast<int>(lin->a.rows());
        return std::get<GridMap>(map).dim;
    }

    Eigen::VectorXd value(const Eigen::VectorXd& x) const {
        if (const auto* lin = std::get_if<LinearMap>(&map)) {
            if (x.size() != lin->a.cols())
                throw InvalidArgumentError("MapSpec: point has wrong dimension");
            return lin->a * x + lin->offset;
        }
        const auto& grid = std::get<GridMap>(map);
        if (grid.dim != 1 || x.size() != 1)
            throw InvalidArgumentError("MapSpec: grid maps are one-dimensional");
        const auto& ax = grid.axes[0];
        if (x[0] < ax.min || x[0] > ax.max())
            throw InvalidArgumentError("MapSpec: point outside grid support");
        const auto [i, t] = DensityGrid::locate(ax, x[0]);
        Eigen::VectorXd out(1);
        out[0] = grid.values[static_cast<std::size_t>(i)] * (1.0 - t) +
                 grid.values[static_cast<std::size_t>(i + 1)] * t;
        return out;
    }

    Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const {
        if (const auto* lin = std::get_if<LinearMap>(&map)) {
            if (numeric_jacobian_step <= 0.0) return lin->a;
            return numeric_jacobian(x, numeric_jacobian_step);
        }
        const auto& grid = std::get<GridMap>(map);
        const auto& ax = grid.axes[0];
        const int node = static_cast<int>(std::lround((x[0] - ax.min) / ax.step));
        if (node < 1 || node > ax.count - 2)
            throw InvalidArgumentError("MapSpec: no interior node for Jacobian stencil");
        Eigen::MatrixXd j(1, 1);
        j(0, 0) = (grid.values[static_cast<std::size_t>(node + 1)] -
                   grid.values[static_cast<std::size_t>(node - 1)]) /
                  (2.0 * ax.step);
        return j;
    }

private:
    Eigen::MatrixXd numeric_jacobian(const Eigen::VectorXd& x, double h) const {
        const int d = dim();
        Eigen::MatrixXd j(d, d);
        for (int col = 0; col < d; ++col) {
            Eigen::VectorXd hi = x, lo = x;
            hi[col] += h;
            lo[col] -= h;
            j.col(col) = (value(hi) - value(lo)) / (2.0 * h);
        }
        return j;
    }
};

// ---------------------------------------------------------------------------
// Monge-Ampere residuals

struct ResidualEntry {
    Eigen::VectorXd x;
    Eigen::VectorXd t_of_x;
    double det_jacobian = 0.0;
    double rho0 = 0.0;
    double rho1_at_t = 0.0;
    double residual = 0.0;
    bool singular_jacobian = false;
};

struct ResidualReport {
    std::vector<ResidualEntry> entries;
    double max_abs = 0.0;
    double mean_abs = 0.0;
};

// Map-form residual r(x) = rho0(x) - rho1(T(x)) det(DT(x)).
inline ResidualReport ma_residual_map(const Density& rho0, const Density& rho1,
                                      const MapSpec& transport,
                                      std::span<const Eigen::VectorXd> points) {
    ResidualReport report;
    report.entries.reserve(points.size());
    for (const auto& x : points) {
        ResidualEntry entry;
        entry.x = x;
        entry.t_of_x = transport.value(x);
        const Eigen::MatrixXd jac = transport.jacobian(x);
        entry.det_jacobian = jac.determinant();
        entry.singular_jacobian =
            !std::isfinite(entry.det_jacobian) || std::abs(entry.det_jacobian) < 1e-14;
        entry.rho0 = density_value(rho0, x);
        entry.rho1_at_t = density_value(rho1, entry.t_of_x);
        entry.residual = entry.rho0 - entry.rho1_at_t * entry.det_jacobian;
        report.entries.push_back(std::move(entry));
    }
    for (const auto& e : report.entries) {
        report.max_abs = std::max(report.max_abs, std::abs(e.residual));
        report.mean_abs += std::abs(e.residual);
    }
    if (!report.entries.empty()) report.mean_abs /= static_cast<double>(report.entries.size());
    return report;
}

// Scalar potential sampled on a uniform grid whose spacing doubles as the
// finite-difference step for gradients and Hessians. Queries snap to the
// nearest interior node; a smooth interpolant would destroy the second
// derivatives the residual needs.
struct PotentialGrid {
    int dim = 1;
    std::array<GridAxis, 2> axes{};
    std::vector<double> values;  // [ix] or [ix * axes[1].count + iy]

    static PotentialGrid from_function(const GridAxis& axis,
                                       const std::function<double(double)>& f) {
        PotentialGrid p;
        p.dim = 1;
        p.axes[0] = axis;
        p.values.resize(static_cast<std::size_t>(axis.count));
        for (int i = 0; i < axis.count; ++i) p.values[static_cast<std::size_t>(i)] = f(axis.node(i));
        return p;
    }

    static PotentialGrid from_function(const GridAxis& ax, const GridAxis& ay,
                                       const std::function<double(double, double)>& f) {
        PotentialGrid p;
        p.dim = 2;
        p.axes[0] = ax;
        p.axes[1] = ay;
        p.values.resize(static_cast<std::size_t>(ax.count) * static_cast<std::size_t>(ay.count));
        for (int ix = 0; ix < ax.count; ++ix)
            for (int iy = 0; iy < ay.count; ++iy)
                p.values[static_cast<std::size_t>(ix * ay.count + iy)] = f(ax.node(ix), ay.node(iy));
        return p;
    }

    double at(int ix, int iy = 0) const {
        return dim == 1 ? values[static_cast<std::size_t>(ix)]
                        : values[static_cast<std::size_t>(ix * axes[1].count + iy)];
    }

    // Nearest node, required to be interior so the 3-point stencils fit.
    std::array<int, 2> interior_node(const Eigen::VectorXd& x) const {
        if (x.size() != dim) throw InvalidArgumentError("PotentialGrid: point has wrong dimension");
        std::array<int, 2> node{0, 0};
        for (int d = 0; d < dim; ++d) {
            const auto& ax = axes[static_cast<std::size_t>(d)];
            const int i = static_cast<int>(std::lround((x[d] - ax.min) / ax.step));
            if (i < 1 || i > ax.count - 2)
                throw InvalidArgumentError("PotentialGrid: no interior node for stencil");
            node[static_cast<std::size_t>(d)] = i;
        }
        return node;
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
        const auto [ix, iy] = interior_node(x);
        Eigen::VectorXd g(dim);
        if (dim == 1) {
            g[0] = (at(ix + 1) - at(ix - 1)) / (2.0 * axes[0].step);
            return g;
        }
        g[0] = (at(ix + 1, iy) - at(ix - 1, iy)) / (2.0 * axes[0].step);
        g[1] = (at(ix, iy + 1) - at(ix, iy - 1)) / (2.0 * axes[1].step);
        return g;
    }

    Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const {
        const auto [ix, iy] = interior_node(x);
        Eigen::MatrixXd h(dim, dim);
        const double hx = axes[0].step;
        if (dim == 1) {
            h(0, 0) = (at(ix + 1) - 2.0 * at(ix) + at(ix - 1)) / (hx * hx);
            return h;
        }
        const double hy = axes[1].step;
        h(0, 0) = (at(ix + 1, iy) - 2.0 * at(ix, iy) + at(ix - 1, iy)) / (hx * hx);
        h(1, 1) = (at(ix, iy + 1) - 2.0 * at(ix, iy) + at(ix, iy - 1)) / (hy * hy);
        h(0, 1) = h(1, 0) = (at(ix + 1, iy + 1) - at(ix + 1, iy - 1) - at(ix - 1, iy + 1) +
                             at(ix - 1, iy - 1)) /
                            (4.0 * hx * hy);
        return h;
    }
};

struct PotentialResidualEntry {
    Eigen::VectorXd x;
    Eigen::VectorXd gradient;
    double det_hessian = 0.0;
    double mu = 0.0;
    double nu_at_gradient = 0.0;
    double residual = 0.0;
    bool convex = true;  // Hessian PSD at this point
};

struct PotentialResidualReport {
    std::vector<PotentialResidualEntry> entries;
    double max_abs = 0.0;
    double mean_abs = 0.0;
    bool all_convex = true;
};

// Potential-form residual r(x) = det(D^2 phi(x)) - mu(x) / nu(grad phi(x)).
inline PotentialResidualReport ma_residual_potential(const Density& mu, const Density& nu,
                                                     const PotentialGrid& phi,
                                                     std::span<const Eigen::VectorXd> points) {
    PotentialResidualReport report;
    report.entries.reserve(points.size());
    for (const auto& x : points) {
        PotentialResidualEntry entry;
        entry.x = x;
        entry.gradient = phi.gradient(x);
        const Eigen::MatrixXd hess = phi.hessian(x);
        entry.det_hessian = hess.determinant();
        entry.convex = symmetric_eigenvalues(hess).minCoeff() >= 0.0;
        entry.mu = density_value(mu, x);
        entry.nu_at_gradient = density_value(nu, entry.gradient);
        if (entry.nu_at_gradient <= 1e-300)
            throw NumericalError("ma_residual_potential: target density vanishes at image point");
        entry.residual = entry.det_hessian - entry.mu / entry.nu_at_gradient;
        report.all_convex = report.all_convex && entry.convex;
        report.entries.push_back(std::move(entry));
    }
    for (const auto& e : report.entries) {
        report.max_abs = std::max(report.max_abs, std::abs(e.residual));
        report.mean_abs += std::abs(e.residual);
    }
    if (!report.entries.empty()) report.mean_abs /= static_cast<double>(report.entries.size());
    return report;
}

// ---------------------------------------------------------------------------
// Gaussian transport utilities

// P_theta(x) = P_latent(T^{-1}(x)) |det grad T^{-1}(x)| for invertible linear T.
inline std::vector<double> pushforward_density(const GaussianDensity& latent,
                                               const LinearMap& transport,
                                               std::span<const Eigen::VectorXd> points) {
    if (transport.a.rows() != latent.dim())
        throw InvalidArgumentError("pushforward_density: dimension mismatch");
    const double det_a = transport.a.determinant();
    if (std::abs(det_a) <= 1e-12)
        throw NumericalError("pushforward_density: transport matrix is singular");
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(transport.a);
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& x : points) {
        const Eigen::VectorXd z = lu.solve(x - transport.offset);
        out.push_back(latent(z) / std::abs(det_a));
    }
    return out;
}

// Optimal transport map between centered Gaussians:
// A = S0^{-1/2} (S0^{1/2} S1 S0^{1/2})^{1/2} S0^{-1/2}. A is SPD and pushes
// N(0, S0) onto N(0, S1), i.e. A S0 A^T = S1.
inline Eigen::MatrixXd gaussian_ot_map(const Eigen::MatrixXd& sigma0,
                                       const Eigen::MatrixXd& sigma1) {
    require_spd(sigma0, "gaussian_ot_map: sigma0");
    require_spd(sigma1, "gaussian_ot_map: sigma1");
    if (sigma0.rows() != sigma1.rows())
        throw InvalidArgumentError("gaussian_ot_map: dimension mismatch");
    const Eigen::MatrixXd root0 = spd_sqrt(sigma0);
    const Eigen::MatrixXd inv_root0 = spd_inv_sqrt(sigma0);
    const Eigen::MatrixXd middle = spd_sqrt(root0 * sigma1 * root0);
    return symmetrized(inv_root0 * middle * inv_root0);
}

// 2-Wasserstein distance between centered Gaussians. The closed form
// tr(S0) + tr(S1) - 2 tr((S0^{1/2} S1 S0^{1/2})^{1/2}) cancels catastrophically
// near S0 = S1, so the result is clamped by the Bures bound
// W2 <= ||sqrt(S0) - sqrt(S1)||_F, which is exact at coincidence.
inline double w2_gaussian(const Eigen::MatrixXd& sigma0, const Eigen::MatrixXd& sigma1) {
    require_spd(sigma0, "w2_gaussian: sigma0");
    require_spd(sigma1, "w2_gaussian: sigma1");
    if (sigma0.rows() != sigma1.rows())
        throw InvalidArgumentError("w2_gaussian: dimension mismatch");
    const Eigen::MatrixXd root0 = spd_sqrt(sigma0);
    const Eigen::MatrixXd root1 = spd_sqrt(sigma1);
    const double cross = spd_sqrt(root0 * sigma1 * root0).trace();
    const double squared = sigma0.trace() + sigma1.trace() - 2.0 * cross;
    const double closed_form = std::sqrt(std::max(squared, 0.0));
    const double bures_bound = (root0 - root1).norm();
    return std::min(closed_form, bures_bound);
}

// ---------------------------------------------------------------------------
// One-dimensional constructive transport

// Cumulative trapezoidal distribution over a strictly positive 1D grid
// density, rescaled to end exactly at 1.
inline std::vector<double> grid_cdf(const DensityGrid& density) {
    if (density.dim != 1) throw InvalidArgumentError("grid_cdf: density must be 1D");
    const auto& ax = density.axes[0];
    for (double v : density.values)
        if (!(v > 0.0))
            throw InvalidArgumentError("grid_cdf: density must be strictly positive on its grid");
    std::vector<double> cdf(static_cast<std::size_t>(ax.count), 0.0);
    for (int i = 1; i < ax.count; ++i)
        cdf[static_cast<std::size_t>(i)] =
            cdf[static_cast<std::size_t>(i - 1)] +
            0.5 * ax.step *
                (density.values[static_cast<std::size_t>(i - 1)] +
                 density.values[static_cast<std::size_t>(i)]);
    const double total = cdf.back();
    if (!(total > 0.0)) throw NumericalError("grid_cdf: zero total mass");
    for (double& c : cdf) c /= total;
    return cdf;
}

// Inverse CDF by monotone linear interpolation. The strict positivity of the
// density guarantees strictly increasing cdf values, so there are no
// ambiguous plateaus.
inline double inverse_cdf(const std::vector<double>& cdf, const GridAxis& ax, double u) {
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.begin()) return ax.min;
    if (it == cdf.end()) return ax.max();
    const std::size_t hi = static_cast<std::size_t>(it - cdf.begin());
    const double c_lo = cdf[hi - 1], c_hi = cdf[hi];
    const double t = c_hi > c_lo ? (u - c_lo) / (c_hi - c_lo) : 0.0;
    return ax.node(static_cast<int>(hi - 1)) + t * ax.step;
}

// Monotone rearrangement T = F1^{-1} o F0 between two strictly positive 1D
// grid densities, sampled on rho0's grid.
inline MapSpec monotone_transport_1d(const DensityGrid& rho0, const DensityGrid& rho1) {
    if (rho0.dim != 1 || rho1.dim != 1)
        throw InvalidArgumentError("monotone_transport_1d: densities must be 1D");
    const std::vector<double> cdf0 = grid_cdf(rho0);
    const std::vector<double> cdf1 = grid_cdf(rho1);

    GridMap t;
    t.dim = 1;
    t.axes[0] = rho0.axes[0];
    t.values.resize(static_cast<std::size_t>(rho0.axes[0].count));
    for (int i = 0; i < rho0.axes[0].count; ++i)
        t.values[static_cast<std::size_t>(i)] =
            inverse_cdf(cdf1, rho1.axes[0], cdf0[static_cast<std::size_t>(i)]);
    return MapSpec{std::move(t), 0.0};
}

// ---------------------------------------------------------------------------
// Latent-to-data transport check

// Silverman rule-of-thumb bandwidth for a Gaussian kernel.
inline double silverman_bandwidth(std::span<const double> samples) {
    if (samples.size() < 2) throw InvalidArgumentError("silverman_bandwidth: need >= 2 samples");
    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    var /= (n - 1.0);
    const double sd = std::sqrt(var);

    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    auto order_stat = [&](double q) {
        const double pos = q * (n - 1.0);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
    };
    const double iqr = order_stat(0.75) - order_stat(0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
    if (!(spread > 1e-12 * (std::abs(mean) + 1.0)))
        throw InvalidArgumentError("silverman_bandwidth: degenerate (constant) sample");
    return 0.9 * spread * std::pow(n, -0.2);
}

// Gaussian kernel density estimate on a uniform grid.
inline DensityGrid kde_1d(std::span<const double> samples, double bandwidth,
                          const GridAxis& axis) {
    if (samples.empty()) throw InvalidArgumentError("kde_1d: empty sample");
    if (!(bandwidth > 0.0)) throw InvalidArgumentError("kde_1d: bandwidth must be positive");
    DensityGrid g;
    g.dim = 1;
    g.axes[0] = axis;
    g.values.assign(static_cast<std::size_t>(axis.count), 0.0);
    const double norm = 1.0 / (static_cast<double>(samples.size()) * bandwidth *
                               std::sqrt(2.0 * kPi));
    for (int i = 0; i < axis.count; ++i) {
        const double x = axis.node(i);
        double sum = 0.0;
        for (double s : samples) {
            const double u = (x - s) / bandwidth;
            sum += std::exp(-0.5 * u * u);
        }
        g.values[static_cast<std::size_t>(i)] = norm * sum;
    }
    g.normalize();
    return g;
}

struct LatentToDataReport {
    DensityGrid latent_density;  // standard normal sampled on the latent grid
    DensityGrid data_density;    // smoothed density of the scalar statistic
    MapSpec transport;           // monotone map latent -> data, on the latent grid
    ResidualReport residuals;    // map-form residual at interior latent nodes
    double w2 = 0.0;             // quadratic transport cost of the map
    double bandwidth = 0.0;
};

// End-to-end transport check for a scalar data statistic: smooth the
// empirical statistic into a density, transport a standard normal latent onto
// it by monotone rearrangement, and report the Monge-Ampere residual.
inline LatentToDataReport latent_to_data_check(std::span<const double> statistic,
                                               double bandwidth = 0.0, int resolution = 2048) {
    if (statistic.empty()) throw InvalidArgumentError("latent_to_data_check: empty ensemble");
    if (resolution < 16) throw InvalidArgumentError("latent_to_data_check: resolution too small");
    const double bw = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(statistic);

    const double latent_half_width = 6.0;
    GridAxis latent_axis{-latent_half_width, 2.0 * latent_half_width / (resolution - 1),
                         resolution};
    DensityGrid latent = DensityGrid::from_function(
        latent_axis,
        [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); });

    const auto [lo_it, hi_it] = std::minmax_element(statistic.begin(), statistic.end());
    const double lo = *lo_it - 5.0 * bw;
    const double hi = *hi_it + 5.0 * bw;
    GridAxis data_axis{lo, (hi - lo) / (resolution - 1), resolution};
    DensityGrid data = kde_1d(statistic, bw, data_axis);

    LatentToDataReport report{latent, data, monotone_transport_1d(latent, data), {}, 0.0, bw};

    std::vector<Eigen::VectorXd> probes;
    probes.reserve(static_cast<std::size_t>(resolution - 2));
    for (int i = 1; i + 1 < resolution; ++i) {
        Eigen::VectorXd x(1);
        x[0] = latent_axis.node(i);
        probes.push_back(std::move(x));
    }
    report.residuals = ma_residual_map(report.latent_density, report.data_density,
                                       report.transport, probes);

    // W2^2 = integral of (T(x) - x)^2 rho0(x) dx for the monotone coupling.
    const auto& grid = std::get<GridMap>(report.transport.map);
    double w2_sq = 0.0;
    for (int i = 0; i + 1 < resolution; ++i) {
        auto cost = [&](int k) {
            const double d = grid.values[static_cast<std::size_t>(k)] - latent_axis.node(k);
            return d * d * report.latent_density.values[static_cast<std::size_t>(k)];
        };
        w2_sq += 0.5 * latent_axis.step * (cost(i) + cost(i + 1));
    }
    report.w2 = std::sqrt(std::max(w2_sq, 0.0));
    return report;
}

}  // namespace spinflow
