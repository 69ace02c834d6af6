#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "spinflow/errors.hpp"

namespace spinflow {

inline double max_asymmetry(const Eigen::MatrixXd& m) {
    return (m - m.transpose()).cwiseAbs().maxCoeff();
}

inline bool is_symmetric(const Eigen::MatrixXd& m, double tol = 1e-12) {
    return m.rows() == m.cols() && max_asymmetry(m) <= tol;
}

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

inline Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw NumericalError("symmetric_eigenvalues: eigendecomposition failed");
    return solver.eigenvalues();
}

inline void require_spd(const Eigen::MatrixXd& m, const char* what, double min_eig = 1e-12) {
    if (!is_symmetric(m, 1e-9))
        throw InvalidArgumentError(std::string(what) + ": matrix is not symmetric");
    if (symmetric_eigenvalues(m).minCoeff() <= min_eig)
        throw InvalidArgumentError(std::string(what) + ": matrix is not positive definite");
}

// Symmetric square root via eigendecomposition. Negative rounding noise in
// the spectrum is clamped to zero.
inline Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrized(m));
    if (solver.info() != Eigen::Success) throw NumericalError("spd_sqrt: eigendecomposition failed");
    Eigen::VectorXd roots = solver.eigenvalues();
    for (int i = 0; i < roots.size(); ++i) roots[i] = std::sqrt(std::max(roots[i], 0.0));
    return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

inline Eigen::MatrixXd spd_inv_sqrt(const Eigen::MatrixXd& m, double floor = 1e-12) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrized(m));
    if (solver.info() != Eigen::Success)
        throw NumericalError("spd_inv_sqrt: eigendecomposition failed");
    Eigen::VectorXd roots = solver.eigenvalues();
    for (int i = 0; i < roots.size(); ++i) {
        if (roots[i] < floor)
            throw NumericalError("spd_inv_sqrt: eigenvalue below positive-definite floor");
        roots[i] = 1.0 / std::sqrt(roots[i]);
    }
    return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace spinflow
