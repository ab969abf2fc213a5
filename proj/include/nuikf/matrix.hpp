#pragma once

#include <Eigen/Core>
#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <limits>

#include "nuikf/errors.hpp"

namespace nuikf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

[[nodiscard]] inline bool all_finite(const Matrix& a) {
    return a.allFinite();
}

[[nodiscard]] inline bool all_finite(const Vector& a) {
    return a.allFinite();
}

/// 0.5 * (A + A^T). Input must be square.
[[nodiscard]] inline Matrix symmetrize(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw DimensionMismatch("symmetrize: matrix is not square");
    }
    return 0.5 * (a + a.transpose());
}

/// ||A - A^T||_F relative to ||A||_F (absolute when A is near zero).
[[nodiscard]] inline double relative_asymmetry(const Matrix& a) {
    const double scale = a.norm();
    const double gap = (a - a.transpose()).norm();
    return scale > std::numeric_limits<double>::min() ? gap / scale : gap;
}

/// Moore-Penrose pseudo-inverse via SVD. Singular values at or below
/// tol * max singular value are treated as zero, so rank-deficient and
/// even all-zero inputs are handled; the result then satisfies the four
/// Penrose identities to round-off.
[[nodiscard]] inline Matrix pseudo_inverse(const Matrix& a, double tol = 1e-12) {
    if (a.size() == 0) {
        throw DimensionMismatch("pseudo_inverse: empty matrix");
    }
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    const double cutoff = tol * (sv.size() > 0 ? sv(0) : 0.0);
    Vector inv_sv = Vector::Zero(sv.size());
    for (Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff && sv(i) > 0.0) {
            inv_sv(i) = 1.0 / sv(i);
        }
    }
    return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

/// Central-difference Jacobian of fn at x. Column j uses a step of
/// step * max(1, |x_j|). Throws NonFiniteEvaluation if fn produces a
/// non-finite value at any probe point.
[[nodiscard]] inline Matrix finite_diff_jacobian(
    const std::function<Vector(const Vector&)>& fn, const Vector& x,
    double step = 1e-6) {
    Vector probe = x;
    Matrix jac;
    for (Index j = 0; j < x.size(); ++j) {
        const double delta = step * std::max(1.0, std::abs(x(j)));
        probe(j) = x(j) + delta;
        const Vector hi = fn(probe);
        probe(j) = x(j) - delta;
        const Vector lo = fn(probe);
        probe(j) = x(j);
        if (!all_finite(hi) || !all_finite(lo)) {
            throw NonFiniteEvaluation("finite_diff_jacobian: non-finite evaluation");
        }
        if (j == 0) {
            jac.resize(hi.size(), x.size());
        }
        if (hi.size() != jac.rows() || lo.size() != jac.rows()) {
            throw DimensionMismatch("finite_diff_jacobian: output size changed");
        }
        jac.col(j) = (hi - lo) / (2.0 * delta);
    }
    if (x.size() == 0) {
        throw DimensionMismatch("finite_diff_jacobian: empty input");
    }
    return jac;
}

}  // namespace nuikf
