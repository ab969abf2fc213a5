#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "nuikf/spd.hpp"

namespace nuikf {

/// Weights of a symmetric sigma-point set of dimension k:
/// w0 = a / (k + a) for the center, wi = 1 / (2 (k + a)) for each of the
/// 2k spread points. They sum to one for any spread a >= 0.
struct SigmaWeights {
    double w0 = 0.0;
    double wi = 0.0;
};

/// 2k + 1 sigma points with their weights; points[0] is the center.
struct SigmaEnsemble {
    std::vector<Vector> points;
    SigmaWeights weights;

    [[nodiscard]] Index dim() const {
        return points.empty() ? 0 : points.front().size();
    }
};

/// Generates the symmetric sigma-point set for N(mean, cov):
///   points[0]       = mean
///   points[i]       = mean + sqrt(k + a) * L_i        for i = 1..k
///   points[k + i]   = mean - sqrt(k + a) * L_i        for i = 1..k
/// where L is the Cholesky factor of cov and L_i its i-th column. The
/// scale always uses the dimension k of this ensemble, so stacked
/// generation over a joint space of dimension n + d scales by
/// sqrt(n + d + a).
[[nodiscard]] inline SigmaEnsemble sigma_points(const Vector& mean, const SpdMatrix& cov,
                                                double a) {
    if (!(a >= 0.0)) {
        throw InvalidSpreadParameter("sigma_points: spread must satisfy a >= 0");
    }
    const Index k = cov.dim();
    if (mean.size() != k) {
        throw DimensionMismatch("sigma_points: mean and covariance disagree");
    }
    const double denom = static_cast<double>(k) + a;
    const double scale = std::sqrt(denom);
    const Matrix& l = cov.cholesky();

    SigmaEnsemble ens;
    ens.weights.w0 = a / denom;
    ens.weights.wi = 1.0 / (2.0 * denom);
    ens.points.reserve(static_cast<std::size_t>(2 * k + 1));
    ens.points.push_back(mean);
    for (Index i = 0; i < k; ++i) {
        ens.points.push_back(mean + scale * l.col(i));
    }
    for (Index i = 0; i < k; ++i) {
        ens.points.push_back(mean - scale * l.col(i));
    }
    return ens;
}

[[nodiscard]] inline Vector weighted_mean(const std::vector<Vector>& pts,
                                          const SigmaWeights& w) {
    Vector mean = w.w0 * pts.front();
    for (std::size_t i = 1; i < pts.size(); ++i) {
        mean += w.wi * pts[i];
    }
    return mean;
}

[[nodiscard]] inline Matrix weighted_cov(const std::vector<Vector>& pts, const Vector& mean,
                                         const SigmaWeights& w) {
    Matrix cov = Matrix::Zero(mean.size(), mean.size());
    Vector dev = pts.front() - mean;
    cov.noalias() += w.w0 * dev * dev.transpose();
    for (std::size_t i = 1; i < pts.size(); ++i) {
        dev = pts[i] - mean;
        cov.noalias() += w.wi * dev * dev.transpose();
    }
    return cov;
}

[[nodiscard]] inline Matrix weighted_cross_cov(const std::vector<Vector>& a,
                                               const Vector& a_mean,
                                               const std::vector<Vector>& b,
                                               const Vector& b_mean,
                                               const SigmaWeights& w) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("weighted_cross_cov: point counts disagree");
    }
    Matrix cov = Matrix::Zero(a_mean.size(), b_mean.size());
    cov.noalias() += w.w0 * (a.front() - a_mean) * (b.front() - b_mean).transpose();
    for (std::size_t i = 1; i < a.size(); ++i) {
        cov.noalias() += w.wi * (a[i] - a_mean) * (b[i] - b_mean).transpose();
    }
    return cov;
}

/// Recovers (mean, cov) from an ensemble. For an untouched set produced by
/// sigma_points this reproduces the generating moments to round-off.
[[nodiscard]] inline std::pair<Vector, Matrix> reconstruct(const SigmaEnsemble& ens) {
    Vector mean = weighted_mean(ens.points, ens.weights);
    Matrix cov = weighted_cov(ens.points, mean, ens.weights);
    return {std::move(mean), std::move(cov)};
}

}  // namespace nuikf
