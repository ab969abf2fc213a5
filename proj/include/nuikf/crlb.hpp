#pragma once

#include <vector>

#include "nuikf/model.hpp"

namespace nuikf {

namespace detail {

[[nodiscard]] inline Matrix spd_inverse_or_throw(const Matrix& a, const char* what) {
    Eigen::LLT<Matrix> llt(symmetrize(a));
    if (llt.info() != Eigen::Success) {
        throw SingularInformation(what);
    }
    return llt.solve(Matrix::Identity(a.rows(), a.cols()));
}

}  // namespace detail

/// Posterior information recursion along the true trajectory with the true
/// input known:
///   J_0     = P0^-1 + H_0^T R^-1 H_0
///   J_{t+1} = (Q + F_t J_t^-1 F_t^T)^-1 + H_{t+1}^T R^-1 H_{t+1}
/// with F_t at (x_t, u_t) and H_t at x_t. Returns J_t^-1 per step, the
/// covariance lower bound any unbiased estimator of x_t obeys given the
/// prior P0 and measurements up to t. Throws SingularInformation if an
/// information matrix cannot be inverted.
[[nodiscard]] inline std::vector<Matrix> crlb_trace(const SystemModel& model,
                                                    const Trajectory& traj,
                                                    const SpdMatrix& q, const SpdMatrix& r,
                                                    const SpdMatrix& prior0) {
    const long steps = traj.length();
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(steps));
    if (steps == 0) {
        return out;
    }
    const Matrix r_inv = detail::spd_inverse_or_throw(r.matrix(), "crlb_trace: R is singular");
    const auto observed_info = [&](const Vector& x) {
        const Matrix h = measurement_jacobian(model, x);
        return Matrix(h.transpose() * r_inv * h);
    };

    Matrix info = detail::spd_inverse_or_throw(prior0.matrix(), "crlb_trace: P0 is singular") +
                  observed_info(traj.x[0]);
    for (long t = 0; t < steps; ++t) {
        Matrix crlb =
            detail::spd_inverse_or_throw(info, "crlb_trace: information is singular");
        if (t + 1 < steps) {
            const Matrix f = state_jacobian(model, traj.x[static_cast<std::size_t>(t)],
                                            traj.u[static_cast<std::size_t>(t)]);
            const Matrix predicted = q.matrix() + f * crlb * f.transpose();
            info = detail::spd_inverse_or_throw(predicted,
                                                "crlb_trace: predicted covariance is singular") +
                   observed_info(traj.x[static_cast<std::size_t>(t + 1)]);
        }
        out.push_back(std::move(crlb));
    }
    return out;
}

}  // namespace nuikf
