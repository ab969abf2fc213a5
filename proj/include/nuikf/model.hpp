#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "nuikf/random.hpp"

namespace nuikf {

/// Discrete-time system
///   x_{t+1} = f(x_t, u_t) + w_t
///   y_t     = h(x_t) + v_t
/// with state dimension n, unknown-input dimension d and measurement
/// dimension m. Analytic Jacobians are optional; the accessors below fall
/// back to central finite differences when they are absent.
struct SystemModel {
    Index n = 0;
    Index d = 0;
    Index m = 0;
    std::function<Vector(const Vector&, const Vector&)> f;
    std::function<Vector(const Vector&)> h;
    std::function<Matrix(const Vector&, const Vector&)> fx;  // n x n, optional
    std::function<Matrix(const Vector&, const Vector&)> fu;  // n x d, optional
    std::function<Matrix(const Vector&)> hx;                 // m x n, optional
};

[[nodiscard]] inline Matrix state_jacobian(const SystemModel& model, const Vector& x,
                                           const Vector& u, double step = 1e-6) {
    if (model.fx) {
        return model.fx(x, u);
    }
    return finite_diff_jacobian([&](const Vector& p) { return model.f(p, u); }, x, step);
}

[[nodiscard]] inline Matrix input_jacobian(const SystemModel& model, const Vector& x,
                                           const Vector& u, double step = 1e-6) {
    if (model.fu) {
        return model.fu(x, u);
    }
    return finite_diff_jacobian([&](const Vector& p) { return model.f(x, p); }, u, step);
}

[[nodiscard]] inline Matrix measurement_jacobian(const SystemModel& model, const Vector& x,
                                                 double step = 1e-6) {
    if (model.hx) {
        return model.hx(x);
    }
    return finite_diff_jacobian([&](const Vector& p) { return model.h(p); }, x, step);
}

/// Unknown-input model. Either a residual Phi(x, u) whose least-squares
/// minimizer over u defines the estimate, or a direct map phi(x). Analytic
/// derivatives are optional and used when registered.
struct UIEstimator {
    enum class Kind { residual, direct };

    Kind kind = Kind::residual;
    Index d = 0;
    std::function<Vector(const Vector&, const Vector&)> residual;      // r(x, u)
    std::function<Matrix(const Vector&, const Vector&)> residual_du;   // optional
    std::function<Matrix(const Vector&, const Vector&)> residual_dx;   // optional
    std::function<Vector(const Vector&)> direct;                       // phi(x)
    std::function<Matrix(const Vector&)> direct_dx;                    // optional
};

/// Ground-truth record of one simulated run: states, applied unknown
/// inputs and noisy measurements at steps t = 0 .. T-1.
struct Trajectory {
    std::vector<Vector> x;
    std::vector<Vector> u;
    std::vector<Vector> y;

    [[nodiscard]] long length() const { return static_cast<long>(x.size()); }
};

using UiSignal = std::function<Vector(long)>;

/// u1 = amplitude * sgn(sin(omega * t)) on `channel`, zero elsewhere,
/// with sgn(0) := +1.
[[nodiscard]] inline UiSignal square_wave_ui(double amplitude, double omega, Index d,
                                             Index channel = 0) {
    if (channel < 0 || channel >= d) {
        throw DimensionMismatch("square_wave_ui: channel out of range");
    }
    return [=](long t) {
        Vector u = Vector::Zero(d);
        const double s = std::sin(omega * static_cast<double>(t));
        u(channel) = s >= 0.0 ? amplitude : -amplitude;
        return u;
    };
}

/// Rolls the system forward for `steps` steps from x0. Per step the
/// measurement noise v_t is drawn before the process noise w_t, so a run
/// is fully determined by the seed.
[[nodiscard]] inline Trajectory simulate(const SystemModel& model, const Vector& x0,
                                         const SpdMatrix& q, const SpdMatrix& r,
                                         const UiSignal& ui, long steps, SeededRng& rng) {
    if (x0.size() != model.n || q.dim() != model.n || r.dim() != model.m) {
        throw DimensionMismatch("simulate: dimensions disagree with the model");
    }
    Trajectory traj;
    traj.x.reserve(static_cast<std::size_t>(steps));
    traj.u.reserve(static_cast<std::size_t>(steps));
    traj.y.reserve(static_cast<std::size_t>(steps));

    Vector x = x0;
    for (long t = 0; t < steps; ++t) {
        const Vector u = ui(t);
        if (u.size() != model.d) {
            throw DimensionMismatch("simulate: input signal dimension disagrees");
        }
        const Vector y = model.h(x) + r.cholesky() * rng.gaussian(model.m);
        if (!all_finite(y) || !all_finite(x)) {
            throw NonFiniteEvaluation("simulate: trajectory became non-finite");
        }
        traj.x.push_back(x);
        traj.u.push_back(u);
        traj.y.push_back(y);
        x = model.f(x, u) + q.cholesky() * rng.gaussian(model.n);
    }
    return traj;
}

}  // namespace nuikf
