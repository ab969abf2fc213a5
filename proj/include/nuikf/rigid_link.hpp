#pragma once

#include "nuikf/model.hpp"

namespace nuikf {

/// Single rigid link rotating in a vertical plane, driven by an unknown
/// planar tip force u = (u1, u2). State is x = (angular velocity, angle).
struct RigidLinkParams {
    double mass = 1.0;
    double length = 1.0;
    double damping = 5.0;
    double gravity = 9.81;
    double dt = 0.01;
};

/// Torque balance at the joint: viscous damping, gravity acting at the tip
/// and the moments of the two unknown force components.
[[nodiscard]] inline double rigid_link_torque(const RigidLinkParams& p, const Vector& x,
                                              const Vector& u) {
    const double s = std::sin(x(1));
    const double c = std::cos(x(1));
    return -p.damping * x(0) + p.mass * p.gravity * p.length * c + u(0) * p.length * s -
           u(1) * p.length * c;
}

[[nodiscard]] inline double rigid_link_accel(const RigidLinkParams& p, const Vector& x,
                                             const Vector& u) {
    return rigid_link_torque(p, x, u) / (p.mass * p.length * p.length);
}

/// Euler-discretized model with dt-squared correction on the angle, and
/// measurement y = (angular velocity, tip x, tip y).
[[nodiscard]] inline SystemModel rigid_link_model(const RigidLinkParams& p = {}) {
    SystemModel model;
    model.n = 2;
    model.d = 2;
    model.m = 3;
    model.f = [p](const Vector& x, const Vector& u) {
        const double acc = rigid_link_accel(p, x, u);
        Vector next(2);
        next(0) = x(0) + acc * p.dt;
        next(1) = x(1) + x(0) * p.dt + 0.5 * acc * p.dt * p.dt;
        return next;
    };
    model.h = [p](const Vector& x) {
        Vector y(3);
        y(0) = x(0);
        y(1) = p.length * std::cos(x(1));
        y(2) = p.length * std::sin(x(1));
        return y;
    };
    model.fx = [p](const Vector& x, const Vector& u) {
        const double inertia = p.mass * p.length * p.length;
        const double da_dx0 = -p.damping / inertia;
        const double da_dx1 = (-p.mass * p.gravity * p.length * std::sin(x(1)) +
                               u(0) * p.length * std::cos(x(1)) +
                               u(1) * p.length * std::sin(x(1))) /
                              inertia;
        Matrix jac(2, 2);
        jac(0, 0) = 1.0 + p.dt * da_dx0;
        jac(0, 1) = p.dt * da_dx1;
        jac(1, 0) = p.dt + 0.5 * p.dt * p.dt * da_dx0;
        jac(1, 1) = 1.0 + 0.5 * p.dt * p.dt * da_dx1;
        return jac;
    };
    model.fu = [p](const Vector& x, const Vector&) {
        const double inertia = p.mass * p.length * p.length;
        const double da_du0 = p.length * std::sin(x(1)) / inertia;
        const double da_du1 = -p.length * std::cos(x(1)) / inertia;
        Matrix jac(2, 2);
        jac(0, 0) = p.dt * da_du0;
        jac(0, 1) = p.dt * da_du1;
        jac(1, 0) = 0.5 * p.dt * p.dt * da_du0;
        jac(1, 1) = 0.5 * p.dt * p.dt * da_du1;
        return jac;
    };
    model.hx = [p](const Vector& x) {
        Matrix jac = Matrix::Zero(3, 2);
        jac(0, 0) = 1.0;
        jac(1, 1) = -p.length * std::sin(x(1));
        jac(2, 1) = p.length * std::cos(x(1));
        return jac;
    };
    return model;
}

/// Quasi-static unknown-input model: the estimate is the force that
/// balances the joint torque at the current state, i.e. the minimizer of
/// the scalar residual rigid_link_torque(x, u) over u.
[[nodiscard]] inline UIEstimator quasi_static_estimator(const RigidLinkParams& p = {}) {
    UIEstimator est;
    est.kind = UIEstimator::Kind::residual;
    est.d = 2;
    est.residual = [p](const Vector& x, const Vector& u) {
        Vector r(1);
        r(0) = rigid_link_torque(p, x, u);
        return r;
    };
    est.residual_du = [p](const Vector& x, const Vector&) {
        Matrix jac(1, 2);
        jac(0, 0) = p.length * std::sin(x(1));
        jac(0, 1) = -p.length * std::cos(x(1));
        return jac;
    };
    est.residual_dx = [p](const Vector& x, const Vector& u) {
        Matrix jac(1, 2);
        jac(0, 0) = -p.damping;
        jac(0, 1) = -p.mass * p.gravity * p.length * std::sin(x(1)) +
                    u(0) * p.length * std::cos(x(1)) + u(1) * p.length * std::sin(x(1));
        return jac;
    };
    return est;
}

}  // namespace nuikf
