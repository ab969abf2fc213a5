#pragma once

#include <algorithm>
#include <cmath>

#include "nuikf/model.hpp"

namespace nuikf {

struct NlsOptions {
    int max_iters = 50;
    double grad_tol = 1e-10;   // infinity norm of the objective gradient
    double step_tol = 1e-12;   // relative step size
    double fd_step = 1e-6;     // central-difference step for missing Jacobians
};

struct NlsResult {
    Vector u;
    int iters = 0;
    bool converged = false;
};

namespace detail {

struct WolfePoint {
    double alpha = 0.0;
    double f = 0.0;
    Vector g;
    bool ok = false;
};

/// Strong Wolfe line search (c1 = 1e-4, c2 = 0.1) along `dir` from `u`.
/// The first trial is the minimizer of the quadratic through f(0), f'(0)
/// and f(1), so one-dimensional quadratics are minimized in a single
/// probe; general objectives fall through to bracketing plus zoom.
template <class Value, class Grad>
WolfePoint wolfe_line_search(const Value& value, const Grad& grad, const Vector& u,
                             const Vector& dir, double f0, double dphi0) {
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.1;
    const auto phi = [&](double a) { return value(u + a * dir); };
    const auto phi_grad = [&](double a) { return grad(u + a * dir); };

    const auto zoom = [&](double alo, double flo, double dlo, double ahi,
                          double fhi) -> WolfePoint {
        for (int j = 0; j < 30; ++j) {
            const double span = ahi - alo;
            const double denom = 2.0 * (fhi - flo - dlo * span);
            double a = alo + 0.5 * span;
            if (std::isfinite(denom) && denom != 0.0) {
                const double interp = alo - dlo * span * span / denom;
                const double lo = std::min(alo, ahi);
                const double hi = std::max(alo, ahi);
                const double margin = 0.05 * (hi - lo);
                if (interp > lo + margin && interp < hi - margin) {
                    a = interp;
                }
            }
            const double fa = phi(a);
            if (fa > f0 + c1 * a * dphi0 || fa >= flo) {
                ahi = a;
                fhi = fa;
            } else {
                Vector ga = phi_grad(a);
                const double da = ga.dot(dir);
                if (std::abs(da) <= -c2 * dphi0) {
                    return {a, fa, std::move(ga), true};
                }
                if (da * (ahi - alo) >= 0.0) {
                    ahi = alo;
                    fhi = flo;
                }
                alo = a;
                flo = fa;
                dlo = da;
            }
            if (std::abs(ahi - alo) <= 1e-14 * (1.0 + std::abs(alo))) {
                break;
            }
        }
        // The sufficient-decrease point alo is still progress; accept it.
        return {alo, flo, phi_grad(alo), alo > 0.0};
    };

    // Initial trial from a quadratic fit through (0, f0, dphi0) and phi(1).
    const double f_at_one = phi(1.0);
    double a = 1.0;
    const double fit_denom = 2.0 * (f_at_one - f0 - dphi0);
    if (std::isfinite(fit_denom) && fit_denom > 0.0) {
        const double fit = -dphi0 / fit_denom;
        if (std::isfinite(fit) && fit > 0.0) {
            a = fit;
        }
    }

    double a_prev = 0.0;
    double f_prev = f0;
    double dphi_prev = dphi0;
    for (int i = 0; i < 20; ++i) {
        const double fa = phi(a);
        if (fa > f0 + c1 * a * dphi0 || (i > 0 && fa >= f_prev)) {
            return zoom(a_prev, f_prev, dphi_prev, a, fa);
        }
        Vector ga = phi_grad(a);
        const double dphia = ga.dot(dir);
        if (std::abs(dphia) <= -c2 * dphi0) {
            return {a, fa, std::move(ga), true};
        }
        if (dphia >= 0.0) {
            return zoom(a, fa, dphia, a_prev, f_prev);
        }
        a_prev = a;
        f_prev = fa;
        dphi_prev = dphia;
        a *= 2.0;
        if (!std::isfinite(a) || a > 1e12) {
            break;
        }
    }
    return {};
}

}  // namespace detail

/// Minimizes ||r(x, u)||^2 over u with Polak-Ribiere nonlinear conjugate
/// gradients (non-negative beta, restart on loss of descent) and a strong
/// Wolfe line search. With an exact line search the method terminates on a
/// k-dimensional quadratic within k iterations, which the quadratic-fit
/// first trial preserves in practice.
[[nodiscard]] inline NlsResult solve_nls_detailed(const UIEstimator& est, const Vector& x,
                                                  const Vector& warm,
                                                  const NlsOptions& opts = {}) {
    if (est.kind != UIEstimator::Kind::residual || !est.residual) {
        throw Error("solve_nls: estimator has no residual");
    }
    const auto value = [&](const Vector& u) {
        const Vector r = est.residual(x, u);
        if (!all_finite(r)) {
            throw NonFiniteEvaluation("solve_nls: residual is non-finite");
        }
        return r.squaredNorm();
    };
    const auto grad = [&](const Vector& u) {
        const Vector r = est.residual(x, u);
        const Matrix ju =
            est.residual_du
                ? est.residual_du(x, u)
                : finite_diff_jacobian([&](const Vector& p) { return est.residual(x, p); },
                                       u, opts.fd_step);
        Vector g = 2.0 * ju.transpose() * r;
        if (!all_finite(g)) {
            throw NonFiniteEvaluation("solve_nls: gradient is non-finite");
        }
        return g;
    };

    NlsResult result;
    result.u = warm;
    double f = value(result.u);
    Vector g = grad(result.u);
    Vector dir = -g;
    while (result.iters < opts.max_iters) {
        if (g.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
            result.converged = true;
            return result;
        }
        double dphi0 = g.dot(dir);
        if (dphi0 >= 0.0) {
            dir = -g;
            dphi0 = g.dot(dir);
            if (dphi0 >= 0.0) {
                result.converged = true;  // gradient numerically zero
                return result;
            }
        }
        const detail::WolfePoint pt =
            detail::wolfe_line_search(value, grad, result.u, dir, f, dphi0);
        if (!pt.ok || pt.alpha <= 0.0) {
            return result;  // no further progress possible
        }
        const Vector step = pt.alpha * dir;
        result.u += step;
        ++result.iters;
        if (step.norm() <= opts.step_tol * (1.0 + result.u.norm())) {
            result.converged = true;
            return result;
        }
        const double gg = g.squaredNorm();
        const double beta = gg > 0.0 ? std::max(0.0, pt.g.dot(pt.g - g) / gg) : 0.0;
        dir = -pt.g + beta * dir;
        g = pt.g;
        f = pt.f;
    }
    return result;
}

[[nodiscard]] inline Vector solve_nls(const UIEstimator& est, const Vector& x,
                                      const Vector& warm, const NlsOptions& opts = {}) {
    return solve_nls_detailed(est, x, warm, opts).u;
}

/// Unknown-input estimate at state x: the residual minimizer for residual
/// models, phi(x) for direct models.
[[nodiscard]] inline NlsResult estimate_ui(const UIEstimator& est, const Vector& x,
                                           const Vector& warm, const NlsOptions& opts = {}) {
    if (est.kind == UIEstimator::Kind::direct) {
        if (!est.direct) {
            throw Error("estimate_ui: estimator has no direct map");
        }
        NlsResult result;
        result.u = est.direct(x);
        if (!all_finite(result.u)) {
            throw NonFiniteEvaluation("estimate_ui: direct map is non-finite");
        }
        result.converged = true;
        return result;
    }
    return solve_nls_detailed(est, x, warm, opts);
}

struct UiSensitivityOptions {
    bool negate = false;      // flip the overall sign of the sensitivity
    double fd_step = 1e-6;
    double pinv_tol = 1e-12;
};

/// First-order sensitivity M (d x n) of the UI estimate to the state.
/// Residual models compose the pseudo-inverse of the input Jacobian with
/// the state Jacobian of the residual at (x, u); direct models return the
/// Jacobian of phi at x. Derivatives fall back to central differences when
/// no analytic form is registered.
[[nodiscard]] inline Matrix ui_sensitivity(const UIEstimator& est, const Vector& x,
                                           const Vector& u,
                                           const UiSensitivityOptions& opts = {}) {
    Matrix m;
    if (est.kind == UIEstimator::Kind::direct) {
        m = est.direct_dx ? est.direct_dx(x)
                          : finite_diff_jacobian(est.direct, x, opts.fd_step);
    } else {
        const Matrix ju =
            est.residual_du
                ? est.residual_du(x, u)
                : finite_diff_jacobian([&](const Vector& p) { return est.residual(x, p); },
                                       u, opts.fd_step);
        const Matrix jx =
            est.residual_dx
                ? est.residual_dx(x, u)
                : finite_diff_jacobian([&](const Vector& p) { return est.residual(p, u); },
                                       x, opts.fd_step);
        m = pseudo_inverse(ju, opts.pinv_tol) * jx;
    }
    if (opts.negate) {
        m = -m;
    }
    return m;
}

}  // namespace nuikf
