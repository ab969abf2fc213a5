#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <utility>
#include <vector>

#include "nuikf/filters.hpp"

namespace nuikf {

/// Per-step scalar envelope of the linearized filter matrices, feeding the
/// stochastic error-bound recursion. Upper bounds are largest singular
/// values, lower bounds smallest ones; for a wide or tall matrix whose
/// Gram form cannot reach full rank the lower bound is zero and
/// `rank_deficient` is set (the formulas below then simply receive zero
/// contributions from those terms).
struct BoundScalars {
    double f_max = 0.0;   // state Jacobian at the posterior estimate
    double g_max = 0.0;   // input Jacobian, largest
    double g_min = 0.0;   // input Jacobian, smallest (over G G^T)
    double h_max = 0.0;   // measurement Jacobian at the prior estimate
    double h_min = 0.0;   // smallest over H H^T
    double m_max = 0.0;   // UI sensitivity
    double p_max = 0.0;   // posterior state covariance eigenvalue range
    double p_min = 0.0;
    double q_min = 0.0;
    double e_min = 0.0;   // zero when the filter carries no E
    double r_max = 0.0;
    double r_min = 0.0;
    bool rank_deficient = false;
};

/// Spectral bounds of the true noise sources: process noise w, UI
/// estimation error, measurement noise v.
struct NoiseDeltas {
    double w = 0.0;
    double ui = 0.0;
    double v = 0.0;
};

struct Dims {
    Index n = 0;
    Index d = 0;
    Index m = 0;
};

namespace detail {

/// Eigenvalue range of a symmetric matrix.
[[nodiscard]] inline std::pair<double, double> sym_eig_range(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(a), Eigen::EigenvaluesOnly);
    const Vector& ev = eig.eigenvalues();
    return {ev.minCoeff(), ev.maxCoeff()};
}

/// Singular-value envelope of a general matrix A, with the lower value
/// taken over A A^T: zero whenever A has fewer columns than rows.
[[nodiscard]] inline std::pair<double, double> gram_sv_range(const Matrix& a) {
    Eigen::JacobiSVD<Matrix> svd(a);
    const Vector& sv = svd.singularValues();
    if (sv.size() == 0) {
        return {0.0, 0.0};
    }
    const double hi = sv(0);
    const double lo = a.cols() < a.rows() ? 0.0 : sv(sv.size() - 1);
    return {lo, hi};
}

}  // namespace detail

/// Extracts the per-step scalar envelope from a filter run: F and G at the
/// posterior state and UI estimates, H at the prior estimate, M from the
/// UI model, the posterior covariance eigenvalue range, and the constant
/// Q / E / R envelopes from the filter parameters.
[[nodiscard]] inline std::vector<BoundScalars> extract_bound_inputs(
    const SystemModel& model, const UIEstimator& est, const FilterParams& params,
    const FilterRun& run) {
    const auto [q_min, q_max] = detail::sym_eig_range(params.q.matrix());
    (void)q_max;
    const auto [r_min, r_max] = detail::sym_eig_range(params.r.matrix());
    const double e_min =
        params.e ? detail::sym_eig_range(params.e->matrix()).first : 0.0;

    std::vector<BoundScalars> out;
    out.reserve(run.steps.size());
    const Vector* prior_mean = &run.init.mean;
    for (const StepOutput& step : run.steps) {
        BoundScalars s;
        const Matrix f = state_jacobian(model, step.posterior.mean, step.ui);
        const Matrix g = input_jacobian(model, step.posterior.mean, step.ui);
        const Matrix h = measurement_jacobian(model, *prior_mean);
        const Matrix m = ui_sensitivity(est, step.posterior.mean, step.ui,
                                        params.sensitivity);
        s.f_max = detail::gram_sv_range(f).second;
        std::tie(s.g_min, s.g_max) = detail::gram_sv_range(g);
        std::tie(s.h_min, s.h_max) = detail::gram_sv_range(h);
        s.m_max = detail::gram_sv_range(m).second;
        std::tie(s.p_min, s.p_max) = detail::sym_eig_range(step.posterior.cov.matrix());
        s.q_min = q_min;
        s.e_min = e_min;
        s.r_max = r_max;
        s.r_min = r_min;
        s.rank_deficient = s.g_min <= 1e-9 * s.g_max || s.h_min <= 1e-9 * s.h_max ||
                           s.q_min <= 0.0 || s.e_min <= 0.0;
        out.push_back(s);
        prior_mean = &step.prior_next.mean;
    }
    return out;
}

struct LambdaSigma {
    double lambda = 1.0;
    double sigma = 0.0;
};

/// Contraction rate of the mean-square error recursion between steps t and
/// t + 1:
///   lambda = 1 + (q_min + g_min^2 e_min
///                 + p_min'^2 h_min'^2 / (r_max' (1 + p_max' h_max'^2 / r_min')^2))
///               / (p_max (f_max + g_max m_max)^2)
///   sigma  = 1 - 1 / lambda
/// Primed quantities come from step t + 1. Degenerate lower bounds drive
/// lambda to 1 and sigma to 0; a zero denominator throws DivisionByZero.
[[nodiscard]] inline LambdaSigma lambda_sigma(const BoundScalars& cur,
                                              const BoundScalars& nxt) {
    const double gain = cur.f_max + cur.g_max * cur.m_max;
    const double denom = cur.p_max * gain * gain;
    if (denom == 0.0) {
        throw DivisionByZero("lambda_sigma: p_max (f_max + g_max m_max)^2 is zero");
    }
    const double shrink = 1.0 + nxt.p_max * nxt.h_max * nxt.h_max / nxt.r_min;
    const double inner = nxt.r_max * shrink * shrink;
    if (inner == 0.0) {
        throw DivisionByZero("lambda_sigma: measurement envelope is zero");
    }
    const double numer = cur.q_min + cur.g_min * cur.g_min * cur.e_min +
                         nxt.p_min * nxt.p_min * nxt.h_min * nxt.h_min / inner;
    LambdaSigma out;
    out.lambda = 1.0 + numer / denom;
    out.sigma = 1.0 - 1.0 / out.lambda;
    return out;
}

/// Per-step noise inflow:
///   gamma = 1/p_min + 2 h_max^2 / r_min + p_max h_max^4 / r_min^2
///   mu    = n gamma delta_w + d g_max^2 gamma delta_ui
///           + m (p_max' h_max'^2 / r_min'^2) delta_v
/// with primed quantities from step t + 1.
[[nodiscard]] inline double mu(const BoundScalars& cur, const BoundScalars& nxt,
                               const Dims& dims, const NoiseDeltas& deltas) {
    if (cur.p_min <= 0.0 || cur.r_min <= 0.0 || nxt.r_min <= 0.0) {
        throw DivisionByZero("mu: p_min or r_min is zero");
    }
    const double h2 = cur.h_max * cur.h_max;
    const double gamma = 1.0 / cur.p_min + 2.0 * h2 / cur.r_min +
                         cur.p_max * h2 * h2 / (cur.r_min * cur.r_min);
    const double c_w = static_cast<double>(dims.n) * gamma;
    const double c_ui = static_cast<double>(dims.d) * cur.g_max * cur.g_max * gamma;
    const double c_v = static_cast<double>(dims.m) * nxt.p_max * nxt.h_max * nxt.h_max /
                       (nxt.r_min * nxt.r_min);
    return c_w * deltas.w + c_ui * deltas.ui + c_v * deltas.v;
}

struct BoundTrace {
    std::vector<double> lambda;   // size T - 1
    std::vector<double> sigma;    // size T - 1
    std::vector<double> mu;       // size T - 1
    std::vector<double> bound;    // size T, bound[t] >= mean-square error at t
};

/// Mean-square error bound recursion:
///   B_t = p_max_t [ E0 / p_min_0 * prod_{i<t} (1 - sigma_i)
///                   + sum_{i<t} mu_i prod_{j=i+1}^{t-1} (1 - sigma_j) ]
/// rolled forward with O(1) work per step. `init_ms_error` is E0, the
/// mean-square estimation error at t = 0.
[[nodiscard]] inline BoundTrace error_bound_trace(const std::vector<BoundScalars>& scalars,
                                                  const Dims& dims,
                                                  const NoiseDeltas& deltas,
                                                  double init_ms_error) {
    BoundTrace trace;
    if (scalars.empty()) {
        return trace;
    }
    if (scalars.front().p_min <= 0.0) {
        throw DivisionByZero("error_bound_trace: initial p_min is zero");
    }
    const std::size_t steps = scalars.size();
    trace.lambda.reserve(steps - 1);
    trace.sigma.reserve(steps - 1);
    trace.mu.reserve(steps - 1);
    trace.bound.reserve(steps);

    double decay = 1.0;      // prod_{i<t} (1 - sigma_i)
    double inflow = 0.0;     // sum_{i<t} mu_i prod_{j>i}^{t-1} (1 - sigma_j)
    trace.bound.push_back(scalars.front().p_max * init_ms_error / scalars.front().p_min);
    for (std::size_t t = 1; t < steps; ++t) {
        const LambdaSigma ls = lambda_sigma(scalars[t - 1], scalars[t]);
        const double inflow_t = mu(scalars[t - 1], scalars[t], dims, deltas);
        trace.lambda.push_back(ls.lambda);
        trace.sigma.push_back(ls.sigma);
        trace.mu.push_back(inflow_t);
        decay *= 1.0 - ls.sigma;
        inflow = inflow * (1.0 - ls.sigma) + inflow_t;
        trace.bound.push_back(scalars[t].p_max *
                              (init_ms_error / scalars.front().p_min * decay + inflow));
    }
    return trace;
}

/// Recomputes the bound trace with the UI error covariance envelope set to
/// `e_scale` (both the e_min entry of every step and delta_ui), leaving
/// the extracted filter scalars untouched otherwise.
[[nodiscard]] inline BoundTrace bound_trace_with_ui_scale(std::vector<BoundScalars> scalars,
                                                          double e_scale, const Dims& dims,
                                                          NoiseDeltas deltas,
                                                          double init_ms_error) {
    for (BoundScalars& s : scalars) {
        s.e_min = e_scale;
    }
    deltas.ui = e_scale;
    return error_bound_trace(scalars, dims, deltas, init_ms_error);
}

struct TuneCandidate {
    double e = 0.0;
    long violations = 0;      // post-transient steps with mse > bound
    double coverage = 0.0;    // fraction of post-transient steps dominated
    bool feasible = false;
};

struct TuneResult {
    std::vector<TuneCandidate> candidates;
    bool any_feasible = false;
    double chosen = 0.0;      // smallest feasible grid value
};

/// Grid search over the UI error covariance scale: for each candidate the
/// bound trace is recomputed against the fixed empirical mean-square error
/// curve, and the smallest candidate whose coverage reaches
/// `coverage_required` beyond the transient cutoff is selected. The bound
/// is pointwise nondecreasing in the candidate, so feasibility is
/// monotone along a sorted grid.
[[nodiscard]] inline TuneResult tune_ui_covariance(
    const std::vector<BoundScalars>& scalars, const Dims& dims, const NoiseDeltas& deltas,
    double init_ms_error, const std::vector<double>& mse_curve,
    const std::vector<double>& grid, double coverage_required, long transient_cutoff) {
    if (mse_curve.size() != scalars.size()) {
        throw DimensionMismatch("tune_ui_covariance: curve and scalars disagree");
    }
    TuneResult result;
    result.candidates.reserve(grid.size());
    for (const double e : grid) {
        const BoundTrace trace =
            bound_trace_with_ui_scale(scalars, e, dims, deltas, init_ms_error);
        TuneCandidate cand;
        cand.e = e;
        long considered = 0;
        for (std::size_t t = static_cast<std::size_t>(std::max<long>(transient_cutoff, 0));
             t < mse_curve.size(); ++t) {
            ++considered;
            if (mse_curve[t] > trace.bound[t]) {
                ++cand.violations;
            }
        }
        cand.coverage =
            considered > 0
                ? 1.0 - static_cast<double>(cand.violations) / static_cast<double>(considered)
                : 1.0;
        cand.feasible = cand.coverage >= coverage_required;
        if (cand.feasible && (!result.any_feasible || e < result.chosen)) {
            result.any_feasible = true;
            result.chosen = e;
        }
        result.candidates.push_back(cand);
    }
    return result;
}

}  // namespace nuikf
