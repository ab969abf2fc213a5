#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "nuikf/optimize.hpp"
#include "nuikf/sigma.hpp"

namespace nuikf {

struct GaussianBelief {
    Vector mean;
    SpdMatrix cov;
};

struct FilterParams {
    double spread = 1.0;             // sigma spread parameter a
    SpdMatrix q;                     // process noise covariance
    SpdMatrix r;                     // measurement noise covariance
    std::optional<SpdMatrix> e;      // UI estimation error covariance (nUI family only)
    NlsOptions nls{};
    UiSensitivityOptions sensitivity{};

    FilterParams(SpdMatrix q_in, SpdMatrix r_in) : q(std::move(q_in)), r(std::move(r_in)) {}
};

/// Output of one filter step at time t, consuming measurement y_t.
/// `ui_cov` is SPD for the nUI family; for the two-stage baselines it is
/// the PSD innovation-noise image and zero for the plain filters.
struct StepOutput {
    GaussianBelief posterior;    // state estimate after the measurement update
    Vector ui;                   // unknown-input estimate
    Matrix ui_cov;               // P_uu, d x d
    Matrix cross_xu;             // P_xu, n x d
    GaussianBelief prior_next;   // predicted belief consumed at t + 1
    Vector innovation;
    int nls_iters = 0;           // inner solver iterations spent this step
    bool ls_singular = false;    // baseline least-squares channel vanished
};

/// Scheme variants of the joint state/UI filters:
///   full                  - UI from fresh posterior sigma points, joint
///                           state-UI prediction.
///   prior_point_ui        - UI estimation reuses the prior sigma points
///                           from the measurement update.
///   decoupled_prediction  - prediction uses state-only sigma points with
///                           the UI mean held fixed (no joint covariance,
///                           no E term in the prediction).
enum class NuiVariant { full, prior_point_ui, decoupled_prediction };

namespace detail {

[[nodiscard]] inline SpdMatrix spd_from(Matrix a) { return SpdMatrix(symmetrize(std::move(a))); }

struct SpkfCorrection {
    SigmaEnsemble ens;        // ensemble generated from the prior
    Vector yhat;
    Matrix pyy;               // innovation covariance, includes R
    Matrix gain;
    Vector innovation;
    GaussianBelief posterior;
};

/// Sigma-point measurement update. Posterior covariance is
/// P - K Pyy K^T, symmetrized before revalidation.
[[nodiscard]] inline SpkfCorrection spkf_correct(const SystemModel& model,
                                                 const GaussianBelief& prior,
                                                 const SpdMatrix& r, double spread,
                                                 const Vector& y) {
    if (y.size() != model.m) {
        throw DimensionMismatch("spkf_correct: measurement dimension disagrees");
    }
    SigmaEnsemble ens = sigma_points(prior.mean, prior.cov, spread);
    std::vector<Vector> ypts;
    ypts.reserve(ens.points.size());
    for (const Vector& p : ens.points) {
        ypts.push_back(model.h(p));
    }
    const Vector yhat = weighted_mean(ypts, ens.weights);
    const SpdMatrix pyy = spd_from(weighted_cov(ypts, yhat, ens.weights) + r.matrix());
    const Matrix pxy = weighted_cross_cov(ens.points, prior.mean, ypts, yhat, ens.weights);
    Matrix gain = pyy.solve(pxy.transpose()).transpose();
    Vector innovation = y - yhat;
    Vector mean = prior.mean + gain * innovation;
    Matrix cov = prior.cov.matrix() - gain * pyy.matrix() * gain.transpose();
    GaussianBelief posterior{std::move(mean), spd_from(std::move(cov))};
    return {std::move(ens), yhat,           pyy.matrix(),
            std::move(gain), std::move(innovation), std::move(posterior)};
}

struct UiFromEnsemble {
    Vector mean;    // weighted UI estimate
    Matrix cov;     // P_uu including E
    Matrix cross;   // P_xu about the ensemble center
    int iters = 0;
};

/// Solves the UI model independently at every sigma point and forms the
/// weighted UI moments. Every solve starts from `warm` so the points stay
/// decoupled; with a zero start each one is the minimum-norm fit for its
/// own sigma point.
[[nodiscard]] inline UiFromEnsemble estimate_ui_over_ensemble(
    const UIEstimator& est, const SigmaEnsemble& ens, const Vector& center,
    const SpdMatrix& e, const NlsOptions& nls, const Vector& warm) {
    std::vector<Vector> upts;
    upts.reserve(ens.points.size());
    int iters = 0;
    for (const Vector& pt : ens.points) {
        NlsResult fit = estimate_ui(est, pt, warm, nls);
        iters += fit.iters;
        upts.push_back(std::move(fit.u));
    }
    Vector uhat = weighted_mean(upts, ens.weights);
    Matrix cov = weighted_cov(upts, uhat, ens.weights) + e.matrix();
    Matrix cross = weighted_cross_cov(ens.points, center, upts, uhat, ens.weights);
    return {std::move(uhat), std::move(cov), std::move(cross), iters};
}

/// Joint prediction: sigma points over the stacked (x, u) belief are
/// pushed through f and re-moment-matched, plus Q.
[[nodiscard]] inline GaussianBelief spkf_joint_predict(const SystemModel& model,
                                                       const Vector& xmean,
                                                       const SpdMatrix& pxx,
                                                       const Vector& umean,
                                                       const Matrix& pxu, const Matrix& puu,
                                                       const SpdMatrix& q, double spread) {
    const Index n = model.n;
    const Index d = model.d;
    Vector z(n + d);
    z << xmean, umean;
    Matrix pz(n + d, n + d);
    pz.topLeftCorner(n, n) = pxx.matrix();
    pz.topRightCorner(n, d) = pxu;
    pz.bottomLeftCorner(d, n) = pxu.transpose();
    pz.bottomRightCorner(d, d) = symmetrize(puu);
    const SpdMatrix joint = spd_from(std::move(pz));
    SigmaEnsemble ens = sigma_points(z, joint, spread);
    std::vector<Vector> xpts;
    xpts.reserve(ens.points.size());
    for (const Vector& p : ens.points) {
        xpts.push_back(model.f(p.head(n), p.tail(d)));
    }
    Vector mean = weighted_mean(xpts, ens.weights);
    Matrix cov = weighted_cov(xpts, mean, ens.weights) + q.matrix();
    return {std::move(mean), spd_from(std::move(cov))};
}

/// State-only prediction with the input held fixed at `u`.
[[nodiscard]] inline GaussianBelief spkf_predict_fixed_input(const SystemModel& model,
                                                             const GaussianBelief& post,
                                                             const Vector& u,
                                                             const SpdMatrix& q,
                                                             double spread) {
    SigmaEnsemble ens = sigma_points(post.mean, post.cov, spread);
    std::vector<Vector> xpts;
    xpts.reserve(ens.points.size());
    for (const Vector& p : ens.points) {
        xpts.push_back(model.f(p, u));
    }
    Vector mean = weighted_mean(xpts, ens.weights);
    Matrix cov = weighted_cov(xpts, mean, ens.weights) + q.matrix();
    return {std::move(mean), spd_from(std::move(cov))};
}

}  // namespace detail

/// One step of the sigma-point filter with nonlinear UI estimation.
///
/// Measurement update on the prior, per-sigma-point UI estimation with
/// additive covariance E, then joint prediction over the stacked state-UI
/// belief (or the reduced schemes selected by `variant`). Each step's UI
/// solve starts from zero, so an under-determined UI model yields the
/// minimum-norm estimate; the UI sensitivity used elsewhere is the
/// derivative of exactly that minimum-norm solution map, and a fresh start
/// keeps past estimates from dragging the solution along null directions.
[[nodiscard]] inline StepOutput spkf_nui_step(const SystemModel& model, const UIEstimator& est,
                                              const FilterParams& params,
                                              const GaussianBelief& prior, const Vector& y,
                                              NuiVariant variant) {
    if (!params.e) {
        throw Error("spkf_nui_step: params.e is required");
    }
    detail::SpkfCorrection corr = detail::spkf_correct(model, prior, params.r, params.spread, y);

    const bool from_prior = variant == NuiVariant::prior_point_ui;
    const SigmaEnsemble ui_ens =
        from_prior ? std::move(corr.ens)
                   : sigma_points(corr.posterior.mean, corr.posterior.cov, params.spread);
    const Vector& ui_center = from_prior ? prior.mean : corr.posterior.mean;
    detail::UiFromEnsemble ui = detail::estimate_ui_over_ensemble(
        est, ui_ens, ui_center, *params.e, params.nls, Vector::Zero(est.d));

    GaussianBelief prior_next =
        variant == NuiVariant::decoupled_prediction
            ? detail::spkf_predict_fixed_input(model, corr.posterior, ui.mean, params.q,
                                               params.spread)
            : detail::spkf_joint_predict(model, corr.posterior.mean, corr.posterior.cov,
                                         ui.mean, ui.cross, ui.cov, params.q, params.spread);

    return StepOutput{std::move(corr.posterior),
                      std::move(ui.mean),
                      std::move(ui.cov),
                      std::move(ui.cross),
                      std::move(prior_next),
                      std::move(corr.innovation),
                      ui.iters,
                      false};
}

/// First-order counterpart of spkf_nui_step. The measurement update uses
/// the analytic (or finite-difference) measurement Jacobian, the UI is
/// estimated once at the posterior mean (prior mean for prior_point_ui),
/// and the prediction covariance is J P J^T + G E G^T + Q with
/// J = F + G M, M the UI sensitivity (F P F^T + Q for
/// decoupled_prediction).
[[nodiscard]] inline StepOutput ekf_nui_step(const SystemModel& model, const UIEstimator& est,
                                             const FilterParams& params,
                                             const GaussianBelief& prior, const Vector& y,
                                             NuiVariant variant) {
    if (!params.e) {
        throw Error("ekf_nui_step: params.e is required");
    }
    if (y.size() != model.m) {
        throw DimensionMismatch("ekf_nui_step: measurement dimension disagrees");
    }
    const Matrix hx = measurement_jacobian(model, prior.mean);
    Vector innovation = y - model.h(prior.mean);
    const SpdMatrix s =
        detail::spd_from(hx * prior.cov.matrix() * hx.transpose() + params.r.matrix());
    const Matrix gain = s.solve(hx * prior.cov.matrix()).transpose();
    Vector xpost = prior.mean + gain * innovation;
    const Matrix ikh = Matrix::Identity(model.n, model.n) - gain * hx;
    GaussianBelief posterior{std::move(xpost), detail::spd_from(ikh * prior.cov.matrix())};

    const Vector& x_ui =
        variant == NuiVariant::prior_point_ui ? prior.mean : posterior.mean;
    NlsResult ui = estimate_ui(est, x_ui, Vector::Zero(est.d), params.nls);
    const Matrix sens = ui_sensitivity(est, x_ui, ui.u, params.sensitivity);
    Matrix cross = posterior.cov.matrix() * sens.transpose();
    Matrix ui_cov = sens * posterior.cov.matrix() * sens.transpose() + params.e->matrix();

    const Matrix f = state_jacobian(model, posterior.mean, ui.u);
    Vector xnext = model.f(posterior.mean, ui.u);
    Matrix pnext;
    if (variant == NuiVariant::decoupled_prediction) {
        pnext = f * posterior.cov.matrix() * f.transpose() + params.q.matrix();
    } else {
        const Matrix g = input_jacobian(model, posterior.mean, ui.u);
        const Matrix j = f + g * sens;
        pnext = j * posterior.cov.matrix() * j.transpose() +
                g * params.e->matrix() * g.transpose() + params.q.matrix();
    }
    GaussianBelief prior_next{std::move(xnext), detail::spd_from(std::move(pnext))};

    return StepOutput{std::move(posterior), std::move(ui.u),     std::move(ui_cov),
                      std::move(cross),     std::move(prior_next), std::move(innovation),
                      ui.iters,             false};
}

enum class BaselineFamily { sigma_point, extended };
enum class BaselineScheme { pinv_ls, mvu_ls, none };

/// Two-stage baseline step. Stage order per step: innovation on the
/// incoming prior (which was predicted with u = 0), linear least-squares
/// UI estimate through the linearized input channel S = H G, prior repair
/// with the estimated input and its noise image, a second measurement
/// update on the repaired prior, and prediction to the next step with
/// u = 0. `none` skips UI handling entirely and reduces to the standard
/// sigma-point or extended filter.
///
/// The mvu_ls gain is (S^T Ryy^-1 S)^+ S^T Ryy^-1 with Ryy the innovation
/// covariance; pinv_ls uses the unweighted pseudo-inverse S^+. A vanishing
/// channel (||S|| ~ 0) flags ls_singular and holds the previous estimate.
[[nodiscard]] inline StepOutput baseline_step(const SystemModel& model,
                                              const FilterParams& params,
                                              const GaussianBelief& prior, const Vector& y,
                                              BaselineFamily family, BaselineScheme scheme,
                                              const Vector& prev_ui) {
    if (y.size() != model.m) {
        throw DimensionMismatch("baseline_step: measurement dimension disagrees");
    }
    const Index n = model.n;
    const Index d = model.d;
    const Vector zero_u = Vector::Zero(d);

    const auto ekf_correct = [&](const GaussianBelief& from) {
        const Matrix hx = measurement_jacobian(model, from.mean);
        Vector innovation = y - model.h(from.mean);
        const SpdMatrix s =
            detail::spd_from(hx * from.cov.matrix() * hx.transpose() + params.r.matrix());
        const Matrix gain = s.solve(hx * from.cov.matrix()).transpose();
        Vector mean = from.mean + gain * innovation;
        const Matrix ikh = Matrix::Identity(n, n) - gain * hx;
        return std::pair<GaussianBelief, Vector>(
            {std::move(mean), detail::spd_from(ikh * from.cov.matrix())},
            std::move(innovation));
    };

    Vector uhat = Vector::Zero(d);
    Matrix ui_cov = Matrix::Zero(d, d);
    bool singular = false;
    Vector innovation;
    GaussianBelief posterior{Vector(), SpdMatrix::identity(1)};  // overwritten below

    if (scheme == BaselineScheme::none) {
        if (family == BaselineFamily::sigma_point) {
            detail::SpkfCorrection corr =
                detail::spkf_correct(model, prior, params.r, params.spread, y);
            posterior = std::move(corr.posterior);
            innovation = std::move(corr.innovation);
        } else {
            auto [post, innov] = ekf_correct(prior);
            posterior = std::move(post);
            innovation = std::move(innov);
        }
    } else {
        // Innovation and measurement linearization on the incoming prior.
        Matrix hx;
        Matrix pyy;
        if (family == BaselineFamily::sigma_point) {
            SigmaEnsemble ens = sigma_points(prior.mean, prior.cov, params.spread);
            std::vector<Vector> ypts;
            ypts.reserve(ens.points.size());
            for (const Vector& p : ens.points) {
                ypts.push_back(model.h(p));
            }
            const Vector yhat = weighted_mean(ypts, ens.weights);
            pyy = weighted_cov(ypts, yhat, ens.weights) + params.r.matrix();
            const Matrix pxy =
                weighted_cross_cov(ens.points, prior.mean, ypts, yhat, ens.weights);
            hx = prior.cov.solve(pxy).transpose();  // statistical linearization
            innovation = y - yhat;
        } else {
            hx = measurement_jacobian(model, prior.mean);
            pyy = hx * prior.cov.matrix() * hx.transpose() + params.r.matrix();
            innovation = y - model.h(prior.mean);
        }

        const Matrix g = input_jacobian(model, prior.mean, zero_u);
        const Matrix s = hx * g;
        GaussianBelief repaired = prior;
        if (s.norm() <= 1e-14) {
            singular = true;
            uhat = prev_ui;
        } else {
            const SpdMatrix pyy_spd = detail::spd_from(std::move(pyy));
            Matrix gain;
            if (scheme == BaselineScheme::mvu_ls) {
                const Matrix weighted = pyy_spd.solve(s);             // Ryy^-1 S
                const Matrix normal = s.transpose() * weighted;       // S^T Ryy^-1 S
                gain = pseudo_inverse(normal) * weighted.transpose();
            } else {
                gain = pseudo_inverse(s);
            }
            uhat = gain * innovation;
            ui_cov = gain * pyy_spd.matrix() * gain.transpose();
            repaired = GaussianBelief{
                prior.mean + g * uhat,
                detail::spd_from(prior.cov.matrix() + g * ui_cov * g.transpose())};
        }

        if (family == BaselineFamily::sigma_point) {
            detail::SpkfCorrection corr =
                detail::spkf_correct(model, repaired, params.r, params.spread, y);
            posterior = std::move(corr.posterior);
        } else {
            posterior = ekf_correct(repaired).first;
        }
    }

    GaussianBelief prior_next =
        family == BaselineFamily::sigma_point
            ? detail::spkf_predict_fixed_input(model, posterior, zero_u, params.q,
                                               params.spread)
            : [&] {
                  const Matrix f = state_jacobian(model, posterior.mean, zero_u);
                  Vector xnext = model.f(posterior.mean, zero_u);
                  Matrix pnext =
                      f * posterior.cov.matrix() * f.transpose() + params.q.matrix();
                  return GaussianBelief{std::move(xnext), detail::spd_from(std::move(pnext))};
              }();

    return StepOutput{std::move(posterior), std::move(uhat),      std::move(ui_cov),
                      Matrix::Zero(n, d),   std::move(prior_next), std::move(innovation),
                      0,                    singular};
}

/// The twelve filter configurations of the study bank.
enum class FilterKind {
    spkf_nui,
    spkf_nui_i,
    spkf_nui_ii,
    ekf_nui,
    ekf_nui_i,
    ekf_nui_ii,
    spkf_ui,
    spkf_mvu,
    ekf_ui,
    ekf_mvu,
    spkf_plain,
    ekf_plain,
};

[[nodiscard]] constexpr bool needs_ui_estimator(FilterKind kind) {
    switch (kind) {
        case FilterKind::spkf_nui:
        case FilterKind::spkf_nui_i:
        case FilterKind::spkf_nui_ii:
        case FilterKind::ekf_nui:
        case FilterKind::ekf_nui_i:
        case FilterKind::ekf_nui_ii:
            return true;
        default:
            return false;
    }
}

[[nodiscard]] inline StepOutput filter_step(const SystemModel& model, const UIEstimator* est,
                                            const FilterParams& params, FilterKind kind,
                                            const GaussianBelief& prior, const Vector& y,
                                            const Vector& prev_ui) {
    if (needs_ui_estimator(kind) && est == nullptr) {
        throw Error("filter_step: this filter kind requires a UI estimator");
    }
    switch (kind) {
        case FilterKind::spkf_nui:
            return spkf_nui_step(model, *est, params, prior, y, NuiVariant::full);
        case FilterKind::spkf_nui_i:
            return spkf_nui_step(model, *est, params, prior, y, NuiVariant::prior_point_ui);
        case FilterKind::spkf_nui_ii:
            return spkf_nui_step(model, *est, params, prior, y,
                                 NuiVariant::decoupled_prediction);
        case FilterKind::ekf_nui:
            return ekf_nui_step(model, *est, params, prior, y, NuiVariant::full);
        case FilterKind::ekf_nui_i:
            return ekf_nui_step(model, *est, params, prior, y, NuiVariant::prior_point_ui);
        case FilterKind::ekf_nui_ii:
            return ekf_nui_step(model, *est, params, prior, y,
                                NuiVariant::decoupled_prediction);
        case FilterKind::spkf_ui:
            return baseline_step(model, params, prior, y, BaselineFamily::sigma_point,
                                 BaselineScheme::pinv_ls, prev_ui);
        case FilterKind::spkf_mvu:
            return baseline_step(model, params, prior, y, BaselineFamily::sigma_point,
                                 BaselineScheme::mvu_ls, prev_ui);
        case FilterKind::ekf_ui:
            return baseline_step(model, params, prior, y, BaselineFamily::extended,
                                 BaselineScheme::pinv_ls, prev_ui);
        case FilterKind::ekf_mvu:
            return baseline_step(model, params, prior, y, BaselineFamily::extended,
                                 BaselineScheme::mvu_ls, prev_ui);
        case FilterKind::spkf_plain:
            return baseline_step(model, params, prior, y, BaselineFamily::sigma_point,
                                 BaselineScheme::none, prev_ui);
        case FilterKind::ekf_plain:
            return baseline_step(model, params, prior, y, BaselineFamily::extended,
                                 BaselineScheme::none, prev_ui);
    }
    throw Error("filter_step: unknown filter kind");
}

struct FilterRun {
    GaussianBelief init;              // prior consumed at t = 0
    std::vector<StepOutput> steps;    // one entry per measurement
};

/// Folds filter_step over the measurement sequence. The previous UI
/// estimate is threaded into each step for the two-stage baselines'
/// singular-channel fallback; the first step receives zeros.
[[nodiscard]] inline FilterRun run_filter(const SystemModel& model, const UIEstimator* est,
                                          const FilterParams& params, FilterKind kind,
                                          const GaussianBelief& init,
                                          const std::vector<Vector>& ys) {
    FilterRun run{init, {}};
    run.steps.reserve(ys.size());
    const GaussianBelief* prior = &run.init;
    Vector prev_ui = Vector::Zero(model.d);
    for (const Vector& y : ys) {
        StepOutput out = filter_step(model, est, params, kind, *prior, y, prev_ui);
        prev_ui = out.ui;
        run.steps.push_back(std::move(out));
        prior = &run.steps.back().prior_next;
    }
    return run;
}

}  // namespace nuikf
