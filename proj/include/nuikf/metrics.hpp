#pragma once

#include <cmath>
#include <vector>

#include "nuikf/matrix.hpp"

namespace nuikf {

namespace detail {

[[nodiscard]] inline std::size_t metric_start(std::size_t length, long cutoff,
                                              const char* what) {
    const std::size_t start = cutoff > 0 ? static_cast<std::size_t>(cutoff) : 0;
    if (start >= length) {
        throw DimensionMismatch(std::string(what) + ": cutoff leaves no samples");
    }
    return start;
}

[[nodiscard]] inline Vector time_mean(const std::vector<Vector>& xs, std::size_t start) {
    Vector mean = Vector::Zero(xs[start].size());
    for (std::size_t t = start; t < xs.size(); ++t) {
        mean += xs[t];
    }
    return mean / static_cast<double>(xs.size() - start);
}

}  // namespace detail

/// Normalized mean-square error of an estimate sequence against the truth:
/// sum of squared error norms over the squared deviation of the truth from
/// its time mean, both taken over steps t >= transient_cutoff. Zero for a
/// perfect estimate, one for predicting the signal mean.
[[nodiscard]] inline double nmse(const std::vector<Vector>& estimate,
                                 const std::vector<Vector>& truth, long transient_cutoff) {
    if (estimate.size() != truth.size() || truth.empty()) {
        throw DimensionMismatch("nmse: sequence lengths disagree");
    }
    const std::size_t start = detail::metric_start(truth.size(), transient_cutoff, "nmse");
    const Vector mean = detail::time_mean(truth, start);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t t = start; t < truth.size(); ++t) {
        num += (truth[t] - estimate[t]).squaredNorm();
        den += (truth[t] - mean).squaredNorm();
    }
    if (den == 0.0) {
        throw DivisionByZero("nmse: truth has no variance past the cutoff");
    }
    return num / den;
}

/// Signal-to-noise ratio in dB: 10 log10 of signal energy over the energy
/// of the mean-removed estimation error, over steps t >= transient_cutoff.
[[nodiscard]] inline double snr_db(const std::vector<Vector>& estimate,
                                   const std::vector<Vector>& truth, long transient_cutoff) {
    if (estimate.size() != truth.size() || truth.empty()) {
        throw DimensionMismatch("snr_db: sequence lengths disagree");
    }
    const std::size_t start = detail::metric_start(truth.size(), transient_cutoff, "snr_db");
    std::vector<Vector> errors;
    errors.reserve(truth.size());
    for (std::size_t t = 0; t < truth.size(); ++t) {
        errors.push_back(truth[t] - estimate[t]);
    }
    const Vector err_mean = detail::time_mean(errors, start);
    double signal = 0.0;
    double noise = 0.0;
    for (std::size_t t = start; t < truth.size(); ++t) {
        signal += truth[t].squaredNorm();
        noise += (errors[t] - err_mean).squaredNorm();
    }
    if (noise == 0.0) {
        throw DivisionByZero("snr_db: error has no variance past the cutoff");
    }
    return 10.0 * std::log10(signal / noise);
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

/// Monte-Carlo aggregate: mean and sample standard deviation (N - 1
/// normalization; zero when fewer than two samples).
[[nodiscard]] inline MeanStd mc_aggregate(const std::vector<double>& xs) {
    MeanStd out;
    if (xs.empty()) {
        return out;
    }
    for (const double x : xs) {
        out.mean += x;
    }
    out.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (const double x : xs) {
            ss += (x - out.mean) * (x - out.mean);
        }
        out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return out;
}

/// Per-step Monte-Carlo mean of squared error norms over runs; all runs
/// must share one horizon.
[[nodiscard]] inline std::vector<double> ms_error_curve(
    const std::vector<std::vector<Vector>>& estimates,
    const std::vector<std::vector<Vector>>& truths) {
    if (estimates.size() != truths.size() || estimates.empty()) {
        throw DimensionMismatch("ms_error_curve: run counts disagree");
    }
    const std::size_t horizon = truths.front().size();
    std::vector<double> curve(horizon, 0.0);
    for (std::size_t run = 0; run < truths.size(); ++run) {
        if (estimates[run].size() != horizon || truths[run].size() != horizon) {
            throw DimensionMismatch("ms_error_curve: horizons disagree");
        }
        for (std::size_t t = 0; t < horizon; ++t) {
            curve[t] += (truths[run][t] - estimates[run][t]).squaredNorm();
        }
    }
    for (double& v : curve) {
        v /= static_cast<double>(truths.size());
    }
    return curve;
}

}  // namespace nuikf
