#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "nuikf/bounds.hpp"
#include "nuikf/config.hpp"
#include "nuikf/crlb.hpp"
#include "nuikf/io.hpp"
#include "nuikf/metrics.hpp"

namespace nuikf {

namespace fs = std::filesystem;

/// Resolved artifact locations for one configuration. Everything lives
/// under <out>/<config-hash>/ so different configs never collide and a
/// later stage can find what an earlier one produced.
struct ArtifactPaths {
    fs::path root;
    fs::path trajectories;
    fs::path traces;
    fs::path metrics;
    fs::path report;
    fs::path manifest;
};

[[nodiscard]] inline ArtifactPaths artifact_paths(const ExperimentConfig& cfg) {
    ArtifactPaths p;
    p.root = fs::path(cfg.out) / config_hash(cfg);
    p.trajectories = p.root / "trajectories";
    p.traces = p.root / "traces";
    p.metrics = p.root / "metrics";
    p.report = p.root / "report";
    p.manifest = p.root / "manifest.json";
    return p;
}

[[nodiscard]] inline std::string run_file_name(long run) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "run_%04ld.csv", run);
    return buf;
}

namespace detail {

inline void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string());
    }
    out << content;
}

/// Serialized with sorted keys and a trailing newline; no timestamps, so
/// repeated invocations produce identical bytes.
inline void write_json_file(const fs::path& path, const Json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

[[nodiscard]] inline Json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

[[nodiscard]] inline Json load_manifest(const ArtifactPaths& paths) {
    if (fs::exists(paths.manifest)) {
        return read_json_file(paths.manifest);
    }
    return Json::object();
}

inline void record_stage(const ArtifactPaths& paths, const ExperimentConfig& cfg,
                         const std::string& stage, Json detail) {
    Json manifest = load_manifest(paths);
    manifest["config_hash"] = config_hash(cfg);
    Json cfg_json = config_to_json(cfg);
    cfg_json.erase("out");
    manifest["config"] = std::move(cfg_json);
    if (!manifest.contains("stages")) {
        manifest["stages"] = Json::object();
    }
    detail["done"] = true;
    manifest["stages"][stage] = std::move(detail);
    write_json_file(paths.manifest, manifest);
}

inline void require_stage(const ArtifactPaths& paths, const std::string& stage,
                          const std::string& consumer) {
    if (!fs::exists(paths.manifest)) {
        throw MissingArtifact(consumer + " requires `" + stage + "` artifacts; none found under " +
                              paths.root.string());
    }
    const Json manifest = read_json_file(paths.manifest);
    if (!manifest.contains("stages") || !manifest["stages"].contains(stage) ||
        manifest["stages"][stage].value("done", false) == false) {
        throw MissingArtifact(consumer + " requires the `" + stage + "` stage to have completed");
    }
}

/// Fans run indices out over `jobs` workers. Worker w handles runs
/// w, w + jobs, w + 2*jobs, ... — a fixed assignment, so outputs never
/// depend on thread scheduling. The first exception wins and is rethrown
/// on the calling thread.
inline void parallel_for_runs(long runs, long jobs, const std::function<void(long)>& fn) {
    const long workers = std::max<long>(1, std::min(jobs, runs));
    if (workers == 1) {
        for (long i = 0; i < runs; ++i) {
            fn(i);
        }
        return;
    }
    std::mutex error_mutex;
    std::exception_ptr first_error;
    std::atomic<bool> stop{false};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (long w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (long i = w; i < runs; i += workers) {
                if (stop.load(std::memory_order_relaxed)) {
                    return;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) {
                        first_error = std::current_exception();
                    }
                    stop.store(true, std::memory_order_relaxed);
                    return;
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

[[nodiscard]] inline Vector to_vector(const std::vector<double>& xs) {
    Vector v(static_cast<Index>(xs.size()));
    for (Index i = 0; i < v.size(); ++i) {
        v(i) = xs[static_cast<std::size_t>(i)];
    }
    return v;
}

[[nodiscard]] inline FilterParams materialize_filter_params(const ExperimentConfig& cfg,
                                                            const FilterSpec& spec,
                                                            const SystemModel& model) {
    FilterParams params(
        spec.process_noise.materialize(model.n, "filters." + spec.name + ".process_noise"),
        spec.measurement_noise.materialize(model.m, "filters." + spec.name + ".measurement_noise"));
    params.spread = spec.spread;
    if (spec.ui_cov) {
        params.e = spec.ui_cov->materialize(model.d, "filters." + spec.name + ".ui_cov");
    }
    params.nls = cfg.solver;
    return params;
}

[[nodiscard]] inline GaussianBelief initial_belief(const ExperimentConfig& cfg,
                                                   const SystemModel& model) {
    const Vector x0 = to_vector(cfg.init_x0);
    if (x0.size() != model.n) {
        throw ConfigInvalid("config.init.x0", "length disagrees with the model state dimension");
    }
    return GaussianBelief{x0, cfg.init_cov.materialize(model.n, "config.init.cov")};
}

[[nodiscard]] inline Trajectory load_run_trajectory(const ArtifactPaths& paths,
                                                    const SystemModel& model, long run) {
    const fs::path file = paths.trajectories / run_file_name(run);
    if (!fs::exists(file)) {
        throw MissingArtifact("trajectory file missing: " + file.string());
    }
    return read_trajectory_csv(file, model.n, model.d, model.m);
}

}  // namespace detail

/// Generates `runs` ground-truth trajectories, one CSV per run, each from
/// its own RNG stream split off the base seed.
inline void run_simulate(const ExperimentConfig& cfg) {
    const SystemModel model = rigid_link_model(cfg.model);
    const ArtifactPaths paths = artifact_paths(cfg);
    fs::create_directories(paths.trajectories);

    const Vector x0 = detail::to_vector(cfg.truth_x0);
    if (x0.size() != model.n) {
        throw ConfigInvalid("config.truth.x0", "length disagrees with the model state dimension");
    }
    const SpdMatrix q_true = cfg.truth_process_noise.materialize(model.n, "config.truth.process_noise");
    const SpdMatrix r_true =
        cfg.truth_measurement_noise.materialize(model.m, "config.truth.measurement_noise");
    const UiSignal ui =
        square_wave_ui(cfg.truth_ui.amplitude, cfg.truth_ui.omega, model.d, cfg.truth_ui.channel);
    const SeededRng base(cfg.seed);

    detail::parallel_for_runs(cfg.runs, cfg.jobs, [&](long run) {
        SeededRng rng = base.split(static_cast<std::uint64_t>(run));
        const Trajectory traj = simulate(model, x0, q_true, r_true, ui, cfg.horizon, rng);
        write_trajectory_csv(paths.trajectories / run_file_name(run), traj, model.n, model.d,
                             model.m);
    });

    Json stage;
    stage["runs"] = cfg.runs;
    stage["horizon"] = cfg.horizon;
    detail::record_stage(paths, cfg, "simulate", std::move(stage));
}

/// Per-filter Monte-Carlo aggregates plus the per-step mean-square error
/// curves the later stages consume.
struct EstimateSummary {
    struct FilterMetrics {
        std::string name;
        bool estimates_ui = false;
        MeanStd nmse_x, nmse_u, snr_x_db, snr_u_db;
    };
    std::vector<FilterMetrics> filters;
};

/// Runs every configured filter over the stored trajectories, writing one
/// trace CSV per (filter, run), aggregate metrics, and MC mean-square
/// error curves.
inline EstimateSummary run_estimate(const ExperimentConfig& cfg) {
    const SystemModel model = rigid_link_model(cfg.model);
    const UIEstimator est = quasi_static_estimator(cfg.model);
    const ArtifactPaths paths = artifact_paths(cfg);
    detail::require_stage(paths, "simulate", "estimate");
    fs::create_directories(paths.metrics);

    const GaussianBelief init = detail::initial_belief(cfg, model);
    std::vector<FilterParams> params;
    params.reserve(cfg.filters.size());
    for (const auto& spec : cfg.filters) {
        params.push_back(detail::materialize_filter_params(cfg, spec, model));
        fs::create_directories(paths.traces / spec.name);
    }

    const std::size_t nf = cfg.filters.size();
    const std::size_t nr = static_cast<std::size_t>(cfg.runs);
    const std::size_t horizon = static_cast<std::size_t>(cfg.horizon);
    // Indexed [filter][run]; workers own disjoint `run` slots, so no locking.
    std::vector<std::vector<double>> nmse_x(nf, std::vector<double>(nr));
    std::vector<std::vector<double>> nmse_u(nf, std::vector<double>(nr));
    std::vector<std::vector<double>> snr_x(nf, std::vector<double>(nr));
    std::vector<std::vector<double>> snr_u(nf, std::vector<double>(nr));
    std::vector<std::vector<std::vector<double>>> sq_x(
        nf, std::vector<std::vector<double>>(nr));
    std::vector<std::vector<std::vector<double>>> sq_u(
        nf, std::vector<std::vector<double>>(nr));

    detail::parallel_for_runs(cfg.runs, cfg.jobs, [&](long run) {
        const Trajectory traj = detail::load_run_trajectory(paths, model, run);
        if (traj.length() != cfg.horizon) {
            throw MissingArtifact("trajectory horizon disagrees with the config; re-run simulate");
        }
        for (std::size_t fi = 0; fi < nf; ++fi) {
            const FilterSpec& spec = cfg.filters[fi];
            const UIEstimator* est_ptr = needs_ui_estimator(spec.kind) ? &est : nullptr;
            const FilterRun result =
                run_filter(model, est_ptr, params[fi], spec.kind, init, traj.y);
            write_trace_csv(paths.traces / spec.name / run_file_name(run), result, model.n,
                            model.d, model.m);

            std::vector<Vector> xhat, uhat;
            xhat.reserve(horizon);
            uhat.reserve(horizon);
            for (const StepOutput& step : result.steps) {
                xhat.push_back(step.posterior.mean);
                uhat.push_back(step.ui);
            }
            const std::size_t r = static_cast<std::size_t>(run);
            nmse_x[fi][r] = nmse(xhat, traj.x, cfg.transient_cutoff);
            nmse_u[fi][r] = nmse(uhat, traj.u, cfg.transient_cutoff);
            snr_x[fi][r] = snr_db(xhat, traj.x, cfg.transient_cutoff);
            snr_u[fi][r] = snr_db(uhat, traj.u, cfg.transient_cutoff);
            auto& sx = sq_x[fi][r];
            auto& su = sq_u[fi][r];
            sx.resize(horizon);
            su.resize(horizon);
            for (std::size_t t = 0; t < horizon; ++t) {
                sx[t] = (traj.x[t] - xhat[t]).squaredNorm();
                su[t] = (traj.u[t] - uhat[t]).squaredNorm();
            }
        }
    });

    EstimateSummary summary;
    Json jmetrics = Json::object();
    CsvWriter csv(paths.metrics / "metrics.csv",
                  {"filter", "nmse_x_mean", "nmse_x_std", "nmse_u_mean", "nmse_u_std",
                   "snr_x_db_mean", "snr_x_db_std", "snr_u_db_mean", "snr_u_db_std"});
    for (std::size_t fi = 0; fi < nf; ++fi) {
        const FilterSpec& spec = cfg.filters[fi];
        EstimateSummary::FilterMetrics fm;
        fm.name = spec.name;
        fm.estimates_ui =
            spec.kind != FilterKind::spkf_plain && spec.kind != FilterKind::ekf_plain;
        fm.nmse_x = mc_aggregate(nmse_x[fi]);
        fm.nmse_u = mc_aggregate(nmse_u[fi]);
        fm.snr_x_db = mc_aggregate(snr_x[fi]);
        fm.snr_u_db = mc_aggregate(snr_u[fi]);
        Json jf;
        jf["algorithm"] = spec.algorithm;
        jf["estimates_ui"] = fm.estimates_ui;
        jf["nmse_x"] = {{"mean", fm.nmse_x.mean}, {"std", fm.nmse_x.std}};
        jf["snr_x_db"] = {{"mean", fm.snr_x_db.mean}, {"std", fm.snr_x_db.std}};
        std::vector<std::string> row{spec.name, format_float(fm.nmse_x.mean),
                                     format_float(fm.nmse_x.std)};
        if (fm.estimates_ui) {
            jf["nmse_u"] = {{"mean", fm.nmse_u.mean}, {"std", fm.nmse_u.std}};
            jf["snr_u_db"] = {{"mean", fm.snr_u_db.mean}, {"std", fm.snr_u_db.std}};
            row.insert(row.end(), {format_float(fm.nmse_u.mean), format_float(fm.nmse_u.std)});
        } else {
            row.insert(row.end(), {"", ""});
        }
        row.insert(row.end(), {format_float(fm.snr_x_db.mean), format_float(fm.snr_x_db.std)});
        if (fm.estimates_ui) {
            row.insert(row.end(),
                       {format_float(fm.snr_u_db.mean), format_float(fm.snr_u_db.std)});
        } else {
            row.insert(row.end(), {"", ""});
        }
        csv.row(row);
        jmetrics[spec.name] = std::move(jf);
        summary.filters.push_back(std::move(fm));
    }
    detail::write_json_file(paths.metrics / "metrics.json", jmetrics);

    // MC mean squared-error-norm per step, one column per filter.
    const auto write_curve = [&](const fs::path& file,
                                 const std::vector<std::vector<std::vector<double>>>& sq,
                                 bool ui_only) {
        std::vector<std::string> header{"t"};
        std::vector<std::size_t> cols;
        for (std::size_t fi = 0; fi < nf; ++fi) {
            if (ui_only && !summary.filters[fi].estimates_ui) {
                continue;
            }
            header.push_back(cfg.filters[fi].name);
            cols.push_back(fi);
        }
        CsvWriter out(file, header);
        std::vector<std::string> row;
        for (std::size_t t = 0; t < horizon; ++t) {
            row.clear();
            row.push_back(std::to_string(t));
            for (const std::size_t fi : cols) {
                double acc = 0.0;
                for (std::size_t r = 0; r < nr; ++r) {
                    acc += sq[fi][r][t];
                }
                row.push_back(format_float(acc / static_cast<double>(nr)));
            }
            out.row(row);
        }
    };
    write_curve(paths.metrics / "state_mse_curve.csv", sq_x, false);
    write_curve(paths.metrics / "ui_mse_curve.csv", sq_u, true);

    Json stage;
    stage["filters"] = Json::array();
    for (const auto& spec : cfg.filters) {
        stage["filters"].push_back(spec.name);
    }
    detail::record_stage(paths, cfg, "estimate", std::move(stage));
    return summary;
}

/// Outputs of the bound stage kept in memory for the acceptance checks.
struct BoundSummary {
    std::vector<double> mse_curve;      // MC mean squared state error per step
    std::vector<double> bound_curve;    // MC mean of per-run bound traces, reference E
    TuneResult tune;                    // grid search over the UI covariance scale
    long reference_violations = 0;
    double reference_coverage = 1.0;
};

/// Re-runs the bound target filter over the stored trajectories, extracts
/// the stability scalars per run, averages the per-run bound traces, and
/// grid-searches the UI covariance scale against the empirical error
/// curve. Also emits the estimation lower-bound trace for reference.
inline BoundSummary run_bound(const ExperimentConfig& cfg) {
    if (!cfg.bound) {
        throw ConfigInvalid("config.bound", "missing; the bound stage needs it");
    }
    const SystemModel model = rigid_link_model(cfg.model);
    const UIEstimator est = quasi_static_estimator(cfg.model);
    const ArtifactPaths paths = artifact_paths(cfg);
    detail::require_stage(paths, "simulate", "bound");
    fs::create_directories(paths.report);

    const FilterSpec& spec = cfg.filter_by_name(cfg.bound->filter);
    const FilterParams params = detail::materialize_filter_params(cfg, spec, model);
    const GaussianBelief init = detail::initial_belief(cfg, model);
    const SpdMatrix q_true = cfg.truth_process_noise.materialize(model.n, "config.truth.process_noise");
    const SpdMatrix r_true =
        cfg.truth_measurement_noise.materialize(model.m, "config.truth.measurement_noise");

    NoiseDeltas deltas;
    deltas.w = detail::sym_eig_range(q_true.matrix()).second;
    deltas.v = detail::sym_eig_range(r_true.matrix()).second;
    deltas.ui = params.e ? detail::sym_eig_range(params.e->matrix()).second : 0.0;
    const Dims dims{model.n, model.d, model.m};

    const std::size_t nr = static_cast<std::size_t>(cfg.runs);
    const std::size_t horizon = static_cast<std::size_t>(cfg.horizon);
    std::vector<std::vector<BoundScalars>> scalars(nr);
    std::vector<std::vector<double>> sq_err(nr);
    std::vector<std::vector<Matrix>> crlbs(nr);
    std::vector<double> init_err(nr);

    detail::parallel_for_runs(cfg.runs, cfg.jobs, [&](long run) {
        const Trajectory traj = detail::load_run_trajectory(paths, model, run);
        if (traj.length() != cfg.horizon) {
            throw MissingArtifact("trajectory horizon disagrees with the config; re-run simulate");
        }
        const std::size_t r = static_cast<std::size_t>(run);
        const FilterRun result = run_filter(model, &est, params, spec.kind, init, traj.y);
        scalars[r] = extract_bound_inputs(model, est, params, result);
        auto& sq = sq_err[r];
        sq.resize(horizon);
        for (std::size_t t = 0; t < horizon; ++t) {
            sq[t] = (traj.x[t] - result.steps[t].posterior.mean).squaredNorm();
        }
        init_err[r] = (traj.x.front() - init.mean).squaredNorm();
        crlbs[r] = crlb_trace(model, traj, q_true, r_true, init.cov);
    });

    BoundSummary summary;
    summary.mse_curve.assign(horizon, 0.0);
    for (std::size_t r = 0; r < nr; ++r) {
        for (std::size_t t = 0; t < horizon; ++t) {
            summary.mse_curve[t] += sq_err[r][t];
        }
    }
    for (double& v : summary.mse_curve) {
        v /= static_cast<double>(nr);
    }
    const double init_ms_error =
        std::accumulate(init_err.begin(), init_err.end(), 0.0) / static_cast<double>(nr);

    // Mean-of-traces aggregation: the bound recursion runs on each run's
    // own scalar sequence and the resulting traces are averaged per step.
    std::vector<double> lambda_mean(horizon > 0 ? horizon - 1 : 0, 0.0);
    std::vector<double> sigma_mean(lambda_mean.size(), 0.0);
    std::vector<double> mu_mean(lambda_mean.size(), 0.0);
    summary.bound_curve.assign(horizon, 0.0);
    for (std::size_t r = 0; r < nr; ++r) {
        const BoundTrace trace = error_bound_trace(scalars[r], dims, deltas, init_ms_error);
        for (std::size_t t = 0; t < horizon; ++t) {
            summary.bound_curve[t] += trace.bound[t];
        }
        for (std::size_t t = 0; t + 1 < horizon; ++t) {
            lambda_mean[t] += trace.lambda[t];
            sigma_mean[t] += trace.sigma[t];
            mu_mean[t] += trace.mu[t];
        }
    }
    for (double& v : summary.bound_curve) {
        v /= static_cast<double>(nr);
    }
    for (std::size_t t = 0; t + 1 < horizon; ++t) {
        lambda_mean[t] /= static_cast<double>(nr);
        sigma_mean[t] /= static_cast<double>(nr);
        mu_mean[t] /= static_cast<double>(nr);
    }

    const auto coverage_of = [&](const std::vector<double>& bound_curve, long& violations) {
        long considered = 0;
        violations = 0;
        for (std::size_t t = static_cast<std::size_t>(std::max<long>(cfg.transient_cutoff, 0));
             t < horizon; ++t) {
            ++considered;
            if (summary.mse_curve[t] > bound_curve[t]) {
                ++violations;
            }
        }
        return considered > 0 ? 1.0 - static_cast<double>(violations) /
                                          static_cast<double>(considered)
                              : 1.0;
    };
    summary.reference_coverage = coverage_of(summary.bound_curve, summary.reference_violations);

    // Grid search: per candidate, recompute every run's trace with the
    // candidate scale, average, and test coverage of the fixed MSE curve.
    summary.tune.candidates.reserve(cfg.bound->e_grid.size());
    for (const double e : cfg.bound->e_grid) {
        std::vector<double> cand_curve(horizon, 0.0);
        for (std::size_t r = 0; r < nr; ++r) {
            const BoundTrace trace =
                bound_trace_with_ui_scale(scalars[r], e, dims, deltas, init_ms_error);
            for (std::size_t t = 0; t < horizon; ++t) {
                cand_curve[t] += trace.bound[t];
            }
        }
        for (double& v : cand_curve) {
            v /= static_cast<double>(nr);
        }
        TuneCandidate cand;
        cand.e = e;
        cand.coverage = coverage_of(cand_curve, cand.violations);
        cand.feasible = cand.coverage >= cfg.bound->coverage;
        if (cand.feasible && (!summary.tune.any_feasible || e < summary.tune.chosen)) {
            summary.tune.any_feasible = true;
            summary.tune.chosen = e;
        }
        summary.tune.candidates.push_back(cand);
    }

    {
        CsvWriter csv(paths.report / "bound_trace.csv",
                      {"t", "bound", "mse", "lambda_mean", "sigma_mean", "mu_mean"});
        std::vector<std::string> row;
        for (std::size_t t = 0; t < horizon; ++t) {
            row.clear();
            row.push_back(std::to_string(t));
            row.push_back(format_float(summary.bound_curve[t]));
            row.push_back(format_float(summary.mse_curve[t]));
            if (t + 1 < horizon) {
                row.push_back(format_float(lambda_mean[t]));
                row.push_back(format_float(sigma_mean[t]));
                row.push_back(format_float(mu_mean[t]));
            } else {
                row.insert(row.end(), {"", "", ""});
            }
            csv.row(row);
        }
    }

    {
        // MC mean of the per-state lower-bound variances and their trace.
        CsvWriter csv(paths.report / "crlb_trace.csv", [&] {
            std::vector<std::string> header{"t", "crlb_trace"};
            for (Index i = 0; i < model.n; ++i) {
                header.push_back("crlb_x" + std::to_string(i + 1));
            }
            return header;
        }());
        std::vector<std::string> row;
        for (std::size_t t = 0; t < horizon; ++t) {
            row.clear();
            row.push_back(std::to_string(t));
            double tr = 0.0;
            Vector diag = Vector::Zero(model.n);
            for (std::size_t r = 0; r < nr; ++r) {
                tr += crlbs[r][t].trace();
                diag += crlbs[r][t].diagonal();
            }
            row.push_back(format_float(tr / static_cast<double>(nr)));
            for (Index i = 0; i < model.n; ++i) {
                row.push_back(format_float(diag(i) / static_cast<double>(nr)));
            }
            csv.row(row);
        }
    }

    Json jbound;
    jbound["filter"] = spec.name;
    jbound["init_ms_error"] = init_ms_error;
    jbound["reference"] = {{"e", cfg.bound->reference_e},
                           {"coverage", summary.reference_coverage},
                           {"violations", summary.reference_violations},
                           {"required_coverage", cfg.bound->coverage}};
    jbound["tune"] = Json::object();
    jbound["tune"]["grid"] = Json::array();
    for (const TuneCandidate& cand : summary.tune.candidates) {
        jbound["tune"]["grid"].push_back({{"e", cand.e},
                                          {"coverage", cand.coverage},
                                          {"violations", cand.violations},
                                          {"feasible", cand.feasible}});
    }
    jbound["tune"]["any_feasible"] = summary.tune.any_feasible;
    if (summary.tune.any_feasible) {
        jbound["tune"]["chosen"] = summary.tune.chosen;
    }
    detail::write_json_file(paths.report / "bound.json", jbound);

    Json stage;
    stage["filter"] = spec.name;
    detail::record_stage(paths, cfg, "bound", std::move(stage));
    return summary;
}

/// Renders the aggregate metrics into a ranked human-readable summary and
/// a machine-readable report. Requires the estimate stage; folds in the
/// bound stage when its artifacts exist.
inline void run_report(const ExperimentConfig& cfg) {
    const ArtifactPaths paths = artifact_paths(cfg);
    detail::require_stage(paths, "estimate", "report");
    fs::create_directories(paths.report);

    const Json metrics = detail::read_json_file(paths.metrics / "metrics.json");

    // Rank by mean state NMSE; the configured order breaks ties.
    std::vector<std::string> order;
    for (const auto& spec : cfg.filters) {
        order.push_back(spec.name);
    }
    std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        return metrics.at(a).at("nmse_x").at("mean").get<double>() <
               metrics.at(b).at("nmse_x").at("mean").get<double>();
    });

    const auto cell = [](double mean, double std) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3f ± %.3f", mean, std);
        return std::string(buf);
    };
    const auto db_cell = [](double mean, double std) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", mean, std);
        return std::string(buf);
    };

    std::string md;
    md += "# Case study summary\n\n";
    md += "State and unknown-input estimation over " + std::to_string(cfg.runs) +
          " Monte-Carlo runs, horizon " + std::to_string(cfg.horizon) + ", metrics from step " +
          std::to_string(cfg.transient_cutoff) + " on. Rows are sorted by mean state NMSE.\n\n";
    md += "| Filter | State NMSE | UI NMSE | State SNR [dB] | UI SNR [dB] |\n";
    md += "|---|---|---|---|---|\n";
    for (const std::string& name : order) {
        const Json& jf = metrics.at(name);
        md += "| " + name + " | ";
        md += cell(jf.at("nmse_x").at("mean").get<double>(),
                   jf.at("nmse_x").at("std").get<double>());
        md += " | ";
        if (jf.at("estimates_ui").get<bool>()) {
            md += cell(jf.at("nmse_u").at("mean").get<double>(),
                       jf.at("nmse_u").at("std").get<double>());
        } else {
            md += "-";
        }
        md += " | ";
        md += db_cell(jf.at("snr_x_db").at("mean").get<double>(),
                      jf.at("snr_x_db").at("std").get<double>());
        md += " | ";
        if (jf.at("estimates_ui").get<bool>()) {
            md += db_cell(jf.at("snr_u_db").at("mean").get<double>(),
                          jf.at("snr_u_db").at("std").get<double>());
        } else {
            md += "-";
        }
        md += " |\n";
    }

    Json jreport;
    jreport["ranking_by_state_nmse"] = order;
    jreport["metrics"] = metrics;

    const fs::path bound_file = paths.report / "bound.json";
    if (fs::exists(bound_file)) {
        const Json jbound = detail::read_json_file(bound_file);
        jreport["bound"] = jbound;
        md += "\n## Error bound\n\n";
        md += "Filter `" + jbound.at("filter").get<std::string>() + "`: bound coverage " +
              format_float(jbound.at("reference").at("coverage").get<double>()) + " (" +
              std::to_string(jbound.at("reference").at("violations").get<long>()) +
              " post-transient violations) at the reference UI covariance scale " +
              format_float(jbound.at("reference").at("e").get<double>()) + ".\n";
        if (jbound.at("tune").at("any_feasible").get<bool>()) {
            md += "Smallest feasible scale on the tuning grid: " +
                  format_float(jbound.at("tune").at("chosen").get<double>()) + ".\n";
        } else {
            md += "No grid candidate reached the required coverage.\n";
        }
        md += "\nPer-step curves: `bound_trace.csv` (bound vs. empirical mean-square error) and "
              "`crlb_trace.csv` (estimation lower bound).\n";
    }
    md += "\nPer-step error curves: `../metrics/state_mse_curve.csv`, "
          "`../metrics/ui_mse_curve.csv`.\n";

    detail::write_text_file(paths.report / "summary.md", md);
    detail::write_json_file(paths.report / "report.json", jreport);

    Json stage;
    stage["files"] = Json::array({"report.json", "summary.md"});
    detail::record_stage(paths, cfg, "report", std::move(stage));
}

}  // namespace nuikf
