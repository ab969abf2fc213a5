#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nuikf/errors.hpp"
#include "nuikf/filters.hpp"
#include "nuikf/optimize.hpp"
#include "nuikf/rigid_link.hpp"
#include "nuikf/spd.hpp"

namespace nuikf {

using Json = nlohmann::json;

/// Covariance given as a scalar (scale * I), a diagonal, or full rows.
/// Keeps the original form so serialization round-trips losslessly.
struct NoiseSpec {
    enum class Form { scalar, diagonal, full };

    Form form = Form::scalar;
    double scale = 0.0;
    std::vector<double> diag;
    std::vector<std::vector<double>> rows;

    [[nodiscard]] static NoiseSpec from_json(const Json& j, const std::string& path) {
        NoiseSpec spec;
        if (j.is_number()) {
            spec.form = Form::scalar;
            spec.scale = j.get<double>();
            return spec;
        }
        if (j.is_array() && !j.empty() && j.at(0).is_array()) {
            spec.form = Form::full;
            for (const auto& row : j) {
                if (!row.is_array()) {
                    throw ConfigInvalid(path, "matrix rows must all be arrays");
                }
                spec.rows.push_back(row.get<std::vector<double>>());
            }
            return spec;
        }
        if (j.is_array()) {
            spec.form = Form::diagonal;
            spec.diag = j.get<std::vector<double>>();
            return spec;
        }
        throw ConfigInvalid(path, "expected number, array, or array of arrays");
    }

    [[nodiscard]] Json to_json() const {
        switch (form) {
            case Form::scalar: return Json(scale);
            case Form::diagonal: return Json(diag);
            case Form::full: return Json(rows);
        }
        return Json();
    }

    [[nodiscard]] SpdMatrix materialize(Index dim, const std::string& path) const {
        Matrix m;
        switch (form) {
            case Form::scalar:
                m = scale * Matrix::Identity(dim, dim);
                break;
            case Form::diagonal: {
                if (static_cast<Index>(diag.size()) != dim) {
                    throw ConfigInvalid(path, "diagonal length " + std::to_string(diag.size()) +
                                                ", expected " + std::to_string(dim));
                }
                m = Matrix::Zero(dim, dim);
                for (Index i = 0; i < dim; ++i) {
                    m(i, i) = diag[static_cast<std::size_t>(i)];
                }
                break;
            }
            case Form::full: {
                if (static_cast<Index>(rows.size()) != dim) {
                    throw ConfigInvalid(path, "row count " + std::to_string(rows.size()) +
                                                ", expected " + std::to_string(dim));
                }
                m = Matrix::Zero(dim, dim);
                for (Index i = 0; i < dim; ++i) {
                    const auto& row = rows[static_cast<std::size_t>(i)];
                    if (static_cast<Index>(row.size()) != dim) {
                        throw ConfigInvalid(path, "ragged matrix row");
                    }
                    for (Index k = 0; k < dim; ++k) {
                        m(i, k) = row[static_cast<std::size_t>(k)];
                    }
                }
                break;
            }
        }
        try {
            return SpdMatrix(m);
        } catch (const Error& e) {
            throw ConfigInvalid(path, e.what());
        }
    }
};

[[nodiscard]] inline FilterKind filter_kind_from_token(const std::string& token,
                                                       const std::string& path) {
    if (token == "spkf-nui") return FilterKind::spkf_nui;
    if (token == "spkf-nui-i") return FilterKind::spkf_nui_i;
    if (token == "spkf-nui-ii") return FilterKind::spkf_nui_ii;
    if (token == "ekf-nui") return FilterKind::ekf_nui;
    if (token == "ekf-nui-i") return FilterKind::ekf_nui_i;
    if (token == "ekf-nui-ii") return FilterKind::ekf_nui_ii;
    if (token == "spkf-ui") return FilterKind::spkf_ui;
    if (token == "spkf-mvu") return FilterKind::spkf_mvu;
    if (token == "ekf-ui") return FilterKind::ekf_ui;
    if (token == "ekf-mvu") return FilterKind::ekf_mvu;
    if (token == "spkf") return FilterKind::spkf_plain;
    if (token == "ekf") return FilterKind::ekf_plain;
    throw ConfigInvalid(path, "unknown algorithm: " + token);
}

[[nodiscard]] inline bool kind_uses_ui_cov(FilterKind kind) {
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

struct FilterSpec {
    std::string name;
    std::string algorithm;
    FilterKind kind = FilterKind::spkf_nui;
    double spread = 1.0;
    NoiseSpec process_noise;
    NoiseSpec measurement_noise;
    std::optional<NoiseSpec> ui_cov;
};

struct UiSignalSpec {
    double amplitude = 0.0;
    double omega = 0.0;
    long channel = 0;
};

struct BoundSpec {
    std::string filter;
    std::vector<double> e_grid;
    double coverage = 0.99;
    double reference_e = 0.0;
};

struct ExperimentConfig {
    long version = 1;
    std::uint64_t seed = 0;
    long runs = 1;
    long horizon = 1;
    long jobs = 1;  // runtime parallelism; never serialized, never hashed
    std::string out = "out";
    RigidLinkParams model;
    std::vector<double> truth_x0;
    NoiseSpec truth_process_noise;
    NoiseSpec truth_measurement_noise;
    UiSignalSpec truth_ui;
    std::vector<double> init_x0;
    NoiseSpec init_cov;
    NlsOptions solver;
    long transient_cutoff = 0;
    std::vector<FilterSpec> filters;
    std::optional<BoundSpec> bound;

    [[nodiscard]] const FilterSpec& filter_by_name(const std::string& name) const {
        for (const auto& f : filters) {
            if (f.name == name) {
                return f;
            }
        }
        throw ConfigInvalid("filters", "no filter named " + name);
    }
};

namespace detail {

inline void require_keys(const Json& j, const std::string& path,
                         const std::vector<std::string>& allowed) {
    if (!j.is_object()) {
        throw ConfigInvalid(path, "expected an object");
    }
    for (const auto& item : j.items()) {
        bool known = false;
        for (const auto& key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigInvalid(path + "." + item.key(), "unknown key");
        }
    }
}

inline const Json& fetch(const Json& j, const std::string& key, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) {
        throw ConfigInvalid(path + "." + key, "missing required key");
    }
    return *it;
}

template <typename T>
[[nodiscard]] T get_as(const Json& j, const std::string& path) {
    try {
        return j.get<T>();
    } catch (const Json::exception& e) {
        throw ConfigInvalid(path, e.what());
    }
}

}  // namespace detail

[[nodiscard]] inline ExperimentConfig parse_config(const Json& j) {
    using detail::fetch;
    using detail::get_as;
    using detail::require_keys;

    require_keys(j, "config",
                 {"version", "seed", "runs", "horizon", "out", "model", "truth", "init",
                  "solver", "metrics", "filters", "bound"});
    ExperimentConfig cfg;
    cfg.version = get_as<long>(fetch(j, "version", "config"), "config.version");
    if (cfg.version != 1) {
        throw ConfigInvalid("config.version", "unsupported version " + std::to_string(cfg.version));
    }
    cfg.seed = get_as<std::uint64_t>(fetch(j, "seed", "config"), "config.seed");
    cfg.runs = get_as<long>(fetch(j, "runs", "config"), "config.runs");
    if (cfg.runs < 1) {
        throw ConfigInvalid("config.runs", "must be >= 1");
    }
    cfg.horizon = get_as<long>(fetch(j, "horizon", "config"), "config.horizon");
    if (cfg.horizon < 1) {
        throw ConfigInvalid("config.horizon", "must be >= 1");
    }
    if (j.contains("out")) {
        cfg.out = get_as<std::string>(j.at("out"), "config.out");
    }

    const Json& model = fetch(j, "model", "config");
    require_keys(model, "config.model", {"kind", "mass", "length", "damping", "gravity", "dt"});
    const auto model_kind = get_as<std::string>(fetch(model, "kind", "config.model"), "config.model.kind");
    if (model_kind != "rigid-link") {
        throw ConfigInvalid("config.model.kind", "unknown model: " + model_kind);
    }
    cfg.model.mass = get_as<double>(fetch(model, "mass", "config.model"), "config.model.mass");
    cfg.model.length = get_as<double>(fetch(model, "length", "config.model"), "config.model.length");
    cfg.model.damping = get_as<double>(fetch(model, "damping", "config.model"), "config.model.damping");
    cfg.model.gravity = get_as<double>(fetch(model, "gravity", "config.model"), "config.model.gravity");
    cfg.model.dt = get_as<double>(fetch(model, "dt", "config.model"), "config.model.dt");
    if (!(cfg.model.dt > 0.0)) {
        throw ConfigInvalid("config.model.dt", "must be > 0");
    }

    const Json& truth = fetch(j, "truth", "config");
    require_keys(truth, "config.truth", {"x0", "process_noise", "measurement_noise", "ui"});
    cfg.truth_x0 = get_as<std::vector<double>>(fetch(truth, "x0", "config.truth"), "config.truth.x0");
    cfg.truth_process_noise =
        NoiseSpec::from_json(fetch(truth, "process_noise", "config.truth"), "config.truth.process_noise");
    cfg.truth_measurement_noise = NoiseSpec::from_json(
        fetch(truth, "measurement_noise", "config.truth"), "config.truth.measurement_noise");
    const Json& ui = fetch(truth, "ui", "config.truth");
    require_keys(ui, "config.truth.ui", {"amplitude", "omega", "channel"});
    cfg.truth_ui.amplitude =
        get_as<double>(fetch(ui, "amplitude", "config.truth.ui"), "config.truth.ui.amplitude");
    cfg.truth_ui.omega = get_as<double>(fetch(ui, "omega", "config.truth.ui"), "config.truth.ui.omega");
    cfg.truth_ui.channel =
        get_as<long>(fetch(ui, "channel", "config.truth.ui"), "config.truth.ui.channel");

    const Json& init = fetch(j, "init", "config");
    require_keys(init, "config.init", {"x0", "cov"});
    cfg.init_x0 = get_as<std::vector<double>>(fetch(init, "x0", "config.init"), "config.init.x0");
    cfg.init_cov = NoiseSpec::from_json(fetch(init, "cov", "config.init"), "config.init.cov");

    if (j.contains("solver")) {
        const Json& solver = j.at("solver");
        require_keys(solver, "config.solver", {"max_iters", "grad_tol", "step_tol", "fd_step"});
        if (solver.contains("max_iters")) {
            cfg.solver.max_iters =
                get_as<long>(solver.at("max_iters"), "config.solver.max_iters");
        }
        if (solver.contains("grad_tol")) {
            cfg.solver.grad_tol = get_as<double>(solver.at("grad_tol"), "config.solver.grad_tol");
        }
        if (solver.contains("step_tol")) {
            cfg.solver.step_tol = get_as<double>(solver.at("step_tol"), "config.solver.step_tol");
        }
        if (solver.contains("fd_step")) {
            cfg.solver.fd_step = get_as<double>(solver.at("fd_step"), "config.solver.fd_step");
        }
    }

    if (j.contains("metrics")) {
        const Json& metrics = j.at("metrics");
        require_keys(metrics, "config.metrics", {"transient_cutoff"});
        if (metrics.contains("transient_cutoff")) {
            cfg.transient_cutoff =
                get_as<long>(metrics.at("transient_cutoff"), "config.metrics.transient_cutoff");
        }
    }
    if (cfg.transient_cutoff < 0 || cfg.transient_cutoff >= cfg.horizon) {
        throw ConfigInvalid("config.metrics.transient_cutoff", "must lie in [0, horizon)");
    }

    const Json& filters = fetch(j, "filters", "config");
    if (!filters.is_array() || filters.empty()) {
        throw ConfigInvalid("config.filters", "expected a non-empty array");
    }
    for (std::size_t i = 0; i < filters.size(); ++i) {
        const std::string path = "config.filters[" + std::to_string(i) + "]";
        const Json& f = filters.at(i);
        require_keys(f, path,
                     {"name", "algorithm", "spread", "process_noise", "measurement_noise", "ui_cov"});
        FilterSpec spec;
        spec.name = get_as<std::string>(fetch(f, "name", path), path + ".name");
        spec.algorithm = get_as<std::string>(fetch(f, "algorithm", path), path + ".algorithm");
        spec.kind = filter_kind_from_token(spec.algorithm, path + ".algorithm");
        if (f.contains("spread")) {
            spec.spread = get_as<double>(f.at("spread"), path + ".spread");
            if (spec.spread < 0.0) {
                throw ConfigInvalid(path + ".spread", "must be >= 0");
            }
        }
        spec.process_noise =
            NoiseSpec::from_json(fetch(f, "process_noise", path), path + ".process_noise");
        spec.measurement_noise =
            NoiseSpec::from_json(fetch(f, "measurement_noise", path), path + ".measurement_noise");
        if (f.contains("ui_cov")) {
            spec.ui_cov = NoiseSpec::from_json(f.at("ui_cov"), path + ".ui_cov");
        }
        if (kind_uses_ui_cov(spec.kind) && !spec.ui_cov) {
            throw ConfigInvalid(path + ".ui_cov", "required for algorithm " + spec.algorithm);
        }
        if (!kind_uses_ui_cov(spec.kind) && spec.ui_cov) {
            throw ConfigInvalid(path + ".ui_cov", "not accepted by algorithm " + spec.algorithm);
        }
        for (const auto& other : cfg.filters) {
            if (other.name == spec.name) {
                throw ConfigInvalid(path + ".name", "duplicate filter name " + spec.name);
            }
        }
        cfg.filters.push_back(std::move(spec));
    }

    if (j.contains("bound")) {
        const Json& bound = j.at("bound");
        require_keys(bound, "config.bound", {"filter", "e_grid", "coverage", "reference_e"});
        BoundSpec spec;
        spec.filter = get_as<std::string>(fetch(bound, "filter", "config.bound"), "config.bound.filter");
        spec.e_grid =
            get_as<std::vector<double>>(fetch(bound, "e_grid", "config.bound"), "config.bound.e_grid");
        if (spec.e_grid.empty()) {
            throw ConfigInvalid("config.bound.e_grid", "expected a non-empty array");
        }
        for (const double e : spec.e_grid) {
            if (e < 0.0) {
                throw ConfigInvalid("config.bound.e_grid", "entries must be >= 0");
            }
        }
        spec.coverage =
            get_as<double>(fetch(bound, "coverage", "config.bound"), "config.bound.coverage");
        if (!(spec.coverage > 0.0) || spec.coverage > 1.0) {
            throw ConfigInvalid("config.bound.coverage", "must lie in (0, 1]");
        }
        spec.reference_e =
            get_as<double>(fetch(bound, "reference_e", "config.bound"), "config.bound.reference_e");
        if (spec.reference_e < 0.0) {
            throw ConfigInvalid("config.bound.reference_e", "must be >= 0");
        }
        const FilterSpec& target = cfg.filter_by_name(spec.filter);
        if (!kind_uses_ui_cov(target.kind)) {
            throw ConfigInvalid("config.bound.filter",
                              "bound analysis needs a joint state/UI algorithm, got " + target.algorithm);
        }
        cfg.bound = std::move(spec);
    }

    return cfg;
}

[[nodiscard]] inline Json config_to_json(const ExperimentConfig& cfg) {
    Json j;
    j["version"] = cfg.version;
    j["seed"] = cfg.seed;
    j["runs"] = cfg.runs;
    j["horizon"] = cfg.horizon;
    j["out"] = cfg.out;
    j["model"] = {{"kind", "rigid-link"},   {"mass", cfg.model.mass},
                  {"length", cfg.model.length}, {"damping", cfg.model.damping},
                  {"gravity", cfg.model.gravity}, {"dt", cfg.model.dt}};
    j["truth"] = {{"x0", cfg.truth_x0},
                  {"process_noise", cfg.truth_process_noise.to_json()},
                  {"measurement_noise", cfg.truth_measurement_noise.to_json()},
                  {"ui",
                   {{"amplitude", cfg.truth_ui.amplitude},
                    {"omega", cfg.truth_ui.omega},
                    {"channel", cfg.truth_ui.channel}}}};
    j["init"] = {{"x0", cfg.init_x0}, {"cov", cfg.init_cov.to_json()}};
    j["solver"] = {{"max_iters", cfg.solver.max_iters},
                   {"grad_tol", cfg.solver.grad_tol},
                   {"step_tol", cfg.solver.step_tol},
                   {"fd_step", cfg.solver.fd_step}};
    j["metrics"] = {{"transient_cutoff", cfg.transient_cutoff}};
    j["filters"] = Json::array();
    for (const auto& f : cfg.filters) {
        Json jf = {{"name", f.name},
                   {"algorithm", f.algorithm},
                   {"spread", f.spread},
                   {"process_noise", f.process_noise.to_json()},
                   {"measurement_noise", f.measurement_noise.to_json()}};
        if (f.ui_cov) {
            jf["ui_cov"] = f.ui_cov->to_json();
        }
        j["filters"].push_back(std::move(jf));
    }
    if (cfg.bound) {
        j["bound"] = {{"filter", cfg.bound->filter},
                      {"e_grid", cfg.bound->e_grid},
                      {"coverage", cfg.bound->coverage},
                      {"reference_e", cfg.bound->reference_e}};
    }
    return j;
}

[[nodiscard]] inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigInvalid(path, "cannot open file");
    }
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigInvalid(path, e.what());
    }
    return parse_config(j);
}

/// FNV-1a over the canonical serialization, excluding the output directory so
/// relocating artifacts does not change the cache identity.
[[nodiscard]] inline std::string config_hash(const ExperimentConfig& cfg) {
    Json j = config_to_json(cfg);
    j.erase("out");
    const std::string canonical = j.dump();
    std::uint64_t h = 14695981039346656037ULL;
    for (const unsigned char c : canonical) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace nuikf
