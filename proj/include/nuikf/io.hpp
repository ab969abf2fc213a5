#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nuikf/filters.hpp"
#include "nuikf/model.hpp"

namespace nuikf {

/// 17 significant digits; round-trips any double exactly through strtod.
[[nodiscard]] inline std::string format_float(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[nodiscard]] inline double parse_float(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) {
        throw IoError("parse_float: not a number: " + s);
    }
    return v;
}

/// RFC 4180 writer: CRLF line endings, header row, quoting only where the
/// content requires it.
class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
        : out_(path, std::ios::binary) {
        if (!out_) {
            throw IoError("CsvWriter: cannot open " + path.string());
        }
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i > 0) {
                out_ << ',';
            }
            out_ << escape(cells[i]);
        }
        out_ << "\r\n";
    }

    [[nodiscard]] static std::string escape(const std::string& cell) {
        if (cell.find_first_of(",\"\r\n") == std::string::npos) {
            return cell;
        }
        std::string quoted = "\"";
        for (const char c : cell) {
            if (c == '"') {
                quoted += '"';
            }
            quoted += c;
        }
        quoted += '"';
        return quoted;
    }

  private:
    std::ofstream out_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// RFC 4180 reader; tolerates LF-only endings and quoted fields.
[[nodiscard]] inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("read_csv: cannot open " + path.string());
    }
    std::string content((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    CsvTable table;
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    const auto end_cell = [&]() {
        cells.push_back(cell);
        cell.clear();
    };
    const auto end_row = [&]() {
        end_cell();
        if (table.header.empty()) {
            table.header = cells;
        } else {
            table.rows.push_back(cells);
        }
        cells.clear();
    };
    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += c;
            }
        } else if (c == '"' && cell.empty()) {
            quoted = true;
        } else if (c == ',') {
            end_cell();
        } else if (c == '\r') {
            // consumed with the following newline
        } else if (c == '\n') {
            end_row();
        } else {
            cell += c;
        }
    }
    if (!cell.empty() || !cells.empty()) {
        end_row();
    }
    return table;
}

/// Columns: t, x1..xn, u1..ud, y1..ym.
inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj,
                                 Index n, Index d, Index m) {
    std::vector<std::string> header{"t"};
    for (Index i = 0; i < n; ++i) {
        header.push_back("x" + std::to_string(i + 1));
    }
    for (Index i = 0; i < d; ++i) {
        header.push_back("u" + std::to_string(i + 1));
    }
    for (Index i = 0; i < m; ++i) {
        header.push_back("y" + std::to_string(i + 1));
    }
    CsvWriter csv(path, header);
    std::vector<std::string> cells;
    for (long t = 0; t < traj.length(); ++t) {
        cells.clear();
        cells.push_back(std::to_string(t));
        const std::size_t idx = static_cast<std::size_t>(t);
        for (Index i = 0; i < n; ++i) {
            cells.push_back(format_float(traj.x[idx](i)));
        }
        for (Index i = 0; i < d; ++i) {
            cells.push_back(format_float(traj.u[idx](i)));
        }
        for (Index i = 0; i < m; ++i) {
            cells.push_back(format_float(traj.y[idx](i)));
        }
        csv.row(cells);
    }
}

[[nodiscard]] inline Trajectory read_trajectory_csv(const std::filesystem::path& path,
                                                    Index n, Index d, Index m) {
    const CsvTable table = read_csv(path);
    const std::size_t expected = 1 + static_cast<std::size_t>(n + d + m);
    if (table.header.size() != expected) {
        throw IoError("read_trajectory_csv: unexpected column count in " + path.string());
    }
    Trajectory traj;
    traj.x.reserve(table.rows.size());
    traj.u.reserve(table.rows.size());
    traj.y.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        if (row.size() != expected) {
            throw IoError("read_trajectory_csv: ragged row in " + path.string());
        }
        Vector x(n);
        Vector u(d);
        Vector y(m);
        std::size_t col = 1;
        for (Index i = 0; i < n; ++i) {
            x(i) = parse_float(row[col++]);
        }
        for (Index i = 0; i < d; ++i) {
            u(i) = parse_float(row[col++]);
        }
        for (Index i = 0; i < m; ++i) {
            y(i) = parse_float(row[col++]);
        }
        traj.x.push_back(std::move(x));
        traj.u.push_back(std::move(u));
        traj.y.push_back(std::move(y));
    }
    return traj;
}

/// Per-step filter trace. Columns: t, posterior mean, UI estimate,
/// innovation, covariance traces, solver iterations, singular flag.
inline void write_trace_csv(const std::filesystem::path& path, const FilterRun& run,
                            Index n, Index d, Index m) {
    std::vector<std::string> header{"t"};
    for (Index i = 0; i < n; ++i) {
        header.push_back("xhat" + std::to_string(i + 1));
    }
    for (Index i = 0; i < d; ++i) {
        header.push_back("uhat" + std::to_string(i + 1));
    }
    for (Index i = 0; i < m; ++i) {
        header.push_back("innov" + std::to_string(i + 1));
    }
    header.insert(header.end(), {"trace_pxx", "trace_puu", "nls_iters", "ls_singular"});
    CsvWriter csv(path, header);
    std::vector<std::string> cells;
    for (std::size_t t = 0; t < run.steps.size(); ++t) {
        const StepOutput& step = run.steps[t];
        cells.clear();
        cells.push_back(std::to_string(t));
        for (Index i = 0; i < n; ++i) {
            cells.push_back(format_float(step.posterior.mean(i)));
        }
        for (Index i = 0; i < d; ++i) {
            cells.push_back(format_float(step.ui(i)));
        }
        for (Index i = 0; i < m; ++i) {
            cells.push_back(format_float(step.innovation(i)));
        }
        cells.push_back(format_float(step.posterior.cov.trace()));
        cells.push_back(format_float(step.ui_cov.trace()));
        cells.push_back(std::to_string(step.nls_iters));
        cells.push_back(step.ls_singular ? "1" : "0");
        csv.row(cells);
    }
}

}  // namespace nuikf
