// SPDX-License-Identifier: Apache-2.0

#include "muonq/xlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "muonq/error.hpp"

namespace muonq::xlab {

namespace {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
    }
    out << contents;
    out.flush();
    if (!out) {
        throw Error(ErrorCode::IoFailure, "write to " + path.string() + " failed");
    }
}

}  // namespace

Series& ExperimentReport::declare(const std::string& name, std::string description, std::string x_name) {
    Series& s = series[name];
    s.description = std::move(description);
    s.x_name = std::move(x_name);
    return s;
}

void ExperimentReport::add(const std::string& name, double x, double y) {
    auto it = series.find(name);
    if (it == series.end()) {
        throw Error(ErrorCode::InvalidArgument, "series '" + name + "' was not declared");
    }
    it->second.points.emplace_back(x, y);
}

std::string ExperimentReport::file_stem() const {
    return experiment_id + "_seed" + std::to_string(seed);
}

std::string ExperimentReport::to_jsonl() const {
    json header;
    header["schema"] = kReportSchema;
    header["experiment_id"] = experiment_id;
    header["seed"] = seed;
    header["config"] = config;
    header["summary"] = json::object();
    for (const auto& [k, v] : summary) {
        header["summary"][k] = v;
    }
    header["series"] = json::object();
    for (const auto& [name, s] : series) {
        header["series"][name] = {{"x", s.x_name}, {"description", s.description}, {"points", s.points.size()}};
    }
    std::string out = header.dump() + "\n";
    for (const auto& [name, s] : series) {
        for (const auto& [x, y] : s.points) {
            json rec;
            rec["series"] = name;
            rec[s.x_name] = x;
            rec["value"] = y;
            out += rec.dump() + "\n";
        }
    }
    return out;
}

std::string ExperimentReport::series_csv(const std::string& name) const {
    const Series& s = series.at(name);
    std::string out = s.x_name + ",value\n";
    for (const auto& [x, y] : s.points) {
        out += format_double(x) + "," + format_double(y) + "\n";
    }
    return out;
}

std::vector<std::filesystem::path> write_report(const ExperimentReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoFailure, "cannot create output directory " + out_dir.string());
    }
    std::vector<std::pair<std::filesystem::path, std::string>> files;
    files.emplace_back(out_dir / (report.file_stem() + ".jsonl"), report.to_jsonl());
    for (const auto& [name, s] : report.series) {
        files.emplace_back(out_dir / (report.file_stem() + "_" + name + ".csv"), report.series_csv(name));
    }
    std::vector<std::filesystem::path> temps;
    const auto cleanup = [&temps] {
        std::error_code ignored;
        for (const auto& t : temps) std::filesystem::remove(t, ignored);
    };
    try {
        for (const auto& [path, contents] : files) {
            std::filesystem::path tmp = path;
            tmp += ".tmp";
            temps.push_back(tmp);
            write_file(tmp, contents);
        }
    } catch (...) {
        cleanup();
        throw;
    }
    std::vector<std::filesystem::path> written;
    for (std::size_t i = 0; i < files.size(); ++i) {
        std::filesystem::rename(temps[i], files[i].first, ec);
        if (ec) {
            cleanup();
            for (const auto& w : written) std::filesystem::remove(w, ec);
            throw Error(ErrorCode::IoFailure, "cannot rename onto " + files[i].first.string());
        }
        written.push_back(files[i].first);
    }
    return written;
}

double median(std::vector<double> values) {
    if (values.empty()) {
        throw Error(ErrorCode::InvalidArgument, "median of an empty set");
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ExperimentReport median_report(std::span<const ExperimentReport> runs, const std::string& experiment_id) {
    if (runs.empty()) {
        throw Error(ErrorCode::InvalidArgument, "no runs to aggregate");
    }
    const ExperimentReport& first = runs.front();
    ExperimentReport out;
    out.experiment_id = experiment_id;
    out.seed = first.seed;
    out.config = first.config;
    json seeds = json::array();
    for (const auto& r : runs) {
        seeds.push_back(r.seed);
        out.runtime_ms += r.runtime_ms;
    }
    out.config["derived"]["seeds"] = seeds;
    out.config["derived"]["aggregate"] = "median";
    for (const auto& [name, s] : first.series) {
        Series& agg = out.declare(name, "median over seeds: " + s.description, s.x_name);
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            std::vector<double> ys;
            for (const auto& r : runs) {
                const auto it = r.series.find(name);
                if (it == r.series.end() || it->second.points.size() != s.points.size() ||
                    it->second.points[i].first != s.points[i].first) {
                    throw Error(ErrorCode::InvalidArgument, "runs disagree on series '" + name + "'");
                }
                ys.push_back(it->second.points[i].second);
            }
            agg.points.emplace_back(s.points[i].first, median(ys));
        }
    }
    for (const auto& [key, value] : first.summary) {
        std::vector<double> vs;
        for (const auto& r : runs) {
            const auto it = r.summary.find(key);
            if (it == r.summary.end()) {
                throw Error(ErrorCode::InvalidArgument, "runs disagree on summary key '" + key + "'");
            }
            vs.push_back(it->second);
        }
        out.summary[key] = median(vs);
    }
    return out;
}

}  // namespace muonq::xlab
