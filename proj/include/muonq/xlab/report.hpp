// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace muonq::xlab {

using json = nlohmann::json;

inline constexpr const char* kReportSchema = "muonq.report/1";

struct Series {
    std::string x_name = "step";
    std::string description;
    std::vector<std::pair<double, double>> points;
};

/// Seeded record of one study run: config echo, named series and a summary map.
///
/// Serialized as JSON Lines (a header object, then one object per series
/// point) plus one CSV per series. runtime_ms is reported on stdout only, so
/// identical inputs give byte-identical files.
struct ExperimentReport {
    std::string experiment_id;
    std::uint64_t seed = 0;
    json config = json::object();
    std::map<std::string, Series> series;
    std::map<std::string, double> summary;
    std::int64_t runtime_ms = 0;

    /// Every series must be declared (and so documented) before points are added.
    Series& declare(const std::string& name, std::string description, std::string x_name = "step");
    void add(const std::string& name, double x, double y);

    [[nodiscard]] std::string file_stem() const;
    [[nodiscard]] std::string to_jsonl() const;
    [[nodiscard]] std::string series_csv(const std::string& name) const;
};

/// Writes <stem>.jsonl and <stem>_<series>.csv into `out_dir` through temp
/// files renamed at the end; on failure no new report file is left behind.
std::vector<std::filesystem::path> write_report(const ExperimentReport& report, const std::filesystem::path& out_dir);

/// Point-wise and summary-wise median over per-seed reports of one study.
/// Series must agree in names and x values.
ExperimentReport median_report(std::span<const ExperimentReport> runs, const std::string& experiment_id);

double median(std::vector<double> values);

}  // namespace muonq::xlab
