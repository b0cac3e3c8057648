#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qainit/gap_metrics.hpp"
#include "qainit/initializer.hpp"
#include "qainit/pipeline.hpp"

namespace qainit {

inline constexpr std::string_view kExperimentCsvHeader = "config,bits,method,rank,calibrated_error,uncalibrated_error";
inline constexpr std::string_view kTraceCsvHeader = "layer,iter,objective";
inline constexpr std::string_view kGapCsvHeader = "model,base4,ours4,base8,gap_closed";

/// Round-trippable decimal text for a double.
std::string format_real(double v);

std::string experiment_csv(const ExperimentReport& report);
std::string experiment_json(const ExperimentReport& report);

std::string trace_csv(std::span<const InitReport> reports);

/// Not-applicable gaps and missing 8-bit values print as "NA".
std::string gap_csv(const GapReport& report);
std::string gap_json(const GapReport& report, std::string_view dataset);

struct ChartSeries {
    std::string name;
    std::string color;
    std::vector<std::pair<double, double>> points;
};

struct ChartSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
};

/// Line chart as a standalone SVG document with one polyline per series.
std::string render_svg_chart(const ChartSpec& spec, std::span<const ChartSeries> series);

void write_text_file(const std::filesystem::path& path, std::string_view text);

} // namespace qainit
