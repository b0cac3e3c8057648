#include "qainit/gap_metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "qainit/errors.hpp"

namespace qainit {

std::optional<double> gap_closed(double base4, double ours4, double base8, bool lower_is_better) {
    // Mirror higher-is-better metrics so that "better" always means smaller.
    if (!lower_is_better) {
        base4 = -base4;
        ours4 = -ours4;
        base8 = -base8;
    }
    const double gap = base4 - base8;
    if (!(gap > 0.0)) return std::nullopt;
    return std::clamp((base4 - ours4) / gap, 0.0, 1.0);
}

GapReport table_gap_report(std::span<const GapRow> rows, bool lower_is_better) {
    if (rows.empty()) throw EmptyReportError("gap report: no rows");
    GapReport report;
    report.lower_is_better = lower_is_better;
    double total = 0.0;
    for (const auto& row : rows) {
        GapRowResult result{row, std::nullopt, false};
        if (row.base8) result.gap = gap_closed(row.base4, row.ours4, *row.base8, lower_is_better);
        if (result.gap) {
            total += *result.gap;
            ++report.applicable;
            if (row.published) result.rounding_mismatch = std::abs(*result.gap - *row.published) > kPublishedGapSlack;
        } else if (row.published) {
            result.rounding_mismatch = true;
        }
        report.rows.push_back(std::move(result));
    }
    if (report.applicable == 0) throw EmptyReportError("gap report: every row is not applicable");
    report.average = total / static_cast<double>(report.applicable);
    return report;
}

namespace {

struct PerTaskRow {
    const char* model;
    std::array<double, 4> base4;
    std::array<double, 4> ours4;
    std::optional<std::array<double, 4>> base8;
    std::optional<double> published;
};

double mean4(const std::array<double, 4>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / 4.0; }

// Validation perplexity on Alpaca, Chip2, Self-Instruct, HH-RLHF.
const std::vector<PerTaskRow>& per_task_rows() {
    static const std::vector<PerTaskRow> rows = {
        {"LLaMA-7b", {3.69, 3.44, 2.08, 4.84}, {3.65, 3.44, 2.09, 4.79}, std::array{3.65, 3.43, 2.08, 4.82}, 1.00},
        {"LLaMA-13b", {3.45, 3.24, 2.11, 4.52}, {3.44, 3.24, 2.11, 4.50}, std::array{3.44, 3.23, 2.09, 4.52}, 0.61},
        {"LLaMA-30b", {3.42, 3.22, 2.10, 4.48}, {3.42, 3.22, 2.10, 4.46}, std::array{3.44, 3.21, 2.10, 4.48}, std::nullopt},
        {"OPT-13b", {3.89, 3.68, 2.25, 5.27}, {3.82, 3.59, 2.21, 5.24}, std::nullopt, std::nullopt},
        {"OPT-30b", {3.78, 3.57, 2.14, 5.15}, {3.68, 3.48, 2.13, 5.11}, std::nullopt, std::nullopt},
        {"BLOOM-560m", {6.85, 6.40, 3.67, 10.46}, {6.73, 6.27, 3.60, 10.34}, std::array{6.70, 6.31, 3.60, 10.31}, 0.96},
        {"BLOOM-3b", {4.71, 4.44, 2.63, 7.51}, {4.64, 4.35, 2.59, 7.45}, std::array{4.66, 4.39, 2.60, 7.45}, 1.00},
        {"Pythia-70m", {13.55, 11.08, 6.26, 13.03}, {13.39, 10.86, 6.08, 12.87}, std::array{13.18, 10.73, 5.97, 13.00}, 0.69},
        {"Pythia-410m", {7.61, 6.57, 4.18, 8.55}, {7.57, 6.52, 4.09, 8.50}, std::array{7.42, 6.40, 4.12, 8.36}, 0.37},
        {"Pythia-12b", {5.93, 5.06, 3.08, 6.50}, {5.90, 5.00, 3.03, 6.50}, std::array{5.83, 5.00, 3.04, 6.48}, 0.64},
    };
    return rows;
}

} // namespace

std::vector<GapRow> gap_dataset(GapDataset which) {
    switch (which) {
    case GapDataset::perplexity_per_task: {
        std::vector<GapRow> out;
        for (const auto& r : per_task_rows()) {
            GapRow row{r.model, mean4(r.base4), mean4(r.ours4), std::nullopt, r.published};
            if (r.base8) row.base8 = mean4(*r.base8);
            out.push_back(std::move(row));
        }
        return out;
    }
    case GapDataset::perplexity_rounded:
        return {
            {"LLaMA-7b", 3.51, 3.49, 3.49, 1.00},
            {"LLaMA-13b", 3.33, 3.32, 3.32, 0.61},
            {"LLaMA-30b", 3.30, 3.30, 3.31, std::nullopt},
            {"OPT-13b", 3.77, 3.71, std::nullopt, std::nullopt},
            {"OPT-30b", 3.66, 3.60, std::nullopt, std::nullopt},
            {"BLOOM-560m", 6.84, 6.73, 6.73, 0.96},
            {"BLOOM-3b", 4.82, 4.75, 4.78, 1.00},
            {"Pythia-70m", 10.98, 10.80, 10.72, 0.69},
            {"Pythia-410m", 6.73, 6.67, 6.57, 0.37},
            {"Pythia-12b", 5.14, 5.11, 5.09, 0.64},
        };
    case GapDataset::downstream_accuracy:
        return {
            {"LLaMA-7b/alpaca", 62.1, 62.8, 63.0, 0.74},
            {"LLaMA-13b/alpaca", 65.4, 65.8, 65.8, 1.00},
            {"LLaMA-7b/slimorca", 63.2, 63.9, 63.8, 0.89},
            {"LLaMA-13b/slimorca", 66.7, 67.0, 67.2, 0.84},
        };
    }
    throw InvalidArgument("unknown dataset");
}

bool dataset_lower_is_better(GapDataset which) { return which != GapDataset::downstream_accuracy; }

std::string_view dataset_name(GapDataset which) {
    switch (which) {
    case GapDataset::perplexity_per_task: return "perplexity-per-task";
    case GapDataset::perplexity_rounded: return "perplexity-rounded";
    case GapDataset::downstream_accuracy: return "downstream-accuracy";
    }
    return "?";
}

GapDataset parse_dataset(std::string_view name) {
    for (auto d : {GapDataset::perplexity_per_task, GapDataset::perplexity_rounded, GapDataset::downstream_accuracy}) {
        if (dataset_name(d) == name) return d;
    }
    throw InvalidArgument(fmt::format("unknown dataset '{}'", name));
}

} // namespace qainit
