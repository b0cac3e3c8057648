#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qainit {

/// Fraction of the 4-bit -> 8-bit improvement recovered by the method at 4 bits,
/// clamped to [0, 1]. nullopt when the 8-bit baseline is not strictly better
/// than the 4-bit baseline (the ratio is undefined).
std::optional<double> gap_closed(double base4, double ours4, double base8, bool lower_is_better = true);

struct GapRow {
    std::string model;
    double base4 = 0.0;
    double ours4 = 0.0;
    std::optional<double> base8;      // missing when no 8-bit run exists
    std::optional<double> published;  // published gap-closed fraction, if any
};

struct GapRowResult {
    GapRow row;
    std::optional<double> gap;
    /// Recomputed value disagrees with the published one beyond table rounding.
    bool rounding_mismatch = false;
};

struct GapReport {
    std::vector<GapRowResult> rows;
    double average = 0.0;
    std::size_t applicable = 0;
    bool lower_is_better = true;
};

/// Slack allowed between a recomputed gap and a published whole percentage
/// before the row is flagged.
inline constexpr double kPublishedGapSlack = 0.015;

/// gap_closed per row, skipping not-applicable rows in the average.
/// Throws EmptyReportError when no row is applicable.
GapReport table_gap_report(std::span<const GapRow> rows, bool lower_is_better = true);

/// Embedded result tables.
enum class GapDataset {
    perplexity_per_task,  // four-task means recomputed from per-task results
    perplexity_rounded,   // two-decimal four-task means from the summary table
    downstream_accuracy,  // seven-task mean accuracies (Alpaca, SlimOrca)
};

std::vector<GapRow> gap_dataset(GapDataset which);
bool dataset_lower_is_better(GapDataset which);
std::string_view dataset_name(GapDataset which);
/// Throws InvalidArgument on unknown names.
GapDataset parse_dataset(std::string_view name);

} // namespace qainit
