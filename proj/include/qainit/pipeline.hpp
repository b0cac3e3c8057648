#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qainit/calibration.hpp"
#include "qainit/initializer.hpp"
#include "qainit/quantizer.hpp"
#include "qainit/synth.hpp"

namespace qainit {

enum class Method { baseline, quailora };

std::string_view method_name(Method m);
/// Throws InvalidArgument on unknown names.
Method parse_method(std::string_view name);

struct ExperimentRow {
    std::string config_id;
    int bits = 4;
    Method method = Method::baseline;
    std::size_t rank = 0;
    double calibrated_error = 0.0;
    double uncalibrated_error = 0.0;
    std::vector<double> proxy_loss_curve;
};

struct ExperimentReport {
    std::vector<ExperimentRow> rows;
    /// Named scalar summaries, in insertion order.
    std::vector<std::pair<std::string, double>> summary;

    const ExperimentRow* find(Method method, std::size_t rank) const;
};

/// Quantizer settings used by the harness: NF4 + double quant for 4-bit,
/// absmax INT8 for 8-bit, 64-element blocks.
QuantConfig harness_quant_config(int bits);

/// Everything needed to score initializations on one synthetic layer.
struct PreparedInstance {
    std::string config_id;
    int bits = 4;
    Matrix w;
    QuantizedTensor q;
    Matrix delta;
    CorrelationMatrix h;
    std::uint64_t seed = 0;
};

PreparedInstance prepare_instance(const SynthSpec& spec, int bits);

/// Scores one initialization. `svd`, when given, must hold at least `rank`
/// triplets of prepared.delta.
ExperimentRow evaluate(const PreparedInstance& prepared, Method method, std::size_t rank, std::size_t iters,
                       const TruncatedSVD* svd = nullptr);

/// quantize -> accumulate H -> initialize -> errors of Q + A Bᵀ against W.
ExperimentRow run_pipeline(const SynthSpec& spec, int bits, std::size_t rank, std::size_t iters, Method method);

inline constexpr std::size_t kDefaultSweepRanks[] = {8, 16, 32, 64, 128};

/// One row per (rank, method); ranks must be ascending.
ExperimentReport rank_sweep(const SynthSpec& spec, int bits, std::span<const std::size_t> ranks, std::size_t iters);

/// Mean errors per (method, rank) over reports sharing the same row layout.
ExperimentReport average_reports(std::span<const ExperimentReport> reports, std::string config_id);

/// Per-unit-rank error reduction between successive sweep ranks for `method`:
/// (e(r_k) - e(r_{k+1})) / (r_{k+1} - r_k).
std::vector<double> marginal_gain_per_rank(const ExperimentReport& report, Method method);

/// Absolute error reduction between successive sweep ranks for `method`.
std::vector<double> gain_per_step(const ExperimentReport& report, Method method);

} // namespace qainit
