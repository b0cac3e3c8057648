#include "qainit/pipeline.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>

#include "qainit/errors.hpp"

namespace qainit {

namespace {

// Decorrelates the baseline generator from the instance generator.
constexpr std::uint64_t kBaselineSeedSalt = 0x9E3779B97F4A7C15ull;

std::vector<std::size_t> sweep_ranks(const ExperimentReport& report, Method method) {
    std::vector<std::size_t> ranks;
    for (const auto& row : report.rows)
        if (row.method == method) ranks.push_back(row.rank);
    std::sort(ranks.begin(), ranks.end());
    return ranks;
}

} // namespace

std::string_view method_name(Method m) { return m == Method::baseline ? "baseline" : "quailora"; }

Method parse_method(std::string_view name) {
    if (name == "baseline") return Method::baseline;
    if (name == "quailora") return Method::quailora;
    throw InvalidArgument(fmt::format("unknown method '{}'", name));
}

const ExperimentRow* ExperimentReport::find(Method method, std::size_t rank) const {
    for (const auto& row : rows)
        if (row.method == method && row.rank == rank) return &row;
    return nullptr;
}

QuantConfig harness_quant_config(int bits) {
    if (bits == 4) return QuantConfig{4, 64, true, 256};
    if (bits == 8) return QuantConfig{8, 64, false, 256};
    throw InvalidArgument(fmt::format("bits: unsupported value {}", bits));
}

PreparedInstance prepare_instance(const SynthSpec& spec, int bits) {
    SynthInstance inst = gen_instance(spec);
    PreparedInstance p;
    p.config_id = spec.id();
    p.bits = bits;
    p.seed = spec.seed;
    p.q = quantize(inst.w, harness_quant_config(bits));
    p.delta = quant_error(inst.w, p.q);
    CorrAccumulator acc(spec.n);
    for (const auto& batch : inst.act_batches) acc.accumulate(batch);
    p.h = acc.finalize_guarded();
    p.w = std::move(inst.w);
    return p;
}

ExperimentRow evaluate(const PreparedInstance& prepared, Method method, std::size_t rank, std::size_t iters,
                       const TruncatedSVD* svd) {
    ExperimentRow row;
    row.config_id = prepared.config_id;
    row.bits = prepared.bits;
    row.method = method;
    row.rank = rank;

    LoraPair pair;
    if (method == Method::baseline) {
        pair = baseline_init(prepared.delta.rows(), prepared.delta.cols(), rank, prepared.seed ^ kBaselineSeedSalt);
    } else {
        InitOptions options;
        options.rank = rank;
        options.iters = iters;
        options.layer_name = prepared.config_id;
        pair = svd ? quant_aware_init_delta(prepared.delta, *svd, prepared.h, options).pair
                   : quant_aware_init_delta(prepared.delta, prepared.h, options).pair;
    }
    row.calibrated_error = calibrated_objective(prepared.delta, pair, prepared.h);
    row.uncalibrated_error = uncalibrated_objective(prepared.delta, pair);
    return row;
}

ExperimentRow run_pipeline(const SynthSpec& spec, int bits, std::size_t rank, std::size_t iters, Method method) {
    return evaluate(prepare_instance(spec, bits), method, rank, iters);
}

ExperimentReport rank_sweep(const SynthSpec& spec, int bits, std::span<const std::size_t> ranks, std::size_t iters) {
    if (ranks.empty()) throw InvalidArgument("ranks: empty");
    if (!std::is_sorted(ranks.begin(), ranks.end()) || std::adjacent_find(ranks.begin(), ranks.end()) != ranks.end()) {
        throw InvalidArgument("ranks: must be strictly ascending");
    }
    const PreparedInstance prepared = prepare_instance(spec, bits);
    const std::size_t top = ranks.back();
    if (top > std::min(prepared.delta.rows(), prepared.delta.cols())) {
        throw InvalidArgument(fmt::format("ranks: {} exceeds min(m, n)", top));
    }
    // Leading triplets of one SVD serve every rank.
    const TruncatedSVD svd = svd_truncated(prepared.delta, top);

    ExperimentReport report;
    for (std::size_t r : ranks) {
        report.rows.push_back(evaluate(prepared, Method::baseline, r, iters));
        report.rows.push_back(evaluate(prepared, Method::quailora, r, iters, &svd));
    }
    for (std::size_t r : ranks) {
        const auto* b = report.find(Method::baseline, r);
        const auto* q = report.find(Method::quailora, r);
        report.summary.emplace_back(fmt::format("ratio_r{}", r), q->calibrated_error / b->calibrated_error);
    }
    return report;
}

ExperimentReport average_reports(std::span<const ExperimentReport> reports, std::string config_id) {
    if (reports.empty()) throw InvalidArgument("average_reports: no reports");
    ExperimentReport out;
    const auto& layout = reports.front().rows;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        ExperimentRow row = layout[i];
        row.config_id = config_id;
        row.calibrated_error = 0.0;
        row.uncalibrated_error = 0.0;
        row.proxy_loss_curve.clear();
        for (const auto& rep : reports) {
            if (rep.rows.size() != layout.size() || rep.rows[i].rank != row.rank || rep.rows[i].method != row.method) {
                throw InvalidArgument("average_reports: reports have different row layouts");
            }
            row.calibrated_error += rep.rows[i].calibrated_error;
            row.uncalibrated_error += rep.rows[i].uncalibrated_error;
        }
        row.calibrated_error /= static_cast<double>(reports.size());
        row.uncalibrated_error /= static_cast<double>(reports.size());
        out.rows.push_back(std::move(row));
    }
    std::map<std::string, double> sums;
    for (const auto& rep : reports)
        for (const auto& [k, v] : rep.summary) sums[k] += v;
    for (const auto& [k, v] : reports.front().summary) out.summary.emplace_back(k, sums[k] / static_cast<double>(reports.size()));
    return out;
}

std::vector<double> gain_per_step(const ExperimentReport& report, Method method) {
    const auto ranks = sweep_ranks(report, method);
    std::vector<double> gains;
    for (std::size_t k = 0; k + 1 < ranks.size(); ++k) {
        gains.push_back(report.find(method, ranks[k])->calibrated_error - report.find(method, ranks[k + 1])->calibrated_error);
    }
    return gains;
}

std::vector<double> marginal_gain_per_rank(const ExperimentReport& report, Method method) {
    const auto ranks = sweep_ranks(report, method);
    auto gains = gain_per_step(report, method);
    for (std::size_t k = 0; k < gains.size(); ++k) gains[k] /= static_cast<double>(ranks[k + 1] - ranks[k]);
    return gains;
}

} // namespace qainit
