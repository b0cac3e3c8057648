#include "qainit/quant_io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include "qainit/errors.hpp"

namespace qainit {

namespace {

constexpr std::string_view kMetaSuffix = "/q_meta";

std::string key(std::string_view layer, std::string_view suffix) { return fmt::format("{}{}", layer, suffix); }

const TensorEntry& require(const TensorContainer& c, const std::string& name) {
    if (const auto* e = c.find(name)) return *e;
    throw FormatError(fmt::format("missing tensor '{}'", name));
}

} // namespace

void store_quantized(TensorContainer& c, std::string_view layer, const QuantizedTensor& q) {
    nlohmann::json meta = {{"bits", q.bits},
                           {"block_size", q.block_size},
                           {"shape", {q.rows, q.cols}},
                           {"double_quant", q.double_quantized()}};
    if (q.bits == 4) meta["codebook"] = "nf4";

    if (q.bits == 4) {
        c.set(key(layer, "/q_codes"), make_u4packed(q.codes, q.num_elements()));
    } else {
        // Signed codes are already two's-complement bytes.
        c.set(key(layer, "/q_codes"), TensorEntry{DType::i8, {q.num_elements()}, q.codes});
    }

    if (const auto* dq = std::get_if<DoubleQuantScales>(&q.scales)) {
        meta["block2_size"] = dq->block2_size;
        c.set(key(layer, "/q_scales/codes"), make_i8(dq->scale_codes, {dq->scale_codes.size()}));
        c.set(key(layer, "/q_scales/level2_scale"), make_f32_values(dq->level2_scale, {dq->level2_scale.size()}));
        c.set(key(layer, "/q_scales/level2_offset"), make_f32_values(dq->level2_offset, {dq->level2_offset.size()}));
    } else {
        const auto& plain = std::get<std::vector<float>>(q.scales);
        c.set(key(layer, "/q_scales"), make_f32_values(plain, {plain.size()}));
    }
    c.set(key(layer, kMetaSuffix), make_blob(meta.dump()));
}

QuantizedTensor load_quantized(const TensorContainer& c, std::string_view layer) {
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(to_text(require(c, key(layer, kMetaSuffix))));
        QuantizedTensor q;
        q.bits = meta.at("bits").get<int>();
        q.block_size = meta.at("block_size").get<std::size_t>();
        q.rows = meta.at("shape").at(0).get<std::size_t>();
        q.cols = meta.at("shape").at(1).get<std::size_t>();
        if (q.bits != 4 && q.bits != 8) throw FormatError(fmt::format("{}/q_meta.bits: unsupported {}", layer, q.bits));
        if (q.block_size == 0) throw FormatError(fmt::format("{}/q_meta.block_size: must be positive", layer));

        const TensorEntry& codes = require(c, key(layer, "/q_codes"));
        const DType want = q.bits == 4 ? DType::u4packed : DType::i8;
        if (codes.dtype != want || codes.element_count() != q.num_elements()) {
            throw FormatError(fmt::format("{}/q_codes: dtype or length disagrees with q_meta", layer));
        }
        q.codes = codes.bytes;

        if (meta.at("double_quant").get<bool>()) {
            DoubleQuantScales dq;
            dq.block2_size = meta.at("block2_size").get<std::size_t>();
            if (dq.block2_size == 0) throw FormatError(fmt::format("{}/q_meta.block2_size: must be positive", layer));
            dq.scale_codes = to_i8_values(require(c, key(layer, "/q_scales/codes")));
            dq.level2_scale = to_f32_values(require(c, key(layer, "/q_scales/level2_scale")));
            dq.level2_offset = to_f32_values(require(c, key(layer, "/q_scales/level2_offset")));
            const std::size_t groups = (dq.scale_codes.size() + dq.block2_size - 1) / dq.block2_size;
            if (dq.scale_codes.size() != q.num_blocks() || dq.level2_scale.size() != groups ||
                dq.level2_offset.size() != groups) {
                throw FormatError(fmt::format("{}/q_scales: double-quant entries disagree with q_meta", layer));
            }
            q.scales = std::move(dq);
        } else {
            auto scales = to_f32_values(require(c, key(layer, "/q_scales")));
            if (scales.size() != q.num_blocks()) {
                throw FormatError(fmt::format("{}/q_scales: {} scales for {} blocks", layer, scales.size(), q.num_blocks()));
            }
            q.scales = std::move(scales);
        }
        return q;
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(fmt::format("{}/q_meta: {}", layer, ex.what()));
    }
}

std::vector<std::string> quantized_layers(const TensorContainer& c) {
    std::vector<std::string> out;
    for (const auto& [name, e] : c.entries()) {
        if (name.size() > kMetaSuffix.size() && name.ends_with(kMetaSuffix)) {
            out.push_back(name.substr(0, name.size() - kMetaSuffix.size()));
        }
    }
    return out;
}

} // namespace qainit
