#include "qainit/quantizer.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qainit/errors.hpp"

namespace qainit {

namespace {

// bitsandbytes NF4 constants (float32 values printed at full precision).
constexpr std::array<double, 16> kNf4Values = {
    -1.0,
    -0.6961928009986877,
    -0.5250730514526367,
    -0.39491748809814453,
    -0.28444138169288635,
    -0.18477343022823334,
    -0.09105003625154495,
    0.0,
    0.07958029955625534,
    0.16093020141124725,
    0.24611230194568634,
    0.33791524171829224,
    0.44070982933044434,
    0.5626170039176941,
    0.7229568362236023,
    1.0,
};

const Codebook& require_codebook(int bits, const Codebook* codebook) {
    if (bits == 4 && codebook == nullptr) throw InvalidArgument("4-bit quantization requires a codebook");
    return *codebook;
}

void check_bits(int bits) {
    if (bits != 4 && bits != 8) throw InvalidArgument(fmt::format("unsupported bit width {}", bits));
}

} // namespace

std::size_t Codebook::zero_index() const {
    for (std::size_t i = 0; i < values.size(); ++i)
        if (values[i] == 0.0) return i;
    throw InvalidArgument("codebook has no exact zero");
}

std::size_t Codebook::nearest(double x) const {
    std::size_t best = 0;
    double best_dist = std::abs(x - values[0]);
    for (std::size_t i = 1; i < values.size(); ++i) {
        const double d = std::abs(x - values[i]);
        if (d < best_dist) {
            best_dist = d;
            best = i;
        }
    }
    return best;
}

double Codebook::widest_gap() const {
    double gap = 0.0;
    for (std::size_t i = 1; i < values.size(); ++i) gap = std::max(gap, values[i] - values[i - 1]);
    return gap;
}

Codebook build_nf4_codebook() { return Codebook{kNf4Values}; }

const Codebook& nf4_codebook() {
    static const Codebook cb = build_nf4_codebook();
    return cb;
}

// ---------------------------------------------------------------------------

std::vector<double> DoubleQuantScales::reconstruct() const {
    std::vector<double> out(scale_codes.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t g = i / block2_size;
        out[i] = (static_cast<double>(scale_codes[i]) + 127.0) * static_cast<double>(level2_scale[g]) +
                 static_cast<double>(level2_offset[g]);
    }
    return out;
}

DoubleQuantScales double_quantize(std::span<const double> scales, std::size_t block2_size) {
    if (block2_size == 0) throw InvalidArgument("double_quantize: block2_size must be positive");
    for (double s : scales) {
        if (!std::isfinite(s) || s < 0.0) throw InvalidArgument("double_quantize: scales must be finite and >= 0");
    }
    DoubleQuantScales dq;
    dq.block2_size = block2_size;
    dq.scale_codes.resize(scales.size());
    const std::size_t groups = (scales.size() + block2_size - 1) / block2_size;
    dq.level2_scale.resize(groups);
    dq.level2_offset.resize(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t begin = g * block2_size;
        const std::size_t end = std::min(scales.size(), begin + block2_size);
        const auto [lo, hi] = std::minmax_element(scales.begin() + static_cast<std::ptrdiff_t>(begin),
                                                  scales.begin() + static_cast<std::ptrdiff_t>(end));
        // The stored float offset/scale are the ones used for encoding, so
        // reconstruction error is bounded by half a level-2 step.
        const float offset = static_cast<float>(*lo);
        const float step = (*hi > *lo) ? static_cast<float>((*hi - *lo) / 254.0) : 1.0f;
        dq.level2_offset[g] = offset;
        dq.level2_scale[g] = step > 0.0f ? step : 1.0f;
        for (std::size_t i = begin; i < end; ++i) {
            const double level = std::round((scales[i] - static_cast<double>(offset)) / static_cast<double>(dq.level2_scale[g]));
            dq.scale_codes[i] = static_cast<std::int8_t>(std::clamp(level - 127.0, -127.0, 127.0));
        }
    }
    return dq;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> pack_nibbles(std::span<const std::uint8_t> codes) {
    std::vector<std::uint8_t> packed((codes.size() + 1) / 2, 0);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] > 0x0F) throw InvalidArgument(fmt::format("pack_nibbles: code {} exceeds 4 bits", codes[i]));
        if (i % 2 == 0) {
            packed[i / 2] = codes[i];
        } else {
            packed[i / 2] = static_cast<std::uint8_t>(packed[i / 2] | (codes[i] << 4));
        }
    }
    return packed;
}

std::vector<std::uint8_t> unpack_nibbles(std::span<const std::uint8_t> packed, std::size_t count) {
    if (packed.size() != (count + 1) / 2) {
        throw FormatError(fmt::format("unpack_nibbles: {} bytes cannot hold exactly {} nibbles", packed.size(), count));
    }
    std::vector<std::uint8_t> codes(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint8_t byte = packed[i / 2];
        codes[i] = (i % 2 == 0) ? (byte & 0x0F) : static_cast<std::uint8_t>(byte >> 4);
    }
    return codes;
}

// ---------------------------------------------------------------------------

std::vector<double> QuantizedTensor::block_scales() const {
    if (const auto* plain = std::get_if<std::vector<float>>(&scales)) {
        return {plain->begin(), plain->end()};
    }
    return std::get<DoubleQuantScales>(scales).reconstruct();
}

std::vector<int> QuantizedTensor::code_values() const {
    std::vector<int> out(num_elements());
    if (bits == 4) {
        const auto unpacked = unpack_nibbles(codes, num_elements());
        std::copy(unpacked.begin(), unpacked.end(), out.begin());
    } else {
        if (codes.size() != num_elements()) throw FormatError("8-bit code count does not match shape");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::int8_t>(codes[i]);
    }
    return out;
}

QuantizedTensor quantize_blockwise(const Matrix& w, int bits, std::size_t block_size, const Codebook* codebook) {
    check_bits(bits);
    if (block_size < 1) throw InvalidArgument("quantize_blockwise: block_size must be >= 1");
    if (!w.all_finite()) throw NumericError("quantize_blockwise: non-finite weight");

    QuantizedTensor q;
    q.rows = w.rows();
    q.cols = w.cols();
    q.bits = bits;
    q.block_size = block_size;

    const auto values = w.data();
    const std::size_t n = values.size();
    const std::size_t blocks = q.num_blocks();
    std::vector<float> scales(blocks, 0.0f);

    std::vector<std::uint8_t> codes(n, 0);
    const Codebook* cb = bits == 4 ? &require_codebook(bits, codebook) : nullptr;
    const std::size_t zero_code = cb ? cb->zero_index() : 0;

    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t begin = b * block_size;
        const std::size_t end = std::min(n, begin + block_size);
        double absmax = 0.0;
        for (std::size_t i = begin; i < end; ++i) absmax = std::max(absmax, std::abs(values[i]));
        const float scale = static_cast<float>(absmax);
        scales[b] = scale;
        if (scale == 0.0f) {
            for (std::size_t i = begin; i < end; ++i) codes[i] = static_cast<std::uint8_t>(zero_code);
            continue;
        }
        const double s = static_cast<double>(scale);
        for (std::size_t i = begin; i < end; ++i) {
            const double x = values[i] / s;
            if (cb) {
                codes[i] = static_cast<std::uint8_t>(cb->nearest(x));
            } else {
                const double c = std::clamp(std::round(x * 127.0), -127.0, 127.0);
                codes[i] = static_cast<std::uint8_t>(static_cast<std::int8_t>(c));
            }
        }
    }

    q.codes = bits == 4 ? pack_nibbles(codes) : std::move(codes);
    q.scales = std::move(scales);
    return q;
}

void apply_double_quant(QuantizedTensor& q, std::size_t block2_size) {
    if (q.double_quantized()) return;
    const auto& plain = std::get<std::vector<float>>(q.scales);
    const std::vector<double> widened(plain.begin(), plain.end());
    q.scales = double_quantize(widened, block2_size);
}

QuantizedTensor quantize(const Matrix& w, const QuantConfig& config) {
    if (config.double_quant && config.bits != 4) {
        throw InvalidArgument("double quantization applies to 4-bit scales only");
    }
    QuantizedTensor q = quantize_blockwise(w, config.bits, config.block_size, config.bits == 4 ? &nf4_codebook() : nullptr);
    if (config.double_quant) apply_double_quant(q, config.block2_size);
    return q;
}

Matrix dequantize(const QuantizedTensor& q, const Codebook* codebook) {
    check_bits(q.bits);
    if (q.block_size < 1) throw FormatError("dequantize: block_size must be >= 1");
    const std::size_t n = q.num_elements();
    const std::size_t expected = q.bits == 4 ? (n + 1) / 2 : n;
    if (q.codes.size() != expected) {
        throw FormatError(fmt::format("dequantize: {} code bytes, expected {}", q.codes.size(), expected));
    }
    const std::vector<double> scales = q.block_scales();
    if (scales.size() != q.num_blocks()) {
        throw FormatError(fmt::format("dequantize: {} scales for {} blocks", scales.size(), q.num_blocks()));
    }
    const Codebook* cb = q.bits == 4 ? &require_codebook(q.bits, codebook) : nullptr;

    Matrix out(q.rows, q.cols);
    auto dst = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double scale = scales[i / q.block_size];
        if (cb) {
            const std::uint8_t byte = q.codes[i / 2];
            const std::uint8_t code = (i % 2 == 0) ? (byte & 0x0F) : static_cast<std::uint8_t>(byte >> 4);
            dst[i] = cb->values[code] * scale;
        } else {
            dst[i] = static_cast<double>(static_cast<std::int8_t>(q.codes[i])) / 127.0 * scale;
        }
    }
    return out;
}

Matrix quant_error(const Matrix& w, const QuantizedTensor& q, const Codebook& codebook) {
    if (w.rows() != q.rows || w.cols() != q.cols) {
        throw ShapeError(fmt::format("quant_error: weight {}x{} vs quantized {}x{}", w.rows(), w.cols(), q.rows, q.cols));
    }
    return w - dequantize(q, &codebook);
}

} // namespace qainit
