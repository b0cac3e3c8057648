#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "qainit/linalg.hpp"

namespace qainit {

/// 16 strictly increasing code values spanning [-1, 1].
struct Codebook {
    std::array<double, 16> values{};

    /// Index of the value 0.0.
    std::size_t zero_index() const;
    /// Index minimizing |x - values[i]|; ties go to the lower index.
    std::size_t nearest(double x) const;
    /// Largest gap between adjacent code values.
    double widest_gap() const;
};

/// The NormalFloat4 table used by the bitsandbytes NF4 data type.
Codebook build_nf4_codebook();
const Codebook& nf4_codebook();

/// Second-level (8-bit affine) quantization of the first-level block scales.
///
/// A scale is reconstructed as (scale_codes[i] + 127) * level2_scale[g] + level2_offset[g]
/// where g = i / block2_size and level2_offset[g] is the minimum of group g.
struct DoubleQuantScales {
    std::vector<std::int8_t> scale_codes;
    std::size_t block2_size = 256;
    std::vector<float> level2_scale;
    std::vector<float> level2_offset;

    std::vector<double> reconstruct() const;
    friend bool operator==(const DoubleQuantScales&, const DoubleQuantScales&) = default;
};

DoubleQuantScales double_quantize(std::span<const double> scales, std::size_t block2_size = 256);

/// Blockwise quantized matrix. Blocks run over the row-major flattening.
///
/// 4-bit codes are packed two per byte, element 2k in the low nibble; 8-bit
/// codes are stored one signed byte each (two's complement in the byte).
struct QuantizedTensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    int bits = 4;
    std::size_t block_size = 64;
    std::vector<std::uint8_t> codes;
    std::variant<std::vector<float>, DoubleQuantScales> scales;

    std::size_t num_elements() const noexcept { return rows * cols; }
    std::size_t num_blocks() const noexcept { return (num_elements() + block_size - 1) / block_size; }
    bool double_quantized() const noexcept { return std::holds_alternative<DoubleQuantScales>(scales); }
    /// Effective per-block scales (double-quantized scales are reconstructed).
    std::vector<double> block_scales() const;
    /// Unpacked code index per element (8-bit codes as their signed value).
    std::vector<int> code_values() const;

    friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

struct QuantConfig {
    int bits = 4;
    std::size_t block_size = 64;
    bool double_quant = true;
    std::size_t block2_size = 256;
};

std::vector<std::uint8_t> pack_nibbles(std::span<const std::uint8_t> codes);
std::vector<std::uint8_t> unpack_nibbles(std::span<const std::uint8_t> packed, std::size_t count);

/// Absmax blockwise quantization. `codebook` is required for bits = 4.
QuantizedTensor quantize_blockwise(const Matrix& w, int bits, std::size_t block_size,
                                   const Codebook* codebook = nullptr);

/// quantize_blockwise with NF4 for 4-bit, followed by optional double quantization.
QuantizedTensor quantize(const Matrix& w, const QuantConfig& config);

/// Replaces plain scales of `q` with their double-quantized form.
void apply_double_quant(QuantizedTensor& q, std::size_t block2_size = 256);

/// Materializes Q. `codebook` is required for bits = 4.
Matrix dequantize(const QuantizedTensor& q, const Codebook* codebook = nullptr);

/// W - dequantize(q).
Matrix quant_error(const Matrix& w, const QuantizedTensor& q, const Codebook& codebook = nf4_codebook());

} // namespace qainit
