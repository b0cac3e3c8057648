#pragma once

#include <string>
#include <string_view>

#include "qainit/container.hpp"
#include "qainit/quantizer.hpp"

namespace qainit {

/// Stores q as "<layer>/q_codes", "<layer>/q_scales" (or the double-quant
/// triplet "<layer>/q_scales/{codes,level2_scale,level2_offset}") and a JSON
/// "<layer>/q_meta" blob.
void store_quantized(TensorContainer& c, std::string_view layer, const QuantizedTensor& q);

/// Inverse of store_quantized; throws FormatError on inconsistent entries.
QuantizedTensor load_quantized(const TensorContainer& c, std::string_view layer);

/// Layers that have a "<layer>/q_meta" entry, in container order.
std::vector<std::string> quantized_layers(const TensorContainer& c);

} // namespace qainit
