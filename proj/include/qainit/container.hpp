#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qainit/linalg.hpp"

namespace qainit {

enum class DType { f64, f32, i8, u8, u4packed };

std::string_view dtype_name(DType d);
/// Throws FormatError on unknown names.
DType parse_dtype(std::string_view name);

/// Bytes needed for `elements` values of `d`.
std::size_t storage_bytes(DType d, std::size_t elements);

struct TensorEntry {
    DType dtype = DType::f64;
    std::vector<std::uint64_t> shape;
    std::vector<std::uint8_t> bytes;

    std::size_t element_count() const;

    friend bool operator==(const TensorEntry&, const TensorEntry&) = default;
};

/// Named tensors in insertion order.
///
/// File layout ("QTNZ" v1):
///   magic "QTNZ" | version u32 LE | manifest_len u64 LE | manifest | payload
/// The manifest is a UTF-8 JSON array of {name, dtype, shape, offset, nbytes}
/// with offsets relative to the payload start.
class TensorContainer {
public:
    /// Throws InvalidArgument on duplicate/invalid names or inconsistent byte length.
    void add(std::string name, TensorEntry entry);
    /// Replaces an existing entry or appends a new one.
    void set(std::string name, TensorEntry entry);

    bool contains(std::string_view name) const;
    const TensorEntry* find(std::string_view name) const;
    /// Throws InvalidArgument naming the missing tensor.
    const TensorEntry& at(std::string_view name) const;

    const std::vector<std::pair<std::string, TensorEntry>>& entries() const noexcept { return entries_; }
    std::vector<std::string> names_with_prefix(std::string_view prefix) const;
    std::size_t size() const noexcept { return entries_.size(); }

    friend bool operator==(const TensorContainer&, const TensorContainer&) = default;

private:
    std::vector<std::pair<std::string, TensorEntry>> entries_;
};

std::vector<std::uint8_t> serialize_container(const TensorContainer& c);
/// Validates magic, version, manifest, bounds and overlap; throws FormatError.
TensorContainer parse_container(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path& path, const TensorContainer& c);
TensorContainer read_container(const std::filesystem::path& path);

// Typed views. Float tensors are stored little-endian.
TensorEntry make_f64(const Matrix& m);
TensorEntry make_f32(const Matrix& m);
TensorEntry make_f64_values(std::span<const double> values, std::vector<std::uint64_t> shape);
TensorEntry make_f32_values(std::span<const float> values, std::vector<std::uint64_t> shape);
TensorEntry make_i8(std::span<const std::int8_t> values, std::vector<std::uint64_t> shape);
TensorEntry make_u8(std::span<const std::uint8_t> values, std::vector<std::uint64_t> shape);
TensorEntry make_u4packed(std::vector<std::uint8_t> packed, std::uint64_t elements);
TensorEntry make_blob(std::string_view text);

/// 2-D f32/f64 tensor widened to a Matrix.
Matrix to_matrix(const TensorEntry& e);
std::vector<double> to_f64_values(const TensorEntry& e);
std::vector<float> to_f32_values(const TensorEntry& e);
std::vector<std::int8_t> to_i8_values(const TensorEntry& e);
std::string to_text(const TensorEntry& e);

} // namespace qainit
