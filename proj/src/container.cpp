#include "qainit/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

#include "qainit/errors.hpp"

namespace qainit {

namespace {

constexpr char kMagic[4] = {'Q', 'T', 'N', 'Z'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t at, int width) {
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[at + static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

bool checked_mul(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) return false;
    out = a * b;
    return true;
}

std::uint64_t element_count_checked(const std::vector<std::uint64_t>& shape) {
    std::uint64_t n = 1;
    for (std::uint64_t d : shape) {
        if (!checked_mul(n, d, n)) throw FormatError("shape element count overflows");
    }
    return n;
}

void validate_name(const std::string& name) {
    if (name.empty()) throw InvalidArgument("tensor name is empty");
    if (name.find('\0') != std::string::npos) throw InvalidArgument("tensor name contains NUL");
    try {
        (void)nlohmann::json(name).dump();
    } catch (const nlohmann::json::exception&) {
        throw InvalidArgument(fmt::format("tensor name is not valid UTF-8"));
    }
}

void validate_entry(const std::string& name, const TensorEntry& e) {
    const std::uint64_t n = element_count_checked(e.shape);
    if (e.bytes.size() != storage_bytes(e.dtype, n)) {
        throw InvalidArgument(fmt::format("tensor '{}': {} bytes for {} {} elements", name, e.bytes.size(), n,
                                          dtype_name(e.dtype)));
    }
}

} // namespace

std::string_view dtype_name(DType d) {
    switch (d) {
    case DType::f64: return "f64";
    case DType::f32: return "f32";
    case DType::i8: return "i8";
    case DType::u8: return "u8";
    case DType::u4packed: return "u4packed";
    }
    return "?";
}

DType parse_dtype(std::string_view name) {
    if (name == "f64") return DType::f64;
    if (name == "f32") return DType::f32;
    if (name == "i8") return DType::i8;
    if (name == "u8") return DType::u8;
    if (name == "u4packed") return DType::u4packed;
    throw FormatError(fmt::format("unknown dtype '{}'", name));
}

std::size_t storage_bytes(DType d, std::size_t elements) {
    switch (d) {
    case DType::f64: return elements * 8;
    case DType::f32: return elements * 4;
    case DType::i8:
    case DType::u8: return elements;
    case DType::u4packed: return elements / 2 + elements % 2;
    }
    return 0;
}

std::size_t TensorEntry::element_count() const { return element_count_checked(shape); }

// ---------------------------------------------------------------------------

void TensorContainer::add(std::string name, TensorEntry entry) {
    validate_name(name);
    if (contains(name)) throw InvalidArgument(fmt::format("duplicate tensor name '{}'", name));
    validate_entry(name, entry);
    entries_.emplace_back(std::move(name), std::move(entry));
}

void TensorContainer::set(std::string name, TensorEntry entry) {
    for (auto& [n, e] : entries_) {
        if (n == name) {
            validate_entry(name, entry);
            e = std::move(entry);
            return;
        }
    }
    add(std::move(name), std::move(entry));
}

bool TensorContainer::contains(std::string_view name) const { return find(name) != nullptr; }

const TensorEntry* TensorContainer::find(std::string_view name) const {
    for (const auto& [n, e] : entries_)
        if (n == name) return &e;
    return nullptr;
}

const TensorEntry& TensorContainer::at(std::string_view name) const {
    if (const auto* e = find(name)) return *e;
    throw InvalidArgument(fmt::format("missing tensor '{}'", name));
}

std::vector<std::string> TensorContainer::names_with_prefix(std::string_view prefix) const {
    std::vector<std::string> out;
    for (const auto& [n, e] : entries_)
        if (n.starts_with(prefix)) out.push_back(n);
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> serialize_container(const TensorContainer& c) {
    nlohmann::json manifest = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, e] : c.entries()) {
        manifest.push_back({{"name", name},
                            {"dtype", std::string(dtype_name(e.dtype))},
                            {"shape", e.shape},
                            {"offset", offset},
                            {"nbytes", static_cast<std::uint64_t>(e.bytes.size())}});
        offset += e.bytes.size();
    }
    const std::string text = manifest.dump();

    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + text.size() + offset);
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u32(out, kVersion);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& [name, e] : c.entries()) out.insert(out.end(), e.bytes.begin(), e.bytes.end());
    return out;
}

TensorContainer parse_container(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes) throw FormatError(fmt::format("header: file is {} bytes, need 16", bytes.size()));
    if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) throw FormatError("magic: expected \"QTNZ\"");
    const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
    if (version != kVersion) throw FormatError(fmt::format("version: unsupported value {}", version));
    const std::uint64_t manifest_len = get_le(bytes, 8, 8);
    if (manifest_len > bytes.size() - kHeaderBytes) {
        throw FormatError(fmt::format("manifest_len: {} exceeds remaining {} bytes", manifest_len, bytes.size() - kHeaderBytes));
    }
    const auto manifest_begin = bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderBytes);
    const std::string text(manifest_begin, manifest_begin + static_cast<std::ptrdiff_t>(manifest_len));
    const std::span<const std::uint8_t> payload = bytes.subspan(kHeaderBytes + manifest_len);

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(fmt::format("manifest: invalid JSON ({})", ex.what()));
    }
    if (!manifest.is_array()) throw FormatError("manifest: expected a JSON array");

    struct Span {
        std::uint64_t begin;
        std::uint64_t end;
        std::size_t index;
    };
    std::vector<Span> spans;
    TensorContainer out;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& item = manifest[i];
        const auto field = [&](const char* key) -> const nlohmann::json& {
            if (!item.is_object() || !item.contains(key)) throw FormatError(fmt::format("manifest[{}].{}: missing", i, key));
            return item[key];
        };
        const auto& name_j = field("name");
        if (!name_j.is_string()) throw FormatError(fmt::format("manifest[{}].name: not a string", i));
        const auto& dtype_j = field("dtype");
        if (!dtype_j.is_string()) throw FormatError(fmt::format("manifest[{}].dtype: not a string", i));
        const DType dtype = parse_dtype(dtype_j.get<std::string>());
        const auto& shape_j = field("shape");
        if (!shape_j.is_array()) throw FormatError(fmt::format("manifest[{}].shape: not an array", i));
        std::vector<std::uint64_t> shape;
        for (const auto& d : shape_j) {
            if (!d.is_number_unsigned()) throw FormatError(fmt::format("manifest[{}].shape: non-integer dimension", i));
            shape.push_back(d.get<std::uint64_t>());
        }
        const auto& offset_j = field("offset");
        const auto& nbytes_j = field("nbytes");
        if (!offset_j.is_number_unsigned()) throw FormatError(fmt::format("manifest[{}].offset: not an unsigned integer", i));
        if (!nbytes_j.is_number_unsigned()) throw FormatError(fmt::format("manifest[{}].nbytes: not an unsigned integer", i));
        const std::uint64_t offset = offset_j.get<std::uint64_t>();
        const std::uint64_t nbytes = nbytes_j.get<std::uint64_t>();

        const std::uint64_t elements = element_count_checked(shape);
        std::uint64_t expected = 0;
        switch (dtype) {
        case DType::f64:
            if (!checked_mul(elements, 8, expected)) throw FormatError(fmt::format("manifest[{}].shape: too large", i));
            break;
        case DType::f32:
            if (!checked_mul(elements, 4, expected)) throw FormatError(fmt::format("manifest[{}].shape: too large", i));
            break;
        case DType::i8:
        case DType::u8: expected = elements; break;
        case DType::u4packed: expected = elements / 2 + elements % 2; break;
        }
        if (nbytes != expected) {
            throw FormatError(fmt::format("manifest[{}].nbytes: {} does not match shape ({} expected)", i, nbytes, expected));
        }
        if (offset > payload.size() || nbytes > payload.size() - offset) {
            throw FormatError(fmt::format("manifest[{}].offset: [{}, +{}) exceeds payload of {} bytes", i, offset, nbytes,
                                          payload.size()));
        }
        spans.push_back({offset, offset + nbytes, i});

        TensorEntry e;
        e.dtype = dtype;
        e.shape = std::move(shape);
        e.bytes.assign(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                       payload.begin() + static_cast<std::ptrdiff_t>(offset + nbytes));
        try {
            out.add(name_j.get<std::string>(), std::move(e));
        } catch (const InvalidArgument& ex) {
            throw FormatError(fmt::format("manifest[{}].name: {}", i, ex.what()));
        }
    }

    std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.begin < b.begin; });
    for (std::size_t k = 1; k < spans.size(); ++k) {
        if (spans[k].begin < spans[k - 1].end) {
            throw FormatError(fmt::format("manifest[{}].offset: overlaps manifest[{}]", spans[k].index, spans[k - 1].index));
        }
    }
    return out;
}

void write_container(const std::filesystem::path& path, const TensorContainer& c) {
    const auto bytes = serialize_container(c);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

TensorContainer read_container(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(fmt::format("cannot open '{}'", path.string()));
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw IoError(fmt::format("read of '{}' failed", path.string()));
    return parse_container(bytes);
}

// ---------------------------------------------------------------------------

TensorEntry make_f64_values(std::span<const double> values, std::vector<std::uint64_t> shape) {
    TensorEntry e{DType::f64, std::move(shape), {}};
    e.bytes.reserve(values.size() * 8);
    for (double v : values) put_u64(e.bytes, std::bit_cast<std::uint64_t>(v));
    return e;
}

TensorEntry make_f32_values(std::span<const float> values, std::vector<std::uint64_t> shape) {
    TensorEntry e{DType::f32, std::move(shape), {}};
    e.bytes.reserve(values.size() * 4);
    for (float v : values) put_u32(e.bytes, std::bit_cast<std::uint32_t>(v));
    return e;
}

TensorEntry make_f64(const Matrix& m) { return make_f64_values(m.data(), {m.rows(), m.cols()}); }

TensorEntry make_f32(const Matrix& m) {
    std::vector<float> narrowed(m.data().begin(), m.data().end());
    return make_f32_values(narrowed, {m.rows(), m.cols()});
}

TensorEntry make_i8(std::span<const std::int8_t> values, std::vector<std::uint64_t> shape) {
    TensorEntry e{DType::i8, std::move(shape), {}};
    for (std::int8_t v : values) e.bytes.push_back(static_cast<std::uint8_t>(v));
    return e;
}

TensorEntry make_u8(std::span<const std::uint8_t> values, std::vector<std::uint64_t> shape) {
    return TensorEntry{DType::u8, std::move(shape), {values.begin(), values.end()}};
}

TensorEntry make_u4packed(std::vector<std::uint8_t> packed, std::uint64_t elements) {
    return TensorEntry{DType::u4packed, {elements}, std::move(packed)};
}

TensorEntry make_blob(std::string_view text) {
    return TensorEntry{DType::u8, {text.size()}, {text.begin(), text.end()}};
}

std::vector<double> to_f64_values(const TensorEntry& e) {
    std::vector<double> out;
    if (e.dtype == DType::f64) {
        out.resize(e.bytes.size() / 8);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<double>(get_le(e.bytes, i * 8, 8));
    } else if (e.dtype == DType::f32) {
        for (float v : to_f32_values(e)) out.push_back(static_cast<double>(v));
    } else {
        throw FormatError(fmt::format("expected a float tensor, got {}", dtype_name(e.dtype)));
    }
    return out;
}

std::vector<float> to_f32_values(const TensorEntry& e) {
    if (e.dtype != DType::f32) throw FormatError(fmt::format("expected f32, got {}", dtype_name(e.dtype)));
    std::vector<float> out(e.bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(e.bytes, i * 4, 4)));
    return out;
}

Matrix to_matrix(const TensorEntry& e) {
    if (e.shape.size() != 2) throw FormatError(fmt::format("expected a 2-D tensor, got rank {}", e.shape.size()));
    auto values = to_f64_values(e);
    try {
        return Matrix(e.shape[0], e.shape[1], std::move(values));
    } catch (const NumericError&) {
        throw FormatError("tensor holds non-finite values");
    }
}

std::vector<std::int8_t> to_i8_values(const TensorEntry& e) {
    if (e.dtype != DType::i8) throw FormatError(fmt::format("expected i8, got {}", dtype_name(e.dtype)));
    std::vector<std::int8_t> out(e.bytes.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::int8_t>(e.bytes[i]);
    return out;
}

std::string to_text(const TensorEntry& e) {
    if (e.dtype != DType::u8) throw FormatError(fmt::format("expected u8 blob, got {}", dtype_name(e.dtype)));
    return {e.bytes.begin(), e.bytes.end()};
}

} // namespace qainit
