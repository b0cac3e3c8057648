#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "oracles.hpp"
#include "qainit/container.hpp"
#include "qainit/errors.hpp"
#include "qainit/quant_io.hpp"
#include "qainit/quantizer.hpp"

using namespace qainit;

namespace {

std::vector<std::uint8_t> craft(std::string_view manifest, std::vector<std::uint8_t> payload, std::uint32_t version = 1,
                                std::optional<std::uint64_t> manifest_len = std::nullopt) {
    std::vector<std::uint8_t> out = {'Q', 'T', 'N', 'Z'};
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(version >> (8 * i)));
    const std::uint64_t len = manifest_len.value_or(manifest.size());
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
    out.insert(out.end(), manifest.begin(), manifest.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

std::string format_error_of(std::span<const std::uint8_t> bytes) {
    try {
        parse_container(bytes);
    } catch (const FormatError& e) {
        return e.what();
    }
    return "";
}

TensorContainer all_dtypes() {
    qainit::Rng rng(5);
    TensorContainer c;
    c.add("w/f64", make_f64(oracle::random_matrix(3, 4, rng)));
    c.add("w/f32", make_f32(oracle::random_matrix(2, 5, rng)));
    const std::vector<std::int8_t> i8 = {-128, -1, 0, 1, 127};
    c.add("codes/i8", make_i8(i8, {5}));
    const std::vector<std::uint8_t> u8 = {0, 7, 255};
    c.add("blob/u8", make_u8(u8, {3}));
    c.add("codes/u4", make_u4packed(pack_nibbles(std::vector<std::uint8_t>{1, 2, 3, 4, 15, 9, 0}), 7));
    c.add("meta", make_blob("{\"k\":1}"));
    c.add("empty", make_f64_values({}, {0, 3}));
    c.add("scalar", make_f64_values(std::vector<double>{2.5}, {}));
    return c;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("qainit_test_container_" + name);
}

} // namespace

TEST_CASE("empty container layout") {
    const auto bytes = serialize_container(TensorContainer{});
    REQUIRE(bytes.size() == 18);
    CHECK(std::memcmp(bytes.data(), "QTNZ", 4) == 0);
    CHECK(bytes[4] == 1);
    CHECK(bytes[8] == 2);
    CHECK(bytes[16] == '[');
    CHECK(bytes[17] == ']');
    CHECK(parse_container(bytes).size() == 0);
}

TEST_CASE("f32 2x2 tensor occupies 16 bytes") {
    TensorContainer c;
    c.add("t", make_f32(Matrix::from_rows({{1, 2}, {3, 4}})));
    const auto bytes = serialize_container(c);
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 8);
    const auto manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
    CHECK(manifest[0]["nbytes"] == 16);
    CHECK(manifest[0]["dtype"] == "f32");
    CHECK(manifest[0]["offset"] == 0);
    CHECK(bytes.size() == 16 + len + 16);
    // little-endian 1.0f
    CHECK(bytes[16 + len + 3] == 0x3F);
    CHECK(bytes[16 + len + 2] == 0x80);
}

TEST_CASE("round trip is byte-identical for every dtype") {
    const TensorContainer c = all_dtypes();
    const auto first = serialize_container(c);
    const TensorContainer back = parse_container(first);
    CHECK(back == c);
    CHECK(serialize_container(back) == first);

    const auto path = temp_path("roundtrip.qtnz");
    write_container(path, c);
    CHECK(read_container(path) == c);
    std::filesystem::remove(path);
}

TEST_CASE("typed views round trip") {
    qainit::Rng rng(6);
    const Matrix m = oracle::random_matrix(3, 3, rng);
    CHECK(to_matrix(make_f64(m)) == m);
    const Matrix narrowed = to_matrix(make_f32(m));
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(narrowed.data()[i] == static_cast<double>(static_cast<float>(m.data()[i])));
    CHECK(to_text(make_blob("hello")) == "hello");
    const std::vector<std::int8_t> i8 = {-3, 4};
    CHECK(to_i8_values(make_i8(i8, {2})) == i8);
    CHECK_THROWS_AS(to_matrix(make_i8(i8, {2})), FormatError);
    CHECK_THROWS_AS(to_matrix(make_f64_values(std::vector<double>{1, 2}, {2})), FormatError);
}

TEST_CASE("container name and size validation") {
    TensorContainer c;
    c.add("a", make_blob("x"));
    CHECK_THROWS_AS(c.add("a", make_blob("y")), InvalidArgument);
    CHECK_THROWS_AS(c.add("", make_blob("y")), InvalidArgument);
    CHECK_THROWS_AS(c.add(std::string("a\0b", 3), make_blob("y")), InvalidArgument);
    CHECK_THROWS_AS(c.add("\xff\xfe", make_blob("y")), InvalidArgument);
    CHECK_THROWS_AS(c.add("bad", TensorEntry{DType::f32, {3}, std::vector<std::uint8_t>(8)}), InvalidArgument);
    CHECK_THROWS_AS(c.add("odd", TensorEntry{DType::u4packed, {3}, std::vector<std::uint8_t>(1)}), InvalidArgument);
    CHECK_NOTHROW(c.add("odd", TensorEntry{DType::u4packed, {3}, std::vector<std::uint8_t>(2)}));
    c.set("a", make_blob("z"));
    CHECK(to_text(c.at("a")) == "z");
    CHECK_THROWS_AS(c.at("missing"), InvalidArgument);
    CHECK(c.names_with_prefix("o") == std::vector<std::string>{"odd"});
}

TEST_CASE("unknown dtypes are rejected") {
    CHECK_THROWS_AS(parse_dtype("f16"), FormatError);
    const auto bytes = craft(R"([{"name":"x","dtype":"bf16","shape":[1],"offset":0,"nbytes":2}])", {0, 0});
    CHECK(format_error_of(bytes).find("bf16") != std::string::npos);
}

TEST_CASE("adversarial headers") {
    const auto good = serialize_container(all_dtypes());
    CHECK(format_error_of(std::span(good).first(10)).find("header") != std::string::npos);
    auto bad_magic = good;
    bad_magic[0] = 'X';
    CHECK(format_error_of(bad_magic).find("magic") != std::string::npos);
    auto bad_version = good;
    bad_version[4] = 2;
    CHECK(format_error_of(bad_version).find("version") != std::string::npos);
    CHECK(format_error_of(craft("[]", {}, 1, 1000)).find("manifest_len") != std::string::npos);
    CHECK(format_error_of(craft("[]", {}, 1, ~0ull)).find("manifest_len") != std::string::npos);
}

TEST_CASE("adversarial manifests") {
    CHECK(format_error_of(craft("[{", {})).find("manifest") != std::string::npos);
    CHECK(format_error_of(craft("{}", {})).find("array") != std::string::npos);
    CHECK(format_error_of(craft(R"([{"name":"x","dtype":"u8","shape":[1],"offset":0}])", {1})).find("nbytes") != std::string::npos);
    CHECK(format_error_of(craft(R"([{"name":5,"dtype":"u8","shape":[1],"offset":0,"nbytes":1}])", {1})).find("name") !=
          std::string::npos);
    CHECK(format_error_of(craft(R"([{"name":"x","dtype":"u8","shape":[-1],"offset":0,"nbytes":1}])", {1})).find("shape") !=
          std::string::npos);
    CHECK(format_error_of(craft(R"([{"name":"x","dtype":"u8","shape":[2],"offset":0,"nbytes":1}])", {1, 2})).find("nbytes") !=
          std::string::npos);
    CHECK(format_error_of(craft(R"([{"name":"x","dtype":"f64","shape":[4294967296,4294967296,16],"offset":0,"nbytes":8}])",
                                std::vector<std::uint8_t>(8)))
              .find("shape") != std::string::npos);
    CHECK(format_error_of(craft(R"([{"name":"x","dtype":"u8","shape":[1],"offset":-1,"nbytes":1}])", {1})).find("offset") !=
          std::string::npos);
    CHECK(format_error_of(craft(R"([{"name":"x","dtype":"u8","shape":[1],"offset":"0","nbytes":1}])", {1})).find("offset") !=
          std::string::npos);
    CHECK(format_error_of(craft(R"([{"name":"","dtype":"u8","shape":[1],"offset":0,"nbytes":1}])", {1})).find("name") !=
          std::string::npos);
    CHECK(format_error_of(craft(R"([{"name":"x","dtype":"u8","shape":[1],"offset":0,"nbytes":1},)"
                                R"({"name":"x","dtype":"u8","shape":[1],"offset":1,"nbytes":1}])",
                                {1, 2}))
              .find("duplicate") != std::string::npos);
}

TEST_CASE("truncated payload is a format error") {
    const auto good = serialize_container(all_dtypes());
    CHECK(format_error_of(std::span(good).first(good.size() - 1)).find("exceeds payload") != std::string::npos);
    CHECK(format_error_of(craft(R"([{"name":"x","dtype":"u8","shape":[4],"offset":0,"nbytes":4}])", {1, 2})) != "");
}

TEST_CASE("offset arithmetic cannot overflow") {
    const auto bytes = craft(R"([{"name":"x","dtype":"u8","shape":[2],"offset":18446744073709551615,"nbytes":2}])", {1, 2});
    CHECK(format_error_of(bytes).find("offset") != std::string::npos);
}

TEST_CASE("overlapping offsets are rejected") {
    const auto bytes = craft(R"([{"name":"a","dtype":"u8","shape":[4],"offset":0,"nbytes":4},)"
                             R"({"name":"b","dtype":"u8","shape":[4],"offset":2,"nbytes":4}])",
                             {1, 2, 3, 4, 5, 6});
    CHECK(format_error_of(bytes).find("overlaps") != std::string::npos);
}

TEST_CASE("random corruption never escapes as anything but a format error") {
    const auto good = serialize_container(all_dtypes());
    qainit::Rng rng(99);
    int rejected = 0;
    for (int t = 0; t < 3000; ++t) {
        std::vector<std::uint8_t> bytes = good;
        const int mode = static_cast<int>(rng.next_u64() % 3);
        if (mode == 0) {
            bytes.resize(rng.next_u64() % bytes.size());
        } else {
            const int flips = 1 + static_cast<int>(rng.next_u64() % 4);
            for (int f = 0; f < flips; ++f) bytes[rng.next_u64() % bytes.size()] = static_cast<std::uint8_t>(rng.next_u64());
        }
        try {
            parse_container(bytes);
        } catch (const FormatError&) {
            ++rejected;
        }
    }
    CHECK(rejected > 0);
}

TEST_CASE("missing files are io errors") {
    CHECK_THROWS_AS(read_container("/nonexistent/dir/file.qtnz"), IoError);
    CHECK_THROWS_AS(write_container("/nonexistent/dir/file.qtnz", TensorContainer{}), IoError);
}

TEST_CASE("quantized tensors round trip through a container") {
    qainit::Rng rng(7);
    const Matrix w = oracle::random_matrix(17, 9, rng);  // 153 elements: odd nibble count
    for (const QuantConfig cfg : {QuantConfig{4, 64, true, 256}, QuantConfig{4, 64, false, 256}, QuantConfig{8, 64, false, 256}}) {
        const QuantizedTensor q = quantize(w, cfg);
        TensorContainer c;
        store_quantized(c, "layer0", q);
        CHECK(c.contains("layer0/q_codes"));
        CHECK(c.contains("layer0/q_meta"));
        CHECK((c.contains("layer0/q_scales") != cfg.double_quant));
        CHECK((c.contains("layer0/q_scales/codes") == cfg.double_quant));
        const TensorContainer back = parse_container(serialize_container(c));
        CHECK(load_quantized(back, "layer0") == q);
        CHECK(quantized_layers(back) == std::vector<std::string>{"layer0"});
        CHECK(dequantize(load_quantized(back, "layer0"), &nf4_codebook()) == dequantize(q, &nf4_codebook()));
    }
}

TEST_CASE("inconsistent quantized entries are format errors") {
    qainit::Rng rng(8);
    const QuantizedTensor q = quantize(oracle::random_matrix(4, 16, rng), {4, 16, false, 256});
    TensorContainer c;
    store_quantized(c, "l", q);

    TensorContainer short_codes = c;
    short_codes.set("l/q_codes", make_u4packed(std::vector<std::uint8_t>(4), 8));
    CHECK_THROWS_AS(load_quantized(short_codes, "l"), FormatError);

    TensorContainer bad_meta = c;
    bad_meta.set("l/q_meta", make_blob("{\"bits\": 5}"));
    CHECK_THROWS_AS(load_quantized(bad_meta, "l"), FormatError);

    TensorContainer not_json = c;
    not_json.set("l/q_meta", make_blob("nope"));
    CHECK_THROWS_AS(load_quantized(not_json, "l"), FormatError);

    TensorContainer no_scales;
    no_scales.add("l/q_codes", c.at("l/q_codes"));
    no_scales.add("l/q_meta", c.at("l/q_meta"));
    CHECK_THROWS_AS(load_quantized(no_scales, "l"), FormatError);
}
