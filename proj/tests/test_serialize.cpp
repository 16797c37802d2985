#include <doctest.h>

#include <cstring>
#include <filesystem>

#include <json.hpp>

#include "gcam/errors.hpp"
#include "gcam/serialize.hpp"
#include "gcam/surgery.hpp"
#include "support.hpp"

using namespace gcam;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "gcam_serialize_tests";
    fs::create_directories(dir);
    return dir / name;
}

nlohmann::json manifest_of(const std::vector<std::uint8_t>& bytes) {
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[6 + i]) << (8 * i);
    return nlohmann::json::parse(bytes.begin() + 10, bytes.begin() + 10 + len);
}

}  // namespace

TEST_SUITE("serialize") {
    TEST_CASE("header layout") {
        const auto bytes = encode_model(build_minivgg<float>(0));
        REQUIRE(bytes.size() > 10);
        CHECK(std::memcmp(bytes.data(), "GCF1", 4) == 0);
        CHECK(bytes[4] == 1);
        CHECK(bytes[5] == 0);
        const auto j = manifest_of(bytes);
        CHECK(j.at("dtype") == "f32");
        CHECK(j.at("meta").at("K") == 16);
        CHECK(j.at("meta").at("N_Z") == 16);
        CHECK(j.at("attack").is_null());
    }

    TEST_CASE("save, load, save is byte-identical") {
        for (std::uint64_t seed : {0ULL, 9ULL}) {
            const auto m = build_minivgg<float>(seed);
            const fs::path a = temp_path("a.gcf"), b = temp_path("b.gcf");
            save_model(m, a);
            const auto loaded = load_model<float>(a);
            CHECK(loaded == m);
            save_model(loaded, b);
            CHECK(read_file_bytes(a) == read_file_bytes(b));
        }
    }

    TEST_CASE("f64 models round-trip") {
        const auto m = cast_model<double>(build_minivgg<float>(1));
        const auto bytes = encode_model(m);
        CHECK(encoded_dtype(bytes) == DType::F64);
        CHECK(decode_model<double>(bytes) == m);
        CHECK(encode_model(decode_model<double>(bytes)) == bytes);
    }

    TEST_CASE("surgered models are self-describing and round-trip") {
        const auto base = build_minivgg<double>(2);
        AttackConfig c2 = AttackConfig::defaults_for(Technique::T2);
        c2.target = sticker_image(default_smiley());
        AttackConfig c4 = AttackConfig::defaults_for(Technique::T4);
        c4.sticker = default_smiley();
        const std::vector<Model<double>> attacked{
            attack_t1(base, AttackConfig::defaults_for(Technique::T1)), attack_t2(base, c2),
            attack_t3(base, AttackConfig::defaults_for(Technique::T3)), attack_t4(base, c4)};
        const Tensor64 x = testing::random_tensor({1, 32, 32}, 3, 0, 1);
        for (const auto& m : attacked) {
            const auto bytes = encode_model(m);
            const auto j = manifest_of(bytes);
            REQUIRE(j.contains("attack"));
            CHECK(j.at("attack").at("technique") == technique_name(m.attack->technique));
            const auto back = decode_model<double>(bytes);
            CHECK(back == m);
            CHECK(encode_model(back) == bytes);
            CHECK(forward_full(back, x).y == forward_full(m, x).y);
        }
        CHECK(manifest_of(encode_model(attacked[1])).at("attack").at("s_z") == attacked[1].attack->s_z);
        CHECK(manifest_of(encode_model(attacked[3])).at("attack").contains("sticker"));
    }

    TEST_CASE("bad magic, version and truncation are format errors") {
        const auto good = encode_model(build_minivgg<float>(0));
        auto bad_magic = good;
        bad_magic[3] = '2';
        CHECK_THROWS_AS(decode_model<float>(bad_magic), FormatError);
        auto bad_version = good;
        bad_version[4] = 2;
        CHECK_THROWS_AS(decode_model<float>(bad_version), FormatError);
        const std::vector<std::uint8_t> truncated(good.begin(), good.end() - 5);
        CHECK_THROWS_AS(decode_model<float>(truncated), FormatError);
        const std::vector<std::uint8_t> header_only(good.begin(), good.begin() + 8);
        CHECK_THROWS_AS(decode_model<float>(header_only), FormatError);
        auto bad_json = good;
        bad_json[10] = '!';
        CHECK_THROWS_AS(decode_model<float>(bad_json), FormatError);
    }

    TEST_CASE("missing file is an I/O error") {
        CHECK_THROWS_AS(load_model<float>(temp_path("does_not_exist.gcf")), IoError);
    }

    TEST_CASE("decoding into the other dtype converts") {
        const auto m = build_minivgg<float>(4);
        CHECK(decode_model<double>(encode_model(m)) == cast_model<double>(m));
    }
}
