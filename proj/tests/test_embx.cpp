#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "tokenbind/embx.hpp"
#include "tokenbind/rng.hpp"

using namespace tokenbind;

TEST_CASE("embx f64 round trip is bit-exact", "[embx]") {
    Rng rng(71);
    Matrix m = rng.gaussian_matrix(5, 3);
    m(0, 0) = 0.0;
    m(0, 1) = -0.0;
    m(0, 2) = 1e-308;         // subnormal territory
    m(1, 0) = 3.141592653589793;
    m(1, 1) = -2.2250738585072014e-308;

    const std::vector<std::uint8_t> bytes = write_embx(m, kEmbxF64);
    REQUIRE(bytes.size() == 17 + 15 * 8);
    const EmbxData back = read_embx(bytes);
    REQUIRE(back.dtype == kEmbxF64);
    REQUIRE(back.matrix.rows() == 5);
    REQUIRE(back.matrix.cols() == 3);
    REQUIRE(back.matrix.data() == m.data());
    REQUIRE(std::signbit(back.matrix(0, 1)));
}

TEST_CASE("embx f32 round trip is exact for float-representable data", "[embx]") {
    Rng rng(72);
    Matrix m(4, 4);
    for (double& v : m.data()) v = static_cast<double>(static_cast<float>(rng.gaussian()));

    const std::vector<std::uint8_t> bytes = write_embx(m, kEmbxF32);
    REQUIRE(bytes.size() == 17 + 16 * 4);
    const EmbxData back = read_embx(bytes);
    REQUIRE(back.dtype == kEmbxF32);
    REQUIRE(back.matrix.data() == m.data());
}

TEST_CASE("embx header layout is pinned byte for byte", "[embx]") {
    const Matrix one(1, 1, {1.0});
    const std::vector<std::uint8_t> bytes = write_embx(one, kEmbxF64);
    const std::vector<std::uint8_t> expected = {
        'E', 'M', 'B', 'X',      // magic
        1,   0,   0,   0,        // version 1 LE
        1,   0,   0,   0,        // rows
        1,   0,   0,   0,        // cols
        1,                       // dtype f64
        0, 0, 0, 0, 0, 0, 0xF0, 0x3F, // 1.0 as IEEE-754 LE
    };
    REQUIRE(bytes == expected);
}

TEST_CASE("embx supports the empty matrix", "[embx]") {
    const Matrix empty;
    const std::vector<std::uint8_t> bytes = write_embx(empty);
    REQUIRE(bytes.size() == 17);
    const EmbxData back = read_embx(bytes);
    REQUIRE(back.matrix.rows() == 0);
    REQUIRE(back.matrix.cols() == 0);
}

TEST_CASE("embx corruption taxonomy", "[embx]") {
    Rng rng(73);
    const Matrix m = rng.gaussian_matrix(3, 2);
    const std::vector<std::uint8_t> good = write_embx(m);
    auto expect = [](std::vector<std::uint8_t> bytes, Errc code) {
        try {
            read_embx(bytes);
            FAIL("expected " + std::string(errc_name(code)));
        } catch (const Error& e) {
            REQUIRE(e.code() == code);
        }
    };

    SECTION("wrong magic") {
        auto bad = good;
        bad[0] = 'F';
        expect(bad, Errc::BadMagic);
    }

    SECTION("unsupported version") {
        auto bad = good;
        bad[4] = 2;
        expect(bad, Errc::BadVersion);
    }

    SECTION("unknown dtype byte") {
        auto bad = good;
        bad[16] = 7;
        expect(bad, Errc::BadDtype);
    }

    SECTION("payload too short") {
        auto bad = good;
        bad.pop_back();
        expect(bad, Errc::TruncatedPayload);
    }

    SECTION("trailing bytes") {
        auto bad = good;
        bad.push_back(0);
        expect(bad, Errc::TruncatedPayload);
    }

    SECTION("shorter than the header") {
        expect(std::vector<std::uint8_t>(good.begin(), good.begin() + 16),
               Errc::TruncatedPayload);
    }

    SECTION("write rejects unknown dtypes") {
        try {
            write_embx(m, 3);
            FAIL("expected BadDtype");
        } catch (const Error& e) {
            REQUIRE(e.code() == Errc::BadDtype);
        }
    }
}

TEST_CASE("embx file round trip and missing-file error", "[embx]") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(TEST_TMPDIR) / "embx";
    fs::create_directories(dir);

    Rng rng(74);
    const Matrix m = rng.gaussian_matrix(6, 4);
    const std::string path = (dir / "roundtrip.embx").string();
    write_embx_file(path, m);
    const EmbxData back = read_embx_file(path);
    REQUIRE(back.matrix.data() == m.data());

    // byte-identical on disk across two writes
    write_embx_file(path + ".2", m);
    REQUIRE(read_file_bytes(path) == read_file_bytes(path + ".2"));

    try {
        read_embx_file((dir / "does-not-exist.embx").string());
        FAIL("expected ParseError");
    } catch (const Error& e) {
        REQUIRE(e.code() == Errc::ParseError);
    }
}
