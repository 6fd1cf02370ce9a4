#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "tokenbind/matrix.hpp"

namespace tokenbind {

/// EMBX: magic "EMBX", version u32 LE = 1, rows u32 LE, cols u32 LE, dtype
/// byte (0 = f32, 1 = f64), then rows*cols scalars row-major little-endian.
/// Payload length must match exactly — no trailing bytes.
inline constexpr std::uint8_t kEmbxF32 = 0;
inline constexpr std::uint8_t kEmbxF64 = 1;
inline constexpr std::uint32_t kEmbxVersion = 1;

struct EmbxData {
    Matrix matrix;
    std::uint8_t dtype = kEmbxF64;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

template <typename UInt> inline void put_scalar_bits(std::vector<std::uint8_t>& out, UInt bits) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
        out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

template <typename UInt>
inline UInt get_scalar_bits(std::span<const std::uint8_t> b, std::size_t off) {
    UInt bits = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
        bits |= static_cast<UInt>(b[off + i]) << (8 * i);
    return bits;
}

} // namespace detail

inline std::vector<std::uint8_t> write_embx(const Matrix& m, std::uint8_t dtype = kEmbxF64) {
    if (dtype != kEmbxF32 && dtype != kEmbxF64)
        fail(Errc::BadDtype, "write_embx: dtype must be 0 (f32) or 1 (f64)");
    std::vector<std::uint8_t> out;
    const std::size_t width = (dtype == kEmbxF32) ? 4 : 8;
    out.reserve(17 + m.data().size() * width);
    for (char c : {'E', 'M', 'B', 'X'}) out.push_back(static_cast<std::uint8_t>(c));
    detail::put_u32(out, kEmbxVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    out.push_back(dtype);
    for (double v : m.data()) {
        if (dtype == kEmbxF32)
            detail::put_scalar_bits(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        else
            detail::put_scalar_bits(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

inline EmbxData read_embx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 17) fail(Errc::TruncatedPayload, "read_embx: shorter than the header");
    if (bytes[0] != 'E' || bytes[1] != 'M' || bytes[2] != 'B' || bytes[3] != 'X')
        fail(Errc::BadMagic, "read_embx: magic bytes are not 'EMBX'");
    const std::uint32_t version = detail::get_u32(bytes, 4);
    if (version != kEmbxVersion)
        fail(Errc::BadVersion, "read_embx: version " + std::to_string(version) +
                                   ", expected " + std::to_string(kEmbxVersion));
    const std::uint64_t rows = detail::get_u32(bytes, 8);
    const std::uint64_t cols = detail::get_u32(bytes, 12);
    const std::uint8_t dtype = bytes[16];
    if (dtype != kEmbxF32 && dtype != kEmbxF64)
        fail(Errc::BadDtype, "read_embx: dtype byte " + std::to_string(dtype));
    const std::uint64_t width = (dtype == kEmbxF32) ? 4 : 8;
    const std::uint64_t expected = rows * cols * width;
    if (bytes.size() - 17 != expected)
        fail(Errc::TruncatedPayload, "read_embx: payload of " +
                                         std::to_string(bytes.size() - 17) + " bytes, expected " +
                                         std::to_string(expected));

    std::vector<double> data;
    data.reserve(rows * cols);
    std::size_t off = 17;
    for (std::uint64_t i = 0; i < rows * cols; ++i) {
        if (dtype == kEmbxF32) {
            data.push_back(std::bit_cast<float>(detail::get_scalar_bits<std::uint32_t>(bytes, off)));
            off += 4;
        } else {
            data.push_back(std::bit_cast<double>(detail::get_scalar_bits<std::uint64_t>(bytes, off)));
            off += 8;
        }
    }
    return EmbxData{Matrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols),
                           std::move(data)),
                    dtype};
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::ParseError, "cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::ParseError, "cannot open file for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::ParseError, "short write to file: " + path);
}

inline EmbxData read_embx_file(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return read_embx(bytes);
}

inline void write_embx_file(const std::string& path, const Matrix& m,
                            std::uint8_t dtype = kEmbxF64) {
    write_file_bytes(path, write_embx(m, dtype));
}

} // namespace tokenbind
