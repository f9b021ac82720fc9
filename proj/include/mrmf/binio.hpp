#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "mrmf/errors.hpp"

namespace mrmf::binio {

// Little-endian primitives over iostreams. Read failures surface as DataError
// with the `truncated` kind; writes report `io`.

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out) throw DataError(DataErrorKind::io, "write failed");
}

inline void read_bytes(std::istream& in, void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw DataError(DataErrorKind::truncated,
                        std::string("unexpected end of file while reading ") + what);
}

inline void write_u8(std::ostream& out, std::uint8_t v) { write_bytes(out, &v, 1); }

inline std::uint8_t read_u8(std::istream& in, const char* what) {
    std::uint8_t v = 0;
    read_bytes(in, &v, 1, what);
    return v;
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    write_bytes(out, b, 4);
}

inline std::uint32_t read_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    read_bytes(in, b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(out, b, 8);
}

inline std::uint64_t read_u64(std::istream& in, const char* what) {
    unsigned char b[8];
    read_bytes(in, b, 8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void write_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

inline float read_f32(std::istream& in, const char* what) {
    const std::uint32_t bits = read_u32(in, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(out, bits);
}

inline double read_f64(std::istream& in, const char* what) {
    const std::uint64_t bits = read_u64(in, what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const char* format_name) {
    char got[4];
    read_bytes(in, got, 4, "magic");
    if (std::memcmp(got, magic, 4) != 0)
        throw DataError(DataErrorKind::bad_magic,
                        std::string("not a ") + format_name + " file (magic mismatch)");
}

inline void expect_eof(std::istream& in, const char* format_name) {
    char extra;
    in.read(&extra, 1);
    if (in.gcount() != 0)
        throw DataError(DataErrorKind::invalid,
                        std::string(format_name) + " file has trailing bytes after payload");
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(DataErrorKind::io, "cannot open for reading: " + path);
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(DataErrorKind::io, "cannot open for writing: " + path);
    return out;
}

}  // namespace mrmf::binio
