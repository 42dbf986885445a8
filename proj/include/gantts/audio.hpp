#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gantts/common.hpp"

namespace gantts {

// ---------------------------------------------------------------------------
// Mu-law companding (continuous, no quantization step)
// ---------------------------------------------------------------------------

inline double mulaw(double x, double mu = 65535.0) {
    check(std::abs(x) <= 1.0 + 1e-12, "mulaw: |x| must be <= 1");
    x = std::clamp(x, -1.0, 1.0);
    const double y = std::log1p(mu * std::abs(x)) / std::log1p(mu);
    return std::copysign(y, x);
}

inline double mulaw_inverse(double y, double mu = 65535.0) {
    check(std::abs(y) <= 1.0 + 1e-12, "mulaw_inverse: |y| must be <= 1");
    y = std::clamp(y, -1.0, 1.0);
    const double x = std::expm1(std::abs(y) * std::log1p(mu)) / mu;
    return std::copysign(x, y);
}

// ---------------------------------------------------------------------------
// WAV persistence (canonical RIFF/WAVE, mono PCM16 little-endian)
// ---------------------------------------------------------------------------

struct WavClip {
    i64 sample_rate = 24000;
    std::vector<double> samples;  // real-valued in [-1,1]
};

namespace detail {

inline void put_u32(std::string& s, u32 v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline u32 get_u32(const std::string& s, size_t off) {
    u32 v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[off + static_cast<size_t>(i)]);
    return v;
}
inline uint16_t get_u16(const std::string& s, size_t off) {
    return static_cast<uint16_t>(static_cast<unsigned char>(s[off]) |
                                 (static_cast<unsigned char>(s[off + 1]) << 8));
}

}  // namespace detail

inline int16_t pcm16_of(double v) {
    return static_cast<int16_t>(std::lrint(std::clamp(v, -1.0, 1.0) * 32767.0));
}

inline void write_wav(const std::string& path, const WavClip& clip) {
    check(clip.sample_rate > 0, "write_wav: bad sample rate");
    const u32 n = static_cast<u32>(clip.samples.size());
    const u32 data_size = 2 * n;
    std::string out;
    out.reserve(44 + data_size);
    out += "RIFF";
    detail::put_u32(out, 36 + data_size);
    out += "WAVE";
    out += "fmt ";
    detail::put_u32(out, 16);
    detail::put_u16(out, 1);  // PCM
    detail::put_u16(out, 1);  // mono
    detail::put_u32(out, static_cast<u32>(clip.sample_rate));
    detail::put_u32(out, static_cast<u32>(clip.sample_rate * 2));
    detail::put_u16(out, 2);   // block align
    detail::put_u16(out, 16);  // bits per sample
    out += "data";
    detail::put_u32(out, data_size);
    for (double v : clip.samples) {
        const int16_t q = pcm16_of(v);
        out.push_back(static_cast<char>(q & 0xff));
        out.push_back(static_cast<char>((q >> 8) & 0xff));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check(f.good(), "write_wav: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    check(f.good(), "write_wav: write failed for " + path);
}

inline WavClip read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "read_wav: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    check(buf.size() >= 44, "read_wav: truncated file " + path);
    check(buf.compare(0, 4, "RIFF") == 0 && buf.compare(8, 4, "WAVE") == 0,
          "read_wav: not a RIFF/WAVE file: " + path);
    WavClip clip;
    bool have_fmt = false, have_data = false;
    size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const std::string id = buf.substr(pos, 4);
        const u32 size = detail::get_u32(buf, pos + 4);
        check(pos + 8 + size <= buf.size(), "read_wav: chunk overruns file: " + path);
        if (id == "fmt ") {
            check(size >= 16, "read_wav: short fmt chunk");
            check(detail::get_u16(buf, pos + 8) == 1, "read_wav: only PCM supported");
            check(detail::get_u16(buf, pos + 10) == 1, "read_wav: only mono supported");
            clip.sample_rate = detail::get_u32(buf, pos + 12);
            check(detail::get_u16(buf, pos + 22) == 16, "read_wav: only 16-bit supported");
            have_fmt = true;
        } else if (id == "data") {
            check(have_fmt, "read_wav: data chunk before fmt");
            check(size % 2 == 0, "read_wav: odd data size");
            clip.samples.resize(size / 2);
            for (size_t i = 0; i < clip.samples.size(); ++i) {
                const int16_t q = static_cast<int16_t>(detail::get_u16(buf, pos + 8 + 2 * i));
                clip.samples[i] = q / 32767.0;
            }
            have_data = true;
        }
        pos += 8 + size + (size % 2);  // chunks are word-aligned
    }
    check(have_fmt && have_data, "read_wav: missing fmt or data chunk: " + path);
    return clip;
}

// ---------------------------------------------------------------------------
// Matrix files (row-major f64 payload with a 4-byte magic)
// ---------------------------------------------------------------------------

inline void write_matrix(const std::string& path, const char magic[4], i64 rows, i64 cols,
                         const double* data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check(f.good(), "write_matrix: cannot open " + path);
    f.write(magic, 4);
    const u32 version = 1;
    f.write(reinterpret_cast<const char*>(&version), 4);
    const u64 r = static_cast<u64>(rows), c = static_cast<u64>(cols);
    f.write(reinterpret_cast<const char*>(&r), 8);
    f.write(reinterpret_cast<const char*>(&c), 8);
    f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(8 * rows * cols));
    check(f.good(), "write_matrix: write failed for " + path);
}

inline std::vector<double> read_matrix(const std::string& path, const char magic[4], i64* rows,
                                       i64* cols) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "read_matrix: cannot open " + path);
    char m[4];
    u32 version = 0;
    u64 r = 0, c = 0;
    f.read(m, 4);
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&r), 8);
    f.read(reinterpret_cast<char*>(&c), 8);
    check(f.good(), "read_matrix: truncated header in " + path);
    check(std::memcmp(m, magic, 4) == 0, "read_matrix: wrong magic in " + path);
    check(version == 1, "read_matrix: unsupported version in " + path);
    check(r < (1ull << 32) && c < (1ull << 32), "read_matrix: implausible extents in " + path);
    std::vector<double> data(static_cast<size_t>(r * c));
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(8 * r * c));
    check(f.good(), "read_matrix: truncated payload in " + path);
    *rows = static_cast<i64>(r);
    *cols = static_cast<i64>(c);
    return data;
}

}  // namespace gantts
