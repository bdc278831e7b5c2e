#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tinysv/errors.hpp"

namespace tinysv {

struct WavData {
    std::vector<std::int16_t> samples;
    int sample_rate_hz = 0;
    double duration_seconds() const {
        return sample_rate_hz > 0
                   ? static_cast<double>(samples.size()) / sample_rate_hz
                   : 0.0;
    }
};

namespace detail {

inline std::uint32_t read_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(static_cast<std::uint16_t>(p[0]) |
                                      (static_cast<std::uint16_t>(p[1]) << 8));
}

} // namespace detail

// Reads a RIFF/WAVE file. Only PCM 16-bit mono is accepted; anything else is
// an UnsupportedFormat error with a message naming what was found.
inline WavData read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io_error, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    require(in.good() || in.eof(), ErrorCode::io_error, "read failed: " + path.string());

    auto bad = [&](const std::string& why) -> void {
        fail(ErrorCode::unsupported_format, path.string() + ": " + why);
    };

    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        bad("not a RIFF/WAVE file");

    bool have_fmt = false;
    WavData wav;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t chunk_size = detail::read_u32le(bytes.data() + pos + 4);
        const std::size_t body = pos + 8;
        if (body + chunk_size > bytes.size()) bad("truncated chunk");

        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (chunk_size < 16) bad("fmt chunk too small");
            const std::uint16_t format = detail::read_u16le(bytes.data() + body);
            const std::uint16_t channels = detail::read_u16le(bytes.data() + body + 2);
            const std::uint32_t rate = detail::read_u32le(bytes.data() + body + 4);
            const std::uint16_t bits = detail::read_u16le(bytes.data() + body + 14);
            if (format != 1) bad("not PCM (format tag " + std::to_string(format) + ")");
            if (channels != 1)
                bad("expected mono, got " + std::to_string(channels) + " channels");
            if (bits != 16) bad("expected 16-bit samples, got " + std::to_string(bits));
            wav.sample_rate_hz = static_cast<int>(rate);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            if (!have_fmt) bad("data chunk before fmt chunk");
            const std::size_t n = chunk_size / 2;
            wav.samples.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const std::uint16_t u = detail::read_u16le(bytes.data() + body + 2 * i);
                wav.samples[i] = static_cast<std::int16_t>(u);
            }
            return wav;
        }
        pos = body + chunk_size + (chunk_size & 1); // chunks are word-aligned
    }
    bad(have_fmt ? "missing data chunk" : "missing fmt chunk");
    return wav; // unreachable
}

} // namespace tinysv
