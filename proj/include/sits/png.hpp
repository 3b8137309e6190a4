#pragma once

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sits/core.hpp"

// Minimal RGB8 PNG writer (zlib-deflated, filter 0 per scanline) and the
// fixed rainbow colormap used for frequency-map visualization.

namespace sits {

namespace detail {

inline void push_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void push_chunk(std::vector<std::uint8_t>& out, const char type[4],
                       const std::vector<std::uint8_t>& data) {
    push_be32(out, static_cast<std::uint32_t>(data.size()));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
    push_be32(out, crc);
}

}  // namespace detail

/// Encodes H x W RGB8 pixels (row-major, 3 bytes per pixel) as a PNG file.
inline void write_rgb_png(const std::vector<std::uint8_t>& rgb, int h, int w,
                          const std::filesystem::path& path) {
    if (rgb.size() != static_cast<std::size_t>(h) * w * 3) {
        throw PreconditionError("write_rgb_png: buffer size mismatch");
    }
    // filter byte 0 in front of every scanline
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(h) * (w * 3 + 1));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        const std::uint8_t* line = rgb.data() + static_cast<std::size_t>(y) * w * 3;
        raw.insert(raw.end(), line, line + static_cast<std::size_t>(w) * 3);
    }
    uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> deflated(bound);
    if (::compress2(deflated.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) !=
        Z_OK) {
        throw IoError("zlib compression failed");
    }
    deflated.resize(bound);

    std::vector<std::uint8_t> out;
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);
    std::vector<std::uint8_t> ihdr;
    detail::push_be32(ihdr, static_cast<std::uint32_t>(w));
    detail::push_be32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    detail::push_chunk(out, "IHDR", ihdr);
    detail::push_chunk(out, "IDAT", deflated);
    detail::push_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write: " + path.string());
}

/// Fixed rainbow over (0, 0.5]: low frequencies blue, high red. NaN or
/// out-of-range values render black.
inline void freq_to_rgb(float freq, std::uint8_t rgb[3]) {
    if (std::isnan(freq) || freq <= 0.0f || freq > 0.5f) {
        rgb[0] = rgb[1] = rgb[2] = 0;
        return;
    }
    double t = freq / 0.5;            // (0, 1]
    double hue = 240.0 * (1.0 - t);   // degrees, blue -> red
    double hh = hue / 60.0;
    int sector = static_cast<int>(hh) % 6;
    double f = hh - std::floor(hh);
    auto to_u8 = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * x)); };
    double p = 0.0, q = 1.0 - f, r = f;
    switch (sector) {
        case 0: rgb[0] = to_u8(1.0); rgb[1] = to_u8(r); rgb[2] = to_u8(p); break;
        case 1: rgb[0] = to_u8(q);   rgb[1] = to_u8(1.0); rgb[2] = to_u8(p); break;
        case 2: rgb[0] = to_u8(p);   rgb[1] = to_u8(1.0); rgb[2] = to_u8(r); break;
        case 3: rgb[0] = to_u8(p);   rgb[1] = to_u8(q); rgb[2] = to_u8(1.0); break;
        default: rgb[0] = to_u8(r);  rgb[1] = to_u8(p); rgb[2] = to_u8(1.0); break;
    }
}

/// Channel 0 of a frequency map rendered through the fixed colormap.
inline std::vector<std::uint8_t> render_freq_channel(const FrequencyMap& map) {
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(map.h) * map.w * 3);
    const float* ch0 = map.channel(0);
    for (std::size_t i = 0; i < static_cast<std::size_t>(map.h) * map.w; ++i) {
        freq_to_rgb(ch0[i], rgb.data() + i * 3);
    }
    return rgb;
}

}  // namespace sits
