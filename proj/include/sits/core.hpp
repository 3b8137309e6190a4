#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace sits {

// ---------------------------------------------------------------------------
// Error taxonomy. Store and pipeline code throw these so callers (and the
// CLI's exit-code mapping) can tell malformed inputs from broken invariants.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Unparseable or structurally wrong input (bad meta.json, bad PGM header, ...).
struct FormatError : Error {
    using Error::Error;
};

/// Metadata and payload disagree (declared dims vs. bytes on disk, ...).
struct IntegrityError : Error {
    using Error::Error;
};

/// Invalid configuration or arguments (unknown key, missing band, ...).
struct ConfigError : Error {
    using Error::Error;
};

/// Filesystem failure while reading or writing an artifact.
struct IoError : Error {
    using Error::Error;
};

/// A documented call contract was violated by the caller.
struct PreconditionError : Error {
    using Error::Error;
};

/// Training left the stable regime (NaN gradients, exploding loss).
struct TrainingDiverged : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Timestamp: monthly resolution, totally ordered by (year, month).
// ---------------------------------------------------------------------------

struct Timestamp {
    int year = 1970;
    int month = 1;  // 1..12

    friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

constexpr int kMinYear = 1970;
constexpr int kMaxYear = 2100;

inline bool timestamp_valid(Timestamp t) {
    return t.month >= 1 && t.month <= 12 && t.year >= kMinYear && t.year <= kMaxYear;
}

inline void require_valid(Timestamp t) {
    if (!timestamp_valid(t)) {
        throw PreconditionError("timestamp out of range: year=" + std::to_string(t.year) +
                                " month=" + std::to_string(t.month));
    }
}

/// Signed month difference t2 - t1 (negative when t2 precedes t1).
inline int months_between(Timestamp t1, Timestamp t2) {
    require_valid(t1);
    require_valid(t2);
    return 12 * (t2.year - t1.year) + (t2.month - t1.month);
}

/// t shifted forward by `months` (months may be negative).
inline Timestamp add_months(Timestamp t, int months) {
    int idx = t.year * 12 + (t.month - 1) + months;
    Timestamp out{idx / 12, idx % 12 + 1};
    if (idx % 12 < 0) {  // C++ truncation: fix up for negative indices
        out.year -= 1;
        out.month = idx % 12 + 13;
    }
    return out;
}

inline std::string format_timestamp(Timestamp t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", t.year, t.month);
    return buf;
}

/// Parses "YYYY-MM". Throws FormatError on anything else.
inline Timestamp parse_timestamp(const std::string& s) {
    int y = 0, m = 0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%d-%d%c", &y, &m, &tail) != 2) {
        throw FormatError("bad timestamp '" + s + "', expected YYYY-MM");
    }
    Timestamp t{y, m};
    if (!timestamp_valid(t)) {
        throw FormatError("timestamp out of range: '" + s + "'");
    }
    return t;
}

// ---------------------------------------------------------------------------
// TimeSeriesCube: T x C x H x W reflectance stack with per-frame timestamps.
// Data is row-major (t, c, y, x), reflectance in [0,1], missing pixels NaN.
// ---------------------------------------------------------------------------

inline const std::vector<std::string> kPretextBands = {"red", "green", "blue", "nir"};

struct TimeSeriesCube {
    std::vector<float> data;  // size t*c*h*w
    int t = 0, c = 0, h = 0, w = 0;
    std::vector<Timestamp> timestamps;  // size t, strictly increasing
    std::vector<std::string> bands;     // size c

    std::size_t index(int ti, int ci, int yi, int xi) const {
        return ((static_cast<std::size_t>(ti) * c + ci) * h + yi) * w + xi;
    }
    float at(int ti, int ci, int yi, int xi) const { return data[index(ti, ci, yi, xi)]; }
    float& at(int ti, int ci, int yi, int xi) { return data[index(ti, ci, yi, xi)]; }

    const float* frame(int ti) const {
        return data.data() + static_cast<std::size_t>(ti) * c * h * w;
    }
    std::size_t frame_size() const { return static_cast<std::size_t>(c) * h * w; }

    int band_index(const std::string& name) const {
        auto it = std::find(bands.begin(), bands.end(), name);
        return it == bands.end() ? -1 : static_cast<int>(it - bands.begin());
    }
};

/// Checks every TimeSeriesCube invariant; throws IntegrityError on violation.
inline void validate_cube(const TimeSeriesCube& cube) {
    if (cube.t <= 0 || cube.c <= 0 || cube.h <= 0 || cube.w <= 0) {
        throw IntegrityError("cube has empty dimensions");
    }
    if (cube.data.size() != static_cast<std::size_t>(cube.t) * cube.c * cube.h * cube.w) {
        throw IntegrityError("cube data size does not match dims");
    }
    if (cube.timestamps.size() != static_cast<std::size_t>(cube.t)) {
        throw IntegrityError("cube timestamp count does not match T");
    }
    if (cube.bands.size() != static_cast<std::size_t>(cube.c)) {
        throw IntegrityError("cube band count does not match C");
    }
    for (const auto& ts : cube.timestamps) {
        if (!timestamp_valid(ts)) throw IntegrityError("cube timestamp out of range");
    }
    for (int i = 1; i < cube.t; ++i) {
        if (!(cube.timestamps[i - 1] < cube.timestamps[i])) {
            throw IntegrityError("cube timestamps not strictly increasing");
        }
    }
    for (int ti = 0; ti < cube.t; ++ti) {
        const float* f = cube.frame(ti);
        bool any_finite = false;
        for (std::size_t i = 0; i < cube.frame_size(); ++i) {
            if (!std::isnan(f[i])) {
                any_finite = true;
                break;
            }
        }
        if (!any_finite) {
            throw IntegrityError("frame " + std::to_string(ti) + " is entirely missing-valued");
        }
    }
}

/// Cubes feeding the pretext tasks must carry exactly (red, green, blue, nir).
inline void require_pretext_bands(const TimeSeriesCube& cube) {
    if (cube.bands != kPretextBands) {
        std::string got;
        for (const auto& b : cube.bands) got += (got.empty() ? "" : ",") + b;
        throw ConfigError("pretext training needs bands (red,green,blue,nir), got (" + got + ")");
    }
}

// ---------------------------------------------------------------------------
// FrequencyMap: K x H x W dominant temporal frequencies in cycles/month,
// channel 0 strongest. Pixels excluded from ranking hold NaN.
// ---------------------------------------------------------------------------

struct FrequencyMap {
    std::vector<float> data;  // size k*h*w
    int k = 0, h = 0, w = 0;
    std::string k_order = "descending_amplitude";

    std::size_t index(int ki, int yi, int xi) const {
        return (static_cast<std::size_t>(ki) * h + yi) * w + xi;
    }
    float at(int ki, int yi, int xi) const { return data[index(ki, yi, xi)]; }
    float& at(int ki, int yi, int xi) { return data[index(ki, yi, xi)]; }
    const float* channel(int ki) const {
        return data.data() + static_cast<std::size_t>(ki) * h * w;
    }
};

// ---------------------------------------------------------------------------
// BitemporalSample: ordered image pair from one cube, the unit of pretext
// training. Non-owning: frames reference the cube they came from.
// ---------------------------------------------------------------------------

struct BitemporalSample {
    const TimeSeriesCube* cube = nullptr;
    int frame1 = 0, frame2 = 0;  // frame1's timestamp <= frame2's
    Timestamp t1, t2;
    int gap_months = 0;  // months_between(t1, t2), >= 0
    const FrequencyMap* freq_map = nullptr;

    const float* x1() const { return cube->frame(frame1); }
    const float* x2() const { return cube->frame(frame2); }
};

inline BitemporalSample make_sample(const TimeSeriesCube& cube, int i, int j,
                                    const FrequencyMap* fmap = nullptr) {
    if (i < 0 || j < 0 || i >= cube.t || j >= cube.t) {
        throw PreconditionError("sample frame index out of range");
    }
    BitemporalSample s;
    s.cube = &cube;
    s.frame1 = i;
    s.frame2 = j;
    s.t1 = cube.timestamps[i];
    s.t2 = cube.timestamps[j];
    s.gap_months = months_between(s.t1, s.t2);
    if (s.gap_months < 0) throw PreconditionError("bitemporal sample requires t1 <= t2");
    s.freq_map = fmap;
    return s;
}

}  // namespace sits
