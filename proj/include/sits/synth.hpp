#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sits/core.hpp"
#include "sits/rng.hpp"

// Seeded synthetic agricultural time series with known parcels, periods and
// phases. Parcel ground truth makes frequency recovery, gap learnability and
// probe quality directly checkable.

namespace sits {

struct SynthSpec {
    int h = 64, w = 64;
    int t = 36;
    int parcels = 2;
    std::vector<int> periods = {12, 6};   // months; parcel p uses periods[p % size]
    std::vector<double> phases;           // month offsets; drawn from seed when empty
    double noise_sigma = 0.0;             // gaussian noise on the NDVI path
    std::uint64_t seed = 0;
    Timestamp start{2018, 1};

    void validate() const {
        if (h < 1 || w < 1 || t < 2) throw ConfigError("synth dims must be positive, T >= 2");
        if (parcels < 1) throw ConfigError("synth needs >= 1 parcel");
        if (periods.empty()) throw ConfigError("synth needs at least one period");
        for (int p : periods) {
            if (p < 2) throw ConfigError("synth periods must be >= 2 months");
        }
        if (!timestamp_valid(start)) throw ConfigError("synth start timestamp out of range");
    }
};

/// Seeded Voronoi partition into `parcels` contiguous regions (labels 0..P-1).
inline std::vector<std::uint16_t> gen_parcels(const SynthSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, 11));
    std::vector<std::pair<int, int>> sites(spec.parcels);
    for (auto& s : sites) s = {rng.range_int(0, spec.h - 1), rng.range_int(0, spec.w - 1)};
    std::vector<std::uint16_t> labels(static_cast<std::size_t>(spec.h) * spec.w);
    for (int y = 0; y < spec.h; ++y) {
        for (int x = 0; x < spec.w; ++x) {
            long best = -1;
            int best_p = 0;
            for (int p = 0; p < spec.parcels; ++p) {
                long dy = y - sites[p].first, dx = x - sites[p].second;
                long d2 = dy * dy + dx * dx;
                if (best < 0 || d2 < best) {  // tie: lower parcel index wins
                    best = d2;
                    best_p = p;
                }
            }
            labels[static_cast<std::size_t>(y) * spec.w + x] = static_cast<std::uint16_t>(best_p);
        }
    }
    return labels;
}

struct SynthResult {
    TimeSeriesCube cube;
    std::vector<std::uint16_t> parcel_map;  // H x W
    std::vector<int> periods;               // per parcel
    std::vector<double> phases;              // per parcel
};

/// Per pixel, NDVI(t) = 0.45 + 0.35 sin(2 pi (t + phase)/period) + noise,
/// realized with nir + red fixed at 0.5 so the band inversion is unique.
/// Green and blue carry correlated low-amplitude signals.
inline SynthResult gen_sits(const SynthSpec& spec) {
    spec.validate();
    SynthResult out;
    out.parcel_map = gen_parcels(spec);

    out.periods.resize(spec.parcels);
    for (int p = 0; p < spec.parcels; ++p) {
        out.periods[p] = spec.periods[p % spec.periods.size()];
    }
    Rng phase_rng(derive_seed(spec.seed, 12));
    out.phases.resize(spec.parcels);
    for (int p = 0; p < spec.parcels; ++p) {
        out.phases[p] = p < static_cast<int>(spec.phases.size())
                            ? spec.phases[p]
                            : phase_rng.uniform(0.0, out.periods[p]);
    }

    TimeSeriesCube& cube = out.cube;
    cube.t = spec.t;
    cube.c = 4;
    cube.h = spec.h;
    cube.w = spec.w;
    cube.bands = kPretextBands;
    cube.timestamps.resize(spec.t);
    for (int ti = 0; ti < spec.t; ++ti) cube.timestamps[ti] = add_months(spec.start, ti);
    cube.data.resize(static_cast<std::size_t>(spec.t) * 4 * spec.h * spec.w);

    Rng noise_rng(derive_seed(spec.seed, 13));
    std::size_t plane = static_cast<std::size_t>(spec.h) * spec.w;
    for (int ti = 0; ti < spec.t; ++ti) {
        float* red = cube.data.data() + (static_cast<std::size_t>(ti) * 4 + 0) * plane;
        float* green = cube.data.data() + (static_cast<std::size_t>(ti) * 4 + 1) * plane;
        float* blue = cube.data.data() + (static_cast<std::size_t>(ti) * 4 + 2) * plane;
        float* nir = cube.data.data() + (static_cast<std::size_t>(ti) * 4 + 3) * plane;
        for (std::size_t px = 0; px < plane; ++px) {
            int parcel = out.parcel_map[px];
            double period = out.periods[parcel];
            double phase = out.phases[parcel];
            double arg = 2.0 * M_PI * (ti + phase) / period;
            double v = 0.45 + 0.35 * std::sin(arg);
            if (spec.noise_sigma > 0.0) v += noise_rng.normal(0.0, spec.noise_sigma);
            // nir + red = 0.5 exactly; ndvi = (nir - red) / (nir + red)
            nir[px] = static_cast<float>(0.25 * (1.0 + v));
            red[px] = static_cast<float>(0.25 * (1.0 - v));
            green[px] = static_cast<float>(0.12 + 0.05 * std::sin(arg + M_PI / 6.0));
            blue[px] = static_cast<float>(0.10 + 0.04 * std::sin(arg + M_PI / 3.0));
        }
    }
    return out;
}

struct CloudMasks {
    // cloudy is T x H x W, true where a pixel is obscured
    std::vector<std::uint8_t> cloudy;
    std::vector<double> valid_fraction;  // per frame, exact mean of !cloudy
    int t = 0, h = 0, w = 0;
};

/// Seeded random rectangles of cloud per frame; valid fractions are counted
/// directly from the masks.
inline CloudMasks gen_cloud_masks(const SynthSpec& spec, int max_rects_per_frame,
                                  std::uint64_t mask_seed) {
    spec.validate();
    if (max_rects_per_frame < 0) throw ConfigError("max_rects_per_frame must be >= 0");
    CloudMasks out;
    out.t = spec.t;
    out.h = spec.h;
    out.w = spec.w;
    out.cloudy.assign(static_cast<std::size_t>(spec.t) * spec.h * spec.w, 0);
    out.valid_fraction.resize(spec.t);
    Rng rng(mask_seed);
    std::size_t plane = static_cast<std::size_t>(spec.h) * spec.w;
    for (int ti = 0; ti < spec.t; ++ti) {
        std::uint8_t* mask = out.cloudy.data() + ti * plane;
        int rects = max_rects_per_frame > 0 ? rng.range_int(0, max_rects_per_frame) : 0;
        for (int r = 0; r < rects; ++r) {
            int rh = rng.range_int(1, std::max(1, spec.h / 2));
            int rw = rng.range_int(1, std::max(1, spec.w / 2));
            int y0 = rng.range_int(0, spec.h - rh);
            int x0 = rng.range_int(0, spec.w - rw);
            for (int y = y0; y < y0 + rh; ++y) {
                for (int x = x0; x < x0 + rw; ++x) {
                    mask[static_cast<std::size_t>(y) * spec.w + x] = 1;
                }
            }
        }
        std::size_t clear = 0;
        for (std::size_t i = 0; i < plane; ++i) clear += mask[i] == 0;
        out.valid_fraction[ti] = static_cast<double>(clear) / static_cast<double>(plane);
    }
    return out;
}

}  // namespace sits
