#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "sits/core.hpp"

// Dominant-frequency map construction and its numerical kernels. The
// pipeline is: per-pixel NDVI series -> linear interpolation onto the
// integer month grid -> Savitzky-Golay smoothing -> per-pixel DFT ->
// top-K positive frequencies ranked by amplitude.
//
// Everything here is a pure function over immutable inputs; the per-pixel
// loops run sequentially so output is identical no matter how callers
// schedule work.

namespace sits {

constexpr double kNdviEps = 1e-8;

// Per-pixel status bits carried alongside frequency outputs.
enum PixelFlag : std::uint8_t {
    kFlagNone = 0,
    kFlagInsufficientObs = 1,  // <2 valid observations; channels are NaN
    kFlagDegenerate = 2,       // all positive-bin amplitudes ~ 0; tie-break order emitted
    kFlagPadded = 4,           // fewer positive bins than K; padded with the lowest bin
};

/// Monthly-gridded per-pixel series. values is T_reg x P row-major; grid
/// month g corresponds to timestamp start + g months.
struct RegularSeries {
    std::vector<double> values;
    int t_reg = 0;
    int pixels = 0;
    Timestamp start;
    std::vector<std::uint8_t> flags;  // per pixel

    double at(int g, int p) const { return values[static_cast<std::size_t>(g) * pixels + p]; }
};

/// (nir - red) / (nir + red + eps), T x H x W. NaN inputs propagate.
inline std::vector<double> ndvi(const TimeSeriesCube& cube) {
    int red = cube.band_index("red");
    int nir = cube.band_index("nir");
    if (red < 0 || nir < 0) {
        throw ConfigError("ndvi requires red and nir bands");
    }
    std::size_t plane = static_cast<std::size_t>(cube.h) * cube.w;
    std::vector<double> out(static_cast<std::size_t>(cube.t) * plane);
    for (int ti = 0; ti < cube.t; ++ti) {
        const float* r = cube.data.data() + (static_cast<std::size_t>(ti) * cube.c + red) * plane;
        const float* n = cube.data.data() + (static_cast<std::size_t>(ti) * cube.c + nir) * plane;
        double* o = out.data() + ti * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            o[i] = (static_cast<double>(n[i]) - r[i]) / (static_cast<double>(n[i]) + r[i] + kNdviEps);
        }
    }
    return out;
}

/// Linear interpolation of each pixel's series onto the integer month grid
/// spanned by the timestamps, extrapolating beyond a pixel's observed range
/// with the nearest segment's slope. NaN observations are dropped per pixel;
/// pixels left with fewer than two valid observations come back all-NaN and
/// flagged.
inline RegularSeries regularize_monthly(const std::vector<double>& values, int t, int pixels,
                                        const std::vector<Timestamp>& timestamps) {
    if (timestamps.size() != static_cast<std::size_t>(t)) {
        throw PreconditionError("regularize_monthly: timestamp count != T");
    }
    if (t < 2) throw PreconditionError("regularize_monthly needs >= 2 timestamps");
    if (values.size() != static_cast<std::size_t>(t) * pixels) {
        throw PreconditionError("regularize_monthly: values size != T*P");
    }
    std::vector<int> months(t);
    for (int i = 0; i < t; ++i) months[i] = months_between(timestamps[0], timestamps[i]);

    RegularSeries out;
    out.start = timestamps[0];
    out.t_reg = months.back() + 1;
    out.pixels = pixels;
    out.values.assign(static_cast<std::size_t>(out.t_reg) * pixels,
                      std::numeric_limits<double>::quiet_NaN());
    out.flags.assign(pixels, kFlagNone);

    std::vector<int> mx;
    std::vector<double> my;
    mx.reserve(t);
    my.reserve(t);
    for (int p = 0; p < pixels; ++p) {
        mx.clear();
        my.clear();
        for (int i = 0; i < t; ++i) {
            double v = values[static_cast<std::size_t>(i) * pixels + p];
            if (!std::isnan(v)) {
                mx.push_back(months[i]);
                my.push_back(v);
            }
        }
        if (mx.size() < 2) {
            out.flags[p] |= kFlagInsufficientObs;
            continue;
        }
        int seg = 0;
        int last_seg = static_cast<int>(mx.size()) - 2;
        for (int g = 0; g < out.t_reg; ++g) {
            while (seg < last_seg && g >= mx[seg + 1]) ++seg;
            // segment `seg` also serves for extrapolation on either side
            double x0 = mx[seg], x1 = mx[seg + 1];
            double y0 = my[seg], y1 = my[seg + 1];
            double v = y0 + (y1 - y0) * (g - x0) / (x1 - x0);
            out.values[static_cast<std::size_t>(g) * pixels + p] = v;
        }
    }
    return out;
}

namespace detail {

// Solves the small SPD system (A^T A) z = rhs by Gaussian elimination with
// partial pivoting. Dimensions here are (polyorder+1), i.e. tiny.
inline std::vector<double> solve_dense(std::vector<double> m, std::vector<double> rhs) {
    int n = static_cast<int>(rhs.size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r) {
            if (std::abs(m[r * n + col]) > std::abs(m[piv * n + col])) piv = r;
        }
        if (m[piv * n + col] == 0.0) throw Error("singular least-squares system");
        if (piv != col) {
            for (int k = 0; k < n; ++k) std::swap(m[col * n + k], m[piv * n + k]);
            std::swap(rhs[col], rhs[piv]);
        }
        for (int r = col + 1; r < n; ++r) {
            double f = m[r * n + col] / m[col * n + col];
            for (int k = col; k < n; ++k) m[r * n + k] -= f * m[col * n + k];
            rhs[r] -= f * rhs[col];
        }
    }
    std::vector<double> z(n);
    for (int r = n - 1; r >= 0; --r) {
        double acc = rhs[r];
        for (int k = r + 1; k < n; ++k) acc -= m[r * n + k] * z[k];
        z[r] = acc / m[r * n + r];
    }
    return z;
}

// Weights w such that w . y is the degree-`order` least-squares fit over
// samples at positions xs, evaluated at x_eval:  w = A (A^T A)^{-1} p(x_eval).
inline std::vector<double> polyfit_eval_weights(const std::vector<double>& xs, int order,
                                                double x_eval) {
    int n = static_cast<int>(xs.size());
    int m = order + 1;
    std::vector<double> a(static_cast<std::size_t>(n) * m);  // Vandermonde
    for (int i = 0; i < n; ++i) {
        double pw = 1.0;
        for (int j = 0; j < m; ++j) {
            a[i * m + j] = pw;
            pw *= xs[i];
        }
    }
    std::vector<double> ata(static_cast<std::size_t>(m) * m, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            for (int k = 0; k < m; ++k) ata[j * m + k] += a[i * m + j] * a[i * m + k];
        }
    }
    std::vector<double> p(m);
    double pw = 1.0;
    for (int j = 0; j < m; ++j) {
        p[j] = pw;
        pw *= x_eval;
    }
    auto z = solve_dense(std::move(ata), std::move(p));
    std::vector<double> w(n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) w[i] += a[i * m + j] * z[j];
    }
    return w;
}

}  // namespace detail

/// Savitzky-Golay smoothing along the month axis. Interior points take the
/// central value of the least-squares polynomial over the sliding window;
/// the half-window points at each end evaluate the polynomial fitted to the
/// edge window at their own position, which keeps degree-<=polyorder inputs
/// exact everywhere.
inline RegularSeries savgol_smooth(const RegularSeries& series, int window = 7,
                                   int polyorder = 4) {
    if (window % 2 == 0 || window < 3) {
        throw PreconditionError("savgol_smooth: window must be odd and >= 3");
    }
    if (polyorder >= window) {
        throw PreconditionError("savgol_smooth: polyorder must be < window");
    }
    if (series.t_reg < window) {
        throw PreconditionError(
            "savgol_smooth: series has " + std::to_string(series.t_reg) +
            " months but window is " + std::to_string(window) +
            "; extend the series or reduce the window");
    }
    int half = window / 2;
    std::vector<double> xs(window);
    for (int i = 0; i < window; ++i) xs[i] = i - half;

    auto center = detail::polyfit_eval_weights(xs, polyorder, 0.0);
    std::vector<std::vector<double>> left(half);
    for (int d = 0; d < half; ++d) {
        left[d] = detail::polyfit_eval_weights(xs, polyorder, static_cast<double>(d - half));
    }

    RegularSeries out = series;
    int t = series.t_reg, p_count = series.pixels;
    auto apply = [&](const std::vector<double>& w, int base, int g, int p) {
        double acc = 0.0;
        for (int i = 0; i < window; ++i) {
            acc += w[i] * series.values[static_cast<std::size_t>(base + i) * p_count + p];
        }
        out.values[static_cast<std::size_t>(g) * p_count + p] = acc;
    };
    for (int p = 0; p < p_count; ++p) {
        if (series.flags[p] & kFlagInsufficientObs) continue;  // stays NaN
        for (int d = 0; d < half; ++d) apply(left[d], 0, d, p);
        for (int g = half; g < t - half; ++g) apply(center, g - half, g, p);
        for (int d = 0; d < half; ++d) {
            // mirrored edge: evaluate the right-edge fit at its own offset
            std::vector<double> rev(left[half - 1 - d].rbegin(), left[half - 1 - d].rend());
            apply(rev, t - window, t - half + d, p);
        }
    }
    return out;
}

/// Top-K positive DFT frequencies per pixel, cycles/month. freqs is K x P
/// row-major: channel 0 holds the largest amplitude, descending after that;
/// equal amplitudes rank the lower frequency first.
struct DominantFrequencies {
    std::vector<float> freqs;  // K x P
    std::vector<std::uint8_t> flags;
    int k = 0;
    int pixels = 0;
};

inline DominantFrequencies dominant_frequencies(const RegularSeries& series, int k_top = 3) {
    int t = series.t_reg;
    int p_count = series.pixels;
    if (k_top < 1) throw PreconditionError("dominant_frequencies: K must be >= 1");
    int bins = t / 2;  // candidate frequencies k/T_reg with 0 < k/T_reg <= 1/2
    if (bins < 1) throw PreconditionError("dominant_frequencies: series too short for any bin");

    DominantFrequencies out;
    out.k = k_top;
    out.pixels = p_count;
    out.freqs.assign(static_cast<std::size_t>(k_top) * p_count,
                     std::numeric_limits<float>::quiet_NaN());
    out.flags.assign(p_count, kFlagNone);

    // one period of the unit circle; bin k, sample t uses index (k*t) mod T
    std::vector<double> cos_tab(t), sin_tab(t);
    for (int m = 0; m < t; ++m) {
        double a = 2.0 * M_PI * m / t;
        cos_tab[m] = std::cos(a);
        sin_tab[m] = std::sin(a);
    }

    std::vector<double> amp(bins);
    std::vector<int> order(bins);
    for (int p = 0; p < p_count; ++p) {
        if (series.flags[p] & kFlagInsufficientObs) {
            out.flags[p] = kFlagInsufficientObs;
            continue;
        }
        double mean = 0.0;
        for (int g = 0; g < t; ++g) mean += series.at(g, p);
        mean /= t;
        for (int k = 1; k <= bins; ++k) {
            double re = 0.0, im = 0.0;
            long long idx = 0;
            for (int g = 0; g < t; ++g) {
                int m = static_cast<int>(idx % t);
                double v = series.at(g, p);
                re += v * cos_tab[m];
                im -= v * sin_tab[m];
                idx += k;
            }
            amp[k - 1] = std::sqrt(re * re + im * im);
        }
        double max_amp = 0.0;
        for (double a : amp) max_amp = std::max(max_amp, a);
        bool degenerate = max_amp <= 1e-9 * t * (1.0 + std::abs(mean));

        std::iota(order.begin(), order.end(), 0);
        if (!degenerate) {
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                if (amp[a] != amp[b]) return amp[a] > amp[b];
                return a < b;  // tie: lower frequency wins
            });
        }  // degenerate: keep ascending-frequency tie-break order

        for (int ch = 0; ch < k_top; ++ch) {
            int bin = ch < bins ? order[ch] + 1 : 1;  // pad with the lowest positive bin
            out.freqs[static_cast<std::size_t>(ch) * p_count + p] =
                static_cast<float>(static_cast<double>(bin) / t);
        }
        if (degenerate) out.flags[p] |= kFlagDegenerate;
        if (bins < k_top) out.flags[p] |= kFlagPadded;
    }
    return out;
}

struct FrequencyMapResult {
    FrequencyMap map;
    std::vector<std::uint8_t> flags;  // H x W
};

/// Full dominant-frequency map for a cube: ndvi -> regularize_monthly ->
/// savgol_smooth -> dominant_frequencies, reshaped to K x H x W.
inline FrequencyMapResult construct_frequency_map(const TimeSeriesCube& cube, int k_top = 3,
                                                  int window = 7, int polyorder = 4) {
    validate_cube(cube);
    if (cube.t < 2) throw PreconditionError("construct_frequency_map needs T >= 2");
    int pixels = cube.h * cube.w;
    auto series = regularize_monthly(ndvi(cube), cube.t, pixels, cube.timestamps);
    auto smooth = savgol_smooth(series, window, polyorder);
    auto dom = dominant_frequencies(smooth, k_top);

    FrequencyMapResult res;
    res.map.k = k_top;
    res.map.h = cube.h;
    res.map.w = cube.w;
    res.map.data = std::move(dom.freqs);  // K x P == K x H x W already
    res.flags = std::move(dom.flags);
    return res;
}

}  // namespace sits
