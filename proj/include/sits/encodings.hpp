#pragma once

#include <cmath>
#include <vector>

#include "sits/core.hpp"

namespace sits {

/// Sinusoidal encoding family: width, base constant, and the epoch that
/// maps calendar years onto small indices before encoding.
struct EncodingConfig {
    int dim = 64;          // even, >= 4
    double base = 10000.0;  // > 1
    int year_epoch = 2016;

    void validate() const {
        if (dim < 4 || dim % 2 != 0) throw ConfigError("encoding dim must be even and >= 4");
        if (!(base > 1.0)) throw ConfigError("encoding base must be > 1");
    }
};

namespace detail {

// sin/cos interleaved encoding of an arbitrary (possibly negative) index.
inline void sinusoidal_fill(double pos, const EncodingConfig& cfg, double* out) {
    for (int j = 0; j < cfg.dim / 2; ++j) {
        double div = std::pow(cfg.base, 2.0 * j / cfg.dim);
        out[2 * j] = std::sin(pos / div);
        out[2 * j + 1] = std::cos(pos / div);
    }
}

}  // namespace detail

/// Element 2j = sin(i / B^(2j/D)), element 2j+1 = cos of the same argument.
inline std::vector<double> sinusoidal_pe(long long i, const EncodingConfig& cfg) {
    cfg.validate();
    if (i < 0) throw PreconditionError("sinusoidal_pe position must be >= 0");
    std::vector<double> out(cfg.dim);
    detail::sinusoidal_fill(static_cast<double>(i), cfg, out.data());
    return out;
}

/// [PE(month); PE(year - epoch)], so same-month frames in different years
/// still encode apart. Width 2*dim.
inline std::vector<double> temporal_encoding(Timestamp t, const EncodingConfig& cfg) {
    cfg.validate();
    require_valid(t);
    std::vector<double> out(2 * cfg.dim);
    detail::sinusoidal_fill(static_cast<double>(t.month), cfg, out.data());
    detail::sinusoidal_fill(static_cast<double>(t.year - cfg.year_epoch), cfg, out.data() + cfg.dim);
    return out;
}

/// Row k = sinusoidal_pe(k) for patches in raster order; N x dim row-major.
inline std::vector<double> patch_positions(int n, const EncodingConfig& cfg) {
    cfg.validate();
    if (n < 1) throw PreconditionError("patch_positions needs N >= 1");
    std::vector<double> out(static_cast<std::size_t>(n) * cfg.dim);
    for (int k = 0; k < n; ++k) {
        detail::sinusoidal_fill(static_cast<double>(k), cfg, out.data() + static_cast<std::size_t>(k) * cfg.dim);
    }
    return out;
}

}  // namespace sits
