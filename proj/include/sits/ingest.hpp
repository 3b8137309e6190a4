#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sits/core.hpp"
#include "sits/store.hpp"

// Dataset construction: chip-grid sampling over an AOI mask, 3x3 neighbor
// expansion, adaptive per-month acquisition selection, and cube assembly
// through a pluggable imagery source. The bundled source reads a plain
// directory layout (documented in the README) so tests and demos run without
// any catalog client.

namespace sits {

struct ChipGeometry {
    int origin_row = 0;
    int origin_col = 0;
    int size = 224;
    double resolution_m = 10.0;

    std::string id() const {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "r%05d_c%05d", origin_row, origin_col);
        return buf;
    }
};

struct AcquisitionRecord {
    Timestamp month;
    int day = 1;  // day of month, 1..31
    double valid_fraction = 0.0;

    std::string date_string() const {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", month.year, month.month, day);
        return buf;
    }
};

/// Catalog abstraction: list candidate scenes for a chip-month and fetch one
/// as reflectance. Listings must be deterministic and date-ordered.
class ImagerySource {
public:
    virtual ~ImagerySource() = default;
    virtual std::vector<AcquisitionRecord> list(const ChipGeometry& chip,
                                                Timestamp month) const = 0;
    /// Returns C x H x W reflectance in [0,1]; sets dims.
    virtual std::vector<float> fetch(const ChipGeometry& chip, const AcquisitionRecord& rec,
                                     int& c, int& h, int& w) const = 0;
    virtual std::vector<std::string> bands() const = 0;
};

// --- grids -------------------------------------------------------------------

/// Exhaustive non-overlapping tiling from (0,0); keeps chips whose in-AOI
/// fraction reaches min_overlap. Row-major order. Mask is H x W, nonzero in.
inline std::vector<ChipGeometry> grid_chips(const std::vector<std::uint8_t>& aoi_mask, int h,
                                            int w, int chip_size = 224, double min_overlap = 0.8) {
    if (static_cast<std::size_t>(h) * w != aoi_mask.size()) {
        throw PreconditionError("grid_chips: mask size does not match dims");
    }
    if (chip_size < 1 || h < chip_size || w < chip_size) {
        throw PreconditionError("grid_chips: mask smaller than chip size");
    }
    std::vector<ChipGeometry> out;
    for (int row = 0; row + chip_size <= h; row += chip_size) {
        for (int col = 0; col + chip_size <= w; col += chip_size) {
            long inside = 0;
            for (int y = row; y < row + chip_size; ++y) {
                const std::uint8_t* line = aoi_mask.data() + static_cast<std::size_t>(y) * w;
                for (int x = col; x < col + chip_size; ++x) inside += line[x] != 0;
            }
            double frac = static_cast<double>(inside) / (static_cast<double>(chip_size) * chip_size);
            if (frac >= min_overlap) {
                out.push_back(ChipGeometry{row, col, chip_size});
            }
        }
    }
    return out;
}

/// The chip plus its eight neighbors, center first, then top-left, top,
/// top-right, left, right, bottom-left, bottom, bottom-right. Neighbors
/// outside the source grid are dropped.
inline std::vector<ChipGeometry> neighbor_grid(const ChipGeometry& chip, int grid_h, int grid_w) {
    static constexpr int offs[9][2] = {{0, 0},  {-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                       {0, 1},  {1, -1},  {1, 0},  {1, 1}};
    std::vector<ChipGeometry> out;
    for (const auto& o : offs) {
        ChipGeometry n = chip;
        n.origin_row += o[0] * chip.size;
        n.origin_col += o[1] * chip.size;
        if (n.origin_row < 0 || n.origin_col < 0 || n.origin_row + n.size > grid_h ||
            n.origin_col + n.size > grid_w) {
            continue;
        }
        out.push_back(n);
    }
    return out;
}

// --- adaptive monthly selection ------------------------------------------------

struct SelectResult {
    std::optional<AcquisitionRecord> record;
    double final_threshold = 0.0;
    bool lowered = false;   // threshold was relaxed before a hit
    bool fallback = false;  // nothing qualified even at the floor; best record returned
    bool missing = false;   // no records at all
};

/// Earliest record at or above the threshold; failing that, lower the
/// threshold stepwise (never below the floor) and retry; failing that, the
/// record with the best valid fraction, flagged.
inline SelectResult select_monthly(const std::vector<AcquisitionRecord>& records,
                                   double threshold, double floor, double step) {
    if (!(step > 0.0)) throw ConfigError("select_monthly: step must be > 0");
    if (threshold < floor) throw ConfigError("select_monthly: threshold below floor");
    constexpr double kTol = 1e-9;  // guards accumulated decrement rounding
    SelectResult res;
    if (records.empty()) {
        res.missing = true;
        return res;
    }
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i - 1].month != records[i].month)
            throw PreconditionError("select_monthly: records span multiple months");
        if (records[i - 1].day > records[i].day)
            throw PreconditionError("select_monthly: records must be date-ordered");
    }
    double t = threshold;
    while (true) {
        for (const auto& rec : records) {
            if (rec.valid_fraction + kTol >= t) {
                res.record = rec;
                res.final_threshold = t;
                res.lowered = t < threshold - kTol;
                return res;
            }
        }
        if (t <= floor + kTol) break;
        t = std::max(floor, t - step);
    }
    const AcquisitionRecord* best = &records[0];
    for (const auto& rec : records) {
        if (rec.valid_fraction > best->valid_fraction) best = &rec;  // tie: earliest
    }
    res.record = *best;
    res.final_threshold = t;
    res.lowered = t < threshold - kTol;
    res.fallback = true;
    return res;
}

// --- dataset build ---------------------------------------------------------------

struct IngestOptions {
    double threshold = 0.9;
    double floor = 0.5;
    double step = 0.1;
};

struct BuildReport {
    std::vector<std::string> store_paths;
    nlohmann::json manifest;
};

/// One cube per chip: for every month in [start, end], pick an acquisition by
/// the adaptive rule and append its frame. Missing months are skipped (the
/// cube's timestamps skip them too). Failures are isolated per chip. The
/// manifest records per chip-month the chosen date, valid fraction and flags.
inline BuildReport build_dataset(const ImagerySource& source,
                                 const std::vector<ChipGeometry>& chips, Timestamp start,
                                 Timestamp end, const IngestOptions& opt,
                                 const std::filesystem::path& out_dir) {
    require_valid(start);
    require_valid(end);
    if (end < start) throw ConfigError("build_dataset: end before start");
    std::filesystem::create_directories(out_dir);

    BuildReport report;
    report.manifest = nlohmann::json::object();
    int span = months_between(start, end) + 1;

    for (const auto& chip : chips) {
        auto& chip_entry = report.manifest[chip.id()] = nlohmann::json::object();
        try {
            TimeSeriesCube cube;
            for (int m = 0; m < span; ++m) {
                Timestamp month = add_months(start, m);
                auto records = source.list(chip, month);
                auto sel = select_monthly(records, opt.threshold, opt.floor, opt.step);
                nlohmann::json entry;
                auto flags = nlohmann::json::array();
                if (sel.missing) {
                    flags.push_back("missing");
                    entry["flags"] = flags;
                    chip_entry[format_timestamp(month)] = entry;
                    continue;
                }
                if (sel.lowered) {
                    char buf[32];
                    std::snprintf(buf, sizeof(buf), "lowered:%.2f", sel.final_threshold);
                    flags.push_back(buf);
                }
                if (sel.fallback) flags.push_back("fallback");
                entry["date"] = sel.record->date_string();
                entry["valid_fraction"] = sel.record->valid_fraction;
                entry["flags"] = flags;
                chip_entry[format_timestamp(month)] = entry;

                int c = 0, h = 0, w = 0;
                auto frame = source.fetch(chip, *sel.record, c, h, w);
                if (cube.t == 0) {
                    cube.c = c;
                    cube.h = h;
                    cube.w = w;
                    cube.bands = source.bands();
                } else if (c != cube.c || h != cube.h || w != cube.w) {
                    throw IntegrityError("source returned inconsistent frame dims for chip " +
                                         chip.id());
                }
                cube.data.insert(cube.data.end(), frame.begin(), frame.end());
                cube.timestamps.push_back(month);
                cube.t += 1;
            }
            if (cube.t == 0) {
                chip_entry["error"] = "no valid months in period";
                continue;
            }
            auto path = out_dir / chip.id();
            write_cube(cube, path);
            report.store_paths.push_back(path.string());
        } catch (const Error& e) {
            chip_entry["error"] = e.what();
        }
    }
    std::string text = report.manifest.dump(2);
    detail::write_file(out_dir / "manifest.json", text.data(), text.size());
    return report;
}

// --- PGM (P5) masks -----------------------------------------------------------

inline void write_pgm(const std::vector<std::uint8_t>& pixels, int h, int w,
                      const std::filesystem::path& path) {
    if (pixels.size() != static_cast<std::size_t>(h) * w) {
        throw PreconditionError("write_pgm: size mismatch");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw IoError("short write: " + path.string());
}

inline std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, int& h, int& w) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P5") throw FormatError(path.string() + " is not a binary PGM (P5)");
    auto next_token = [&]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw FormatError("truncated PGM header: " + path.string());
    };
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    int maxval = std::stoi(next_token());
    if (w < 1 || h < 1 || maxval < 1 || maxval > 255) {
        throw FormatError("unsupported PGM header in " + path.string());
    }
    in.get();  // single whitespace after maxval
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(h) * w);
    in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!in) throw IntegrityError("PGM pixel data truncated: " + path.string());
    return pixels;
}

// --- filesystem-backed source ----------------------------------------------------
//
// Layout:
//   root/source.json                      {"c":..,"h":..,"w":..,"bands":[...]}
//   root/<chip-id>/<YYYY-MM-DD>/frame.bin uint16 LE digital numbers, C x H x W
//   root/<chip-id>/<YYYY-MM-DD>/mask.pgm  P5, nonzero = valid (clear) pixel
//
// Digital numbers are divided by 10000 on fetch; the per-scene valid fraction
// is the mean of the mask.

class FsImagerySource : public ImagerySource {
public:
    explicit FsImagerySource(std::filesystem::path root) : root_(std::move(root)) {
        namespace fs = std::filesystem;
        fs::path meta_path = root_ / "source.json";
        if (!fs::exists(meta_path)) {
            throw FormatError("no source.json under " + root_.string());
        }
        nlohmann::json meta;
        try {
            std::ifstream in(meta_path);
            in >> meta;
        } catch (const std::exception& e) {
            throw FormatError("unparseable source.json: " + std::string(e.what()));
        }
        c_ = meta.at("c");
        h_ = meta.at("h");
        w_ = meta.at("w");
        bands_ = meta.at("bands").get<std::vector<std::string>>();
    }

    std::vector<AcquisitionRecord> list(const ChipGeometry& chip, Timestamp month) const override {
        namespace fs = std::filesystem;
        std::vector<AcquisitionRecord> out;
        fs::path chip_dir = root_ / chip.id();
        if (!fs::exists(chip_dir)) return out;
        std::string prefix = format_timestamp(month) + "-";
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(chip_dir)) {
            if (!e.is_directory()) continue;
            std::string name = e.path().filename().string();
            if (name.rfind(prefix, 0) == 0) names.push_back(name);
        }
        std::sort(names.begin(), names.end());
        for (const auto& name : names) {
            int day = std::stoi(name.substr(prefix.size()));
            int mh = 0, mw = 0;
            auto mask = read_pgm(chip_dir / name / "mask.pgm", mh, mw);
            if (mh != h_ || mw != w_) {
                throw IntegrityError("mask dims mismatch in " + (chip_dir / name).string());
            }
            std::size_t valid = 0;
            for (auto px : mask) valid += px != 0;
            out.push_back(AcquisitionRecord{month, day,
                                            static_cast<double>(valid) / static_cast<double>(mask.size())});
        }
        return out;
    }

    std::vector<float> fetch(const ChipGeometry& chip, const AcquisitionRecord& rec, int& c,
                             int& h, int& w) const override {
        auto bytes = detail::read_file(root_ / chip.id() / rec.date_string() / "frame.bin");
        std::size_t expect = static_cast<std::size_t>(c_) * h_ * w_;
        if (bytes.size() != expect * sizeof(std::uint16_t)) {
            throw IntegrityError("frame.bin size mismatch for " + chip.id() + " " +
                                 rec.date_string());
        }
        const std::uint16_t* dn = reinterpret_cast<const std::uint16_t*>(bytes.data());
        std::vector<float> out(expect);
        for (std::size_t i = 0; i < expect; ++i) {
            out[i] = static_cast<float>(dn[i]) * 1e-4f;  // L2A digital number convention
        }
        c = c_;
        h = h_;
        w = w_;
        return out;
    }

    std::vector<std::string> bands() const override { return bands_; }

    /// Creates/extends a source tree. Reflectance is quantized to digital
    /// numbers (x10000, rounded, clamped to uint16).
    static void write_scene(const std::filesystem::path& root, const ChipGeometry& chip,
                            Timestamp month, int day, const float* frame, int c, int h, int w,
                            const std::vector<std::uint8_t>& valid_mask,
                            const std::vector<std::string>& bands) {
        namespace fs = std::filesystem;
        fs::create_directories(root);
        fs::path meta_path = root / "source.json";
        if (!fs::exists(meta_path)) {
            nlohmann::json meta = {{"c", c}, {"h", h}, {"w", w}, {"bands", bands}};
            std::string text = meta.dump(2);
            detail::write_file(meta_path, text.data(), text.size());
        }
        AcquisitionRecord rec{month, day, 0.0};
        fs::path dir = root / chip.id() / rec.date_string();
        fs::create_directories(dir);
        std::size_t n = static_cast<std::size_t>(c) * h * w;
        std::vector<std::uint16_t> dn(n);
        for (std::size_t i = 0; i < n; ++i) {
            double v = std::lround(static_cast<double>(frame[i]) * 10000.0);
            dn[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
        }
        detail::write_file(dir / "frame.bin", dn.data(), n * sizeof(std::uint16_t));
        write_pgm(valid_mask, h, w, dir / "mask.pgm");
    }

private:
    std::filesystem::path root_;
    int c_ = 0, h_ = 0, w_ = 0;
    std::vector<std::string> bands_;
};

}  // namespace sits
