#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sits/core.hpp"

// Chunked array store. A store is a directory holding `meta.json` plus one
// raw little-endian float32 chunk file per index along the leading dimension,
// named t{index:05}.bin. Cubes chunk per frame ([1,C,H,W]); frequency maps
// chunk per channel ([1,H,W]). Writes go to a temp directory that is renamed
// over the target, so an interrupted write never leaves a half-updated store.

namespace sits {

static_assert(std::endian::native == std::endian::little,
              "store layout is little-endian; big-endian hosts are unsupported");

namespace detail {

inline std::string chunk_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "t%05d.bin", index);
    return buf;
}

inline void write_file(const std::filesystem::path& p, const void* bytes, std::size_t n) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + p.string());
    out.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
    if (!out) throw IoError("short write: " + p.string());
}

inline std::vector<char> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open for read: " + p.string());
    auto size = in.tellg();
    in.seekg(0);
    std::vector<char> bytes(static_cast<std::size_t>(size));
    in.read(bytes.data(), size);
    if (!in) throw IoError("short read: " + p.string());
    return bytes;
}

// Replace `target` with the contents of a freshly built temp directory.
template <typename FillFn>
void write_store_dir(const std::filesystem::path& target, FillFn&& fill) {
    namespace fs = std::filesystem;
    fs::path tmp = target;
    tmp += ".tmp";
    std::error_code ec;
    fs::remove_all(tmp, ec);
    try {
        fs::create_directories(tmp);
    } catch (const fs::filesystem_error& e) {
        throw IoError(std::string("cannot create store directory: ") + e.what());
    }
    try {
        fill(tmp);
        fs::remove_all(target);
        fs::rename(tmp, target);
    } catch (const fs::filesystem_error& e) {
        fs::remove_all(tmp, ec);
        throw IoError(std::string("store write failed: ") + e.what());
    } catch (...) {
        fs::remove_all(tmp, ec);
        throw;
    }
}

inline nlohmann::json load_meta(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::path meta_path = dir / "meta.json";
    if (!fs::exists(meta_path)) {
        throw FormatError("no meta.json in store: " + dir.string());
    }
    nlohmann::json meta;
    try {
        std::ifstream in(meta_path);
        in >> meta;
    } catch (const std::exception& e) {
        throw FormatError("unparseable meta.json in " + dir.string() + ": " + e.what());
    }
    return meta;
}

inline void check_meta_common(const nlohmann::json& meta, std::size_t ndims,
                              const std::string& where) {
    if (!meta.contains("dims") || !meta["dims"].is_array() || meta["dims"].size() != ndims) {
        throw FormatError("meta.json dims malformed in " + where);
    }
    if (meta.value("dtype", "") != "float32") {
        throw FormatError("unsupported dtype in " + where + " (want float32)");
    }
    if (meta.value("byte_order", "") != "little-endian") {
        throw FormatError("unsupported byte order in " + where);
    }
}

inline std::vector<float> read_chunk(const std::filesystem::path& dir, int index,
                                     std::size_t expect_floats) {
    namespace fs = std::filesystem;
    fs::path p = dir / chunk_name(index);
    if (!fs::exists(p)) {
        throw IntegrityError("missing chunk " + chunk_name(index) + " in " + dir.string());
    }
    auto bytes = read_file(p);
    if (bytes.size() != expect_floats * sizeof(float)) {
        throw IntegrityError("chunk " + chunk_name(index) + " has " +
                             std::to_string(bytes.size()) + " bytes, expected " +
                             std::to_string(expect_floats * sizeof(float)));
    }
    std::vector<float> out(expect_floats);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

}  // namespace detail

inline void write_cube(const TimeSeriesCube& cube, const std::filesystem::path& path) {
    validate_cube(cube);
    detail::write_store_dir(path, [&](const std::filesystem::path& dir) {
        nlohmann::json meta;
        meta["dims"] = {cube.t, cube.c, cube.h, cube.w};
        meta["dtype"] = "float32";
        meta["byte_order"] = "little-endian";
        meta["chunk_shape"] = {1, cube.c, cube.h, cube.w};
        meta["bands"] = cube.bands;
        std::vector<std::string> stamps;
        for (auto ts : cube.timestamps) stamps.push_back(format_timestamp(ts));
        meta["timestamps"] = stamps;
        detail::write_file(dir / "meta.json", meta.dump(2).data(), meta.dump(2).size());
        for (int ti = 0; ti < cube.t; ++ti) {
            detail::write_file(dir / detail::chunk_name(ti), cube.frame(ti),
                               cube.frame_size() * sizeof(float));
        }
    });
}

inline TimeSeriesCube read_cube(const std::filesystem::path& path) {
    auto meta = detail::load_meta(path);
    detail::check_meta_common(meta, 4, path.string());
    TimeSeriesCube cube;
    cube.t = meta["dims"][0].get<int>();
    cube.c = meta["dims"][1].get<int>();
    cube.h = meta["dims"][2].get<int>();
    cube.w = meta["dims"][3].get<int>();
    if (cube.t <= 0 || cube.c <= 0 || cube.h <= 0 || cube.w <= 0) {
        throw FormatError("non-positive dims in " + path.string());
    }
    if (!meta.contains("bands") || !meta.contains("timestamps")) {
        throw FormatError("meta.json missing bands/timestamps in " + path.string());
    }
    cube.bands = meta["bands"].get<std::vector<std::string>>();
    for (const auto& s : meta["timestamps"]) {
        cube.timestamps.push_back(parse_timestamp(s.get<std::string>()));
    }
    cube.data.resize(static_cast<std::size_t>(cube.t) * cube.c * cube.h * cube.w);
    for (int ti = 0; ti < cube.t; ++ti) {
        auto chunk = detail::read_chunk(path, ti, cube.frame_size());
        std::memcpy(cube.data.data() + static_cast<std::size_t>(ti) * cube.frame_size(),
                    chunk.data(), chunk.size() * sizeof(float));
    }
    try {
        validate_cube(cube);
    } catch (const IntegrityError&) {
        throw;
    }
    return cube;
}

inline void write_freq_map(const FrequencyMap& map, const std::filesystem::path& path) {
    if (map.k <= 0 || map.h <= 0 || map.w <= 0 ||
        map.data.size() != static_cast<std::size_t>(map.k) * map.h * map.w) {
        throw IntegrityError("frequency map dims/data mismatch");
    }
    detail::write_store_dir(path, [&](const std::filesystem::path& dir) {
        nlohmann::json meta;
        meta["dims"] = {map.k, map.h, map.w};
        meta["dtype"] = "float32";
        meta["byte_order"] = "little-endian";
        meta["chunk_shape"] = {1, map.h, map.w};
        meta["k_order"] = map.k_order;
        detail::write_file(dir / "meta.json", meta.dump(2).data(), meta.dump(2).size());
        std::size_t chunk = static_cast<std::size_t>(map.h) * map.w;
        for (int ki = 0; ki < map.k; ++ki) {
            detail::write_file(dir / detail::chunk_name(ki), map.channel(ki),
                               chunk * sizeof(float));
        }
    });
}

inline FrequencyMap read_freq_map(const std::filesystem::path& path) {
    auto meta = detail::load_meta(path);
    detail::check_meta_common(meta, 3, path.string());
    FrequencyMap map;
    map.k = meta["dims"][0].get<int>();
    map.h = meta["dims"][1].get<int>();
    map.w = meta["dims"][2].get<int>();
    if (map.k <= 0 || map.h <= 0 || map.w <= 0) {
        throw FormatError("non-positive dims in " + path.string());
    }
    map.k_order = meta.value("k_order", "descending_amplitude");
    std::size_t chunk = static_cast<std::size_t>(map.h) * map.w;
    map.data.resize(static_cast<std::size_t>(map.k) * chunk);
    for (int ki = 0; ki < map.k; ++ki) {
        auto bytes = detail::read_chunk(path, ki, chunk);
        std::memcpy(map.data.data() + ki * chunk, bytes.data(), bytes.size() * sizeof(float));
    }
    return map;
}

// Parcel label raster: uint16 little-endian, row-major, no header. Dims come
// from the cube the labels belong to.
inline void write_labels(const std::vector<std::uint16_t>& labels,
                         const std::filesystem::path& path) {
    detail::write_file(path, labels.data(), labels.size() * sizeof(std::uint16_t));
}

inline std::vector<std::uint16_t> read_labels(const std::filesystem::path& path, int h, int w) {
    auto bytes = detail::read_file(path);
    std::size_t expect = static_cast<std::size_t>(h) * w;
    if (bytes.size() != expect * sizeof(std::uint16_t)) {
        throw IntegrityError("labels file size mismatch: " + path.string());
    }
    std::vector<std::uint16_t> out(expect);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

}  // namespace sits
