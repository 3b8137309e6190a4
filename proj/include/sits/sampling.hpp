#pragma once

#include <array>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sits/core.hpp"
#include "sits/rng.hpp"

// Bitemporal pair enumeration, gap labels, and deterministic batch assembly.

namespace sits {

/// Which month gaps a pair may have. Range mode admits 0..max_gap inclusive;
/// set mode admits exactly the listed gaps.
struct GapSpec {
    enum class Mode { range, set };
    Mode mode = Mode::range;
    int max_gap = 3;
    std::set<int> gaps;

    static GapSpec range(int max) {
        if (max < 0) throw ConfigError("gap range must be >= 0");
        GapSpec g;
        g.mode = Mode::range;
        g.max_gap = max;
        return g;
    }
    static GapSpec of(std::set<int> set_gaps) {
        if (set_gaps.empty()) throw ConfigError("gap set must not be empty");
        for (int g : set_gaps) {
            if (g < 0) throw ConfigError("gap set entries must be >= 0");
        }
        GapSpec g;
        g.mode = Mode::set;
        g.gaps = std::move(set_gaps);
        return g;
    }
    /// Parses "3,6,9" into set mode.
    static GapSpec parse_set(const std::string& csv) {
        std::set<int> s;
        std::stringstream ss(csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            s.insert(std::stoi(item));
        }
        return of(std::move(s));
    }

    bool admits(int gap) const {
        if (mode == Mode::range) return gap >= 0 && gap <= max_gap;
        return gaps.count(gap) > 0;
    }

    std::string describe() const {
        if (mode == Mode::range) return "range<=" + std::to_string(max_gap);
        std::string s = "set{";
        bool first = true;
        for (int g : gaps) {
            if (!first) s += ",";
            s += std::to_string(g);
            first = false;
        }
        return s + "}";
    }
};

struct TdLabel {
    int class_index = 0;
};

/// Month gap discretized into C classes: min(gap, C-1).
inline TdLabel td_label(int gap_months, int num_classes) {
    if (gap_months < 0) throw PreconditionError("td_label: gap must be >= 0");
    if (num_classes < 1) throw PreconditionError("td_label: C must be >= 1");
    return TdLabel{std::min(gap_months, num_classes - 1)};
}

/// All index pairs (i, j) with i <= j whose month gap the spec admits,
/// ascending by (i, j). Gap-0 self pairs are included when admitted.
inline std::vector<std::pair<int, int>> enumerate_pairs(const std::vector<Timestamp>& timestamps,
                                                        const GapSpec& spec) {
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
        if (!(timestamps[i - 1] < timestamps[i])) {
            throw PreconditionError("enumerate_pairs: timestamps must be strictly increasing");
        }
    }
    std::vector<std::pair<int, int>> out;
    int n = static_cast<int>(timestamps.size());
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            if (spec.admits(months_between(timestamps[i], timestamps[j]))) {
                out.emplace_back(i, j);
            }
        }
    }
    return out;
}

/// One direction of a symmetric pair: frames in (a, b) presentation order,
/// both directions sharing the original sample's label.
struct OrderedPairView {
    const BitemporalSample* sample = nullptr;
    bool swapped = false;
    TdLabel label;

    const float* first() const { return swapped ? sample->x2() : sample->x1(); }
    const float* second() const { return swapped ? sample->x1() : sample->x2(); }
    Timestamp first_time() const { return swapped ? sample->t2 : sample->t1; }
    Timestamp second_time() const { return swapped ? sample->t1 : sample->t2; }
};

/// The two presentation orders of a sample, shared label.
inline std::array<OrderedPairView, 2> symmetric_expand(const BitemporalSample& sample,
                                                       int num_classes) {
    TdLabel label = td_label(sample.gap_months, num_classes);
    return {OrderedPairView{&sample, false, label}, OrderedPairView{&sample, true, label}};
}

struct Batch {
    std::vector<BitemporalSample> samples;
};

/// One epoch of fixed-size batches over a deterministic shuffle of the
/// admissible pairs. Same seed, same sequence; the epoch visits every
/// enumerated pair exactly once.
class BatchIterator {
public:
    BatchIterator(const TimeSeriesCube& cube, const GapSpec& spec, int batch_size,
                  std::uint64_t seed, const FrequencyMap* freq_map = nullptr)
        : cube_(&cube), freq_map_(freq_map), batch_size_(batch_size) {
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        pairs_ = enumerate_pairs(cube.timestamps, spec);
        if (pairs_.empty()) {
            throw ConfigError("no admissible pairs for gap spec " + spec.describe());
        }
        Rng rng(seed);
        rng.shuffle(pairs_);
    }

    std::optional<Batch> next() {
        if (cursor_ >= pairs_.size()) return std::nullopt;
        Batch b;
        while (cursor_ < pairs_.size() && b.samples.size() < static_cast<std::size_t>(batch_size_)) {
            auto [i, j] = pairs_[cursor_++];
            b.samples.push_back(make_sample(*cube_, i, j, freq_map_));
        }
        return b;
    }

    std::size_t pair_count() const { return pairs_.size(); }

private:
    const TimeSeriesCube* cube_;
    const FrequencyMap* freq_map_;
    int batch_size_;
    std::vector<std::pair<int, int>> pairs_;
    std::size_t cursor_ = 0;
};

inline BatchIterator make_batches(const TimeSeriesCube& cube, const GapSpec& spec, int batch_size,
                                  std::uint64_t seed, const FrequencyMap* freq_map = nullptr) {
    return BatchIterator(cube, spec, batch_size, seed, freq_map);
}

/// Flattened sample list over several cubes (with optional per-cube
/// frequency maps), for multi-chip training.
struct PairDataset {
    std::vector<BitemporalSample> samples;

    static PairDataset build(const std::vector<const TimeSeriesCube*>& cubes, const GapSpec& spec,
                             const std::vector<const FrequencyMap*>& fmaps = {}) {
        if (!fmaps.empty() && fmaps.size() != cubes.size()) {
            throw ConfigError("need one frequency map per cube (or none)");
        }
        PairDataset ds;
        for (std::size_t ci = 0; ci < cubes.size(); ++ci) {
            const FrequencyMap* fm = fmaps.empty() ? nullptr : fmaps[ci];
            for (auto [i, j] : enumerate_pairs(cubes[ci]->timestamps, spec)) {
                ds.samples.push_back(make_sample(*cubes[ci], i, j, fm));
            }
        }
        if (ds.samples.empty()) {
            throw ConfigError("no admissible pairs for gap spec " + spec.describe());
        }
        return ds;
    }
};

}  // namespace sits
