#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mcscast/binio.hpp"
#include "mcscast/error.hpp"
#include "mcscast/features.hpp"
#include "mcscast/ingest.hpp"

namespace mcscast {

inline constexpr int kOutage = -1;

/// Prediction timing in downlink slots. Defaults match a 100 ms decision
/// offset and a 500 ms video GOP under the 8-of-10 TDD pattern.
struct HorizonSpec {
    std::int64_t delay_dl_slots = 160;
    std::int64_t gop_dl_slots = 800;

    void validate() const {
        if (delay_dl_slots <= 0 || gop_dl_slots <= 0) {
            throw std::invalid_argument("HorizonSpec: delay and gop must be > 0");
        }
    }
};

/// Per-MCS success/trial counts over a horizon, and the success probability
/// where at least one trial exists.
struct LabelVector {
    std::array<std::uint32_t, kMcsCount> success{};
    std::array<std::uint32_t, kMcsCount> trials{};

    bool valid(int k) const { return trials[static_cast<std::size_t>(k)] > 0; }
    double prob(int k) const {
        return static_cast<double>(success[static_cast<std::size_t>(k)]) /
               static_cast<double>(trials[static_cast<std::size_t>(k)]);
    }
    bool any_valid() const {
        for (int k = 0; k < kMcsCount; ++k) {
            if (valid(k)) return true;
        }
        return false;
    }
};

/// Conservative monotonic counting. A pass at MCS m vouches for every index
/// at or below m; a failure at m counts a trial against m alone, since it
/// says nothing certain about more robust indices.
///
/// Computed by bucketing observations per index and suffix-summing the pass
/// buckets, which is algebraically equivalent to the per-slot update rule but
/// runs in O(slots + 28).
inline LabelVector accumulate_counts(std::span<const SlotRecord> horizon_slots) {
    std::array<std::uint32_t, kMcsCount> passes_at{};
    std::array<std::uint32_t, kMcsCount> fails_at{};
    for (const auto& s : horizon_slots) {
        if (s.mcs < 0 || s.mcs >= kMcsCount) {
            throw std::invalid_argument("accumulate_counts: mcs out of [0,27]");
        }
        if (s.crc_pass) {
            ++passes_at[static_cast<std::size_t>(s.mcs)];
        } else {
            ++fails_at[static_cast<std::size_t>(s.mcs)];
        }
    }
    LabelVector label;
    std::uint32_t passes_at_or_above = 0;
    for (int k = kMcsCount - 1; k >= 0; --k) {
        passes_at_or_above += passes_at[static_cast<std::size_t>(k)];
        label.success[static_cast<std::size_t>(k)] = passes_at_or_above;
        label.trials[static_cast<std::size_t>(k)] =
            passes_at_or_above + fails_at[static_cast<std::size_t>(k)];
    }
    return label;
}

/// Label for the GOP horizon of a window anchored at `anchor`: the
/// gop_dl_slots downlink slots starting delay_dl_slots+1 after the anchor.
inline LabelVector build_label(const FeatureTable& table, std::int64_t anchor,
                               const HorizonSpec& spec, std::int64_t max_gap = 16) {
    spec.validate();
    const std::int64_t first = anchor + spec.delay_dl_slots + 1;
    const std::int64_t last = anchor + spec.delay_dl_slots + spec.gop_dl_slots;
    if (anchor < 0 || last >= static_cast<std::int64_t>(table.size())) {
        throw InsufficientFutureError("build_label: horizon extends past table end (anchor " +
                                      std::to_string(anchor) + ")");
    }
    const std::int64_t gap =
        table.max_gap_in(static_cast<std::size_t>(first), static_cast<std::size_t>(last));
    if (gap > max_gap) {
        throw GapViolationError("build_label: filtered gap of " + std::to_string(gap) +
                                " slots inside horizon at anchor " + std::to_string(anchor));
    }
    return accumulate_counts(
        std::span<const SlotRecord>(table.slots.data() + first, static_cast<std::size_t>(last - first + 1)));
}

/// Largest index whose empirical success probability meets the threshold;
/// kOutage when none does.
inline int ground_truth_mcs(const LabelVector& label, double threshold = 0.9) {
    for (int k = kMcsCount - 1; k >= 0; --k) {
        if (label.valid(k) && label.prob(k) >= threshold) return k;
    }
    return kOutage;
}

/// One training example: raw observation window plus horizon counts. Windows
/// are stored unnormalized (float32); normalization is applied at load time
/// with the persisted Normalizer.
struct Sample {
    std::uint64_t anchor_id = 0;
    std::vector<float> raw_window;  // kWindowSlots x kFeatureCount, row-major
    std::array<std::uint32_t, kMcsCount> success{};
    std::array<std::uint32_t, kMcsCount> trials{};

    LabelVector label() const {
        LabelVector l;
        l.success = success;
        l.trials = trials;
        return l;
    }

    FeatureWindow raw_feature_window() const {
        FeatureWindow w;
        w.rows = kWindowSlots;
        w.anchor_slot = static_cast<std::int64_t>(anchor_id & 0xffffffffffULL);
        w.data.assign(raw_window.begin(), raw_window.end());
        return w;
    }
};

struct Dataset {
    std::uint64_t config_fingerprint = 0;
    std::vector<Sample> samples;
};

namespace detail {

inline constexpr char kDatasetMagic[4] = {'M', 'C', 'D', 'S'};
inline constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace detail

// Binary record file, little-endian.
// Header: magic "MCDS", u32 version, u64 config fingerprint, u32 n_samples,
//         u32 window rows, u32 feature count, u32 label size.
// Record: u64 anchor_id, f32 window[rows*cols], u32 S[28], u32 T[28].
inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifactError("cannot write dataset: " + path);
    out.write(detail::kDatasetMagic, 4);
    detail::write_pod(out, detail::kDatasetVersion);
    detail::write_pod(out, ds.config_fingerprint);
    detail::write_pod(out, static_cast<std::uint32_t>(ds.samples.size()));
    detail::write_pod(out, static_cast<std::uint32_t>(kWindowSlots));
    detail::write_pod(out, static_cast<std::uint32_t>(kFeatureCount));
    detail::write_pod(out, static_cast<std::uint32_t>(kMcsCount));
    for (const auto& s : ds.samples) {
        detail::write_pod(out, s.anchor_id);
        out.write(reinterpret_cast<const char*>(s.raw_window.data()),
                  static_cast<std::streamsize>(s.raw_window.size() * sizeof(float)));
        out.write(reinterpret_cast<const char*>(s.success.data()), kMcsCount * sizeof(std::uint32_t));
        out.write(reinterpret_cast<const char*>(s.trials.data()), kMcsCount * sizeof(std::uint32_t));
    }
    if (!out) throw MissingArtifactError("dataset write failed: " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot open dataset: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, detail::kDatasetMagic, 4) != 0) {
        throw std::invalid_argument("not a dataset file: " + path);
    }
    std::uint32_t version = 0, n = 0, rows = 0, cols = 0, labels = 0;
    Dataset ds;
    detail::read_pod(in, version);
    detail::read_pod(in, ds.config_fingerprint);
    detail::read_pod(in, n);
    detail::read_pod(in, rows);
    detail::read_pod(in, cols);
    detail::read_pod(in, labels);
    if (version != detail::kDatasetVersion || rows != kWindowSlots || cols != kFeatureCount ||
        labels != kMcsCount) {
        throw std::invalid_argument("dataset file has incompatible layout: " + path);
    }
    ds.samples.resize(n);
    for (auto& s : ds.samples) {
        detail::read_pod(in, s.anchor_id);
        s.raw_window.resize(static_cast<std::size_t>(rows) * cols);
        in.read(reinterpret_cast<char*>(s.raw_window.data()),
                static_cast<std::streamsize>(s.raw_window.size() * sizeof(float)));
        in.read(reinterpret_cast<char*>(s.success.data()), kMcsCount * sizeof(std::uint32_t));
        in.read(reinterpret_cast<char*>(s.trials.data()), kMcsCount * sizeof(std::uint32_t));
    }
    if (!in) throw std::invalid_argument("dataset file truncated: " + path);
    return ds;
}

/// Temporal split boundaries: [0, train_end) | [train_end, val_end) | [val_end, n).
struct SplitBounds {
    std::size_t train_end = 0;
    std::size_t val_end = 0;
};

inline SplitBounds split_bounds(std::size_t n_rows, double train_frac = 0.70,
                                double val_frac = 0.15) {
    if (!(train_frac > 0.0) || !(val_frac > 0.0) || train_frac + val_frac >= 1.0) {
        throw std::invalid_argument("split_bounds: fractions must be positive and sum below 1");
    }
    SplitBounds b;
    b.train_end = static_cast<std::size_t>(static_cast<double>(n_rows) * train_frac);
    b.val_end = static_cast<std::size_t>(static_cast<double>(n_rows) * (train_frac + val_frac));
    return b;
}

/// Builds samples for one split region. Every sample span (window + horizon)
/// must lie inside [region_begin, region_end); additionally, anchors start no
/// earlier than region_begin + leakage_gap so that no window overlaps slots
/// whose labels belong to the previous split. trace_id tags anchor ids from
/// different traces.
inline std::vector<Sample> build_split_samples(const FeatureTable& table, std::size_t region_begin,
                                               std::size_t region_end, const HorizonSpec& spec,
                                               std::int64_t leakage_gap, std::int64_t stride,
                                               std::int64_t max_gap, std::uint32_t trace_id) {
    if (stride < 1) throw std::invalid_argument("build_split_samples: stride must be >= 1");
    std::vector<Sample> out;
    const std::int64_t horizon = spec.delay_dl_slots + spec.gop_dl_slots;
    std::int64_t anchor = static_cast<std::int64_t>(region_begin) + (kWindowSlots - 1);
    if (leakage_gap > 0 && region_begin > 0) {
        anchor = std::max(anchor, static_cast<std::int64_t>(region_begin) + leakage_gap);
    }
    for (; anchor + horizon < static_cast<std::int64_t>(region_end); anchor += stride) {
        try {
            FeatureWindow w = extract_window_raw(table, anchor, max_gap);
            LabelVector l = build_label(table, anchor, spec, max_gap);
            Sample s;
            s.anchor_id = (static_cast<std::uint64_t>(trace_id) << 40) |
                          static_cast<std::uint64_t>(anchor);
            s.raw_window.assign(w.data.begin(), w.data.end());
            s.success = l.success;
            s.trials = l.trials;
            out.push_back(std::move(s));
        } catch (const GapViolationError&) {
            // spans a filtering discontinuity; skip this anchor
        }
    }
    return out;
}

}  // namespace mcscast
