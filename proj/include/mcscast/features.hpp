#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mcscast/csv.hpp"
#include "mcscast/error.hpp"
#include "mcscast/ingest.hpp"

namespace mcscast {

inline constexpr int kFeatureCount = 12;
inline constexpr int kWindowSlots = 40;  // 25 ms of downlink slots
inline constexpr int kTrendWindowSlots = 16;

inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "num_rb",   "mcs",      "crc_state", "ss_rsrp",           "ss_sinr",
    "csi_rsrp", "csi_sinr", "dl_cqi",    "consecutive_nacks", "time_since_last_nack",
    "mcs_trend", "cqi_trend"};

// Column indices used by the heuristic policies and tests.
inline constexpr int kFeatureMcs = 1;

/// State counters. A CRC failure increments the NACK run and zeroes the
/// stable-time counter; a success does the opposite. Before the first NACK the
/// stable-time counter holds slots since trace start.
inline void compute_counters(std::span<const SlotRecord> rows,
                             std::vector<double>& consecutive_nacks,
                             std::vector<double>& time_since_last_nack) {
    consecutive_nacks.resize(rows.size());
    time_since_last_nack.resize(rows.size());
    double nacks = 0.0;
    double since = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].crc_pass) {
            nacks = 0.0;
            since += 1.0;
        } else {
            nacks += 1.0;
            since = 0.0;
        }
        consecutive_nacks[i] = nacks;
        time_since_last_nack[i] = since;
    }
}

/// Trailing rolling means of MCS and CQI. Partial windows at the trace head
/// average over the slots seen so far.
inline void compute_trends(std::span<const SlotRecord> rows, int window,
                           std::vector<double>& mcs_trend, std::vector<double>& cqi_trend) {
    if (window < 1) throw std::invalid_argument("compute_trends: window must be >= 1");
    mcs_trend.resize(rows.size());
    cqi_trend.resize(rows.size());
    double mcs_sum = 0.0;
    double cqi_sum = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        mcs_sum += rows[i].mcs;
        cqi_sum += rows[i].dl_cqi;
        if (i >= static_cast<std::size_t>(window)) {
            mcs_sum -= rows[i - window].mcs;
            cqi_sum -= rows[i - window].dl_cqi;
        }
        const double n = static_cast<double>(std::min<std::size_t>(i + 1, window));
        mcs_trend[i] = mcs_sum / n;
        cqi_trend[i] = cqi_sum / n;
    }
}

/// Slot table plus the four engineered columns.
struct FeatureTable {
    std::vector<SlotRecord> slots;
    std::vector<double> consecutive_nacks;
    std::vector<double> time_since_last_nack;
    std::vector<double> mcs_trend;
    std::vector<double> cqi_trend;

    std::size_t size() const { return slots.size(); }

    std::array<double, kFeatureCount> feature_row(std::size_t i) const {
        const SlotRecord& r = slots[i];
        return {static_cast<double>(r.num_rb),
                static_cast<double>(r.mcs),
                r.crc_pass ? 1.0 : 0.0,
                r.ss_rsrp,
                r.ss_sinr,
                r.csi_rsrp,
                r.csi_sinr,
                static_cast<double>(r.dl_cqi),
                consecutive_nacks[i],
                time_since_last_nack[i],
                mcs_trend[i],
                cqi_trend[i]};
    }

    std::int64_t gap_before(std::size_t row) const {
        if (row == 0) return 0;
        return tdd::dl_index_of_tick(slots[row].tick) -
               tdd::dl_index_of_tick(slots[row - 1].tick) - 1;
    }

    std::int64_t max_gap_in(std::size_t first, std::size_t last) const {
        std::int64_t worst = 0;
        for (std::size_t r = first + 1; r <= last; ++r) worst = std::max(worst, gap_before(r));
        return worst;
    }
};

inline FeatureTable compute_features(const SlotTable& table, int trend_window = kTrendWindowSlots) {
    FeatureTable ft;
    ft.slots = table.rows;
    compute_counters(ft.slots, ft.consecutive_nacks, ft.time_since_last_nack);
    compute_trends(ft.slots, trend_window, ft.mcs_trend, ft.cqi_trend);
    return ft;
}

/// Per-feature z-score statistics, fitted on the training split only.
struct Normalizer {
    std::array<double, kFeatureCount> mean{};
    std::array<double, kFeatureCount> stddev{};

    static constexpr double kStdFloor = 1e-9;

    static Normalizer fit(const FeatureTable& table, std::size_t first, std::size_t last_excl);

    double apply_one(int feature, double v) const { return (v - mean[feature]) / stddev[feature]; }
    double invert_one(int feature, double z) const { return z * stddev[feature] + mean[feature]; }

    /// Streaming fit across several tables (one pass per table region).
    struct Accumulator {
        std::array<double, kFeatureCount> sum{};
        std::array<double, kFeatureCount> sum_sq{};
        std::size_t count = 0;

        void add(const FeatureTable& table, std::size_t first, std::size_t last_excl) {
            if (last_excl > table.size()) last_excl = table.size();
            for (std::size_t i = first; i < last_excl; ++i) {
                const auto row = table.feature_row(i);
                for (int f = 0; f < kFeatureCount; ++f) {
                    sum[f] += row[f];
                    sum_sq[f] += row[f] * row[f];
                }
                ++count;
            }
        }

        Normalizer finalize() const {
            if (count < 2) throw std::invalid_argument("Normalizer: need >= 2 training rows");
            Normalizer n;
            const double c = static_cast<double>(count);
            for (int f = 0; f < kFeatureCount; ++f) {
                n.mean[f] = sum[f] / c;
                const double var = std::max(0.0, sum_sq[f] / c - n.mean[f] * n.mean[f]);
                n.stddev[f] = std::max(std::sqrt(var), kStdFloor);
            }
            return n;
        }
    };

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw MissingArtifactError("cannot write normalizer: " + path);
        out << "feature,mean,std\n";
        for (int f = 0; f < kFeatureCount; ++f) {
            out << kFeatureNames[f] << ',' << csv::format_double(mean[f]) << ','
                << csv::format_double(stddev[f]) << '\n';
        }
    }

    static Normalizer load(const std::string& path) {
        csv::Reader reader(path);
        std::vector<std::string_view> f;
        Normalizer n;
        int row = -1;  // header first
        while (reader.next_row(f)) {
            if (row < 0) {
                row = 0;
                continue;
            }
            if (row >= kFeatureCount || f.size() != 3) {
                throw std::invalid_argument("normalizer file malformed: " + path);
            }
            if (f[0] != kFeatureNames[row]) {
                throw std::invalid_argument("normalizer file: unexpected feature order");
            }
            n.mean[row] = csv::parse_double(f[1]);
            n.stddev[row] = csv::parse_double(f[2]);
            ++row;
        }
        if (row != kFeatureCount) throw std::invalid_argument("normalizer file truncated: " + path);
        return n;
    }
};

inline Normalizer Normalizer::fit(const FeatureTable& table, std::size_t first,
                                  std::size_t last_excl) {
    Accumulator acc;
    acc.add(table, first, last_excl);
    return acc.finalize();
}

/// 40 x 12 model input, rows oldest-to-newest, ending at anchor_slot.
struct FeatureWindow {
    std::vector<double> data;  // row-major seq_len x kFeatureCount
    int rows = 0;
    std::int64_t anchor_slot = 0;

    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * kFeatureCount + c]; }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * kFeatureCount + c]; }
};

namespace detail {

inline void check_window_span(const FeatureTable& table, std::int64_t anchor, std::int64_t max_gap) {
    if (anchor < kWindowSlots - 1) {
        throw InsufficientHistoryError("extract_window: anchor " + std::to_string(anchor) +
                                       " has fewer than 40 slots of history");
    }
    if (anchor >= static_cast<std::int64_t>(table.size())) {
        throw std::invalid_argument("extract_window: anchor beyond table end");
    }
    const auto first = static_cast<std::size_t>(anchor - (kWindowSlots - 1));
    const std::int64_t gap = table.max_gap_in(first, static_cast<std::size_t>(anchor));
    if (gap > max_gap) {
        throw GapViolationError("extract_window: filtered gap of " + std::to_string(gap) +
                                " slots inside window at anchor " + std::to_string(anchor));
    }
}

}  // namespace detail

/// Raw (unnormalized) observation window ending at anchor.
inline FeatureWindow extract_window_raw(const FeatureTable& table, std::int64_t anchor,
                                        std::int64_t max_gap = 16) {
    detail::check_window_span(table, anchor, max_gap);
    FeatureWindow w;
    w.rows = kWindowSlots;
    w.anchor_slot = anchor;
    w.data.resize(static_cast<std::size_t>(kWindowSlots) * kFeatureCount);
    for (int r = 0; r < kWindowSlots; ++r) {
        const auto row = table.feature_row(static_cast<std::size_t>(anchor - (kWindowSlots - 1) + r));
        for (int c = 0; c < kFeatureCount; ++c) w.at(r, c) = row[c];
    }
    return w;
}

inline FeatureWindow extract_window(const FeatureTable& table, std::int64_t anchor,
                                    const Normalizer& norm, std::int64_t max_gap = 16) {
    FeatureWindow w = extract_window_raw(table, anchor, max_gap);
    for (int r = 0; r < kWindowSlots; ++r) {
        for (int c = 0; c < kFeatureCount; ++c) w.at(r, c) = norm.apply_one(c, w.at(r, c));
    }
    return w;
}

inline FeatureWindow normalize_window(const FeatureWindow& raw, const Normalizer& norm) {
    FeatureWindow w = raw;
    for (int r = 0; r < w.rows; ++r) {
        for (int c = 0; c < kFeatureCount; ++c) w.at(r, c) = norm.apply_one(c, w.at(r, c));
    }
    return w;
}

}  // namespace mcscast
