#pragma once

#include <cassert>
#include <cstdint>

namespace mcscast::tdd {

using Tick = std::int64_t;     // 0.5 ms slot ticks on the master timeline
using DlIndex = std::int64_t;  // index over downlink-capable slots only

inline constexpr double kTickMs = 0.5;

// 7 DL slots + 1 special (DL-capable) + 2 UL slots per 5 ms period.
inline constexpr int kSlotsPerPeriod = 10;
inline constexpr int kDlSlotsPerPeriod = 8;

constexpr bool is_downlink_tick(Tick tick) {
    return tick % kSlotsPerPeriod < kDlSlotsPerPeriod;
}

/// Index of a downlink tick among downlink-capable ticks, counting from 0.
constexpr DlIndex dl_index_of_tick(Tick tick) {
    assert(is_downlink_tick(tick));
    return (tick / kSlotsPerPeriod) * kDlSlotsPerPeriod + tick % kSlotsPerPeriod;
}

constexpr Tick tick_of_dl_index(DlIndex dl) {
    return (dl / kDlSlotsPerPeriod) * kSlotsPerPeriod + dl % kDlSlotsPerPeriod;
}

/// Number of downlink-capable ticks in [0, ticks).
constexpr std::int64_t dl_slots_in_ticks(Tick ticks) {
    const std::int64_t full = ticks / kSlotsPerPeriod;
    const std::int64_t rem = ticks % kSlotsPerPeriod;
    return full * kDlSlotsPerPeriod + (rem < kDlSlotsPerPeriod ? rem : kDlSlotsPerPeriod);
}

constexpr std::int64_t dl_slots_in_ms(double ms) {
    return dl_slots_in_ticks(static_cast<Tick>(ms / kTickMs + 0.5));
}

constexpr Tick ticks_in_ms(double ms) {
    return static_cast<Tick>(ms / kTickMs + 0.5);
}

}  // namespace mcscast::tdd
