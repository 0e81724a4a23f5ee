#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "mcscast/rng.hpp"
#include "mcscast/tdd.hpp"
#include "mcscast/telemetry.hpp"

namespace mcscast {

/// Spectral efficiency (bit/s/Hz) of 3GPP NR MCS table 2 (256QAM), indices 0..27.
inline constexpr std::array<double, kMcsCount> kMcsSpectralEfficiency = {
    0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.6953, 1.9141,
    2.1602, 2.4063, 2.5703, 2.7305, 3.0293, 3.3223, 3.6094, 3.9023,
    4.2129, 4.5234, 4.8164, 5.1152, 5.3320, 5.5547, 5.8906, 6.2266,
    6.5703, 6.9141, 7.1602, 7.4063};

// Link abstraction: BLER is a logistic waterfall in SINR (dB) with a shared
// slope and a per-MCS midpoint affine in spectral efficiency. The slope gives
// a ~2.2 dB swing from 90% to 10% BLER, typical of NR link-level curves.
inline constexpr double kBlerSlopePerDb = 2.0;
inline constexpr double kMcsThreshInterceptDb = -7.0;
inline constexpr double kMcsThreshDbPerSe = 4.2;

/// SINR at which the given MCS decodes with BLER 0.5. Strictly increasing in mcs.
inline double mcs_sinr_threshold_db(int mcs) {
    if (mcs < 0 || mcs >= kMcsCount) {
        throw std::invalid_argument("mcs_sinr_threshold_db: mcs out of [0,27]");
    }
    return kMcsThreshInterceptDb + kMcsThreshDbPerSe * kMcsSpectralEfficiency[static_cast<std::size_t>(mcs)];
}

/// Block error probability of one PDSCH transmission.
inline double sinr_to_bler(double sinr_db, int mcs) {
    const double thresh = mcs_sinr_threshold_db(mcs);
    return 1.0 / (1.0 + std::exp(kBlerSlopePerDb * (sinr_db - thresh)));
}

// CQI grid: quality index 0..15 spanning the MCS threshold range, so that the
// lowest CQI maps to MCS 0 and the highest to MCS 27.
inline double cqi_step_db() {
    return (mcs_sinr_threshold_db(kMcsCount - 1) - mcs_sinr_threshold_db(0)) / (kCqiCount - 1);
}

inline double cqi_implied_sinr_db(int cqi) {
    return mcs_sinr_threshold_db(0) + cqi_step_db() * cqi;
}

inline int quantize_cqi(double sinr_db) {
    const int q = static_cast<int>(std::lround((sinr_db - mcs_sinr_threshold_db(0)) / cqi_step_db()));
    return std::clamp(q, 0, kCqiCount - 1);
}

/// Inner-loop MCS selection: the largest MCS whose decode threshold lies at or
/// below the CQI-implied SINR plus the outer-loop offset.
inline int scheduler_select_mcs(int cqi, double olla_offset_db) {
    const int c = std::clamp(cqi, 0, kCqiCount - 1);
    const double effective_db = cqi_implied_sinr_db(c) + olla_offset_db;
    int mcs = 0;
    for (int m = kMcsCount - 1; m >= 0; --m) {
        if (mcs_sinr_threshold_db(m) <= effective_db) {
            mcs = m;
            break;
        }
    }
    return mcs;
}

/// Classic ACK/NACK-driven outer-loop offset. Step asymmetry puts the
/// equilibrium ACK rate at exactly 1 - target_bler.
struct OllaState {
    double offset_db = 0.0;
    double down_step_db = 0.5;
    double clamp_db = 15.0;

    void update(bool crc_pass, double target_bler) {
        const double up_step = down_step_db * target_bler / (1.0 - target_bler);
        offset_db += crc_pass ? up_step : -down_step_db;
        offset_db = std::clamp(offset_db, -clamp_db, clamp_db);
    }
};

struct ChannelSimConfig {
    double duration_s = 10.0;
    std::uint64_t seed = 1;
    int pci = 1;

    // SINR process: slow lognormal shadowing plus AR(1) fast fading plus
    // sporadic mobility collapses with ramped recovery.
    double sinr_mean_db = 13.0;
    double sinr_shadow_std_db = 6.0;
    double coherence_ms = 40.0;          // fast-fading AR(1) correlation time
    double mobility_events_per_min = 2.0;
    double olla_target_bler = 0.10;

    double report_period_cqi_ms = 0.5;
    double report_period_sinr_ms = 20.0;
    double report_period_rsrp_ms = 160.0;

    // Measurement noise on reported (not true) SINR; 0 makes reports exact,
    // which the generator consistency tests rely on.
    double sinr_noise_std_db = 0.5;

    void validate() const {
        if (!(duration_s > 0.0)) throw std::invalid_argument("channelsim: duration_s must be > 0");
        if (!(olla_target_bler > 0.0 && olla_target_bler < 1.0)) {
            throw std::invalid_argument("channelsim: olla_target_bler must be in (0,1)");
        }
        for (double p : {report_period_cqi_ms, report_period_sinr_ms, report_period_rsrp_ms}) {
            const double ticks = p / tdd::kTickMs;
            if (!(p > 0.0) || std::abs(ticks - std::round(ticks)) > 1e-9) {
                throw std::invalid_argument("channelsim: report periods must be positive multiples of 0.5 ms");
            }
        }
        if (!(coherence_ms > 0.0)) throw std::invalid_argument("channelsim: coherence_ms must be > 0");
        if (sinr_shadow_std_db < 0.0 || mobility_events_per_min < 0.0 || sinr_noise_std_db < 0.0) {
            throw std::invalid_argument("channelsim: negative noise/rate parameter");
        }
    }
};

namespace detail {

// Secondary process constants. Shadowing decorrelates over seconds (walking
// pace); fast fading variance is fixed while its coherence is configurable.
inline constexpr double kShadowCoherenceS = 5.0;
inline constexpr double kFastFadingStdDb = 4.0;
inline constexpr double kRsrpMeanDbm = -95.0;
inline constexpr double kRsrpNoiseStdDb = 1.0;
inline constexpr double kCsiSinrNoiseStdDb = 0.7;
inline constexpr int kNumRbFull = 273;  // 100 MHz carrier at 30 kHz SCS

struct Ar1 {
    double value = 0.0;
    double rho = 0.0;
    double innovation_sd = 0.0;

    static Ar1 init(Rng& rng, double stationary_sd, double coherence_ticks) {
        Ar1 p;
        p.rho = std::exp(-1.0 / coherence_ticks);
        p.innovation_sd = stationary_sd * std::sqrt(1.0 - p.rho * p.rho);
        p.value = rng.normal(0.0, stationary_sd);
        return p;
    }

    double step(Rng& rng) {
        value = rho * value + rng.normal(0.0, innovation_sd);
        return value;
    }
};

}  // namespace detail

/// Synthesizes one telemetry trace. Pure function of the config: identical
/// configs produce byte-identical logs.
inline RawTelemetryLog generate_trace(const ChannelSimConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    const tdd::Tick n_ticks = tdd::ticks_in_ms(cfg.duration_s * 1000.0);
    const tdd::Tick cqi_period = tdd::ticks_in_ms(cfg.report_period_cqi_ms);
    const tdd::Tick sinr_period = tdd::ticks_in_ms(cfg.report_period_sinr_ms);
    const tdd::Tick rsrp_period = tdd::ticks_in_ms(cfg.report_period_rsrp_ms);

    auto shadow = detail::Ar1::init(rng, cfg.sinr_shadow_std_db,
                                    detail::kShadowCoherenceS * 1000.0 / tdd::kTickMs);
    auto fast = detail::Ar1::init(rng, detail::kFastFadingStdDb, cfg.coherence_ms / tdd::kTickMs);

    // Mobility collapses: Poisson arrivals; each adds an instantaneous SINR
    // drop that then ramps away linearly.
    const double event_rate_per_tick = cfg.mobility_events_per_min / 60.0 * tdd::kTickMs / 1000.0;
    double ticks_to_event = cfg.mobility_events_per_min > 0.0
                                ? rng.exponential(event_rate_per_tick)
                                : std::numeric_limits<double>::infinity();
    double drop_db = 0.0;
    double drop_ramp_per_tick = 0.0;

    OllaState olla;
    int latest_cqi = quantize_cqi(cfg.sinr_mean_db);

    RawTelemetryLog log;
    log.entries.reserve(static_cast<std::size_t>(n_ticks) * 2 + 16);
    log.entries.push_back({0, PciChange{cfg.pci}});

    for (tdd::Tick tick = 0; tick < n_ticks; ++tick) {
        if (tick > 0) {
            shadow.step(rng);
            fast.step(rng);
        }
        if (cfg.mobility_events_per_min > 0.0) {
            ticks_to_event -= 1.0;
            if (ticks_to_event <= 0.0) {
                const double depth = rng.uniform(6.0, 18.0);
                const double recovery_ticks = tdd::ticks_in_ms(rng.uniform(100.0, 400.0));
                drop_db += depth;
                drop_ramp_per_tick = drop_db / recovery_ticks;
                ticks_to_event = rng.exponential(event_rate_per_tick);
            }
            drop_db = std::max(0.0, drop_db - drop_ramp_per_tick);
        }
        const double true_sinr = cfg.sinr_mean_db + shadow.value + fast.value - drop_db;

        if (tick % rsrp_period == 0) {
            const double ss_rsrp = std::clamp(
                detail::kRsrpMeanDbm + (true_sinr - cfg.sinr_mean_db) +
                    rng.normal(0.0, detail::kRsrpNoiseStdDb),
                -140.0, -44.0);
            const double csi_rsrp =
                std::clamp(ss_rsrp + rng.normal(0.0, 0.5), -140.0, -44.0);
            log.entries.push_back({tick, RsrpReport{ss_rsrp, csi_rsrp}});
        }
        if (tick % sinr_period == 0) {
            const double ss = true_sinr + (cfg.sinr_noise_std_db > 0.0
                                               ? rng.normal(0.0, cfg.sinr_noise_std_db)
                                               : 0.0);
            const double csi = ss + rng.normal(0.0, detail::kCsiSinrNoiseStdDb);
            log.entries.push_back({tick, SinrReport{ss, csi}});
        }
        if (tick % cqi_period == 0) {
            // Quantizer on the true SINR with +-1 index reporting noise.
            int cqi = quantize_cqi(true_sinr);
            const double u = rng.uniform();
            if (u < 0.15) cqi -= 1;
            else if (u > 0.85) cqi += 1;
            latest_cqi = std::clamp(cqi, 0, kCqiCount - 1);
            log.entries.push_back({tick, CsfReport{latest_cqi}});
        }
        if (tdd::is_downlink_tick(tick)) {
            const int mcs = scheduler_select_mcs(latest_cqi, olla.offset_db);
            const bool crc_pass = !rng.bernoulli(sinr_to_bler(true_sinr, mcs));
            int num_rb = detail::kNumRbFull;
            if (rng.uniform() < 0.01) num_rb = rng.uniform_int(200, detail::kNumRbFull);
            log.entries.push_back({tick, PdschStatus{mcs, num_rb, crc_pass}});
            olla.update(crc_pass, cfg.olla_target_bler);
        }
    }
    return log;
}

}  // namespace mcscast
