#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mcscast/csv.hpp"
#include "mcscast/error.hpp"
#include "mcscast/labels.hpp"
#include "mcscast/model.hpp"

namespace mcscast {

enum class PolicyKind { proposed, lra, maw, deterministic, mse_t };

inline const char* policy_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::proposed: return "proposed";
        case PolicyKind::lra: return "lra";
        case PolicyKind::maw: return "maw";
        case PolicyKind::deterministic: return "deterministic";
        case PolicyKind::mse_t: return "mse_t";
    }
    return "?";
}

/// A per-GOP decision rule. Model-backed kinds carry a checkpoint plus its
/// normalizer sidecar; the heuristics carry the normalizer alone so they can
/// recover integer MCS values from normalized inputs.
struct Policy {
    PolicyKind kind = PolicyKind::proposed;
    double threshold = 0.9;
    const ModelParams* model = nullptr;
    const Normalizer* normalizer = nullptr;

    static Policy proposed(const ModelParams& m, const Normalizer& n, double thr = 0.9) {
        return {PolicyKind::proposed, thr, &m, &n};
    }
    static Policy mse_t(const ModelParams& m, const Normalizer& n, double thr = 0.9) {
        return {PolicyKind::mse_t, thr, &m, &n};
    }
    static Policy deterministic(const ModelParams& m, const Normalizer& n, double thr = 0.5) {
        return {PolicyKind::deterministic, thr, &m, &n};
    }
    static Policy lra(const Normalizer& n) { return {PolicyKind::lra, 0.0, nullptr, &n}; }
    static Policy maw(const Normalizer& n) { return {PolicyKind::maw, 0.0, nullptr, &n}; }
};

struct GopDecision {
    std::int64_t gop_index = 0;
    std::int64_t decision_anchor = 0;  // last slot visible to the policy
    int selected_mcs = 0;              // what was transmitted (outage prediction selects 0)
    int gt_mcs = kOutage;              // highest MCS the horizon actually supported
};

/// Highest index whose predicted success probability meets the threshold;
/// kOutage when none qualifies.
inline int threshold_scan(std::span<const double> probs, double threshold) {
    for (int k = kMcsCount - 1; k >= 0; --k) {
        if (probs[static_cast<std::size_t>(k)] >= threshold) return k;
    }
    return kOutage;
}

namespace detail {

inline int integer_mcs(double v) {
    return std::clamp(static_cast<int>(std::llround(v)), 0, kMcsCount - 1);
}

/// Round half to even, matching the default FP environment.
inline int round_mean_mcs(double mean) {
    return std::clamp(static_cast<int>(std::nearbyint(mean)), 0, kMcsCount - 1);
}

}  // namespace detail

/// One MCS choice for the upcoming GOP. Model policies read the normalized
/// window; the heuristics recover the scheduler's integer MCS sequence by
/// inverse-transforming the normalized MCS column.
inline int decide(const Policy& policy, const FeatureWindow& window,
                  const FeatureWindow& raw_window) {
    switch (policy.kind) {
        case PolicyKind::proposed:
        case PolicyKind::mse_t:
        case PolicyKind::deterministic: {
            if (!policy.model) throw std::invalid_argument("decide: model policy without checkpoint");
            const auto probs = forward(*policy.model, window);
            const int k = threshold_scan(probs, policy.threshold);
            return k == kOutage ? 0 : k;
        }
        case PolicyKind::lra:
        case PolicyKind::maw: {
            if (!policy.normalizer) {
                throw std::invalid_argument("decide: heuristic policy without normalizer");
            }
            (void)raw_window;  // equality with the raw integer route is test-enforced
            const int rows = window.rows;
            if (policy.kind == PolicyKind::lra) {
                return detail::integer_mcs(
                    policy.normalizer->invert_one(kFeatureMcs, window.at(rows - 1, kFeatureMcs)));
            }
            double sum = 0.0;
            for (int r = 0; r < rows; ++r) {
                sum += detail::integer_mcs(
                    policy.normalizer->invert_one(kFeatureMcs, window.at(r, kFeatureMcs)));
            }
            return detail::round_mean_mcs(sum / rows);
        }
    }
    throw std::invalid_argument("decide: unknown policy kind");
}

struct MetricRow {
    double rmse = 0.0;
    double reliability_pct = 0.0;
    double avg_bias = 0.0;
    double mae = 0.0;
    std::int64_t n_gops = 0;         // non-outage GOPs scored
    std::int64_t n_outage_gops = 0;  // excluded from the four metrics
};

/// Four-metric summary over non-outage GOPs: tracking error (RMSE), the share
/// of GOPs without overshoot (reliability), the signed safety margin (bias),
/// and the absolute error magnitude (MAE).
inline MetricRow compute_metrics(std::span<const GopDecision> decisions) {
    MetricRow row;
    double se = 0.0, bias = 0.0, ae = 0.0;
    std::int64_t safe = 0;
    for (const auto& d : decisions) {
        if (d.gt_mcs == kOutage) {
            ++row.n_outage_gops;
            continue;
        }
        const double err = static_cast<double>(d.selected_mcs - d.gt_mcs);
        se += err * err;
        bias += err;
        ae += std::abs(err);
        if (d.selected_mcs <= d.gt_mcs) ++safe;
        ++row.n_gops;
    }
    if (row.n_gops == 0) throw NoDataError("compute_metrics: no non-outage decisions");
    const double n = static_cast<double>(row.n_gops);
    row.rmse = std::sqrt(se / n);
    row.reliability_pct = 100.0 * static_cast<double>(safe) / n;
    row.avg_bias = bias / n;
    row.mae = ae / n;
    return row;
}

struct SimResult {
    std::vector<std::pair<PolicyKind, std::vector<GopDecision>>> decisions;
    std::int64_t n_gops_total = 0;
    std::int64_t n_outage_gops = 0;
    std::int64_t n_gap_skipped = 0;
};

/// GOP-paced scheduler replay. Walks the trace in steps of one GOP; each GOP's
/// decision is made at its anchor (delay+1 slots before the GOP starts), uses
/// only the trailing 40-slot window, and is held for the whole GOP. Every
/// policy sees the identical window. A trailing partial GOP is discarded.
inline SimResult run_simulation(const FeatureTable& trace, std::span<const Policy> policies,
                                const HorizonSpec& spec, double gt_threshold = 0.9,
                                std::int64_t max_gap = 16) {
    spec.validate();
    const std::int64_t n = static_cast<std::int64_t>(trace.size());
    const std::int64_t first_gop_start = (kWindowSlots - 1) + spec.delay_dl_slots + 1;
    if (first_gop_start + spec.gop_dl_slots > n) {
        throw TraceTooShortError("run_simulation: trace has " + std::to_string(n) +
                                 " slots, need at least " +
                                 std::to_string(first_gop_start + spec.gop_dl_slots));
    }
    SimResult result;
    for (const auto& p : policies) result.decisions.emplace_back(p.kind, std::vector<GopDecision>{});

    // Every policy in a run shares the pipeline's single normalizer; take the
    // first available one to prepare the shared normalized window.
    const Normalizer* norm = nullptr;
    for (const auto& p : policies) {
        if (p.normalizer) norm = p.normalizer;
    }
    for (const auto& p : policies) {
        if (p.model && !norm) {
            throw std::invalid_argument("run_simulation: model policy requires a normalizer");
        }
    }

    std::int64_t gop_index = 0;
    for (std::int64_t gop_start = first_gop_start; gop_start + spec.gop_dl_slots <= n;
         gop_start += spec.gop_dl_slots, ++gop_index) {
        const std::int64_t anchor = gop_start - spec.delay_dl_slots - 1;
        FeatureWindow raw;
        LabelVector gt_label;
        try {
            raw = extract_window_raw(trace, anchor, max_gap);
            gt_label = build_label(trace, anchor, spec, max_gap);
        } catch (const GapViolationError&) {
            ++result.n_gap_skipped;
            continue;
        }
        const FeatureWindow window = norm ? normalize_window(raw, *norm) : raw;
        const int gt = ground_truth_mcs(gt_label, gt_threshold);
        ++result.n_gops_total;
        if (gt == kOutage) ++result.n_outage_gops;
        for (std::size_t pi = 0; pi < policies.size(); ++pi) {
            GopDecision d;
            d.gop_index = gop_index;
            d.decision_anchor = anchor;
            d.selected_mcs = decide(policies[pi], window, raw);
            d.gt_mcs = gt;
            result.decisions[pi].second.push_back(d);
        }
    }
    return result;
}

struct EvalReport {
    std::vector<std::pair<std::string, MetricRow>> rows;

    const MetricRow& row(const std::string& name) const {
        for (const auto& [n, r] : rows) {
            if (n == name) return r;
        }
        throw NoDataError("EvalReport: no row named " + name);
    }
};

inline void write_report_csv(const EvalReport& report, const std::string& path,
                             const std::string& header_comment = "") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifactError("cannot write report: " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "policy,rmse,reliability_pct,avg_bias,mae,n_gops,n_outage_gops\n";
    for (const auto& [name, r] : report.rows) {
        out << name << ',' << csv::format_double(r.rmse) << ','
            << csv::format_double(r.reliability_pct) << ',' << csv::format_double(r.avg_bias)
            << ',' << csv::format_double(r.mae) << ',' << r.n_gops << ',' << r.n_outage_gops
            << '\n';
    }
}

inline EvalReport read_report_csv(const std::string& path) {
    csv::Reader reader(path);
    std::vector<std::string_view> f;
    EvalReport rep;
    bool header = false;
    while (reader.next_row(f)) {
        if (!header) {
            header = true;
            continue;
        }
        if (f.size() != 7) throw std::invalid_argument("report csv: expected 7 fields");
        MetricRow r;
        r.rmse = csv::parse_double(f[1]);
        r.reliability_pct = csv::parse_double(f[2]);
        r.avg_bias = csv::parse_double(f[3]);
        r.mae = csv::parse_double(f[4]);
        r.n_gops = csv::parse_int(f[5]);
        r.n_outage_gops = csv::parse_int(f[6]);
        rep.rows.emplace_back(std::string(f[0]), r);
    }
    return rep;
}

/// Fixed-width table in the column order RMSE, Reliability, Bias, MAE.
inline std::string format_report_table(const EvalReport& report) {
    char buf[160];
    std::string out;
    std::snprintf(buf, sizeof buf, "%-14s %10s %12s %12s %10s %8s %8s\n", "Method", "RMSE",
                  "Reliability", "Avg Bias", "MAE", "GOPs", "Outage");
    out += buf;
    out += std::string(78, '-') + "\n";
    for (const auto& [name, r] : report.rows) {
        std::snprintf(buf, sizeof buf, "%-14s %10.4f %11.2f%% %12.4f %10.4f %8lld %8lld\n",
                      name.c_str(), r.rmse, r.reliability_pct, r.avg_bias, r.mae,
                      static_cast<long long>(r.n_gops), static_cast<long long>(r.n_outage_gops));
        out += buf;
    }
    return out;
}

struct BenchResult {
    int n_iters = 0;
    double mean_ms = 0.0;
    double sd_ms = 0.0;
    double pct_of_tti = 0.0;  // share of the 0.5 ms slot budget
};

/// Wall-clock statistics of single-window forward passes over seeded random
/// inputs, mirroring a per-slot inference budget check.
inline BenchResult bench_inference(const ModelParams& params, int n_iters = 1000,
                                   std::uint64_t seed = 1) {
    if (n_iters < 1) throw std::invalid_argument("bench_inference: n_iters must be >= 1");
    Rng rng(seed);
    constexpr int kPoolSize = 64;
    std::vector<FeatureWindow> pool(kPoolSize);
    for (auto& w : pool) {
        w.rows = params.config.seq_len;
        w.data.resize(static_cast<std::size_t>(w.rows) * params.config.in_features);
        for (auto& v : w.data) v = rng.normal();
    }
    ForwardCache cache;
    double sink = 0.0;
    // Warm-up pass so allocation and code paging stay out of the timings.
    sink += forward(params, pool[0], cache)[0];

    std::vector<double> times_ms(static_cast<std::size_t>(n_iters));
    for (int i = 0; i < n_iters; ++i) {
        const auto& w = pool[static_cast<std::size_t>(i % kPoolSize)];
        const auto t0 = std::chrono::steady_clock::now();
        const auto probs = forward(params, w, cache);
        const auto t1 = std::chrono::steady_clock::now();
        sink += probs[0];
        times_ms[static_cast<std::size_t>(i)] =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    asm volatile("" : : "g"(&sink) : "memory");  // keep the forwards alive
    BenchResult r;
    r.n_iters = n_iters;
    for (double t : times_ms) r.mean_ms += t;
    r.mean_ms /= n_iters;
    for (double t : times_ms) r.sd_ms += (t - r.mean_ms) * (t - r.mean_ms);
    r.sd_ms = std::sqrt(r.sd_ms / n_iters);
    r.pct_of_tti = r.mean_ms / tdd::kTickMs * 100.0;
    return r;
}

}  // namespace mcscast
