#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mcscast/channelsim.hpp"
#include "mcscast/evalsim.hpp"

using namespace mcscast;

namespace {

FeatureTable constant_table(std::size_t n, int mcs, bool crc) {
    SlotTable t;
    for (std::size_t i = 0; i < n; ++i) {
        SlotRecord r;
        r.dl_slot_index = static_cast<std::int64_t>(i);
        r.tick = tdd::tick_of_dl_index(static_cast<std::int64_t>(i));
        r.mcs = mcs;
        r.dl_cqi = 8;
        r.num_rb = 273;
        r.crc_pass = crc;
        r.ss_sinr = 12.0;
        r.csi_sinr = 11.0;
        r.ss_rsrp = -95.0;
        r.csi_rsrp = -96.0;
        t.rows.push_back(r);
    }
    return compute_features(t);
}

FeatureTable synthetic_table(double seconds, std::uint64_t seed) {
    ChannelSimConfig cfg;
    cfg.duration_s = seconds;
    cfg.seed = seed;
    return compute_features(filter_slots(align_locf(generate_trace(cfg))));
}

/// Decoder bias shifted so every output sits near the given probability.
ModelParams model_with_constant_output(double p) {
    ModelParams m = zero_params(ModelConfig{});
    const double logit = std::log(p / (1.0 - p));
    double* bias = m.tensor(m.layout.dec_b2);
    for (int i = 0; i < m.config.out_dim; ++i) bias[i] = logit;
    return m;
}

FeatureWindow window_from_mcs_column(const std::vector<int>& mcs_values) {
    FeatureWindow w;
    w.rows = kWindowSlots;
    w.data.assign(static_cast<std::size_t>(kWindowSlots) * kFeatureCount, 0.0);
    for (int r = 0; r < kWindowSlots; ++r) {
        w.at(r, kFeatureMcs) = static_cast<double>(mcs_values[static_cast<std::size_t>(r)]);
    }
    return w;
}

Normalizer identity_normalizer() {
    Normalizer n;
    for (int f = 0; f < kFeatureCount; ++f) {
        n.mean[f] = 0.0;
        n.stddev[f] = 1.0;
    }
    return n;
}

}  // namespace

TEST_CASE("threshold scan picks the largest qualifying index") {
    std::vector<double> probs(28, 0.1);
    for (int k = 0; k <= 10; ++k) probs[static_cast<std::size_t>(k)] = 1.0;
    probs[11] = 0.95;
    probs[12] = 0.91;
    probs[13] = 0.85;
    CHECK(threshold_scan(probs, 0.9) == 12);
    CHECK(threshold_scan(std::vector<double>(28, 0.5), 0.9) == kOutage);
    CHECK(threshold_scan(std::vector<double>(28, 1.0), 0.9) == 27);
}

TEST_CASE("heuristic policies read the scheduler history") {
    const Normalizer norm = identity_normalizer();
    std::vector<int> history(kWindowSlots, 10);
    SECTION("moving average of a constant is that constant") {
        const FeatureWindow w = window_from_mcs_column(history);
        CHECK(decide(Policy::maw(norm), w, w) == 10);
    }
    SECTION("last value wins for the reactive baseline") {
        history.back() = 17;
        const FeatureWindow w = window_from_mcs_column(history);
        CHECK(decide(Policy::lra(norm), w, w) == 17);
    }
    SECTION("moving average rounds half to even") {
        // twenty 10s and twenty 11s -> 10.5 -> 10
        for (int i = 0; i < kWindowSlots; ++i) history[static_cast<std::size_t>(i)] = i < 20 ? 10 : 11;
        const FeatureWindow w = window_from_mcs_column(history);
        CHECK(decide(Policy::maw(norm), w, w) == 10);
    }
}

TEST_CASE("heuristics on inverse-transformed features equal the raw integers") {
    const FeatureTable ft = synthetic_table(3.0, 909);
    const Normalizer norm = Normalizer::fit(ft, 0, ft.size());
    for (std::int64_t anchor = 39; anchor < static_cast<std::int64_t>(ft.size()); anchor += 7) {
        const FeatureWindow raw = extract_window_raw(ft, anchor);
        const FeatureWindow normed = normalize_window(raw, norm);
        // reference route: the raw integer sequence directly
        const int last_raw = static_cast<int>(std::llround(raw.at(kWindowSlots - 1, kFeatureMcs)));
        double sum = 0.0;
        for (int r = 0; r < kWindowSlots; ++r) sum += std::llround(raw.at(r, kFeatureMcs));
        const int mean_raw =
            std::clamp(static_cast<int>(std::nearbyint(sum / kWindowSlots)), 0, 27);
        CHECK(decide(Policy::lra(norm), normed, raw) == last_raw);
        CHECK(decide(Policy::maw(norm), normed, raw) == mean_raw);
    }
}

TEST_CASE("model policies scan their own forecasts") {
    const Normalizer norm = identity_normalizer();
    const ModelParams optimist = model_with_constant_output(0.99);
    const ModelParams pessimist = model_with_constant_output(0.3);
    Rng rng(5);
    FeatureWindow w;
    w.rows = kWindowSlots;
    w.data.resize(static_cast<std::size_t>(kWindowSlots) * kFeatureCount);
    for (auto& v : w.data) v = rng.normal();
    CHECK(decide(Policy::proposed(optimist, norm), w, w) == 27);
    CHECK(decide(Policy::proposed(pessimist, norm), w, w) == 0);  // outage selects 0
    CHECK(decide(Policy::deterministic(pessimist, norm), w, w) == 0);
    ModelParams half = model_with_constant_output(0.6);
    CHECK(decide(Policy::deterministic(half, norm), w, w) == 27);
}

TEST_CASE("metrics over synthetic decision lists") {
    SECTION("perfect tracking") {
        std::vector<GopDecision> d;
        for (int i = 0; i < 10; ++i) d.push_back({i, 0, 12, 12});
        const MetricRow r = compute_metrics(d);
        CHECK(r.rmse == 0.0);
        CHECK(r.reliability_pct == 100.0);
        CHECK(r.avg_bias == 0.0);
        CHECK(r.mae == 0.0);
        CHECK(r.n_gops == 10);
    }
    SECTION("maximally conservative policy") {
        std::vector<GopDecision> d;
        double gt_sum = 0.0;
        for (int i = 0; i < 10; ++i) {
            d.push_back({i, 0, 0, i % 5 + 3});
            gt_sum += i % 5 + 3;
        }
        const MetricRow r = compute_metrics(d);
        CHECK(r.reliability_pct == 100.0);
        CHECK(r.avg_bias == Catch::Approx(-gt_sum / 10.0));
    }
    SECTION("symmetric one-step errors") {
        std::vector<GopDecision> d;
        for (int i = 0; i < 10; ++i) d.push_back({i, 0, 10 + (i % 2 == 0 ? 1 : -1), 10});
        const MetricRow r = compute_metrics(d);
        CHECK(r.rmse == Catch::Approx(1.0));
        CHECK(r.mae == Catch::Approx(1.0));
        CHECK(r.avg_bias == Catch::Approx(0.0).margin(1e-12));
        CHECK(r.reliability_pct == Catch::Approx(50.0));
    }
    SECTION("outage ground truth is excluded and counted") {
        std::vector<GopDecision> d;
        d.push_back({0, 0, 5, 7});
        d.push_back({1, 0, 5, kOutage});
        const MetricRow r = compute_metrics(d);
        CHECK(r.n_gops == 1);
        CHECK(r.n_outage_gops == 1);
        CHECK_THROWS_AS(compute_metrics(std::vector<GopDecision>{{0, 0, 5, kOutage}}), NoDataError);
    }
    SECTION("metric identities on random decisions") {
        Rng rng(14);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<GopDecision> d;
            for (int i = 0; i < 200; ++i) {
                d.push_back({i, 0, rng.uniform_int(0, 27), rng.uniform_int(0, 27)});
            }
            const MetricRow r = compute_metrics(d);
            CHECK(r.mae <= r.rmse + 1e-12);
            CHECK(std::abs(r.avg_bias) <= r.mae + 1e-12);
        }
    }
}

TEST_CASE("simulation paces gops through the trace") {
    const HorizonSpec spec{160, 800};
    const Normalizer norm = identity_normalizer();
    SECTION("a minimal trace carries exactly one gop") {
        const FeatureTable ft = constant_table(40 + 160 + 800, 20, true);
        const std::vector<Policy> ps = {Policy::lra(norm), Policy::maw(norm)};
        const SimResult sim = run_simulation(ft, ps, spec);
        CHECK(sim.n_gops_total == 1);
        REQUIRE(sim.decisions[0].second.size() == 1);
        CHECK(sim.decisions[0].second[0].decision_anchor == 39);
        CHECK(sim.decisions[0].second[0].gt_mcs == 20);
        CHECK(sim.decisions[0].second[0].selected_mcs == 20);
    }
    SECTION("one slot short leaves no gop") {
        const FeatureTable ft = constant_table(40 + 160 + 800 - 1, 20, true);
        const std::vector<Policy> ps = {Policy::lra(norm)};
        CHECK_THROWS_AS(run_simulation(ft, ps, spec), TraceTooShortError);
    }
    SECTION("identical policies produce identical rows") {
        const FeatureTable ft = synthetic_table(5.0, 33);
        const Normalizer fitted = Normalizer::fit(ft, 0, ft.size());
        const std::vector<Policy> ps = {Policy::lra(fitted), Policy::lra(fitted)};
        const SimResult sim = run_simulation(ft, ps, spec);
        REQUIRE(sim.n_gops_total >= 1);
        const MetricRow a = compute_metrics(sim.decisions[0].second);
        const MetricRow b = compute_metrics(sim.decisions[1].second);
        CHECK(a.rmse == b.rmse);
        CHECK(a.reliability_pct == b.reliability_pct);
        CHECK(a.avg_bias == b.avg_bias);
        CHECK(a.mae == b.mae);
    }
    SECTION("a fully optimistic model selects 27 every gop") {
        const FeatureTable ft = synthetic_table(5.0, 44);
        const Normalizer fitted = Normalizer::fit(ft, 0, ft.size());
        const ModelParams optimist = model_with_constant_output(0.999);
        const std::vector<Policy> ps = {Policy::proposed(optimist, fitted)};
        const SimResult sim = run_simulation(ft, ps, spec);
        for (const auto& d : sim.decisions[0].second) CHECK(d.selected_mcs == 27);
    }
    SECTION("decisions respect causality") {
        FeatureTable ft = constant_table(40 + 160 + 800, 15, true);
        const std::vector<Policy> ps = {Policy::lra(norm), Policy::maw(norm)};
        const SimResult before = run_simulation(ft, ps, spec);
        // mutate everything after the anchor; decisions must not move
        for (std::size_t i = 40; i < ft.size(); ++i) {
            ft.slots[i].mcs = 3;
            ft.mcs_trend[i] = 3.0;
        }
        const SimResult after = run_simulation(ft, ps, spec);
        for (std::size_t p = 0; p < ps.size(); ++p) {
            CHECK(before.decisions[p].second[0].selected_mcs ==
                  after.decisions[p].second[0].selected_mcs);
        }
        // the ground truth, which lives in the future, does move
        CHECK(before.decisions[0].second[0].gt_mcs != after.decisions[0].second[0].gt_mcs);
    }
}

TEST_CASE("inference benchmark reports stable statistics") {
    const ModelParams m = init_params(ModelConfig{}, 3);
    const BenchResult a = bench_inference(m, 300, 1);
    CHECK(a.n_iters == 300);
    CHECK(a.mean_ms > 0.0);
    CHECK(a.sd_ms >= 0.0);
    CHECK(a.pct_of_tti == Catch::Approx(a.mean_ms / 0.5 * 100.0));
    SECTION("doubling the iteration count stays within three sigmas") {
        const BenchResult b = bench_inference(m, 600, 1);
        CHECK(std::abs(b.mean_ms - a.mean_ms) <= 3.0 * std::max(a.sd_ms, 1e-6) + 0.05);
    }
    SECTION("single-window forward fits inside one slot") {
        CHECK(a.mean_ms < 0.5);
    }
}
