#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "mcscast/channelsim.hpp"
#include "mcscast/labels.hpp"

using namespace mcscast;

namespace {

std::vector<SlotRecord> slots_from(const std::vector<std::pair<int, bool>>& obs) {
    std::vector<SlotRecord> v;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        SlotRecord r;
        r.dl_slot_index = static_cast<std::int64_t>(i);
        r.tick = tdd::tick_of_dl_index(static_cast<std::int64_t>(i));
        r.mcs = obs[i].first;
        r.crc_pass = obs[i].second;
        v.push_back(r);
    }
    return v;
}

/// Independent oracle: applies the per-slot, per-index update rule literally.
LabelVector brute_force_counts(const std::vector<SlotRecord>& slots) {
    LabelVector l;
    for (const auto& s : slots) {
        if (s.crc_pass) {
            for (int k = 0; k <= s.mcs; ++k) {
                l.success[static_cast<std::size_t>(k)] += 1;
                l.trials[static_cast<std::size_t>(k)] += 1;
            }
        } else {
            l.trials[static_cast<std::size_t>(s.mcs)] += 1;
        }
    }
    return l;
}

FeatureTable constant_outcome_table(std::size_t n, int mcs, bool crc) {
    SlotTable t;
    for (std::size_t i = 0; i < n; ++i) {
        SlotRecord r;
        r.dl_slot_index = static_cast<std::int64_t>(i);
        r.tick = tdd::tick_of_dl_index(static_cast<std::int64_t>(i));
        r.mcs = mcs;
        r.crc_pass = crc;
        t.rows.push_back(r);
    }
    return compute_features(t);
}

}  // namespace

TEST_CASE("single-slot counting follows the conservative rule") {
    SECTION("a pass vouches for every index at or below") {
        const LabelVector l = accumulate_counts(slots_from({{10, true}}));
        for (int k = 0; k < kMcsCount; ++k) {
            if (k <= 10) {
                CHECK(l.success[static_cast<std::size_t>(k)] == 1);
                CHECK(l.trials[static_cast<std::size_t>(k)] == 1);
            } else {
                CHECK(l.trials[static_cast<std::size_t>(k)] == 0);
            }
        }
    }
    SECTION("a failure counts a trial against its own index only") {
        const LabelVector l = accumulate_counts(slots_from({{10, false}}));
        for (int k = 0; k < kMcsCount; ++k) {
            CHECK(l.success[static_cast<std::size_t>(k)] == 0);
            CHECK(l.trials[static_cast<std::size_t>(k)] == (k == 10 ? 1 : 0));
        }
    }
    SECTION("mixed pass and fail") {
        const LabelVector l = accumulate_counts(slots_from({{5, true}, {7, false}}));
        for (int k = 0; k <= 5; ++k) {
            CHECK(l.valid(k));
            CHECK(l.prob(k) == 1.0);
        }
        CHECK_FALSE(l.valid(6));
        CHECK(l.valid(7));
        CHECK(l.prob(7) == 0.0);
        for (int k = 8; k < kMcsCount; ++k) CHECK_FALSE(l.valid(k));
    }
}

TEST_CASE("counting matches the brute-force oracle on 1000 random horizons") {
    Rng rng(4242);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = rng.uniform_int(1, 50);
        std::vector<std::pair<int, bool>> obs;
        for (int i = 0; i < n; ++i) {
            obs.emplace_back(rng.uniform_int(0, 27), rng.bernoulli(0.7));
        }
        const auto slots = slots_from(obs);
        const LabelVector fast = accumulate_counts(slots);
        const LabelVector slow = brute_force_counts(slots);
        REQUIRE(fast.success == slow.success);
        REQUIRE(fast.trials == slow.trials);
    }
}

TEST_CASE("label properties hold on random horizons") {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = rng.uniform_int(1, 100);
        std::vector<std::pair<int, bool>> obs;
        int fails = 0;
        for (int i = 0; i < n; ++i) {
            const bool pass = rng.bernoulli(0.6);
            fails += pass ? 0 : 1;
            obs.emplace_back(rng.uniform_int(0, 27), pass);
        }
        const LabelVector l = accumulate_counts(slots_from(obs));
        // success counts never increase with the index
        for (int k = 0; k + 1 < kMcsCount; ++k) {
            CHECK(l.success[static_cast<std::size_t>(k)] >=
                  l.success[static_cast<std::size_t>(k + 1)]);
            CHECK(l.success[static_cast<std::size_t>(k)] <=
                  l.trials[static_cast<std::size_t>(k)]);
        }
        // failures never fabricate successes
        std::uint32_t total_success_at_top = l.success[0];
        std::uint32_t passes = static_cast<std::uint32_t>(n - fails);
        CHECK(total_success_at_top == passes);
    }
}

TEST_CASE("build_label covers exactly the gop horizon") {
    const HorizonSpec spec{160, 800};
    SECTION("all passes at the top index validate every entry") {
        const FeatureTable ft = constant_outcome_table(40 + 160 + 800, 27, true);
        const LabelVector l = build_label(ft, 39, spec);
        for (int k = 0; k < kMcsCount; ++k) {
            CHECK(l.valid(k));
            CHECK(l.prob(k) == 1.0);
        }
    }
    SECTION("all failures at the top index leave lower indices invalid") {
        const FeatureTable ft = constant_outcome_table(40 + 160 + 800, 27, false);
        const LabelVector l = build_label(ft, 39, spec);
        CHECK(l.trials[27] == 800);
        CHECK(l.prob(27) == 0.0);
        for (int k = 0; k < 27; ++k) CHECK_FALSE(l.valid(k));
    }
    SECTION("anchor too close to the end raises insufficient-future") {
        const FeatureTable ft = constant_outcome_table(40 + 160 + 800, 27, true);
        CHECK_THROWS_AS(build_label(ft, 40, spec), InsufficientFutureError);
    }
}

TEST_CASE("ground truth scans downward for the threshold") {
    SECTION("all ones selects the top index") {
        LabelVector l;
        for (int k = 0; k < kMcsCount; ++k) {
            l.success[static_cast<std::size_t>(k)] = 10;
            l.trials[static_cast<std::size_t>(k)] = 10;
        }
        CHECK(ground_truth_mcs(l) == 27);
    }
    SECTION("interior threshold crossing") {
        LabelVector l;
        for (int k = 0; k < kMcsCount; ++k) {
            l.trials[static_cast<std::size_t>(k)] = 10;
            l.success[static_cast<std::size_t>(k)] = k <= 10 ? 10 : 5;
        }
        CHECK(ground_truth_mcs(l, 0.9) == 10);
    }
    SECTION("nothing qualifies") {
        LabelVector l;
        for (int k = 0; k < kMcsCount; ++k) {
            l.trials[static_cast<std::size_t>(k)] = 10;
            l.success[static_cast<std::size_t>(k)] = 8;
        }
        CHECK(ground_truth_mcs(l, 0.9) == kOutage);
        CHECK(ground_truth_mcs(l, 0.8) == 27);
    }
    SECTION("anti-monotone in the threshold") {
        Rng rng(12);
        for (int trial = 0; trial < 100; ++trial) {
            LabelVector l;
            for (int k = 0; k < kMcsCount; ++k) {
                l.trials[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(rng.uniform_int(0, 20));
                l.success[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(
                    rng.uniform_int(0, static_cast<int>(l.trials[static_cast<std::size_t>(k)])));
            }
            const int lo = ground_truth_mcs(l, 0.5);
            const int hi = ground_truth_mcs(l, 0.95);
            CHECK(hi <= lo);
        }
    }
}

TEST_CASE("datasets round-trip through the binary format") {
    ChannelSimConfig cfg;
    cfg.duration_s = 2.0;
    cfg.seed = 7;
    const FeatureTable ft = compute_features(filter_slots(align_locf(generate_trace(cfg))));
    const HorizonSpec spec{160, 800};
    Dataset ds;
    ds.config_fingerprint = 0xabcdef;
    ds.samples = build_split_samples(ft, 0, ft.size(), spec, 0, 64, 16, 3);
    REQUIRE_FALSE(ds.samples.empty());

    const std::string path =
        (std::filesystem::temp_directory_path() / "mcscast_ds_test.bin").string();
    save_dataset(ds, path);
    const Dataset back = load_dataset(path);
    REQUIRE(back.samples.size() == ds.samples.size());
    CHECK(back.config_fingerprint == ds.config_fingerprint);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(back.samples[i].anchor_id == ds.samples[i].anchor_id);
        CHECK(back.samples[i].raw_window == ds.samples[i].raw_window);
        CHECK(back.samples[i].success == ds.samples[i].success);
        CHECK(back.samples[i].trials == ds.samples[i].trials);
    }
    std::remove(path.c_str());
}

TEST_CASE("split sample spans stay inside their region with the leakage gap") {
    ChannelSimConfig cfg;
    cfg.duration_s = 12.0;
    cfg.seed = 8;
    const FeatureTable ft = compute_features(filter_slots(align_locf(generate_trace(cfg))));
    const HorizonSpec spec{160, 800};
    const SplitBounds b = split_bounds(ft.size());
    const std::int64_t gap = spec.delay_dl_slots + spec.gop_dl_slots;
    const auto train = build_split_samples(ft, 0, b.train_end, spec, gap, 16, 16, 0);
    const auto val = build_split_samples(ft, b.train_end, b.val_end, spec, gap, 16, 16, 0);
    const auto test = build_split_samples(ft, b.val_end, ft.size(), spec, gap, 16, 16, 0);
    REQUIRE_FALSE(train.empty());
    REQUIRE_FALSE(val.empty());
    REQUIRE_FALSE(test.empty());
    auto anchor_of = [](const Sample& s) {
        return static_cast<std::int64_t>(s.anchor_id & 0xffffffffffULL);
    };
    for (const auto& s : train) {
        CHECK(anchor_of(s) + gap < static_cast<std::int64_t>(b.train_end));
    }
    for (const auto& s : val) {
        CHECK(anchor_of(s) >= static_cast<std::int64_t>(b.train_end) + gap);
        CHECK(anchor_of(s) + gap < static_cast<std::int64_t>(b.val_end));
    }
    for (const auto& s : test) {
        CHECK(anchor_of(s) >= static_cast<std::int64_t>(b.val_end) + gap);
    }
}
