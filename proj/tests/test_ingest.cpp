#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "mcscast/channelsim.hpp"
#include "mcscast/ingest.hpp"

using namespace mcscast;

namespace {

LogEntry pdsch(tdd::Tick t, int mcs, bool crc, int rb = 273) {
    return {t, PdschStatus{mcs, rb, crc}};
}

/// Emits every metric at tick 0 so no warm-up trim happens, then pdsch on
/// each downlink tick up to `ticks`.
RawTelemetryLog simple_log(tdd::Tick ticks) {
    RawTelemetryLog log;
    log.entries.push_back({0, PciChange{7}});
    log.entries.push_back({0, RsrpReport{-90.0, -91.0}});
    log.entries.push_back({0, SinrReport{15.0, 14.0}});
    log.entries.push_back({0, CsfReport{10}});
    for (tdd::Tick t = 0; t < ticks; ++t) {
        if (tdd::is_downlink_tick(t)) log.entries.push_back(pdsch(t, 12, true));
    }
    return log;
}

/// Renders a table back into a log where every slot re-reports its carried
/// values at its own tick; aligning that log must reproduce the table.
RawTelemetryLog render_log(const SlotTable& table) {
    RawTelemetryLog log;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const SlotRecord& r = table.rows[i];
        log.entries.push_back({r.tick, RsrpReport{r.ss_rsrp, r.csi_rsrp}});
        log.entries.push_back({r.tick, SinrReport{r.ss_sinr, r.csi_sinr}});
        log.entries.push_back({r.tick, CsfReport{r.dl_cqi}});
        log.entries.push_back({r.tick, PdschStatus{r.mcs, r.num_rb, r.crc_pass}});
    }
    return log;
}

}  // namespace

TEST_CASE("locf carries the newest report forward") {
    RawTelemetryLog log;
    log.entries.push_back({0, RsrpReport{-90.0, -91.0}});
    log.entries.push_back({0, CsfReport{9}});
    log.entries.push_back({0, SinrReport{20.0, 19.0}});
    log.entries.push_back({40, SinrReport{5.0, 4.0}});  // 20 ms later
    for (tdd::Tick t = 0; t < 80; ++t) {
        if (tdd::is_downlink_tick(t)) log.entries.push_back(pdsch(t, 10, true));
    }
    std::sort(log.entries.begin(), log.entries.end(),
              [](const LogEntry& a, const LogEntry& b) { return a.tick < b.tick; });
    const SlotTable table = align_locf(log);
    REQUIRE(table.rows.size() == tdd::dl_slots_in_ticks(80));
    for (const auto& r : table.rows) {
        if (r.tick < 40) {
            CHECK(r.ss_sinr == 20.0);
        } else {
            CHECK(r.ss_sinr == 5.0);
        }
        CHECK(r.dl_cqi == 9);
    }
}

TEST_CASE("slots before the first report of any metric are trimmed") {
    RawTelemetryLog log;
    // pdsch arrives from tick 0, but rsrp only at tick 320 (160 ms)
    log.entries.push_back({0, SinrReport{10.0, 9.0}});
    log.entries.push_back({0, CsfReport{8}});
    for (tdd::Tick t = 0; t < 400; ++t) {
        if (t == 320) log.entries.push_back({t, RsrpReport{-100.0, -101.0}});
        if (tdd::is_downlink_tick(t)) log.entries.push_back(pdsch(t, 5, true));
    }
    const SlotTable table = align_locf(log);
    REQUIRE_FALSE(table.rows.empty());
    CHECK(table.rows.front().tick == 320);
    // no-lookahead: the trim never back-fills
    for (const auto& r : table.rows) CHECK(r.tick >= 320);
}

TEST_CASE("log with no rsrp at all aligns to zero rows") {
    RawTelemetryLog log;
    log.entries.push_back({0, SinrReport{10.0, 9.0}});
    log.entries.push_back({0, CsfReport{8}});
    for (tdd::Tick t = 0; t < 100; ++t) {
        if (tdd::is_downlink_tick(t)) log.entries.push_back(pdsch(t, 5, true));
    }
    CHECK(align_locf(log).rows.empty());
    CHECK_THROWS_AS(align_locf(RawTelemetryLog{}), EmptyInputError);
}

TEST_CASE("rsrp stays constant within each 160 ms reporting span") {
    ChannelSimConfig cfg;
    cfg.duration_s = 2.0;
    cfg.seed = 5;
    const SlotTable table = align_locf(generate_trace(cfg));
    REQUIRE_FALSE(table.rows.empty());
    const tdd::Tick span = tdd::ticks_in_ms(160.0);
    std::map<tdd::Tick, std::set<double>> values;
    for (const auto& r : table.rows) values[r.tick / span].insert(r.ss_rsrp);
    for (const auto& [span_idx, vals] : values) CHECK(vals.size() == 1);
}

TEST_CASE("alignment is idempotent over a re-rendered log") {
    ChannelSimConfig cfg;
    cfg.duration_s = 1.0;
    cfg.seed = 21;
    const SlotTable first = align_locf(generate_trace(cfg));
    const SlotTable second = align_locf(render_log(first));
    REQUIRE(second.rows.size() == first.rows.size());
    for (std::size_t i = 0; i < first.rows.size(); ++i) {
        CHECK(first.rows[i].tick == second.rows[i].tick);
        CHECK(first.rows[i].mcs == second.rows[i].mcs);
        CHECK(first.rows[i].ss_sinr == second.rows[i].ss_sinr);
        CHECK(first.rows[i].ss_rsrp == second.rows[i].ss_rsrp);
        CHECK(first.rows[i].dl_cqi == second.rows[i].dl_cqi);
    }
}

TEST_CASE("filter removes retransmission rows and re-indexes") {
    RawTelemetryLog log = simple_log(200);
    // overwrite some mcs values with retx indices 28..31
    int flipped = 0;
    for (auto& e : log.entries) {
        if (auto* p = std::get_if<PdschStatus>(&e.payload)) {
            if (flipped < 10) {
                p->mcs = 28 + flipped % 4;
                ++flipped;
            }
        }
    }
    const SlotTable aligned = align_locf(log);
    const std::size_t before = aligned.rows.size();
    const SlotTable filtered = filter_slots(aligned);
    CHECK(filtered.rows.size() == before - 10);
    for (std::size_t i = 0; i < filtered.rows.size(); ++i) {
        CHECK(filtered.rows[i].mcs < 28);
        CHECK(filtered.rows[i].dl_slot_index == static_cast<std::int64_t>(i));
    }
}

TEST_CASE("filter with no removals is the identity") {
    const SlotTable aligned = align_locf(simple_log(200));
    const SlotTable filtered = filter_slots(aligned, {7});
    REQUIRE(filtered.rows.size() == aligned.rows.size());
    for (std::size_t i = 0; i < aligned.rows.size(); ++i) {
        CHECK(filtered.rows[i].tick == aligned.rows[i].tick);
        CHECK(filtered.rows[i].mcs == aligned.rows[i].mcs);
    }
}

TEST_CASE("filter drops disallowed pcis but never edits surviving fields") {
    RawTelemetryLog log;
    log.entries.push_back({0, PciChange{1}});
    log.entries.push_back({0, RsrpReport{-90.0, -91.0}});
    log.entries.push_back({0, SinrReport{15.0, 14.0}});
    log.entries.push_back({0, CsfReport{10}});
    for (tdd::Tick t = 0; t < 100; ++t) {
        if (t == 50) log.entries.push_back({t, PciChange{2}});  // outdoor cell
        if (tdd::is_downlink_tick(t)) log.entries.push_back(pdsch(t, 12, true));
    }
    const SlotTable aligned = align_locf(log);
    const SlotTable filtered = filter_slots(aligned, {1});
    REQUIRE_FALSE(filtered.rows.empty());
    for (const auto& r : filtered.rows) CHECK(r.tick < 50);
    // conservation of surviving values
    for (std::size_t i = 0; i < filtered.rows.size(); ++i) {
        CHECK(filtered.rows[i].ss_sinr == aligned.rows[i].ss_sinr);
        CHECK(filtered.rows[i].num_rb == aligned.rows[i].num_rb);
    }
    // gaps reconstructed from ticks: removing 40 dl slots leaves one 40-slot gap
    const SlotTable both = filter_slots(aligned, {1, 2});
    CHECK(both.rows.size() == aligned.rows.size());
}

TEST_CASE("slot csv round-trips") {
    ChannelSimConfig cfg;
    cfg.duration_s = 0.5;
    cfg.seed = 31;
    const SlotTable table = filter_slots(align_locf(generate_trace(cfg)));
    const std::string path =
        (std::filesystem::temp_directory_path() / "mcscast_slots_test.csv").string();
    write_slot_csv(table, path, "test");
    const SlotTable back = read_slot_csv(path);
    REQUIRE(back.rows.size() == table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        CHECK(back.rows[i].tick == table.rows[i].tick);
        CHECK(back.rows[i].ss_sinr == table.rows[i].ss_sinr);  // exact via to_chars
        CHECK(back.rows[i].csi_rsrp == table.rows[i].csi_rsrp);
        CHECK(back.rows[i].crc_pass == table.rows[i].crc_pass);
    }
    std::remove(path.c_str());
}

TEST_CASE("trace csv round-trips") {
    ChannelSimConfig cfg;
    cfg.duration_s = 0.3;
    cfg.seed = 41;
    const RawTelemetryLog log = generate_trace(cfg);
    const std::string path =
        (std::filesystem::temp_directory_path() / "mcscast_trace_test.csv").string();
    write_trace_csv(log, path, "test");
    const RawTelemetryLog back = read_trace_csv(path);
    REQUIRE(back.entries.size() == log.entries.size());
    const SlotTable a = align_locf(log);
    const SlotTable b = align_locf(back);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].ss_sinr == b.rows[i].ss_sinr);
        CHECK(a.rows[i].mcs == b.rows[i].mcs);
    }
    std::remove(path.c_str());
}
