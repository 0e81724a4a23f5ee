#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mcscast/csv.hpp"
#include "mcscast/error.hpp"
#include "mcscast/tdd.hpp"
#include "mcscast/telemetry.hpp"

namespace mcscast {

/// One downlink slot with every telemetry field aligned to its tick.
struct SlotRecord {
    std::int64_t dl_slot_index = 0;  // consecutive within the table
    tdd::Tick tick = 0;              // position on the original 0.5 ms timeline
    int num_rb = 0;
    int mcs = 0;
    bool crc_pass = false;
    double ss_rsrp = 0.0;
    double ss_sinr = 0.0;
    double csi_rsrp = 0.0;
    double csi_sinr = 0.0;
    int dl_cqi = 0;
};

struct SlotTable {
    static constexpr int kTddPeriodSlots = tdd::kSlotsPerPeriod;
    static constexpr int kDlSlotsPerPeriod = tdd::kDlSlotsPerPeriod;

    std::vector<SlotRecord> rows;
    // Serving PCI per row; parallel to rows. Consumed by filter_slots and not
    // part of the persisted schema.
    std::vector<int> pcis;

    std::size_t size() const { return rows.size(); }

    /// Downlink slots removed between adjacent rows, reconstructed from ticks.
    std::int64_t gap_before(std::size_t row) const {
        if (row == 0) return 0;
        return tdd::dl_index_of_tick(rows[row].tick) -
               tdd::dl_index_of_tick(rows[row - 1].tick) - 1;
    }

    /// Largest removal discontinuity inside rows [first, last], inclusive.
    std::int64_t max_gap_in(std::size_t first, std::size_t last) const {
        std::int64_t worst = 0;
        for (std::size_t r = first + 1; r <= last; ++r) {
            worst = std::max(worst, gap_before(r));
        }
        return worst;
    }
};

/// Aligns heterogeneous reports onto the downlink-slot timeline: every slot
/// carries the most recent value of each slow metric (LOCF). Slots preceding
/// the first report of any metric are dropped, never back-filled; back-fill
/// would leak future reports into the features.
inline SlotTable align_locf(const RawTelemetryLog& log) {
    if (log.empty()) throw EmptyInputError("align_locf: empty telemetry log");

    std::optional<CsfReport> csf;
    std::optional<SinrReport> sinr;
    std::optional<RsrpReport> rsrp;
    int pci = -1;

    SlotTable table;
    tdd::Tick prev_tick = log.entries.front().tick;
    for (const auto& e : log.entries) {
        if (e.tick < prev_tick) {
            throw std::invalid_argument("align_locf: timestamps must be non-decreasing");
        }
        prev_tick = e.tick;
        if (const auto* c = std::get_if<CsfReport>(&e.payload)) {
            csf = *c;
        } else if (const auto* s = std::get_if<SinrReport>(&e.payload)) {
            sinr = *s;
        } else if (const auto* r = std::get_if<RsrpReport>(&e.payload)) {
            rsrp = *r;
        } else if (const auto* pc = std::get_if<PciChange>(&e.payload)) {
            pci = pc->pci;
        } else if (const auto* p = std::get_if<PdschStatus>(&e.payload)) {
            if (!tdd::is_downlink_tick(e.tick)) {
                throw std::invalid_argument("align_locf: PdschStatus on a non-downlink tick");
            }
            if (!csf || !sinr || !rsrp) continue;  // warm-up trim
            SlotRecord rec;
            rec.dl_slot_index = static_cast<std::int64_t>(table.rows.size());
            rec.tick = e.tick;
            rec.num_rb = p->num_rb;
            rec.mcs = p->mcs;
            rec.crc_pass = p->crc_pass;
            rec.ss_rsrp = rsrp->ss_rsrp_dbm;
            rec.csi_rsrp = rsrp->csi_rsrp_dbm;
            rec.ss_sinr = sinr->ss_sinr_db;
            rec.csi_sinr = sinr->csi_sinr_db;
            rec.dl_cqi = csf->dl_cqi;
            table.rows.push_back(rec);
            table.pcis.push_back(pci);
        }
    }
    return table;
}

/// Drops retransmission rows (raw MCS >= 28) and rows under disallowed PCIs,
/// then re-indexes the survivors. Field values are never altered. An empty
/// allow-list admits every PCI. Removal discontinuities stay visible through
/// the preserved ticks (see SlotTable::gap_before).
inline SlotTable filter_slots(const SlotTable& table, const std::set<int>& allowed_pcis = {}) {
    SlotTable out;
    out.rows.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        if (table.rows[i].mcs >= kMcsCount) continue;
        if (!allowed_pcis.empty() && !table.pcis.empty() &&
            !allowed_pcis.contains(table.pcis[i])) {
            continue;
        }
        SlotRecord rec = table.rows[i];
        rec.dl_slot_index = static_cast<std::int64_t>(out.rows.size());
        out.rows.push_back(rec);
        if (!table.pcis.empty()) out.pcis.push_back(table.pcis[i]);
    }
    return out;
}

inline const char* slot_csv_header() {
    return "dl_slot_index,tick,num_rb,mcs,crc_pass,ss_rsrp,ss_sinr,csi_rsrp,csi_sinr,dl_cqi";
}

inline void write_slot_csv(const SlotTable& table, const std::string& path,
                           const std::string& header_comment = "") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifactError("cannot open slot table for writing: " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << slot_csv_header() << "\n";
    for (const auto& r : table.rows) {
        out << r.dl_slot_index << ',' << r.tick << ',' << r.num_rb << ',' << r.mcs << ','
            << (r.crc_pass ? 1 : 0) << ',' << csv::format_double(r.ss_rsrp) << ','
            << csv::format_double(r.ss_sinr) << ',' << csv::format_double(r.csi_rsrp) << ','
            << csv::format_double(r.csi_sinr) << ',' << r.dl_cqi << '\n';
    }
}

inline SlotTable read_slot_csv(const std::string& path) {
    csv::Reader reader(path);
    std::vector<std::string_view> f;
    SlotTable table;
    bool header_seen = false;
    while (reader.next_row(f)) {
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        if (f.size() != 10) throw std::invalid_argument("slot csv: expected 10 fields");
        SlotRecord r;
        r.dl_slot_index = csv::parse_int(f[0]);
        r.tick = csv::parse_int(f[1]);
        r.num_rb = static_cast<int>(csv::parse_int(f[2]));
        r.mcs = static_cast<int>(csv::parse_int(f[3]));
        r.crc_pass = csv::parse_int(f[4]) != 0;
        r.ss_rsrp = csv::parse_double(f[5]);
        r.ss_sinr = csv::parse_double(f[6]);
        r.csi_rsrp = csv::parse_double(f[7]);
        r.csi_sinr = csv::parse_double(f[8]);
        r.dl_cqi = static_cast<int>(csv::parse_int(f[9]));
        table.rows.push_back(r);
    }
    if (!header_seen) throw std::invalid_argument("slot csv missing header: " + path);
    return table;
}

}  // namespace mcscast
