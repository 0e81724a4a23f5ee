#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mcscast/csv.hpp"
#include "mcscast/error.hpp"
#include "mcscast/tdd.hpp"

namespace mcscast {

inline constexpr int kMcsCount = 28;  // valid transmission indices; 28..31 are retx-only
inline constexpr int kCqiCount = 16;

// Slot-synchronous modem telemetry, one record kind per logging source.
// PDSCH status and CQI arrive every downlink slot; SINR and RSRP arrive at
// their own slower reporting periods.
struct PdschStatus {
    int mcs = 0;  // 0..31; 28..31 mark retransmissions and are filtered downstream
    int num_rb = 0;
    bool crc_pass = false;
};

struct CsfReport {
    int dl_cqi = 0;  // 0..15
};

struct SinrReport {
    double ss_sinr_db = 0.0;
    double csi_sinr_db = 0.0;
};

struct RsrpReport {
    double ss_rsrp_dbm = 0.0;
    double csi_rsrp_dbm = 0.0;
};

struct PciChange {
    int pci = 0;
};

using TelemetryPayload = std::variant<PdschStatus, CsfReport, SinrReport, RsrpReport, PciChange>;

struct LogEntry {
    tdd::Tick tick = 0;
    TelemetryPayload payload;
};

struct RawTelemetryLog {
    std::vector<LogEntry> entries;

    bool empty() const { return entries.empty(); }
};

// CSV schema: `tick,record,f1,f2,f3` with a mandatory header row.
//   pdsch: f1=mcs f2=num_rb f3=crc_pass(0/1)
//   csf:   f1=dl_cqi
//   sinr:  f1=ss_sinr_db f2=csi_sinr_db
//   rsrp:  f1=ss_rsrp_dbm f2=csi_rsrp_dbm
//   pci:   f1=pci
inline void write_trace_csv(const RawTelemetryLog& log, std::ostream& out,
                            const std::string& header_comment = "") {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "tick,record,f1,f2,f3\n";
    for (const auto& e : log.entries) {
        out << csv::format_int(e.tick) << ',';
        if (const auto* p = std::get_if<PdschStatus>(&e.payload)) {
            out << "pdsch," << p->mcs << ',' << p->num_rb << ',' << (p->crc_pass ? 1 : 0);
        } else if (const auto* c = std::get_if<CsfReport>(&e.payload)) {
            out << "csf," << c->dl_cqi << ",,";
        } else if (const auto* s = std::get_if<SinrReport>(&e.payload)) {
            out << "sinr," << csv::format_double(s->ss_sinr_db) << ','
                << csv::format_double(s->csi_sinr_db) << ',';
        } else if (const auto* r = std::get_if<RsrpReport>(&e.payload)) {
            out << "rsrp," << csv::format_double(r->ss_rsrp_dbm) << ','
                << csv::format_double(r->csi_rsrp_dbm) << ',';
        } else if (const auto* pc = std::get_if<PciChange>(&e.payload)) {
            out << "pci," << pc->pci << ",,";
        }
        out << '\n';
    }
}

inline void write_trace_csv(const RawTelemetryLog& log, const std::string& path,
                            const std::string& header_comment = "") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifactError("cannot open trace file for writing: " + path);
    write_trace_csv(log, out, header_comment);
    if (!out) throw MissingArtifactError("write failed: " + path);
}

inline RawTelemetryLog read_trace_csv(const std::string& path) {
    csv::Reader reader(path);
    std::vector<std::string_view> f;
    RawTelemetryLog log;
    bool header_seen = false;
    while (reader.next_row(f)) {
        if (!header_seen) {
            if (f.size() < 2 || f[0] != "tick") {
                throw std::invalid_argument("trace csv missing header row: " + path);
            }
            header_seen = true;
            continue;
        }
        if (f.size() != 5) throw std::invalid_argument("trace csv: expected 5 fields");
        LogEntry e;
        e.tick = csv::parse_int(f[0]);
        const std::string_view kind = f[1];
        if (kind == "pdsch") {
            e.payload = PdschStatus{static_cast<int>(csv::parse_int(f[2])),
                                    static_cast<int>(csv::parse_int(f[3])),
                                    csv::parse_int(f[4]) != 0};
        } else if (kind == "csf") {
            e.payload = CsfReport{static_cast<int>(csv::parse_int(f[2]))};
        } else if (kind == "sinr") {
            e.payload = SinrReport{csv::parse_double(f[2]), csv::parse_double(f[3])};
        } else if (kind == "rsrp") {
            e.payload = RsrpReport{csv::parse_double(f[2]), csv::parse_double(f[3])};
        } else if (kind == "pci") {
            e.payload = PciChange{static_cast<int>(csv::parse_int(f[2]))};
        } else {
            throw std::invalid_argument("trace csv: unknown record kind '" + std::string(kind) + "'");
        }
        if (!log.entries.empty() && e.tick < log.entries.back().tick) {
            throw std::invalid_argument("trace csv: timestamps must be non-decreasing");
        }
        log.entries.push_back(e);
    }
    if (!header_seen) throw std::invalid_argument("trace csv missing header row: " + path);
    return log;
}

}  // namespace mcscast
