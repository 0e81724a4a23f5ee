#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace mcscast::csv {

/// Shortest representation that round-trips exactly.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string format_int(std::int64_t v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw std::invalid_argument("csv: bad double field '" + std::string(s) + "'");
    }
    return v;
}

inline std::int64_t parse_int(std::string_view s) {
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw std::invalid_argument("csv: bad integer field '" + std::string(s) + "'");
    }
    return v;
}

inline void split_fields(std::string_view line, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

/// Line-oriented CSV reader. Lines starting with '#' carry artifact metadata
/// (config fingerprint etc.) and are skipped transparently.
class Reader {
public:
    explicit Reader(const std::string& path) : in_(path) {
        if (!in_) throw std::runtime_error("csv: cannot open " + path);
    }

    /// Returns false at end of file. Field views are valid until the next call.
    bool next_row(std::vector<std::string_view>& fields) {
        while (std::getline(in_, line_)) {
            if (!line_.empty() && line_.back() == '\r') line_.pop_back();
            if (line_.empty() || line_[0] == '#') continue;
            split_fields(line_, fields);
            return true;
        }
        return false;
    }

private:
    std::ifstream in_;
    std::string line_;
};

}  // namespace mcscast::csv
