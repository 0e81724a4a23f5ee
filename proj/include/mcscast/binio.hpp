#pragma once

#include <istream>
#include <ostream>

namespace mcscast::detail {

// Artifact files are always little-endian; these helpers assume a
// little-endian host, which covers every supported target.
template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
}

}  // namespace mcscast::detail
