#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gantts {

// Error type for anything a caller could plausibly want to catch: bad shapes,
// malformed files, invalid configs.  Internal logic bugs use assert-style
// checks that also throw (so tests can exercise them), but with a marker.
class error : public std::runtime_error {
public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

inline void check(bool ok, const std::string& msg) {
    if (!ok) throw error(msg);
}

using i64 = std::int64_t;
using u64 = std::uint64_t;
using u32 = std::uint32_t;

}  // namespace gantts
