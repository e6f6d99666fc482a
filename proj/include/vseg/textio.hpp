#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

#include "vseg/errors.hpp"

namespace vseg {

// shortest round-trip decimal form (exact read-back); exponents drop their
// leading zero so config-style values print verbatim (1e-4, not 1e-04)
inline std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    std::string s(buf, p);
    const auto e = s.find('e');
    if (e != std::string::npos) {
        std::size_t z = e + 1;
        if (z < s.size() && (s[z] == '-' || s[z] == '+')) ++z;
        std::size_t nz = z;
        while (nz + 1 < s.size() && s[nz] == '0') ++nz;
        s.erase(z, nz - z);
    }
    return s;
}

inline double parse_double(std::string_view s, const std::string& what) {
    double v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ParseError(what + ": bad number '" + std::string(s) + "'");
    return v;
}

inline std::int64_t parse_int(std::string_view s, const std::string& what) {
    std::int64_t v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ParseError(what + ": bad integer '" + std::string(s) + "'");
    return v;
}

} // namespace vseg
