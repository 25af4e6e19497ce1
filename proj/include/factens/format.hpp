#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace factens {

// Shortest round-trip decimal form; identical bytes for identical doubles.
inline std::string fmt_num(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
}

// Fixed-point with `digits` decimals, for human-facing tables.
inline std::string fmt_fixed(double x, int digits) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, digits);
    return std::string(buf, ptr);
}

}  // namespace factens
