#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "llmrl/core/error.hpp"

namespace llmrl {

/// Trading date, timezone-naive.
using Date = std::chrono::sys_days;

/// Missing values are quiet NaNs throughout FeatureFrame columns and
/// indicator outputs.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double x) noexcept { return std::isnan(x); }

inline Date make_date(int y, unsigned m, unsigned d) {
    return Date{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}};
}

/// Parses YYYY-MM-DD (an optional trailing time part after 'T' or ' ' is ignored).
inline Date parse_date(std::string_view text) {
    auto fail = [&] {
        return DataError("data_ingest", "invalid ISO-8601 date '" + std::string(text) + "'");
    };
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') throw fail();
    int y = 0;
    unsigned m = 0, d = 0;
    auto parse_num = [&](std::string_view s, auto& out) {
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        if (ec != std::errc{} || p != s.data() + s.size()) throw fail();
    };
    parse_num(text.substr(0, 4), y);
    parse_num(text.substr(5, 2), m);
    parse_num(text.substr(8, 2), d);
    if (text.size() > 10 && text[10] != 'T' && text[10] != ' ') throw fail();
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw fail();
    return Date{ymd};
}

inline std::string format_date(Date date) {
    std::chrono::year_month_day ymd{date};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

/// Shortest round-trip decimal representation; "NA" for missing.
inline std::string format_double(double x) {
    if (is_missing(x)) return "NA";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

inline double parse_double(std::string_view text, const char* module = "data_ingest") {
    if (text == "NA" || text == "N/A" || text == "nan" || text.empty()) return kMissing;
    double out = 0.0;
    const char* first = text.data();
    if (!text.empty() && text.front() == '+') ++first;
    auto [p, ec] = std::from_chars(first, text.data() + text.size(), out);
    if (ec != std::errc{} || p != text.data() + text.size()) {
        throw DataError(module, "cannot parse number '" + std::string(text) + "'");
    }
    return out;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace llmrl
