#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "llmrl/data/market_data.hpp"

namespace llmrl::synthetic {

/// Next weekday strictly after `d`.
inline Date next_weekday(Date d) {
    do {
        d += std::chrono::days{1};
    } while (std::chrono::weekday{d} == std::chrono::Saturday || std::chrono::weekday{d} == std::chrono::Sunday);
    return d;
}

/// `n` consecutive weekdays starting on or after `first`.
inline std::vector<Date> weekdays(Date first, std::size_t n) {
    std::vector<Date> out;
    if (n == 0) return out;
    const auto wd = std::chrono::weekday{first};
    Date d = (wd == std::chrono::Saturday || wd == std::chrono::Sunday) ? next_weekday(first) : first;
    out.push_back(d);
    while (out.size() < n) out.push_back(d = next_weekday(d));
    return out;
}

/// Bars from a close path: open = previous close, high/low bracket the two
/// by a fixed fraction, constant volume.
inline BarSeries bars_from_closes(const std::vector<double>& closes, Date first, double volume = 1e6) {
    const auto dates = weekdays(first, closes.size());
    std::vector<Bar> bars;
    bars.reserve(closes.size());
    for (std::size_t i = 0; i < closes.size(); ++i) {
        const double open = i == 0 ? closes[0] : closes[i - 1];
        bars.push_back({dates[i], open, std::max(open, closes[i]) * 1.001, std::min(open, closes[i]) * 0.999,
                        closes[i], volume});
    }
    return BarSeries(std::move(bars));
}

/// Whether the close-to-close move from bar t to t + 1 is an up move.
inline bool regime_is_up(std::size_t t, std::size_t block = 20) { return (t / block) % 2 == 0; }

/// Deterministic regime market: each close moves by +drift or -drift, the
/// sign alternating every `block` moves (the move into bar i belongs to
/// block (i - 1) / block, and block 0 is up).
inline std::vector<double> regime_closes(std::size_t n, double drift = 0.003, std::size_t block = 20,
                                         double first = 100.0) {
    std::vector<double> c;
    if (n == 0) return c;
    c.push_back(first);
    for (std::size_t i = 1; i < n; ++i) c.push_back(c.back() * (regime_is_up(i - 1, block) ? 1 + drift : 1 - drift));
    return c;
}

/// Geometric Gaussian random walk.
inline std::vector<double> random_walk(std::size_t n, std::uint64_t seed, double sigma = 0.01, double first = 100.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, sigma);
    std::vector<double> c;
    if (n == 0) return c;
    c.push_back(first);
    for (std::size_t i = 1; i < n; ++i) c.push_back(c.back() * std::exp(z(rng)));
    return c;
}

}  // namespace llmrl::synthetic
