#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "llmrl/core/error.hpp"

namespace llmrl::eval {

inline constexpr double kTradingDaysPerYear = 252.0;

inline double mean(std::span<const double> x) {
    if (x.empty()) throw ArgumentError("evaluator", "mean of an empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample (n-1) standard deviation.
inline double sample_std(std::span<const double> x) {
    if (x.size() < 2) throw ArgumentError("evaluator", "standard deviation needs at least 2 values");
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

/// Per-period Sharpe ratio mean(R - rf) / std(R). The risk-free rate defaults
/// to zero, the benchmark convention.
inline double sharpe(std::span<const double> returns, double risk_free = 0.0) {
    if (returns.size() < 2) throw ArgumentError("evaluator", "Sharpe ratio needs at least 2 returns");
    for (double r : returns) {
        if (!std::isfinite(r)) throw ArgumentError("evaluator", "non-finite return");
    }
    const double sd = sample_std(returns);
    if (sd == 0.0) throw DegenerateSeriesError("evaluator", "zero-variance return series");
    double excess = 0.0;
    for (double r : returns) excess += r - risk_free;
    return excess / static_cast<double>(returns.size()) / sd;
}

inline double annualize_sharpe(double daily_sr) { return daily_sr * std::sqrt(kTradingDaysPerYear); }

/// Annualized Sharpe, or `fallback` for degenerate (constant) series.
inline double annualized_sharpe_or(std::span<const double> returns, double fallback = 0.0) {
    try {
        return annualize_sharpe(sharpe(returns));
    } catch (const DegenerateSeriesError&) {
        return fallback;
    }
}

/// Largest fractional fall from a running peak to a later value.
inline double max_drawdown(std::span<const double> equity) {
    if (equity.empty()) throw ArgumentError("evaluator", "max drawdown of an empty curve");
    double peak = equity[0];
    double mdd = 0.0;
    for (double v : equity) {
        if (!(v > 0.0)) throw ArgumentError("evaluator", "equity must be positive");
        peak = std::max(peak, v);
        mdd = std::max(mdd, (peak - v) / peak);
    }
    return mdd;
}

/// Plain sum of returns (arithmetic, not compounded).
inline double cumulative_return(std::span<const double> returns) {
    return std::accumulate(returns.begin(), returns.end(), 0.0);
}

/// Simple per-step returns of an equity curve.
inline std::vector<double> simple_returns(std::span<const double> equity) {
    std::vector<double> out;
    for (std::size_t i = 1; i < equity.size(); ++i) out.push_back(equity[i] / equity[i - 1] - 1.0);
    return out;
}

}  // namespace llmrl::eval
