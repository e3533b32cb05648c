#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "llmrl/data/market_data.hpp"

namespace llmrl::features {

struct MacdConfig {
    int fast = 12;
    int slow = 26;
    int signal = 9;
};

struct IndicatorConfig {
    std::vector<int> sma_windows{20, 50, 100, 200};
    int rsi_period = 14;
    MacdConfig macd{};
    int atr_period = 14;
    int rolling_window = 20;
    int slope_lookback = 5;

    void validate() const {
        auto check = [](int v, const char* what) {
            if (v < 2) throw ArgumentError("feature_engine", std::string(what) + " must be >= 2");
        };
        for (int w : sma_windows) check(w, "SMA window");
        check(rsi_period, "RSI period");
        check(macd.fast, "MACD fast period");
        check(macd.slow, "MACD slow period");
        check(macd.signal, "MACD signal period");
        check(atr_period, "ATR period");
        check(rolling_window, "rolling window");
        check(slope_lookback, "slope lookback");
    }
};

inline constexpr double kTradingDays = 252.0;

/// Simple moving average; the first window-1 entries are missing.
inline std::vector<double> sma(std::span<const double> x, int window) {
    std::vector<double> out(x.size(), kMissing);
    const auto n = static_cast<std::size_t>(window);
    for (std::size_t t = n - 1; t < x.size(); ++t) {
        double s = 0.0;
        for (std::size_t i = t + 1 - n; i <= t; ++i) s += x[i];
        out[t] = s / window;
    }
    return out;
}

/// EMA seeded with the SMA of the first `period` defined values. Missing inputs
/// before the first defined value are skipped; output is missing until seeded.
inline std::vector<double> ema(std::span<const double> x, int period) {
    std::vector<double> out(x.size(), kMissing);
    std::size_t first = 0;
    while (first < x.size() && is_missing(x[first])) ++first;
    const auto n = static_cast<std::size_t>(period);
    if (first + n > x.size()) return out;
    double seed = 0.0;
    for (std::size_t i = first; i < first + n; ++i) seed += x[i];
    double value = seed / period;
    out[first + n - 1] = value;
    const double alpha = 2.0 / (period + 1.0);
    for (std::size_t t = first + n; t < x.size(); ++t) {
        value = alpha * x[t] + (1.0 - alpha) * value;
        out[t] = value;
    }
    return out;
}

/// Wilder RSI. Zero average gain and loss gives 50; zero loss with gains gives 100.
inline std::vector<double> rsi(std::span<const double> closes, int period) {
    std::vector<double> out(closes.size(), kMissing);
    const auto n = static_cast<std::size_t>(period);
    if (closes.size() <= n) return out;
    double gain = 0.0, loss = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        double d = closes[i] - closes[i - 1];
        (d > 0 ? gain : loss) += std::abs(d);
    }
    gain /= period;
    loss /= period;
    auto value = [](double g, double l) {
        if (l == 0.0) return g == 0.0 ? 50.0 : 100.0;
        return 100.0 - 100.0 / (1.0 + g / l);
    };
    out[n] = value(gain, loss);
    for (std::size_t t = n + 1; t < closes.size(); ++t) {
        double d = closes[t] - closes[t - 1];
        gain = (gain * (period - 1) + std::max(d, 0.0)) / period;
        loss = (loss * (period - 1) + std::max(-d, 0.0)) / period;
        out[t] = value(gain, loss);
    }
    return out;
}

struct MacdSeries {
    std::vector<double> value;
    std::vector<double> signal;
    std::vector<double> strength;  // value - signal
};

inline MacdSeries macd(std::span<const double> closes, const MacdConfig& cfg) {
    auto fast = ema(closes, cfg.fast);
    auto slow = ema(closes, cfg.slow);
    MacdSeries m;
    m.value.assign(closes.size(), kMissing);
    for (std::size_t t = 0; t < closes.size(); ++t) {
        if (!is_missing(fast[t]) && !is_missing(slow[t])) m.value[t] = fast[t] - slow[t];
    }
    m.signal = ema(m.value, cfg.signal);
    m.strength.assign(closes.size(), kMissing);
    for (std::size_t t = 0; t < closes.size(); ++t) {
        if (!is_missing(m.signal[t])) m.strength[t] = m.value[t] - m.signal[t];
    }
    return m;
}

/// Wilder ATR over true ranges starting at index 1.
inline std::vector<double> atr(std::span<const double> high, std::span<const double> low,
                               std::span<const double> close, int period) {
    std::vector<double> out(close.size(), kMissing);
    const auto n = static_cast<std::size_t>(period);
    if (close.size() <= n) return out;
    auto tr = [&](std::size_t t) {
        return std::max({high[t] - low[t], std::abs(high[t] - close[t - 1]), std::abs(low[t] - close[t - 1])});
    };
    double value = 0.0;
    for (std::size_t t = 1; t <= n; ++t) value += tr(t);
    value /= period;
    out[n] = value;
    for (std::size_t t = n + 1; t < close.size(); ++t) {
        value = (value * (period - 1) + tr(t)) / period;
        out[t] = value;
    }
    return out;
}

/// Least-squares slope of the last `lookback` values against their step index.
inline std::vector<double> rolling_slope(std::span<const double> x, int lookback) {
    if (lookback < 2) throw ArgumentError("feature_engine", "slope lookback must be >= 2");
    const auto n = static_cast<std::size_t>(lookback);
    std::vector<double> out(x.size(), kMissing);
    const double xbar = (lookback - 1) / 2.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) sxx += (i - xbar) * (i - xbar);
    for (std::size_t t = n - 1; t < x.size(); ++t) {
        double ybar = 0.0;
        bool ok = true;
        for (std::size_t i = 0; i < n; ++i) {
            double y = x[t + 1 - n + i];
            if (is_missing(y)) {
                ok = false;
                break;
            }
            ybar += y;
        }
        if (!ok) continue;
        ybar /= lookback;
        double sxy = 0.0;
        for (std::size_t i = 0; i < n; ++i) sxy += (i - xbar) * (x[t + 1 - n + i] - ybar);
        out[t] = sxy / sxx;
    }
    return out;
}

/// (x[t] - mean) / std over the trailing window, sample std; zero std gives 0.
inline std::vector<double> rolling_zscore(std::span<const double> x, int window) {
    if (window < 2) throw ArgumentError("feature_engine", "z-score window must be >= 2");
    const auto n = static_cast<std::size_t>(window);
    std::vector<double> out(x.size(), kMissing);
    for (std::size_t t = n - 1; t < x.size(); ++t) {
        auto w = x.subspan(t + 1 - n, n);
        if (std::any_of(w.begin(), w.end(), [](double v) { return is_missing(v); })) continue;
        double mean = std::accumulate(w.begin(), w.end(), 0.0) / window;
        double ss = 0.0;
        for (double v : w) ss += (v - mean) * (v - mean);
        double sd = std::sqrt(ss / (window - 1));
        out[t] = sd == 0.0 ? 0.0 : (x[t] - mean) / sd;
    }
    return out;
}

/// Returns over the past four 5-bar weeks: k-th = close[t-5(k-1)] / close[t-5k] - 1.
inline std::array<double, 4> weekly_past_returns(std::span<const double> closes, std::size_t t) {
    if (t < 20 || t >= closes.size()) {
        throw WindowError("feature_engine", "weekly past returns need 20 bars of history before index " +
                                                std::to_string(t));
    }
    std::array<double, 4> out{};
    for (std::size_t k = 1; k <= 4; ++k) out[k - 1] = closes[t - 5 * (k - 1)] / closes[t - 5 * k] - 1.0;
    return out;
}

/// Annualized standard deviation (sample) of log returns over the trailing window.
/// First defined at index `window`.
inline std::vector<double> historical_volatility(std::span<const double> closes, int window = 20) {
    if (window < 2) throw ArgumentError("feature_engine", "volatility window must be >= 2");
    for (double c : closes) {
        if (!(c > 0)) throw DataError("feature_engine", "historical volatility needs positive closes");
    }
    std::vector<double> lr(closes.size(), kMissing);
    for (std::size_t t = 1; t < closes.size(); ++t) lr[t] = std::log(closes[t] / closes[t - 1]);
    const auto n = static_cast<std::size_t>(window);
    std::vector<double> out(closes.size(), kMissing);
    for (std::size_t t = n; t < closes.size(); ++t) {
        double mean = 0.0;
        for (std::size_t i = t + 1 - n; i <= t; ++i) mean += lr[i];
        mean /= window;
        double ss = 0.0;
        for (std::size_t i = t + 1 - n; i <= t; ++i) ss += (lr[i] - mean) * (lr[i] - mean);
        out[t] = std::sqrt(ss / (window - 1)) * std::sqrt(kTradingDays);
    }
    return out;
}

/// Rolling volume-weighted typical price; the daily stand-in for VWAP.
inline std::vector<double> vwap_proxy(const BarSeries& bars, int window) {
    const auto n = static_cast<std::size_t>(window);
    std::vector<double> out(bars.size(), kMissing);
    for (std::size_t t = n - 1; t < bars.size(); ++t) {
        double pv = 0.0, v = 0.0;
        for (std::size_t i = t + 1 - n; i <= t; ++i) {
            const auto& b = bars[i];
            pv += (b.high + b.low + b.close) / 3.0 * b.volume;
            v += b.volume;
        }
        out[t] = v > 0 ? pv / v : kMissing;
    }
    return out;
}

inline std::string sma_column(int window) { return std::to_string(window) + "MA"; }

/// Full technical feature set. Column names match the strategist prompt
/// placeholders ("20MA", "20MA_Slope", "RSI", "MACD", "Signal_Line",
/// "MACD_Strength", "ATR", "HV_Close", ...). Warm-up prefixes are missing.
inline FeatureFrame technical_indicators(const BarSeries& bars, const IndicatorConfig& cfg = {}) {
    cfg.validate();
    struct Need {
        std::string name;
        std::size_t bars;
    };
    std::vector<Need> needs;
    for (int w : cfg.sma_windows) needs.push_back({"SMA(" + std::to_string(w) + ")", static_cast<std::size_t>(w)});
    needs.push_back({"RSI(" + std::to_string(cfg.rsi_period) + ")", static_cast<std::size_t>(cfg.rsi_period) + 1});
    needs.push_back({"MACD(" + std::to_string(cfg.macd.fast) + "," + std::to_string(cfg.macd.slow) + "," +
                         std::to_string(cfg.macd.signal) + ")",
                     static_cast<std::size_t>(std::max(cfg.macd.fast, cfg.macd.slow) + cfg.macd.signal - 1)});
    needs.push_back({"ATR(" + std::to_string(cfg.atr_period) + ")", static_cast<std::size_t>(cfg.atr_period) + 1});
    needs.push_back({"HV(" + std::to_string(cfg.rolling_window) + ")",
                     static_cast<std::size_t>(cfg.rolling_window) + 1});
    auto worst = std::max_element(needs.begin(), needs.end(), [](const Need& a, const Need& b) { return a.bars < b.bars; });
    if (bars.size() <= worst->bars) {
        throw WindowError("feature_engine", worst->name + " needs more than " + std::to_string(worst->bars) +
                                                " bars, got " + std::to_string(bars.size()));
    }

    const auto close = bars.closes();
    const auto high = bars.highs();
    const auto low = bars.lows();
    FeatureFrame f(bars.dates());
    f.add_column("Close", close);
    f.add_column("Volume", bars.volumes());

    auto with_slope_z = [&](const std::string& name, std::vector<double> values) {
        f.add_column(name + "_Slope", rolling_slope(values, cfg.slope_lookback));
        f.add_column(name + "_Z", rolling_zscore(values, cfg.rolling_window));
        f.add_column(name, std::move(values));
    };
    for (int w : cfg.sma_windows) with_slope_z(sma_column(w), sma(close, w));
    f.add_column("Close_Slope", rolling_slope(close, cfg.slope_lookback));
    f.add_column("Close_Z", rolling_zscore(close, cfg.rolling_window));

    with_slope_z("RSI", rsi(close, cfg.rsi_period));
    auto m = macd(close, cfg.macd);
    with_slope_z("MACD", std::move(m.value));
    f.add_column("Signal_Line", std::move(m.signal));
    f.add_column("MACD_Strength", std::move(m.strength));
    with_slope_z("ATR", atr(high, low, close, cfg.atr_period));
    f.add_column("HV_Close", historical_volatility(close, cfg.rolling_window));
    f.add_column("VWAP", vwap_proxy(bars, cfg.rolling_window));

    std::array<std::vector<double>, 4> weekly;
    for (auto& w : weekly) w.assign(bars.size(), kMissing);
    for (std::size_t t = 20; t < bars.size(); ++t) {
        auto r = weekly_past_returns(close, t);
        for (std::size_t k = 0; k < 4; ++k) weekly[k][t] = r[k];
    }
    for (std::size_t k = 0; k < 4; ++k) f.add_column("Weekly_Return_" + std::to_string(k + 1), std::move(weekly[k]));
    return f;
}

}  // namespace llmrl::features
