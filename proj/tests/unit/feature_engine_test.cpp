#include <gtest/gtest.h>

#include <cmath>

#include "llmrl/data/synthetic.hpp"
#include "llmrl/features/indicators.hpp"

using namespace llmrl;
using namespace llmrl::features;

TEST(Sma, HandValues) {
    auto out = sma(std::vector<double>{1, 2, 3, 4, 5}, 3);
    EXPECT_TRUE(is_missing(out[0]));
    EXPECT_TRUE(is_missing(out[1]));
    EXPECT_DOUBLE_EQ(out[2], 2.0);
    EXPECT_DOUBLE_EQ(out[4], 4.0);
}

TEST(Ema, SeededBySma) {
    auto out = ema(std::vector<double>{2, 4, 6, 8}, 3);
    EXPECT_TRUE(is_missing(out[1]));
    EXPECT_DOUBLE_EQ(out[2], 4.0);
    EXPECT_DOUBLE_EQ(out[3], 0.5 * 8 + 0.5 * 4.0);
    // Leading missing values are skipped before seeding.
    auto shifted = ema(std::vector<double>{kMissing, 2, 4, 6, 8}, 3);
    EXPECT_DOUBLE_EQ(shifted[3], 4.0);
    EXPECT_DOUBLE_EQ(shifted[4], 6.0);
}

TEST(Rsi, WilderRecursion) {
    std::vector<double> c{10, 11, 10, 12, 13};
    auto out = rsi(c, 2);
    // Seed over the first two moves: gains (1), losses (1) -> 50.
    EXPECT_TRUE(is_missing(out[1]));
    EXPECT_DOUBLE_EQ(out[2], 50.0);
    // Next: gain 2 -> avg gain (0.5 + 2) / 2 = 1.25, avg loss 0.25.
    EXPECT_NEAR(out[3], 100.0 - 100.0 / (1.0 + 1.25 / 0.25), 1e-12);
    auto up = rsi(std::vector<double>{1, 2, 3, 4}, 2);
    EXPECT_DOUBLE_EQ(up[3], 100.0);
    auto flat = rsi(std::vector<double>{5, 5, 5, 5}, 2);
    EXPECT_DOUBLE_EQ(flat[3], 50.0);
}

TEST(Macd, StrengthIsValueMinusSignal) {
    auto c = synthetic::random_walk(120, 4);
    auto m = macd(c, {});
    auto fast = ema(c, 12), slow = ema(c, 26);
    for (std::size_t t = 0; t < c.size(); ++t) {
        if (t < 25) {
            EXPECT_TRUE(is_missing(m.value[t]));
            continue;
        }
        EXPECT_DOUBLE_EQ(m.value[t], fast[t] - slow[t]);
        if (t < 33) {
            EXPECT_TRUE(is_missing(m.signal[t])) << t;
        } else {
            EXPECT_DOUBLE_EQ(m.strength[t], m.value[t] - m.signal[t]);
        }
    }
}

TEST(Atr, TrueRangeIncludesGaps) {
    std::vector<double> h{10, 12, 11}, l{9, 11, 10}, c{9.5, 11.5, 10.5};
    auto out = atr(h, l, c, 1);
    // Bar 1: max(1, |12 - 9.5|, |11 - 9.5|) = 2.5.
    EXPECT_DOUBLE_EQ(out[1], 2.5);
    EXPECT_DOUBLE_EQ(out[2], 1.5);  // |10 - 11.5|
}

TEST(RollingSlope, LinearSeriesHasExactSlope) {
    std::vector<double> x;
    for (int i = 0; i < 10; ++i) x.push_back(3.0 + 0.5 * i);
    auto s = rolling_slope(x, 5);
    EXPECT_TRUE(is_missing(s[3]));
    for (std::size_t t = 4; t < x.size(); ++t) EXPECT_NEAR(s[t], 0.5, 1e-12);
    x[6] = kMissing;
    auto g = rolling_slope(x, 5);
    EXPECT_TRUE(is_missing(g[8]));
    EXPECT_FALSE(is_missing(g[5]));
}

TEST(RollingZscore, SampleStd) {
    auto z = rolling_zscore(std::vector<double>{1, 2, 3}, 3);
    EXPECT_DOUBLE_EQ(z[2], 1.0);  // (3 - 2) / 1
    auto flat = rolling_zscore(std::vector<double>{4, 4, 4}, 3);
    EXPECT_EQ(flat[2], 0.0);
}

TEST(WeeklyReturns, FiveBarSteps) {
    std::vector<double> c(21);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 100.0 + i;
    auto w = weekly_past_returns(c, 20);
    EXPECT_DOUBLE_EQ(w[0], c[20] / c[15] - 1);
    EXPECT_DOUBLE_EQ(w[3], c[5] / c[0] - 1);
    EXPECT_THROW(weekly_past_returns(c, 19), WindowError);
}

TEST(HistoricalVolatility, ConstantGrowthIsZero) {
    std::vector<double> c;
    for (int i = 0; i < 30; ++i) c.push_back(100.0 * std::pow(1.01, i));
    auto hv = historical_volatility(c, 20);
    EXPECT_TRUE(is_missing(hv[19]));
    EXPECT_NEAR(hv[20], 0.0, 1e-12);
}

TEST(TechnicalIndicators, ColumnsAndWarmup) {
    auto bars = synthetic::bars_from_closes(synthetic::random_walk(260, 8), make_date(2019, 1, 2));
    auto f = technical_indicators(bars);
    for (const char* c : {"20MA", "50MA", "100MA", "200MA", "20MA_Slope", "200MA_Slope", "RSI", "MACD", "Signal_Line",
                          "MACD_Strength", "ATR", "HV_Close", "VWAP", "Weekly_Return_1", "Close", "Volume"}) {
        EXPECT_TRUE(f.has_column(c)) << c;
    }
    EXPECT_TRUE(is_missing(f.at("200MA", 198)));
    EXPECT_FALSE(is_missing(f.at("200MA", 199)));
    EXPECT_DOUBLE_EQ(f.at("20MA", 100), sma(bars.closes(), 20)[100]);
}

TEST(TechnicalIndicators, TooShortIsWindowError) {
    auto bars = synthetic::bars_from_closes(synthetic::random_walk(150, 8), make_date(2019, 1, 2));
    EXPECT_THROW(technical_indicators(bars), WindowError);
    IndicatorConfig cfg;
    cfg.sma_windows = {20};
    EXPECT_NO_THROW(technical_indicators(bars, cfg));
    cfg.rsi_period = 1;
    EXPECT_THROW(technical_indicators(bars, cfg), ArgumentError);
}
