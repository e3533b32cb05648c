#include <gtest/gtest.h>

#include <sstream>

#include "llmrl/data/synthetic.hpp"
#include "llmrl/env/trading_env.hpp"

using namespace llmrl;
using namespace llmrl::env;

namespace {

const Date kFirst = make_date(2021, 1, 4);  // a Monday

FeatureFrame frame(const std::vector<double>& closes) {
    return to_frame(synthetic::bars_from_closes(closes, kFirst));
}

EpisodeConfig small_config() {
    EpisodeConfig c;
    c.start = synthetic::weekdays(kFirst, 2)[1];
    c.end = make_date(2030, 1, 1);
    c.initial_cash = 10'000.0;
    c.cost_rate = 0.001;
    c.leverage_cap = 1.0;
    c.window = 2;
    return c;
}

}  // namespace

TEST(TradingEnv, HandComputedEpisode) {
    TradingEnv env(frame({100, 100, 100, 110, 99}), small_config());
    env.reset();
    EXPECT_EQ(env.steps_per_episode(), 3u);

    // LONG at 100: floor(10000 / 100.1) = 99 shares, cost 9.9.
    auto r = env.step(kLong);
    EXPECT_EQ(env.shares(), 99);
    EXPECT_NEAR(env.cash(), 90.1, 1e-9);
    EXPECT_NEAR(r.info.equity_after, 9990.1, 1e-9);
    EXPECT_NEAR(r.reward, 9990.1 / 10000.0 - 1.0, 1e-12);
    EXPECT_NEAR(r.info.costs, 9.9, 1e-12);
    EXPECT_FALSE(r.done);

    // SHORT at 100: sell 99, then short floor(9980.2 / 100.1) = 99. Price jumps
    // to 110, so the short is 10890 against equity 8980.3 and 18 shares are
    // covered: ceil((10890 - 8980.3) / (110 * 0.999)) = ceil(17.38).
    r = env.step(kShort);
    ASSERT_EQ(r.info.fills.size(), 3u);
    EXPECT_EQ(r.info.fills[0].delta_shares, -99);
    EXPECT_EQ(r.info.fills[1].delta_shares, -99);
    EXPECT_EQ(r.info.fills[2].delta_shares, 18);
    EXPECT_TRUE(r.info.fills[2].forced);
    EXPECT_EQ(r.info.shares_held, -99);
    EXPECT_EQ(env.shares(), -81);
    EXPECT_NEAR(env.cash(), 17888.32, 1e-8);
    EXPECT_NEAR(r.info.equity_after, 8978.32, 1e-8);
    EXPECT_LE(81 * 110.0, r.info.equity_after);
    EXPECT_NEAR(r.reward, 8978.32 / 9990.1 - 1.0, 1e-12);  // against equity before trading

    // LONG at 110: cover 81, buy floor(8969.41 / 110.11) = 81.
    r = env.step(kLong);
    EXPECT_EQ(env.shares(), 81);
    EXPECT_NEAR(env.cash(), 50.5, 1e-8);
    EXPECT_NEAR(r.info.equity_after, 50.5 + 81 * 99.0, 1e-8);
    EXPECT_TRUE(r.done);

    auto curve = env.equity_curve();
    ASSERT_EQ(curve.size(), 4u);
    EXPECT_EQ(curve[0], 10'000.0);
    EXPECT_EQ(curve[3], r.info.equity_after);
    EXPECT_THROW(env.step(kLong), ProtocolError);
}

TEST(TradingEnv, HoldingSameSideDoesNotTrade) {
    TradingEnv env(frame({100, 100, 101, 102, 103}), small_config());
    env.reset();
    env.step(kLong);
    auto r = env.step(kLong);
    EXPECT_TRUE(r.info.fills.empty());
    EXPECT_EQ(r.info.costs, 0.0);
    EXPECT_NEAR(r.reward, (env.cash() + 99 * 102.0) / (env.cash() + 99 * 101.0) - 1.0, 1e-12);
}

TEST(TradingEnv, LogRewardAndObservation) {
    auto cfg = small_config();
    cfg.reward = RewardKind::log;
    cfg.cost_rate = 0.0;
    TradingEnv env(frame({100, 100, 125, 125, 125}), cfg);
    auto obs = env.reset();
    ASSERT_EQ(obs.values.size(), env.observation_size());
    EXPECT_EQ(obs.values.size(), 5u * 2 + 2);
    EXPECT_EQ(obs.values[10], 0.0);  // flat position
    auto r = env.step(kLong);
    EXPECT_NEAR(r.reward, std::log(r.info.equity_after / 10'000.0), 1e-12);
    // Closes normalized to the first bar of the window: 100 -> 125.
    EXPECT_NEAR(r.observation.values[5 + 3], 0.25, 1e-12);
    EXPECT_EQ(r.observation.values[10], 1.0);
}

TEST(TradingEnv, Bankruptcy) {
    auto cfg = small_config();
    cfg.leverage_cap = 3.0;
    cfg.cost_rate = 0.0;
    TradingEnv env(frame({100, 100, 60, 60, 60}), cfg);
    env.reset();
    auto r = env.step(kLong);
    EXPECT_TRUE(r.info.bankrupt);
    EXPECT_TRUE(r.done);
    EXPECT_EQ(r.reward, -1.0);
}

TEST(TradingEnv, ProtocolAndConfigErrors) {
    TradingEnv env(frame({100, 100, 101}), small_config());
    EXPECT_THROW(env.step(kLong), ProtocolError);
    env.reset();
    EXPECT_THROW(env.step(2), ArgumentError);
    auto bad = small_config();
    bad.leverage_cap = 0;
    EXPECT_THROW(TradingEnv(frame({100, 100, 101}), bad), ArgumentError);
    bad = small_config();
    bad.window = 5;  // start has one bar of history
    EXPECT_THROW(TradingEnv(frame({100, 100, 101}), bad), DataError);
    bad = small_config();
    bad.start = make_date(2031, 1, 1);
    EXPECT_THROW(TradingEnv(frame({100, 100, 101}), bad), DataError);
}

TEST(TradingEnv, SignalScheduleHoldsPerBlock) {
    auto cfg = small_config();
    cfg.signal_mode = SignalMode::tau;
    cfg.signal_block = 2;
    const auto d = synthetic::weekdays(kFirst, 6);
    TradingEnv env(frame({100, 101, 102, 103, 104, 105}), cfg);
    EXPECT_THROW(env.reset(), ScheduleError);
    std::vector<SignalFeature> s{make_signal_feature(d[1], Direction::long_, 3, 0.0),
                                 make_signal_feature(d[3], Direction::short_, 2, 0.5)};
    env.attach_signals(s);
    EXPECT_EQ(env.signal_at(1), s[0].tau);
    EXPECT_EQ(env.signal_at(2), s[0].tau);
    EXPECT_EQ(env.signal_at(3), s[1].tau);
    EXPECT_EQ(env.signal_at(5), s[1].tau);
    EXPECT_EQ(env.reset().values.back(), s[0].tau);

    // Off the block grid.
    std::vector<SignalFeature> off{make_signal_feature(d[1], Direction::long_, 3, 0.0),
                                   make_signal_feature(d[2], Direction::long_, 3, 0.0)};
    EXPECT_THROW(env.attach_signals(off), ScheduleError);
    // Nothing covers the start.
    std::vector<SignalFeature> late{make_signal_feature(d[3], Direction::long_, 3, 0.0)};
    EXPECT_THROW(env.attach_signals(late), ScheduleError);
    // A signal from before the episode carries in.
    std::vector<SignalFeature> early{make_signal_feature(d[0], Direction::short_, 1, 0.0)};
    env.attach_signals(early);
    EXPECT_EQ(env.signal_at(4), early[0].tau);

    // Signals never reach the observation with the slot disabled.
    cfg.signal_mode = SignalMode::off;
    TradingEnv plain(frame({100, 101, 102, 103, 104, 105}), cfg);
    plain.attach_signals(s);
    EXPECT_EQ(plain.reset().values.back(), 0.0);
}

TEST(TradingEnv, TraceCsv) {
    TradingEnv env(frame({100, 100, 100, 110, 99}), small_config());
    env.reset();
    while (!env.done()) env.step(kShort);
    std::ostringstream out;
    write_trace_csv(env.trace(), out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "date,action,price,shares,cash,equity,tau,reward");
    std::getline(in, line);
    EXPECT_EQ(line.rfind("2021-01-05,SHORT,100,-99,", 0), 0u) << line;
}
