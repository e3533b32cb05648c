#include <gtest/gtest.h>

#include "llmrl/llm/prompts.hpp"
#include "llmrl/llm/stub_backend.hpp"
#include "llmrl/tuner/prompt_tuner.hpp"
#include "temp_dir.hpp"

using namespace llmrl;
using namespace llmrl::tuner;

namespace {

TuneInputs p4_inputs() {
    return {llm::load_strategist_template(llm::PromptVersion::P4), {"RSI", "MACD"}, {"Prefer trend over noise."}};
}

Backtest schedule(std::vector<double> srs) {
    auto i = std::make_shared<std::size_t>(0);
    return [srs, i](const std::string&) { return srs.at((*i)++); };
}

}  // namespace

TEST(Regret, TargetFloor) {
    EXPECT_DOUBLE_EQ(make_regret_state(0.5).v_star, 0.8);
    EXPECT_DOUBLE_EQ(make_regret_state(1.3).v_star, 1.3);
    EXPECT_THROW(make_regret_state(0.5, 0), ArgumentError);
}

TEST(Regret, ShortfallsAccumulate) {
    // V* = 0.8: shortfalls 0.5, 0.3, 0.2.
    llm::StubBackend writer(1), judge(2);
    auto res = tune(writer, judge, schedule({0.3, 0.5, 0.6}), make_regret_state(0.5, 3), {}, p4_inputs());
    ASSERT_EQ(res.regret_trace.size(), 3u);
    EXPECT_NEAR(res.regret_trace[0], 0.5, 1e-12);
    EXPECT_NEAR(res.regret_trace[1], 0.8, 1e-12);
    EXPECT_NEAR(res.regret_trace[2], 1.0, 1e-12);
    EXPECT_FALSE(res.early_stop);
    EXPECT_EQ(res.kb.size(), 3u);
    EXPECT_DOUBLE_EQ(*res.extremes.best->sr, 0.6);
    EXPECT_DOUBLE_EQ(*res.extremes.worst->sr, 0.3);
    EXPECT_EQ(res.best_prompt, res.extremes.best->prompt);
}

TEST(Regret, StopsOnceTargetBeaten) {
    llm::StubBackend writer(1), judge(2);
    auto res = tune(writer, judge, schedule({0.3, 0.95, 0.1}), make_regret_state(0.5, 5), {}, p4_inputs());
    EXPECT_EQ(res.iterations, 2u);
    EXPECT_TRUE(res.early_stop);
}

TEST(Tune, FailedBacktestIsRecordedNotRanked) {
    llm::StubBackend writer(1), judge(2);
    int calls = 0;
    Backtest bt = [&](const std::string&) -> double {
        if (++calls == 1) throw std::runtime_error("backtest exploded");
        return 0.4;
    };
    auto res = tune(writer, judge, bt, make_regret_state(0.0, 2), {}, p4_inputs());
    ASSERT_EQ(res.kb.size(), 2u);
    EXPECT_FALSE(res.kb.entries()[0].ok());
    EXPECT_EQ(res.kb.entries()[0].failure, "backtest exploded");
    EXPECT_EQ(res.state.history, std::vector<double>{0.4});
    EXPECT_DOUBLE_EQ(*res.extremes.worst->sr, 0.4);
    EXPECT_NEAR(res.regret_trace[0], 0.0, 0.0);  // nothing measured yet
    EXPECT_THROW(tune(writer, judge, Backtest{}, make_regret_state(0.0), {}, p4_inputs()), ArgumentError);
}

TEST(KnowledgeBase, NdjsonRoundTrip) {
    TempDir dir;
    KnowledgeBase kb;
    kb.append({1, "p1", {"RSI"}, {"i"}, 0.7, "ok", ""});
    kb.append({2, "p2", {}, {}, std::nullopt, "", "boom"});
    kb.save(dir.file("kb.ndjson"));
    auto back = KnowledgeBase::load(dir.file("kb.ndjson"));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.entries()[0].sr, 0.7);
    EXPECT_FALSE(back.entries()[1].sr.has_value());
    EXPECT_EQ(back.entries()[1].failure, "boom");
    EXPECT_EQ(back.next_iteration(), 3u);
    EXPECT_THROW(kb.append({2, "", {}, {}, 0.1, "", ""}), ArgumentError);
    EXPECT_THROW(KnowledgeBase::load(dir.write("bad.ndjson", "{\"prompt\": 1}\n")), SchemaError);
}

TEST(SelectFeatures, SeventyFifthPercentile) {
    // Means: RSI 2, MACD 1, ATR 2, VWAP 3 -> cut 2 + 0.25 * (3 - 2) = 2.25.
    auto out = select_features({{"RSI", 3}, {"RSI", 1}, {"MACD", 1}, {"ATR", 2}, {"VWAP", 3}});
    EXPECT_EQ(out, std::vector<std::string>{"VWAP"});
    // Ties at the cut are kept, in first-seen order.
    EXPECT_EQ(select_features({{"B", 2}, {"A", 2}}), (std::vector<std::string>{"B", "A"}));
    EXPECT_THROW(select_features({}), ArgumentError);
    EXPECT_THROW(select_features({{"X", 4}}), ArgumentError);
}

TEST(Distill, GreedyMaxMinJaccard) {
    // Unique after normalization: A {buy,the,dip}, B {sell,the,rally}, C {buy,the,rally}.
    // d(B,A) = 0.8, d(C,A) = 0.5, then d(C,B) = 0.5.
    std::vector<std::string> r{"buy the dip", "Buy  the dip!", "sell the rally", "buy the rally"};
    EXPECT_EQ(distill_instructions(r, 2), (std::vector<std::string>{"buy the dip", "sell the rally"}));
    EXPECT_EQ(distill_instructions(r).size(), 3u);
    // Same token set, different order: a duplicate at distance 0.
    EXPECT_EQ(distill_instructions({"up trend", "trend up"}).size(), 1u);
    EXPECT_EQ(normalize_text("RSI, above 70.5!"), "rsi above 70.5");
    EXPECT_THROW(distill_instructions({}), ArgumentError);
}

TEST(TuningWindows, DisjointAndSeeded) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto w = sample_tuning_windows(1500, 5, 252, seed);
        ASSERT_EQ(w.size(), 5u);
        for (std::size_t i = 0; i < w.size(); ++i) {
            EXPECT_EQ(w[i].end - w[i].begin, 252u);
            EXPECT_LE(w[i].end, 1500u);
            if (i > 0) {
                EXPECT_LE(w[i - 1].end, w[i].begin);
            }
        }
    }
    auto a = sample_tuning_windows(1500, 5, 252, 9), b = sample_tuning_windows(1500, 5, 252, 9);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].begin, b[i].begin);
    auto tight = sample_tuning_windows(1260, 5, 252, 3);
    EXPECT_EQ(tight[4].begin, 1008u);
    EXPECT_THROW(sample_tuning_windows(1259, 5, 252), SamplingError);
}
