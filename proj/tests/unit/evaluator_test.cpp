#include <gtest/gtest.h>

#include <cmath>

#include "llmrl/eval/report.hpp"

using namespace llmrl;
using namespace llmrl::eval;

TEST(Metrics, SharpeByHand) {
    std::vector<double> r{0.01, 0.03};
    // mean 0.02, sample std 0.01 * sqrt(2)
    EXPECT_NEAR(sharpe(r), 0.02 / (0.01 * std::sqrt(2.0)), 1e-12);
    EXPECT_NEAR(sharpe(r, 0.01), 0.01 / (0.01 * std::sqrt(2.0)), 1e-12);
    EXPECT_NEAR(annualized_sharpe_or(r), std::sqrt(252.0) * std::sqrt(2.0), 1e-9);
    EXPECT_THROW(sharpe(std::vector<double>{0.01, 0.01}), DegenerateSeriesError);
    EXPECT_EQ(annualized_sharpe_or(std::vector<double>{0.01, 0.01}, -7.0), -7.0);
    EXPECT_THROW(sharpe(std::vector<double>{0.01}), ArgumentError);
    EXPECT_THROW(sharpe(std::vector<double>{0.01, std::nan("")}), ArgumentError);
}

TEST(Metrics, DrawdownAndReturns) {
    EXPECT_DOUBLE_EQ(max_drawdown(std::vector<double>{100, 120, 90, 130, 65}), 0.5);
    EXPECT_EQ(max_drawdown(std::vector<double>{1, 2, 3}), 0.0);
    EXPECT_THROW(max_drawdown(std::vector<double>{1, 0}), ArgumentError);
    auto r = simple_returns(std::vector<double>{100, 110, 99});
    ASSERT_EQ(r.size(), 2u);
    EXPECT_NEAR(r[0], 0.1, 1e-15);
    EXPECT_NEAR(r[1], -0.1, 1e-15);
    EXPECT_NEAR(cumulative_return(r), 0.0, 1e-15);
}

TEST(StudentT, KnownDistributions) {
    // df = 1 is the Cauchy distribution.
    EXPECT_NEAR(stats::student_t_cdf(1.0, 1.0), 0.75, 1e-12);
    EXPECT_NEAR(stats::student_t_cdf(-1.0, 1.0), 0.25, 1e-12);
    // df = 2 has cdf 1/2 + t / (2 sqrt(t^2 + 2)).
    EXPECT_NEAR(stats::student_t_cdf(1.5, 2.0), 0.5 + 1.5 / (2 * std::sqrt(1.5 * 1.5 + 2)), 1e-12);
    EXPECT_DOUBLE_EQ(stats::two_sided_p(0.0, 5.0), 1.0);
}

TEST(Welch, ReferenceFixture) {
    std::vector<double> x{2.5, 3.1, 2.8, 3.6, 2.2, 2.9, 3.3, 2.7, 3.0, 2.6, 3.4, 2.4};
    std::vector<double> y{2.1, 2.4, 2.6, 2.2, 2.9, 2.3, 2.0, 2.5};
    auto r = welch_t_test(x, y);
    EXPECT_NEAR(r.t, 3.122321599602477, 1e-9);
    EXPECT_NEAR(r.p, 0.005899129727842921, 1e-9);
    EXPECT_THROW(welch_t_test(std::vector<double>{1}, y), ArgumentError);
}

TEST(TTest, SmallPairedFixture) {
    auto r = paired_t_test(std::vector<double>{1, 2, 3}, std::vector<double>{1.5, 1.9, 3.7});
    EXPECT_NEAR(r.t, -1.5254255396193797, 1e-9);
    EXPECT_NEAR(r.p, 0.26666666666666655, 1e-9);
    EXPECT_EQ(r.df(), 2u);
    EXPECT_THROW(paired_t_test(std::vector<double>{1, 2}, std::vector<double>{1}), ArgumentError);
    EXPECT_THROW(one_sample_t_test(std::vector<double>{1}, 0.0), ArgumentError);
}

namespace {

std::vector<RunMetrics> runs(std::vector<double> sr, double mdd) {
    std::vector<RunMetrics> out;
    for (double s : sr) out.push_back({s, mdd});
    return out;
}

}  // namespace

TEST(Report, PairedTablesAndMeans) {
    std::vector<InstrumentRuns> in{
        {"AAA", {{"off", runs({0.1, 0.2, 0.4}, 0.3)}, {"tau", runs({0.5, 0.9, 0.7}, 0.2)}}},
        {"BBB", {{"off", runs({1.0, 1.2, 1.1}, 0.1)}, {"tau", runs({1.3, 1.2, 1.6}, 0.1)}}},
    };
    auto rep = build_report(in);
    ASSERT_EQ(rep.instruments.size(), 2u);
    const auto& a = rep.instruments[0];
    EXPECT_NEAR(a.conditions.at("off").sr_mean, 0.7 / 3, 1e-12);
    EXPECT_NEAR(a.conditions.at("off").sr_std, std::sqrt((std::pow(0.1 - 0.7 / 3, 2) + std::pow(0.2 - 0.7 / 3, 2) +
                                                          std::pow(0.4 - 0.7 / 3, 2)) /
                                                         2),
                1e-12);
    ASSERT_EQ(a.tests.size(), 1u);
    auto direct = paired_t_test(std::vector<double>{0.1, 0.2, 0.4}, std::vector<double>{0.5, 0.9, 0.7});
    EXPECT_EQ(a.tests[0].result.t, direct.t);
    EXPECT_EQ(a.tests[0].result.p, direct.p);
    EXPECT_NEAR(rep.condition_means.at("tau").sr_mean, (0.7 + 4.1 / 3) / 2, 1e-12);
    EXPECT_NEAR(rep.condition_means.at("off").mdd_mean, 0.2, 1e-12);
    EXPECT_EQ(rep.condition_means.at("off").runs, 6u);

    auto j = to_json(rep);
    EXPECT_EQ(j["instruments"][0]["tests"][0]["kind"], "paired");
    EXPECT_EQ(j["instruments"][1]["ticker"], "BBB");
    auto text = to_text(rep);
    EXPECT_NE(text.find("Sharpe Ratio"), std::string::npos);
    EXPECT_NE(text.find("Maximum Drawdown"), std::string::npos);
    EXPECT_NE(text.find("0.23 (0.15)"), std::string::npos);
}

TEST(Report, UnpairedUsesWelch) {
    std::vector<InstrumentRuns> in{{"AAA", {{"off", runs({0.1, 0.2, 0.4}, 0.3)}, {"tau", runs({0.5, 0.9}, 0.2)}}}};
    EXPECT_THROW(build_report(in, true), ReportError);
    auto rep = build_report(in, false);
    auto w = welch_t_test(std::vector<double>{0.1, 0.2, 0.4}, std::vector<double>{0.5, 0.9});
    EXPECT_EQ(rep.instruments[0].tests[0].result.t, w.t);
    EXPECT_EQ(to_json(rep)["instruments"][0]["tests"][0]["kind"], "welch");
    in[0].conditions["empty"] = {};
    EXPECT_THROW(build_report(in, false), ReportError);
}
