#include <gtest/gtest.h>

#include <sstream>

#include "llmrl/data/ingest.hpp"
#include "llmrl/data/synthetic.hpp"
#include "temp_dir.hpp"

using namespace llmrl;

TEST(Dates, ParseAndFormatRoundTrip) {
    EXPECT_EQ(parse_date("2020-02-29"), make_date(2020, 2, 29));
    EXPECT_EQ(parse_date("2020-02-29T16:00:00Z"), make_date(2020, 2, 29));
    EXPECT_EQ(format_date(make_date(2019, 1, 2)), "2019-01-02");
    EXPECT_THROW(parse_date("2019-02-29"), DataError);
    EXPECT_THROW(parse_date("2019/01/02"), DataError);
    EXPECT_THROW(parse_date("20190102"), DataError);
}

TEST(Numbers, MissingMarkersParseAsNaN) {
    EXPECT_TRUE(is_missing(parse_double("NA")));
    EXPECT_TRUE(is_missing(parse_double("")));
    EXPECT_DOUBLE_EQ(parse_double("+1.5"), 1.5);
    EXPECT_THROW(parse_double("1.5x"), DataError);
    EXPECT_EQ(format_double(kMissing), "NA");
    EXPECT_EQ(parse_double(format_double(0.1 + 0.2)), 0.1 + 0.2);
}

TEST(Csv, QuotedFieldsRoundTrip) {
    std::ostringstream out;
    csv::write_row(out, {"a", "b,c", "say \"hi\""});
    EXPECT_EQ(out.str(), "a,\"b,c\",\"say \"\"hi\"\"\"\n");
    EXPECT_EQ(csv::split_line("a,\"b,c\",\"say \"\"hi\"\"\""),
              (std::vector<std::string>{"a", "b,c", "say \"hi\""}));
}

TEST(Csv, RaggedRowIsDataError) {
    std::istringstream in("x,y\n1,2\n3\n");
    EXPECT_THROW(csv::parse(in, "mem"), DataError);
    std::istringstream empty("");
    EXPECT_THROW(csv::parse(empty, "mem"), SchemaError);
}

TEST(LoadOhlcv, CsvSortsAndIgnoresExtraColumns) {
    TempDir dir;
    auto path = dir.write("bars.csv",
                          "Date,Open,High,Low,Close,Volume,Adj\n"
                          "2020-01-03,10,11,9,10.5,100,0\n"
                          "2020-01-02,9,10,8.5,9.5,200,0\n");
    auto bars = load_ohlcv(path);
    ASSERT_EQ(bars.size(), 2u);
    EXPECT_EQ(bars[0].date, make_date(2020, 1, 2));
    EXPECT_DOUBLE_EQ(bars[1].close, 10.5);
    EXPECT_DOUBLE_EQ(bars[0].volume, 200);
}

TEST(LoadOhlcv, JsonMatchesCsv) {
    TempDir dir;
    auto csv_path = dir.write("b.csv", "date,open,high,low,close,volume\n2020-01-02,9,10,8.5,9.5,200\n");
    auto json_path = dir.write(
        "b.json", R"([{"date":"2020-01-02","open":9,"high":10,"low":8.5,"close":9.5,"volume":200}])");
    EXPECT_EQ(load_ohlcv(csv_path), load_ohlcv(json_path));
}

TEST(LoadOhlcv, Rejections) {
    TempDir dir;
    EXPECT_THROW(load_ohlcv(dir.write("a.csv", "date,open,high,low,close\n2020-01-02,1,1,1,1\n")), SchemaError);
    EXPECT_THROW(load_ohlcv(dir.write("b.csv",
                                      "date,open,high,low,close,volume\n"
                                      "2020-01-02,1,1,1,1,1\n2020-01-02,1,1,1,1,1\n")),
                 DataError);
    // high below close
    EXPECT_THROW(load_ohlcv(dir.write("c.csv", "date,open,high,low,close,volume\n2020-01-02,1,1,1,2,1\n")),
                 DataError);
    EXPECT_THROW(load_ohlcv(dir.write("d.csv", "date,open,high,low,close,volume\n2020-01-02,0,1,0,1,1\n")),
                 DataError);
    EXPECT_THROW(load_ohlcv(dir.file("missing.csv")), DataError);
    EXPECT_THROW(load_ohlcv(dir.write("e.json", R"([{"date":"2020-01-02","open":1}])")), SchemaError);
}

TEST(LoadOhlcv, SaveLoadRoundTrip) {
    TempDir dir;
    auto bars = synthetic::bars_from_closes(synthetic::random_walk(50, 3), make_date(2021, 3, 1));
    save_ohlcv_csv(bars, dir.file("x.csv"));
    EXPECT_EQ(load_ohlcv(dir.file("x.csv")), bars);
}

TEST(FrameCsv, RoundTripKeepsMissing) {
    TempDir dir;
    FeatureFrame f({make_date(2020, 1, 2), make_date(2020, 1, 3)});
    f.add_column("a", {1.25, kMissing});
    f.add_column("b,c", {0.1, 3.0});
    save_frame_csv(f, dir.file("f.csv"));
    EXPECT_EQ(load_frame_csv(dir.file("f.csv")), f);
}

TEST(Macro, CsvAndJsonForms) {
    TempDir dir;
    auto a = load_macro_series(dir.write("gdp.csv", "date,GDP_QoQ\n2020-04-01,0.5\n2020-01-01,0.3\n"));
    EXPECT_EQ(a.name, "GDP_QoQ");
    ASSERT_EQ(a.observations.size(), 2u);
    EXPECT_EQ(a.observations[0].first, make_date(2020, 1, 1));
    auto b = load_macro_series(dir.write(
        "pmi.json", R"({"name":"PMI","frequency":"monthly","observations":[{"date":"2020-01-31","value":50.1}]})"));
    EXPECT_EQ(b.name, "PMI");
    EXPECT_EQ(b.frequency, Frequency::monthly);
    EXPECT_THROW(load_macro_series(dir.write("bad.csv", "date,a,b\n")), SchemaError);
    EXPECT_THROW(load_macro_series(dir.write("dup.csv", "date,x\n2020-01-01,1\n2020-01-01,2\n")), DataError);
}

TEST(News, SortedByDate) {
    TempDir dir;
    auto news = load_news(dir.write("n.json", R"([{"date":"2020-02-01","headline":"b"},
                                                  {"date":"2020-01-01","headline":"a","body":"x"}])"));
    ASSERT_EQ(news.size(), 2u);
    EXPECT_EQ(news[0].headline, "a");
    EXPECT_EQ(news[1].body, "");
    EXPECT_THROW(load_news(dir.write("m.json", R"([{"headline":"no date"}])")), SchemaError);
}

namespace {

FeatureFrame daily(std::vector<Date> idx, std::string name, std::vector<double> v) {
    FeatureFrame f(std::move(idx));
    f.add_column(std::move(name), std::move(v));
    return f;
}

}  // namespace

TEST(Align, InnerKeepsIntersection) {
    auto a = daily({make_date(2020, 1, 1), make_date(2020, 1, 2), make_date(2020, 1, 3)}, "a", {1, 2, 3});
    auto b = daily({make_date(2020, 1, 2), make_date(2020, 1, 3), make_date(2020, 1, 4)}, "b", {20, 30, 40});
    auto out = align_by_timestamp({a, b}, AlignPolicy::inner);
    ASSERT_EQ(out.rows(), 2u);
    EXPECT_EQ(out.column("a"), (std::vector<double>{2, 3}));
    EXPECT_EQ(out.column("b"), (std::vector<double>{20, 30}));
    auto c = daily({make_date(2021, 1, 1)}, "c", {1});
    EXPECT_THROW(align_by_timestamp({a, c}, AlignPolicy::inner), AlignmentError);
}

TEST(Align, ForwardFillCarriesLowFrequencyOnly) {
    auto px = daily({make_date(2020, 1, 30), make_date(2020, 1, 31), make_date(2020, 2, 3), make_date(2020, 4, 2)},
                    "px", {1, 2, 3, 4});
    auto gap = daily({make_date(2020, 1, 30), make_date(2020, 2, 3)}, "gap", {10, 30});
    FeatureFrame q({make_date(2020, 1, 31), make_date(2020, 4, 1)}, Frequency::quarterly);
    q.add_column("gdp", {0.5, 0.7});
    auto out = align_by_timestamp({px, gap, q}, AlignPolicy::forward_fill);
    ASSERT_EQ(out.rows(), 4u);
    const auto& g = out.column("gdp");
    EXPECT_TRUE(is_missing(g[0]));  // before the first observation
    EXPECT_EQ(g[1], 0.5);
    EXPECT_EQ(g[2], 0.5);
    EXPECT_EQ(g[3], 0.7);
    // Daily frames are not filled.
    EXPECT_TRUE(is_missing(out.column("gap")[1]));
    EXPECT_TRUE(is_missing(out.column("gap")[3]));
}

TEST(Align, DuplicateColumnIsAlignmentError) {
    auto a = daily({make_date(2020, 1, 1)}, "x", {1});
    EXPECT_THROW(align_by_timestamp({a, a}, AlignPolicy::forward_fill), AlignmentError);
}

TEST(PctChange, LagAndZeroDenominator) {
    std::vector<std::size_t> flagged;
    auto out = pct_change_period(std::vector<double>{100, 110, 0, 121, 5}, 1, &flagged);
    EXPECT_TRUE(is_missing(out[0]));
    EXPECT_NEAR(out[1], 0.1, 1e-15);
    EXPECT_DOUBLE_EQ(out[2], -1.0);
    EXPECT_TRUE(is_missing(out[3]));
    EXPECT_EQ(flagged, (std::vector<std::size_t>{3}));
    auto q = pct_change_period(std::vector<double>{2, 3, 4, 5, 6}, 4);
    EXPECT_DOUBLE_EQ(q[4], 2.0);
    EXPECT_THROW(pct_change_period(std::vector<double>{1, 2}, 2), ArgumentError);
    EXPECT_THROW(pct_change_period(std::vector<double>{1, 2}, 0), ArgumentError);
}

TEST(Frame, SliceAndMerge) {
    auto f = daily({make_date(2020, 1, 1), make_date(2020, 1, 2), make_date(2020, 1, 3)}, "a", {1, 2, 3});
    auto s = f.slice(1, 3);
    EXPECT_EQ(s.index().front(), make_date(2020, 1, 2));
    EXPECT_EQ(s.column("a"), (std::vector<double>{2, 3}));
    auto g = daily(f.index(), "b", {4, 5, 6});
    f.merge(g);
    EXPECT_TRUE(f.has_column("b"));
    EXPECT_THROW(f.merge(s), AlignmentError);
    EXPECT_THROW(f.add_column("c", {1}), SchemaError);
    EXPECT_THROW(FeatureFrame({make_date(2020, 1, 2), make_date(2020, 1, 1)}), DataError);
}

TEST(Synthetic, RegimeClosesAlternate) {
    auto c = synthetic::regime_closes(61);
    for (std::size_t i = 1; i < c.size(); ++i) {
        EXPECT_EQ(c[i] > c[i - 1], synthetic::regime_is_up(i - 1)) << i;
    }
    auto d = synthetic::weekdays(make_date(2021, 1, 2), 3);  // a Saturday
    EXPECT_EQ(d[0], make_date(2021, 1, 4));
    EXPECT_EQ(d[2], make_date(2021, 1, 6));
}
