#include <gtest/gtest.h>

#include <cstdlib>

#include "llmrl/pipeline/commands.hpp"
#include "temp_dir.hpp"

using namespace llmrl;
using namespace llmrl::pipeline;

TEST(Config, DefaultsOverridesAndTypes) {
    Config c;
    EXPECT_EQ(c.str("prompt.version"), "P4");
    EXPECT_EQ(c.str("llm.api_key_env"), "LLMRL_API_KEY");
    c.set_from_text("train.runs=3");
    EXPECT_EQ(c.count("train.runs"), 3u);
    c.set_from_text("instrument.ticker=123");  // string key keeps the text
    EXPECT_EQ(c.str("instrument.ticker"), "123");
    c.set_from_text("train.hidden=[4,4]");
    EXPECT_EQ(c.get("train.hidden").size(), 2u);
    EXPECT_THROW(c.set_from_text("train.runs=many"), ConfigError);
    EXPECT_THROW(c.set_from_text("train.runs=-1"), ConfigError);
    EXPECT_THROW(c.set_from_text("no.such.key=1"), ConfigError);
    EXPECT_THROW(c.set_from_text("novalue"), ConfigError);
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, DigestIgnoresWorkerCount) {
    Config a, b;
    b.set("train.workers", 8);
    EXPECT_EQ(a.digest(), b.digest());
    b.set("train.runs", 3);
    EXPECT_NE(a.digest(), b.digest());
}

TEST(Config, CrossKeyValidation) {
    auto invalid = [](const char* key, nlohmann::json v) {
        Config c;
        c.set(key, v);
        EXPECT_THROW(c.validate(), Error) << key;
    };
    invalid("dates.train_end", "2019-01-01");  // overlaps the out-of-sample range
    invalid("signal.mode", "sometimes");
    invalid("llm.backend", "carrier-pigeon");
    invalid("llm.backend", "replay");  // no transcript given
    invalid("tune.hitl_ratio", 1.5);
    invalid("prompt.version", "P9");
}

TEST(Config, LoadsFileAndManifest) {
    TempDir dir;
    auto c = Config::load(dir.write("c.json", R"({"train.runs": 2})"));
    EXPECT_EQ(c.count("train.runs"), 2u);
    auto m = Config::load(dir.write("m.json", R"({"manifest_version": 1, "config": {"train.runs": 5}})"));
    EXPECT_EQ(m.count("train.runs"), 5u);
    EXPECT_THROW(Config::load(dir.write("bad.json", "[1]")), ConfigError);
    EXPECT_THROW(Config::load(dir.file("missing.json")), ConfigError);
}

TEST(BlockAnchors, EveryBlockFromStart) {
    std::vector<Date> idx;
    for (int i = 0; i < 10; ++i) idx.push_back(make_date(2020, 1, 1) + std::chrono::days(i));
    EXPECT_EQ(block_anchors(idx, make_date(2020, 1, 3), make_date(2020, 1, 9), 3),
              (std::vector<std::size_t>{2, 5, 8}));
    EXPECT_TRUE(block_anchors(idx, make_date(2021, 1, 1), make_date(2021, 2, 1), 3).empty());
    EXPECT_THROW(block_anchors(idx, idx[0], idx[9], 0), ArgumentError);
}

// ---------------------------------------------------------------- CLI runs

namespace {

int cli(const std::string& args, const std::filesystem::path& log) {
    const std::string cmd = std::string(LLMRL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
    TempDir dir;
    const auto log = dir.file("log.txt");
    EXPECT_EQ(cli("--help", log), 0);
    EXPECT_EQ(cli("no-such-command", log), 2);
    EXPECT_EQ(cli("train --runs many", log), 2);
    EXPECT_EQ(cli("features -w " + dir.path().string(), log), 1);  // nothing ingested yet
    EXPECT_NE(slurp(log).find("error:"), std::string::npos);
    EXPECT_EQ(cli("train -w " + dir.path().string() + " -s no.such=1", log), 1);
    EXPECT_NE(slurp(log).find("unknown config key"), std::string::npos);
}

TEST(Cli, EndToEndWithStubBackend) {
    TempDir dir;
    const auto ws = dir.path().string();
    const auto log = dir.file("log.txt");
    dir.write("config.json", R"({"instrument.ticker": "ACME",
        "dates.train_start": "2013-01-01", "dates.train_end": "2013-12-31",
        "dates.oos_start": "2014-01-01", "dates.oos_end": "2014-06-30",
        "train.runs": 2, "train.episodes": 1, "train.hidden": [8], "train.batch_size": 16,
        "train.buffer_capacity": 2000, "env.window": 10})");
    const std::string common = " -w " + ws + " -c " + dir.file("config.json");
    auto run = [&](const std::string& args) {
        const int code = cli(args + common, log);
        EXPECT_EQ(code, 0) << args << "\n" << slurp(log);
        return code == 0;
    };
    ASSERT_EQ(cli("synth --bars 700 --seed 4 --first 2012-01-02 -o " + dir.file("data/ohlcv.csv"), log), 0);
    ASSERT_TRUE(run("ingest"));
    ASSERT_TRUE(run("features"));
    ASSERT_TRUE(run("generate"));
    const auto art = dir.path() / "artifacts";
    const auto signals = slurp(art / "generate/P4/signals.csv");
    const auto strategies = slurp(art / "generate/P4/strategies.jsonl");
    ASSERT_TRUE(run("generate"));
    EXPECT_EQ(slurp(art / "generate/P4/signals.csv"), signals);
    EXPECT_EQ(slurp(art / "generate/P4/strategies.jsonl"), strategies);

    ASSERT_TRUE(run("train --tau off"));
    ASSERT_TRUE(run("train --tau tau --workers 2"));
    EXPECT_TRUE(std::filesystem::exists(art / "train/tau/checkpoint_001.json"));
    ASSERT_TRUE(run("evaluate"));
    const auto metrics = nlohmann::json::parse(slurp(art / "evaluate/metrics.json"));
    const auto& inst = metrics["instruments"][0];
    EXPECT_EQ(inst["ticker"], "ACME");
    EXPECT_EQ(inst["conditions"]["off"]["runs"], 2);
    ASSERT_EQ(inst["tests"].size(), 1u);
    EXPECT_EQ(inst["tests"][0]["pair"], (nlohmann::json{"off", "tau"}));
    EXPECT_EQ(inst["tests"][0]["kind"], "paired");

    ASSERT_TRUE(run("report"));
    const auto report = slurp(art / "report/report.txt");
    EXPECT_NE(report.find("Token usage"), std::string::npos);
    EXPECT_NE(report.find("ACME / P4"), std::string::npos);

    ASSERT_TRUE(run("backtest --tau tau --run 1"));
    ASSERT_TRUE(run("plotdata --tau tau --run 1"));
    const auto plot = slurp(art / "plotdata/tau/plot.csv");
    EXPECT_EQ(plot.substr(0, plot.find('\n')), "date,close,20MA,50MA,action,tau,strength");
    const auto rows = std::count(plot.begin(), plot.end(), '\n') - 1;
    const auto trace = slurp(art / "backtest/tau/trace.csv");
    EXPECT_EQ(rows, std::count(trace.begin(), trace.end(), '\n') - 1);
    EXPECT_EQ(plot.find(",NA,"), std::string::npos);

    const auto manifest = nlohmann::json::parse(slurp(art / "train/tau/manifest.json"));
    EXPECT_EQ(manifest["config"]["train.workers"], 2);
}
