#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "llmrl/data/ingest.hpp"
#include "llmrl/data/synthetic.hpp"
#include "llmrl/pipeline/commands.hpp"

namespace {

namespace pl = llmrl::pipeline;

struct CommonOptions {
    std::string config;
    std::string workspace = ".";
    std::vector<std::string> overrides;
    // Shorthand flags; each maps onto one config key.
    std::string tau, prompt_version, backend, set, sets, mode, output_dir, prompt_file;
    long long workers = -1, runs = -1, seed = -1, run = -1;
    bool unpaired = false, pause = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("-c,--config", o.config, "JSON config (flat dotted keys) or a manifest to rerun");
    cmd->add_option("-w,--workspace", o.workspace, "root that relative paths resolve against");
    cmd->add_option("-s,--set", o.overrides, "override a config key: key=value")->take_all();
    cmd->add_option("--output-dir", o.output_dir, "artifact directory (output_dir)");
}

pl::Config resolve_config(const CommonOptions& o) {
    pl::Config cfg = o.config.empty() ? pl::Config{} : pl::Config::load(o.config);
    for (const auto& s : o.overrides) cfg.set_from_text(s);
    auto put = [&](const char* key, const std::string& v) {
        if (!v.empty()) cfg.set(key, v);
    };
    put("signal.mode", o.tau);
    put("prompt.version", o.prompt_version);
    put("prompt.file", o.prompt_file);
    put("llm.backend", o.backend);
    put("train.set", o.set);
    put("backtest.mode", o.mode);
    put("output_dir", o.output_dir);
    if (!o.sets.empty()) {
        nlohmann::json list = nlohmann::json::array();
        std::string item;
        for (char c : o.sets + ",") {
            if (c == ',') {
                if (!item.empty()) list.push_back(item);
                item.clear();
            } else {
                item += c;
            }
        }
        cfg.set("evaluate.sets", list);
    }
    if (o.workers >= 0) cfg.set("train.workers", o.workers);
    if (o.runs >= 0) cfg.set("train.runs", o.runs);
    if (o.seed >= 0) cfg.set("train.seed", o.seed);
    if (o.run >= 0) cfg.set("backtest.run", o.run);
    if (o.unpaired) cfg.set("evaluate.paired", false);
    if (o.pause) cfg.set("tune.pause", true);
    cfg.validate();
    return cfg;
}

void pause_for_edit(std::size_t repeat, const std::filesystem::path& checkpoint) {
    std::cerr << "tune: repeat " << repeat << " done. Edit " << checkpoint.string()
              << " if needed, then press Enter to continue." << std::endl;
    std::string line;
    std::getline(std::cin, line);
}

int run_synth(const std::string& out, const std::string& kind, std::size_t bars, std::uint64_t seed,
              const std::string& first) {
    std::vector<double> closes = kind == "regime" ? llmrl::synthetic::regime_closes(bars)
                                                  : llmrl::synthetic::random_walk(bars, seed);
    auto series = llmrl::synthetic::bars_from_closes(closes, llmrl::parse_date(first));
    std::filesystem::path p(out);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    llmrl::save_ohlcv_csv(series, out);
    std::cout << "synth: wrote " << series.size() << " bars to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM-guided DDQN trading pipeline"};
    app.require_subcommand(1);
    CommonOptions o;

    std::map<std::string, CLI::App*> subs;
    const std::vector<std::pair<std::string, std::string>> descriptions{
        {"ingest", "load OHLCV, macro series and news into the workspace"},
        {"features", "compute the technical feature frame"},
        {"label", "hindsight LONG/SHORT labels for tuning exemplars"},
        {"tune", "writer-judge prompt tuning over sampled windows"},
        {"generate", "monthly strategies and signal features from the LLM"},
        {"train", "seeded DDQN runs for one signal mode"},
        {"backtest", "trace one trained policy (or the LLM direction) out of sample"},
        {"evaluate", "SR/MDD tables and t-tests across run sets"},
        {"report", "evaluation tables plus token usage and tuning summary"},
        {"plotdata", "per-bar CSV for price/MA/action/guidance overlays"}};
    for (const auto& [name, desc] : descriptions) {
        auto* cmd = app.add_subcommand(name, desc);
        add_common(cmd, o);
        subs[name] = cmd;
    }
    subs["generate"]->add_option("--prompt-version", o.prompt_version, "P0..P4");
    subs["generate"]->add_option("--prompt-file", o.prompt_file, "tuned prompt template to use instead");
    subs["generate"]->add_option("--backend", o.backend, "stub, http or replay");
    subs["tune"]->add_option("--prompt-version", o.prompt_version, "starting template P0..P4");
    subs["tune"]->add_option("--backend", o.backend, "stub, http or replay");
    subs["tune"]->add_flag("--pause", o.pause, "stop for manual prompt edits between repeats");
    for (const char* name : {"train", "backtest", "plotdata"}) {
        subs[name]->add_option("--tau", o.tau, "signal mode: off, dir_only, conf_dir or tau");
        subs[name]->add_option("--name", o.set, "run set name (default: the signal mode)");
        subs[name]->add_option("--prompt-version", o.prompt_version, "which generated signals to use");
    }
    subs["train"]->add_option("--workers", o.workers, "worker threads for seeded runs");
    subs["train"]->add_option("--runs", o.runs, "number of seeded runs");
    subs["train"]->add_option("--seed", o.seed, "base seed (run i uses seed + i)");
    for (const char* name : {"backtest", "plotdata"}) {
        subs[name]->add_option("--run", o.run, "run index of the checkpoint");
        subs[name]->add_option("--mode", o.mode, "rl (trained policy) or llm (trade the LLM direction)");
    }
    for (const char* name : {"evaluate", "report"}) {
        subs[name]->add_option("--sets", o.sets, "comma-separated run sets (default: all)");
        subs[name]->add_flag("--unpaired", o.unpaired, "Welch test instead of the paired test");
    }

    std::string synth_out = "data/ohlcv.csv", synth_kind = "random", synth_first = "2011-01-03";
    std::size_t synth_bars = 2600;
    std::uint64_t synth_seed = 0;
    auto* synth = app.add_subcommand("synth", "write a synthetic OHLCV file for offline runs");
    synth->add_option("-o,--out", synth_out, "output CSV path");
    synth->add_option("--kind", synth_kind, "random or regime")->check(CLI::IsMember({"random", "regime"}));
    synth->add_option("--bars", synth_bars, "number of daily bars");
    synth->add_option("--seed", synth_seed, "random-walk seed");
    synth->add_option("--first", synth_first, "first date (YYYY-MM-DD)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return run_synth(synth_out, synth_kind, synth_bars, synth_seed, synth_first);
        for (const auto& [name, cmd] : subs) {
            if (!cmd->parsed()) continue;
            pl::Config cfg = resolve_config(o);
            pl::Context ctx{cfg, pl::Workspace(o.workspace, cfg), std::cout, {}};
            if (cfg.flag("tune.pause")) ctx.pause = pause_for_edit;
            pl::commands().at(name)(ctx);
            return 0;
        }
    } catch (const llmrl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: [cli] " << e.what() << "\n";
        return 1;
    }
    return 1;
}
