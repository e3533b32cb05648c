#pragma once

#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrl/data/ingest.hpp"
#include "llmrl/eval/report.hpp"
#include "llmrl/features/indicators.hpp"
#include "llmrl/labeler/expert_labels.hpp"
#include "llmrl/llm/http_backend.hpp"
#include "llmrl/llm/stub_backend.hpp"
#include "llmrl/pipeline/artifacts.hpp"
#include "llmrl/pipeline/generation.hpp"
#include "llmrl/rl/trainer.hpp"
#include "llmrl/tuner/prompt_tuner.hpp"

namespace llmrl::pipeline {

/// Called between tuning repeats with the repeat index and the path of the
/// prompt checkpoint; the file may be edited before it returns.
using PauseHook = std::function<void(std::size_t repeat, const fs::path& checkpoint)>;

struct Context {
    Config cfg;
    Workspace ws;
    std::ostream& log;
    PauseHook pause;
};

// ----------------------------------------------------------------- helpers

inline std::shared_ptr<llm::CompletionBackend> make_backend(const Context& ctx) {
    const auto kind = ctx.cfg.str("llm.backend");
    if (kind == "stub") return std::make_shared<llm::StubBackend>(ctx.cfg.get("llm.seed").get<std::uint64_t>());
    if (kind == "replay") return std::make_shared<llm::ReplayBackend>(ctx.ws.resolve(ctx.cfg.str("llm.replay")).string());
    llm::HttpConfig h;
    h.url = ctx.cfg.str("llm.url");
    h.model = ctx.cfg.str("llm.model");
    h.api_key_env = ctx.cfg.str("llm.api_key_env");
    h.max_retries = ctx.cfg.get("llm.max_retries").get<int>();
    return std::make_shared<llm::HttpBackend>(h);
}

inline llm::GatewayConfig gateway_config(const Context& ctx, const fs::path& transcript) {
    llm::GatewayConfig g;
    g.max_in_flight = std::max<std::size_t>(1, ctx.cfg.count("llm.max_in_flight"));
    g.requests_per_second = ctx.cfg.num("llm.requests_per_second");
    if (ctx.cfg.flag("llm.transcripts")) {
        std::error_code ec;
        fs::remove(transcript, ec);
        g.transcript_path = transcript.string();
    }
    return g;
}

inline std::string template_dir(const Context& ctx) {
    const auto d = ctx.cfg.str("prompt.template_dir");
    return d.empty() ? llm::default_template_dir() : ctx.ws.resolve(d).string();
}

/// The strategist template in use: a tuned prompt file when configured,
/// otherwise the built-in template of the configured version.
inline std::string strategist_template(const Context& ctx) {
    const auto file = ctx.cfg.str("prompt.file");
    if (!file.empty()) return llm::read_text_file(ctx.ws.resolve(file));
    return llm::load_strategist_template(llm::parse_prompt_version(ctx.cfg.str("prompt.version")), template_dir(ctx));
}

inline std::string generation_name(const Config& cfg) {
    const auto n = cfg.str("generate.name");
    if (!n.empty()) return n;
    return cfg.str("prompt.file").empty() ? cfg.str("prompt.version") : "custom";
}

inline std::string prompt_label(const Config& cfg) {
    return cfg.str("prompt.file").empty() ? cfg.str("prompt.version") : "custom";
}

inline std::string set_name(const Config& cfg) {
    const auto n = cfg.str("train.set");
    return n.empty() ? cfg.str("signal.mode") : n;
}

inline std::map<std::string, std::string> entity_map(const Config& cfg) {
    std::map<std::string, std::string> m;
    m[cfg.str("instrument.ticker")] = "the Company";
    for (const auto& a : cfg.get("instrument.aliases")) m[a.get<std::string>()] = "the Company";
    return m;
}

inline llm::StrategistInputs strategist_inputs(const Config& cfg) {
    llm::StrategistInputs in;
    in.persona = cfg.str("prompt.persona");
    in.portfolio_objectives = cfg.str("prompt.objectives");
    if (!cfg.get("instrument.classification").is_null()) in.classification = cfg.str("instrument.classification");
    const auto& beta = cfg.get("instrument.beta");
    if (beta.is_number()) in.beta = beta.get<double>();
    else if (beta.is_string()) in.beta = parse_double(beta.get<std::string>(), kModule);
    return in;
}

inline FeatureFrame load_market(const Context& ctx) {
    return to_frame(load_ohlcv(ctx.ws.require("ingest", "bars.csv", "ingest").string()));
}

inline FeatureFrame load_features(const Context& ctx) {
    return load_frame_csv(ctx.ws.require("features", "features.csv", "features").string());
}

inline std::vector<NewsArticle> load_ingested_news(const Context& ctx) {
    const auto p = ctx.ws.artifact_dir("ingest") / "news.json";
    if (!fs::exists(p)) return {};
    return load_news(p.string());
}

inline fs::path signals_path(const Context& ctx) {
    const auto src = ctx.cfg.str("signal.source");
    if (!src.empty()) return ctx.ws.resolve(src);
    return ctx.ws.require("generate/" + generation_name(ctx.cfg), "signals.csv", "generate");
}

/// Digest tying checkpoints to everything that shaped them.
inline std::string train_digest(const Config& cfg, const rl::TrainConfig& tcfg, const std::string& mode,
                                const std::string& signals_digest) {
    nlohmann::json extra;
    for (const auto& [k, v] : cfg.values().items()) {
        if (k.rfind("env.", 0) == 0 || k.rfind("dates.", 0) == 0 || k == "signal.block") extra[k] = v;
    }
    extra["mode"] = mode;
    extra["signals"] = signals_digest;
    return rl::config_digest(tcfg, extra.dump());
}

inline std::string run_file(const char* stem, std::size_t run) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03zu.json", stem, run);
    return buf;
}

// ---------------------------------------------------------------- commands

inline void cmd_ingest(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto dir = ctx.ws.make_dir("ingest");
    Manifest m{"ingest"};
    const auto ohlcv = ctx.ws.resolve(cfg.str("data.ohlcv"));
    auto bars = load_ohlcv(ohlcv.string());
    save_ohlcv_csv(bars, (dir / "bars.csv").string());
    m.inputs.push_back(ohlcv);
    m.outputs.push_back("bars.csv");

    nlohmann::json macro = nlohmann::json::array();
    for (const auto& entry : cfg.get("data.macro")) {
        std::string path, name;
        Frequency freq = Frequency::quarterly;
        if (entry.is_string()) {
            path = entry.get<std::string>();
        } else if (entry.is_object() && entry.contains("path")) {
            path = entry["path"].get<std::string>();
            name = entry.value("name", "");
            if (entry.contains("frequency")) freq = parse_frequency(entry["frequency"].get<std::string>());
        } else {
            throw ConfigError(kModule, "data.macro entries must be paths or {path, name, frequency}");
        }
        const auto p = ctx.ws.resolve(path);
        auto s = load_macro_series(p.string(), name, freq);
        nlohmann::json obs = nlohmann::json::array();
        for (const auto& [d, v] : s.observations) obs.push_back({{"date", format_date(d)}, {"value", v}});
        macro.push_back({{"name", s.name}, {"frequency", to_string(s.frequency)}, {"observations", obs}});
        m.inputs.push_back(p);
    }
    write_json(dir / "macro.json", macro);
    m.outputs.push_back("macro.json");

    if (!cfg.str("data.news").empty()) {
        const auto p = ctx.ws.resolve(cfg.str("data.news"));
        const auto entities = entity_map(cfg);
        nlohmann::json out = nlohmann::json::array();
        for (const auto& a : anonymize_articles(load_news(p.string()), entities)) {
            out.push_back({{"date", format_date(a.date)}, {"headline", a.headline}, {"body", a.body}});
        }
        write_json(dir / "news.json", out);
        m.inputs.push_back(p);
        m.outputs.push_back("news.json");
    }
    write_manifest(dir, m, cfg, ctx.ws);
    ctx.log << "ingest: " << bars.size() << " bars, " << macro.size() << " macro series\n";
}

inline void cmd_features(const Context& ctx) {
    const auto bars_path = ctx.ws.require("ingest", "bars.csv", "ingest");
    const auto macro_path = ctx.ws.require("ingest", "macro.json", "ingest");
    auto bars = load_ohlcv(bars_path.string());
    const auto icfg = indicator_config(ctx.cfg);
    auto frame = features::technical_indicators(bars, icfg);

    std::vector<FeatureFrame> frames{frame};
    std::vector<std::string> daily;
    for (const auto& s : read_json(macro_path)) {
        MacroSeries ms;
        ms.name = s.at("name").get<std::string>();
        // Carried forward as of each bar, whatever the native frequency.
        ms.frequency = Frequency::monthly;
        if (s.at("frequency").get<std::string>() == "daily") daily.push_back(ms.name);
        for (const auto& o : s.at("observations")) {
            ms.observations.emplace_back(parse_date(o.at("date").get<std::string>()), o.at("value").get<double>());
        }
        frames.push_back(ms.to_frame());
    }
    FeatureFrame out = frames.size() == 1 ? frame : align_by_timestamp(frames, AlignPolicy::forward_fill);
    for (const auto& name : daily) out.add_column(name + "_Slope", features::rolling_slope(out.column(name), icfg.slope_lookback));

    const auto dir = ctx.ws.make_dir("features");
    save_frame_csv(out, (dir / "features.csv").string());
    Manifest m{"features"};
    m.inputs = {bars_path, macro_path};
    m.outputs = {"features.csv"};
    write_manifest(dir, m, ctx.cfg, ctx.ws);
    ctx.log << "features: " << out.rows() << " rows x " << out.columns().size() << " columns\n";
}

inline void cmd_label(const Context& ctx) {
    const auto src = ctx.ws.require("features", "features.csv", "features");
    auto frame = load_frame_csv(src.string());
    const auto labels = hindsight::label_series(frame.column("Close"), frame.index());
    const auto dir = ctx.ws.make_dir("labels");
    std::ostringstream csv;
    hindsight::write_labels_csv(labels, csv);
    write_file_bytes(dir / "labels.csv", csv.str());
    Manifest m{"label"};
    m.inputs = {src};
    m.outputs = {"labels.csv"};
    write_manifest(dir, m, ctx.cfg, ctx.ws);
    ctx.log << "label: " << labels.size() << " labels\n";
}

inline void cmd_generate(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto frame = load_features(ctx);
    const auto name = generation_name(cfg);
    const auto dir = ctx.ws.make_dir("generate/" + name);
    const std::size_t block = cfg.count("signal.block");

    GenerationRequest req;
    req.strategist_template = strategist_template(ctx);
    req.inputs = strategist_inputs(cfg);
    req.news = load_ingested_news(ctx);
    if (!req.news.empty()) req.analyst_template = llm::load_analyst_template(template_dir(ctx));
    req.instrument = cfg.str("instrument.ticker");
    req.prompt_version = prompt_label(cfg);
    req.anchors = block_anchors(frame.index(), cfg.date("dates.train_start"), cfg.date("dates.train_end"), block);
    const auto oos = block_anchors(frame.index(), cfg.date("dates.oos_start"), cfg.date("dates.oos_end"), block);
    req.anchors.insert(req.anchors.end(), oos.begin(), oos.end());
    if (req.anchors.empty()) throw DataError(kModule, "no trading bars inside the configured date ranges");

    llm::Gateway gateway(make_backend(ctx), gateway_config(ctx, dir / "transcripts.jsonl"));
    const auto strategies = generate_strategies(gateway, frame, req);

    std::ostringstream lines, signals;
    for (const auto& g : strategies) lines << to_json(g).dump() << '\n';
    write_file_bytes(dir / "strategies.jsonl", lines.str());
    const auto sig = signals_of(strategies);
    write_signals_csv(sig, signals);
    write_file_bytes(dir / "signals.csv", signals.str());
    write_json(dir / "usage.json", gateway.ledger().to_json());

    Manifest m{"generate"};
    m.inputs = {ctx.ws.artifact_dir("features") / "features.csv"};
    if (!req.news.empty()) m.inputs.push_back(ctx.ws.artifact_dir("ingest") / "news.json");
    if (!cfg.str("prompt.file").empty()) m.inputs.push_back(ctx.ws.resolve(cfg.str("prompt.file")));
    m.outputs = {"strategies.jsonl", "signals.csv", "usage.json"};
    if (cfg.flag("llm.transcripts")) m.outputs.push_back("transcripts.jsonl");
    const auto params = req.params;
    m.seeds = {{"backend", cfg.get("llm.seed")}, {"generation", params.seed.value_or(0)}};
    m.extra = {{"backend", gateway.backend().name()},
               {"prompt", prompt_label(cfg)},
               {"template_digest", hex64(fnv1a64(req.strategist_template))},
               {"strategies", strategies.size()}};
    write_manifest(dir, m, cfg, ctx.ws);
    const auto total = gateway.ledger().grand_total();
    ctx.log << "generate: " << strategies.size() << " strategies (" << name << "), " << total.total() << " tokens\n";
}

/// Writer-judge tuning over sampled windows before the out-of-sample range.
/// Each window is one repeat; the best prompt of a repeat seeds the next.
inline void cmd_tune(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto features_frame = load_features(ctx);
    const auto market = load_market(ctx);
    const auto labels_path = ctx.ws.require("labels", "labels.csv", "label");
    const auto labels = hindsight::read_labels_csv(labels_path.string());
    std::vector<hindsight::TradeLabel> hitl;
    if (!cfg.str("tune.hitl_labels").empty()) hitl = hindsight::read_labels_csv(ctx.ws.resolve(cfg.str("tune.hitl_labels")).string());
    const auto dir = ctx.ws.make_dir("tune");
    const auto& index = market.index();
    const std::size_t block = cfg.count("signal.block");

    // Windows come from bars strictly before the out-of-sample start; bar 0
    // is held back as the environment's one warm-up bar.
    const auto oos_first = static_cast<std::size_t>(
        std::lower_bound(index.begin(), index.end(), cfg.date("dates.oos_start")) - index.begin());
    if (oos_first < 2) throw SamplingError(kModule, "no bars before the out-of-sample range");
    auto windows = tuner::sample_tuning_windows(oos_first - 1, cfg.count("tune.windows"), cfg.count("tune.window_length"),
                                                cfg.get("tune.seed").get<std::uint64_t>());
    for (auto& w : windows) {
        ++w.begin;
        ++w.end;
    }

    llm::Gateway gateway(make_backend(ctx), gateway_config(ctx, dir / "transcripts.jsonl"));
    const std::string instrument = cfg.str("instrument.ticker");
    GatewayBackend writer(gateway, instrument, "tuner-writer"), judge(gateway, instrument, "tuner-judge");
    const auto base_inputs = strategist_inputs(cfg);
    const auto news = load_ingested_news(ctx);
    const auto analyst = news.empty() ? std::string{} : llm::load_analyst_template(template_dir(ctx));

    auto backtest_on = [&](const tuner::IndexRange& w, const std::string& prompt) {
        GenerationRequest req;
        req.strategist_template = prompt;
        req.analyst_template = analyst;
        req.inputs = base_inputs;
        req.news = news;
        req.instrument = instrument;
        req.prompt_version = "tuner-backtest";
        req.anchors = block_anchors(index, index[w.begin], index[w.end - 1], block);
        const auto sig = signals_of(generate_strategies(gateway, features_frame, req));
        auto ecfg = episode_config(cfg, index[w.begin], index[w.end - 1], SignalMode::dir_only);
        ecfg.window = 2;
        return annualized_sharpe_of(direction_backtest(market, sig, ecfg));
    };

    std::string prompt = strategist_template(ctx);
    tuner::KnowledgeBase kb;
    nlohmann::json repeats = nlohmann::json::array();
    const std::size_t n_exemplars = cfg.count("tune.exemplars");
    const double hitl_ratio = cfg.num("tune.hitl_ratio");
    for (std::size_t r = 0; r < windows.size(); ++r) {
        const auto& w = windows[r];
        const double baseline = backtest_on(w, prompt);
        auto state = tuner::make_regret_state(baseline, cfg.count("tune.t_max"));

        // Writer-trainer stage: exemplars from the window's labels.
        auto in_window = [&](const std::vector<hindsight::TradeLabel>& pool) {
            std::vector<hindsight::TradeLabel> out;
            for (const auto& l : pool) {
                if (l.date >= index[w.begin] && l.date <= index[w.end - 1]) out.push_back(l);
            }
            return out;
        };
        auto heuristic = in_window(labels), human = in_window(hitl);
        const std::size_t want_human = std::min(human.size(), static_cast<std::size_t>(hitl_ratio * n_exemplars + 0.5));
        std::vector<hindsight::TradeLabel> exemplars(human.begin(), human.begin() + want_human);
        const std::size_t want_heur = std::min(heuristic.size(), n_exemplars - want_human);
        for (std::size_t i = 0; i < want_heur; ++i) exemplars.push_back(heuristic[i * heuristic.size() / std::max<std::size_t>(1, want_heur)]);

        std::vector<std::pair<std::string, int>> rankings;
        std::vector<std::string> rationales;
        for (const auto& ex : exemplars) {
            auto row = features_frame.find(ex.date);
            if (!row) continue;
            std::string p = llm::render_strategist_prompt(prompt, features_frame, *row, base_inputs);
            p += "\nExpert_Trade_Exemplar:\n  action: " + std::string(hindsight::to_string(ex.action)) +
                 "\nTask: explain which features support the expert action and rank their importance.\n";
            auto res = gateway.complete(p, llm::tuning_params(), instrument, "tuner-trainer");
            try {
                const auto s = parse_strategy(res.text, ex.date);
                for (const auto& f : s.features_used) rankings.emplace_back(f.feature, f.weight);
                rationales.push_back(s.explanation);
            } catch (const ValidationError& e) {
                ctx.log << "tune: exemplar " << format_date(ex.date) << " skipped: " << e.message() << "\n";
            }
        }
        tuner::TuneInputs tin;
        tin.base_prompt = prompt;
        if (!rankings.empty()) tin.features = tuner::select_features(rankings);
        if (!rationales.empty()) tin.instructions = tuner::distill_instructions(rationales);

        auto res = tuner::tune(writer, judge, [&](const std::string& p) { return backtest_on(w, p); }, state, kb, tin);
        kb = res.kb;
        prompt = res.best_prompt;
        std::vector<nlohmann::json> srs;
        for (std::size_t i = kb.size() - res.iterations; i < kb.size(); ++i) {
            const auto& e = kb.entries()[i];
            srs.push_back(e.sr ? nlohmann::json(*e.sr) : nlohmann::json(nullptr));
        }
        repeats.push_back({{"window", {format_date(index[w.begin]), format_date(index[w.end - 1])}},
                           {"baseline_sr", baseline},
                           {"v_star", res.state.v_star},
                           {"iteration_srs", srs},
                           {"regret_trace", res.regret_trace},
                           {"early_stop", res.early_stop},
                           {"features", tin.features},
                           {"instructions", tin.instructions}});
        ctx.log << "tune: repeat " << r + 1 << "/" << windows.size() << " baseline SR " << baseline << ", "
                << res.iterations << " iteration(s)\n";

        const auto checkpoint = dir / ("prompt_repeat_" + std::to_string(r + 1) + ".txt");
        write_file_bytes(checkpoint, prompt);
        if (ctx.pause && r + 1 < windows.size()) {
            ctx.pause(r + 1, checkpoint);
            prompt = llm::read_text_file(checkpoint);
            llm::validate_strategist_template(prompt);
        }
    }

    std::ostringstream kb_lines;
    kb.write_ndjson(kb_lines);
    write_file_bytes(dir / "kb.ndjson", kb_lines.str());
    write_file_bytes(dir / "prompt.txt", prompt);
    nlohmann::json summary = {{"seed", cfg.get("tune.seed")},
                              {"repeats", repeats},
                              {"final_prompt_digest", hex64(fnv1a64(prompt))}};
    write_json(dir / "tuning.json", summary);
    write_json(dir / "usage.json", gateway.ledger().to_json());
    Manifest m{"tune"};
    m.inputs = {ctx.ws.artifact_dir("features") / "features.csv", ctx.ws.artifact_dir("ingest") / "bars.csv", labels_path};
    m.outputs = {"kb.ndjson", "prompt.txt", "tuning.json", "usage.json"};
    for (std::size_t r = 0; r < windows.size(); ++r) m.outputs.push_back("prompt_repeat_" + std::to_string(r + 1) + ".txt");
    m.seeds = {{"tune", cfg.get("tune.seed")}, {"backend", cfg.get("llm.seed")}};
    write_manifest(dir, m, cfg, ctx.ws);
    ctx.log << "tune: knowledge base holds " << kb.size() << " entries; tuned prompt in " << (dir / "prompt.txt").string()
            << "\n";
}

inline rl::EnvFactory env_factory(const Context& ctx, const FeatureFrame& market, SignalMode mode,
                                  const std::vector<SignalFeature>& signals) {
    const auto train_cfg = episode_config(ctx.cfg, ctx.cfg.date("dates.train_start"), ctx.cfg.date("dates.train_end"), mode);
    const auto oos_cfg = episode_config(ctx.cfg, ctx.cfg.date("dates.oos_start"), ctx.cfg.date("dates.oos_end"), mode);
    auto make = [market, signals, mode](env::EpisodeConfig e) {
        return [market, signals, mode, e](std::size_t) {
            env::TradingEnv env(market, e);
            if (mode != SignalMode::off) env.attach_signals(signals);
            return env;
        };
    };
    return {make(train_cfg), make(oos_cfg)};
}

inline void cmd_train(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto mode = parse_signal_mode(cfg.str("signal.mode"));
    const auto market = load_market(ctx);
    std::vector<SignalFeature> signals;
    std::string signals_digest = "none";
    Manifest m{"train"};
    m.inputs = {ctx.ws.artifact_dir("ingest") / "bars.csv"};
    if (mode != SignalMode::off) {
        const auto sp = signals_path(ctx);
        signals = read_signals_csv(sp.string());
        signals_digest = file_digest(sp);
        m.inputs.push_back(sp);
    }
    const auto tcfg = train_config(cfg);
    const auto digest = train_digest(cfg, tcfg, to_string(mode), signals_digest);
    const auto set = set_name(cfg);
    const auto dir = ctx.ws.make_dir("train/" + set);

    std::vector<std::unique_ptr<rl::DdqnAgent>> agents;
    auto records = rl::train(env_factory(ctx, market, mode, signals), tcfg, &agents);

    nlohmann::json runs = nlohmann::json::array();
    for (auto& rec : records) {
        rec.config_digest = digest;
        write_json(dir / run_file("run", rec.run_id), rl::to_json(rec));
        write_json(dir / run_file("checkpoint", rec.run_id), rl::checkpoint(agents[rec.run_id]->online(), digest));
        m.outputs.push_back(run_file("run", rec.run_id));
        m.outputs.push_back(run_file("checkpoint", rec.run_id));
        runs.push_back({{"run", rec.run_id}, {"seed", rec.seed}, {"oos_sr", rec.oos_sr}, {"oos_mdd", rec.oos_mdd}});
    }
    write_json(dir / "summary.json", {{"set", set}, {"signal_mode", to_string(mode)}, {"config_digest", digest}, {"runs", runs}});
    m.outputs.push_back("summary.json");
    m.seeds = {{"base_seed", tcfg.base_seed}, {"runs", tcfg.runs}};
    m.extra = {{"set", set}, {"signal_mode", to_string(mode)}, {"workers", tcfg.workers}};
    write_manifest(dir, m, cfg, ctx.ws);

    std::vector<double> sr;
    for (const auto& r : records) sr.push_back(r.oos_sr);
    ctx.log << "train: " << records.size() << " runs in set '" << set << "', mean OOS SR " << eval::mean(sr) << "\n";
}

inline std::string backtest_name(const Config& cfg) {
    if (cfg.str("backtest.mode") == "llm") return "llm_" + generation_name(cfg);
    const auto s = cfg.str("backtest.set");
    return s.empty() ? set_name(cfg) : s;
}

inline void cmd_backtest(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto market = load_market(ctx);
    const auto name = backtest_name(cfg);
    Manifest m{"backtest"};
    m.inputs = {ctx.ws.artifact_dir("ingest") / "bars.csv"};
    std::vector<env::TraceRow> trace;
    std::vector<double> equity;
    if (cfg.str("backtest.mode") == "llm") {
        const auto sp = signals_path(ctx);
        m.inputs.push_back(sp);
        const auto signals = read_signals_csv(sp.string());
        const auto e = direction_backtest(
            market, signals, episode_config(cfg, cfg.date("dates.oos_start"), cfg.date("dates.oos_end"), SignalMode::dir_only));
        trace = e.trace();
        equity = e.equity_curve();
    } else {
        const auto set_dir = "train/" + name;
        const auto summary = read_json(ctx.ws.require(set_dir, "summary.json", "train"));
        const auto mode = parse_signal_mode(summary.at("signal_mode").get<std::string>());
        std::vector<SignalFeature> signals;
        std::string signals_digest = "none";
        if (mode != SignalMode::off) {
            const auto sp = signals_path(ctx);
            signals = read_signals_csv(sp.string());
            signals_digest = file_digest(sp);
            m.inputs.push_back(sp);
        }
        const std::size_t run = cfg.count("backtest.run");
        const auto ck_path = ctx.ws.require(set_dir, run_file("checkpoint", run), "train");
        m.inputs.push_back(ck_path);
        const auto tcfg = train_config(cfg);
        const auto net = rl::load_checkpoint(read_json(ck_path), train_digest(cfg, tcfg, to_string(mode), signals_digest));
        auto e = env_factory(ctx, market, mode, signals).evaluation(run);
        rl::RunRecord rec;
        rl::evaluate_greedy(net, e, rec);
        trace = e.trace();
        equity = e.equity_curve();
    }
    const auto dir = ctx.ws.make_dir("backtest/" + name);
    std::ostringstream csv;
    env::write_trace_csv(trace, csv);
    write_file_bytes(dir / "trace.csv", csv.str());
    const auto returns = eval::simple_returns(equity);
    const bool positive = std::all_of(equity.begin(), equity.end(), [](double v) { return v > 0; });
    nlohmann::json metrics = {{"sharpe", eval::annualized_sharpe_or(returns, 0.0)},
                              {"max_drawdown", positive ? eval::max_drawdown(equity) : 1.0},
                              {"cumulative_return", eval::cumulative_return(returns)},
                              {"bars", trace.size()}};
    write_json(dir / "metrics.json", metrics);
    m.outputs = {"trace.csv", "metrics.json"};
    m.extra = {{"mode", cfg.str("backtest.mode")}, {"name", name}};
    write_manifest(dir, m, cfg, ctx.ws);
    ctx.log << "backtest: " << name << " SR " << metrics["sharpe"].get<double>() << ", MDD "
            << metrics["max_drawdown"].get<double>() << "\n";
}

/// Run sets to compare: the configured list, or every trained set.
inline std::vector<std::string> evaluation_sets(const Context& ctx) {
    std::vector<std::string> sets;
    for (const auto& s : ctx.cfg.get("evaluate.sets")) sets.push_back(s.get<std::string>());
    if (sets.empty()) {
        const auto root = ctx.ws.artifact_dir("train");
        if (fs::exists(root)) {
            for (const auto& d : fs::directory_iterator(root)) {
                if (fs::exists(d.path() / "summary.json")) sets.push_back(d.path().filename().string());
            }
        }
        std::sort(sets.begin(), sets.end());
    }
    if (sets.empty()) throw DataError(kModule, "no trained run sets found; run 'train' first");
    return sets;
}

inline eval::MetricsReport evaluate_sets(const Context& ctx, std::vector<fs::path>* inputs = nullptr) {
    eval::InstrumentRuns inst;
    inst.ticker = ctx.cfg.str("instrument.ticker");
    for (const auto& set : evaluation_sets(ctx)) {
        const auto summary_path = ctx.ws.require("train/" + set, "summary.json", "train");
        if (inputs) inputs->push_back(summary_path);
        auto& runs = inst.conditions[set];
        const auto summary = read_json(summary_path);
        for (const auto& r : summary.at("runs")) {
            const auto p = ctx.ws.require("train/" + set, run_file("run", r.at("run").get<std::size_t>()), "train");
            const auto rec = rl::run_record_from_json(read_json(p));
            runs.push_back({rec.oos_sr, rec.oos_mdd});
        }
    }
    return eval::build_report({inst}, ctx.cfg.flag("evaluate.paired"));
}

inline void cmd_evaluate(const Context& ctx) {
    Manifest m{"evaluate"};
    const auto rep = evaluate_sets(ctx, &m.inputs);
    const auto dir = ctx.ws.make_dir("evaluate");
    write_json(dir / "metrics.json", eval::to_json(rep));
    write_file_bytes(dir / "metrics.txt", eval::to_text(rep));
    m.outputs = {"metrics.json", "metrics.txt"};
    write_manifest(dir, m, ctx.cfg, ctx.ws);
    ctx.log << eval::to_text(rep);
}

/// Human-readable summary: metric tables, token usage per prompt version and
/// the tuning trace when present.
inline void cmd_report(const Context& ctx) {
    Manifest m{"report"};
    const auto rep = evaluate_sets(ctx, &m.inputs);
    std::ostringstream out;
    out << "Instrument: " << ctx.cfg.str("instrument.ticker") << "\n\n" << eval::to_text(rep);

    llm::UsageLedger usage;
    std::vector<fs::path> usage_files;
    for (const char* sub : {"generate", "tune"}) {
        const auto root = ctx.ws.artifact_dir(sub);
        if (!fs::exists(root)) continue;
        if (fs::exists(root / "usage.json")) usage_files.push_back(root / "usage.json");
        std::vector<fs::path> dirs;
        for (const auto& d : fs::directory_iterator(root)) {
            if (d.is_directory() && fs::exists(d.path() / "usage.json")) dirs.push_back(d.path() / "usage.json");
        }
        std::sort(dirs.begin(), dirs.end());
        usage_files.insert(usage_files.end(), dirs.begin(), dirs.end());
    }
    for (const auto& f : usage_files) {
        m.inputs.push_back(f);
        usage.merge(llm::UsageLedger::from_json(read_json(f)));
    }
    if (!usage.entries().empty()) {
        out << "\nToken usage\n";
        for (const auto& [k, u] : usage.entries()) {
            out << "  " << k.first << " / " << k.second << ": " << usage.calls(k) << " calls, " << u.prompt_tokens
                << " prompt + " << u.completion_tokens << " completion tokens\n";
        }
    }
    const auto tuning = ctx.ws.artifact_dir("tune") / "tuning.json";
    if (fs::exists(tuning)) {
        m.inputs.push_back(tuning);
        out << "\nPrompt tuning\n";
        const auto summary = read_json(tuning);
        for (const auto& r : summary.at("repeats")) {
            out << "  window " << r["window"][0].get<std::string>() << ".." << r["window"][1].get<std::string>()
                << ": baseline SR " << r["baseline_sr"].get<double>() << ", V* " << r["v_star"].get<double>()
                << ", iteration SRs " << r["iteration_srs"].dump() << "\n";
        }
    }
    const auto dir = ctx.ws.make_dir("report");
    write_file_bytes(dir / "report.txt", out.str());
    m.outputs = {"report.txt"};
    write_manifest(dir, m, ctx.cfg, ctx.ws);
    ctx.log << out.str();
}

/// One row per traced bar: date, close, 20MA, 50MA, action, tau, strength.
/// tau and strength are the strategist guidance in force on that bar.
inline void cmd_plotdata(const Context& ctx) {
    const auto name = backtest_name(ctx.cfg);
    const auto trace_path = ctx.ws.require("backtest/" + name, "trace.csv", "backtest");
    const auto frame = load_features(ctx);
    Manifest m{"plotdata"};
    m.inputs = {trace_path, ctx.ws.artifact_dir("features") / "features.csv"};
    std::vector<SignalFeature> signals;
    const auto src = ctx.cfg.str("signal.source");
    const auto sp = src.empty() ? ctx.ws.artifact_dir("generate/" + generation_name(ctx.cfg)) / "signals.csv"
                                : ctx.ws.resolve(src);
    if (fs::exists(sp)) {
        signals = read_signals_csv(sp.string());
        std::stable_sort(signals.begin(), signals.end(), [](const auto& a, const auto& b) { return a.date < b.date; });
        m.inputs.push_back(sp);
    }
    auto column = [&](const std::string& c) -> const std::vector<double>* {
        return frame.has_column(c) ? &frame.column(c) : nullptr;
    };
    const auto *close = column("Close"), *ma20 = column("20MA"), *ma50 = column("50MA");
    const auto trace = csv::read_file(trace_path.string());
    const int cd = trace.find("date"), ca = trace.find("action");
    if (cd < 0 || ca < 0) throw SchemaError(kModule, trace_path.string() + ": not a trace file");

    std::ostringstream out;
    csv::write_row(out, {"date", "close", "20MA", "50MA", "action", "tau", "strength"});
    for (const auto& r : trace.rows) {
        const Date d = parse_date(r[cd]);
        const auto row = frame.find(d);
        auto val = [&](const std::vector<double>* c) { return (c && row) ? format_double((*c)[*row]) : "NA"; };
        std::string tau = "NA", strength = "NA";
        auto it = std::upper_bound(signals.begin(), signals.end(), d, [](Date x, const SignalFeature& s) { return x < s.date; });
        if (it != signals.begin()) {
            tau = format_double(std::prev(it)->tau);
            strength = format_double(std::prev(it)->strength);
        }
        csv::write_row(out, {r[cd], val(close), val(ma20), val(ma50), r[ca], tau, strength});
    }
    const auto dir = ctx.ws.make_dir("plotdata/" + name);
    write_file_bytes(dir / "plot.csv", out.str());
    m.outputs = {"plot.csv"};
    write_manifest(dir, m, ctx.cfg, ctx.ws);
    ctx.log << "plotdata: " << trace.rows.size() << " rows for " << name << "\n";
}

inline const std::map<std::string, std::function<void(const Context&)>>& commands() {
    static const std::map<std::string, std::function<void(const Context&)>> c{
        {"ingest", cmd_ingest},     {"features", cmd_features}, {"label", cmd_label},
        {"tune", cmd_tune},         {"generate", cmd_generate}, {"train", cmd_train},
        {"backtest", cmd_backtest}, {"evaluate", cmd_evaluate}, {"report", cmd_report},
        {"plotdata", cmd_plotdata}};
    return c;
}

}  // namespace llmrl::pipeline
