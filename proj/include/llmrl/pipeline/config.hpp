#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrl/env/trading_env.hpp"
#include "llmrl/features/indicators.hpp"
#include "llmrl/llm/prompts.hpp"
#include "llmrl/rl/ddqn_agent.hpp"

namespace llmrl::pipeline {

inline constexpr const char* kModule = "cli";

/// Every recognised key with its default. Keys are flat and dotted; the type
/// of the default is the type an override must have (null: string or null).
inline const nlohmann::json& config_defaults() {
    static const nlohmann::json d = {
        {"output_dir", "artifacts"},
        {"instrument.ticker", "TICKER"},
        {"instrument.aliases", nlohmann::json::array()},
        {"instrument.classification", nullptr},
        {"instrument.beta", nullptr},
        {"data.ohlcv", "data/ohlcv.csv"},
        {"data.macro", nlohmann::json::array()},
        {"data.news", ""},
        {"dates.train_start", "2012-01-01"},
        {"dates.train_end", "2017-12-31"},
        {"dates.oos_start", "2018-01-01"},
        {"dates.oos_end", "2020-12-31"},
        {"features.sma_windows", {20, 50, 100, 200}},
        {"features.rsi_period", 14},
        {"features.macd_fast", 12},
        {"features.macd_slow", 26},
        {"features.macd_signal", 9},
        {"features.atr_period", 14},
        {"features.rolling_window", 20},
        {"features.slope_lookback", 5},
        {"prompt.version", "P4"},
        {"prompt.file", ""},
        {"prompt.template_dir", ""},
        {"prompt.persona", "Quantitative equity strategist"},
        {"prompt.objectives", "Maximize risk-adjusted return (Sharpe ratio) with controlled drawdowns."},
        {"llm.backend", "stub"},
        {"llm.seed", 0},
        {"llm.url", "https://api.openai.com/v1/chat/completions"},
        {"llm.model", "gpt-4o"},
        {"llm.api_key_env", "LLMRL_API_KEY"},
        {"llm.max_retries", 4},
        {"llm.max_in_flight", 4},
        {"llm.requests_per_second", 0.0},
        {"llm.transcripts", false},
        {"llm.replay", ""},
        {"generate.name", ""},
        {"signal.mode", "tau"},
        {"signal.block", 20},
        {"signal.source", ""},
        {"env.initial_cash", 100000.0},
        {"env.cost_rate", 0.001},
        {"env.leverage_cap", 1.0},
        {"env.window", 30},
        {"env.reward", "simple"},
        {"train.set", ""},
        {"train.runs", 25},
        {"train.episodes", 50},
        {"train.gamma", 0.99},
        {"train.learning_rate", 1e-4},
        {"train.optimizer", "adam"},
        {"train.batch_size", 64},
        {"train.buffer_capacity", 100000},
        {"train.target_sync", 1000},
        {"train.epsilon_start", 1.0},
        {"train.epsilon_end", 0.01},
        {"train.epsilon_decay_steps", 0},
        {"train.hidden", {128, 128}},
        {"train.grad_clip", 1.0},
        {"train.reward_scale", 1.0},
        {"train.train_every", 1},
        {"train.seed", 0},
        {"train.workers", 1},
        {"tune.windows", 5},
        {"tune.window_length", 252},
        {"tune.seed", 0},
        {"tune.t_max", 3},
        {"tune.exemplars", 12},
        {"tune.hitl_labels", ""},
        {"tune.hitl_ratio", 0.0},
        {"tune.pause", false},
        {"backtest.set", ""},
        {"backtest.run", 0},
        {"backtest.mode", "rl"},
        {"evaluate.sets", nlohmann::json::array()},
        {"evaluate.paired", true},
    };
    return d;
}

/// Keys that do not change any artifact and stay out of the digest.
inline bool digest_neutral(const std::string& key) { return key == "train.workers" || key == "tune.pause"; }

/// Resolved configuration: defaults, then the config file, then overrides.
class Config {
public:
    Config() : values_(config_defaults()) {}

    /// Reads a config file. A manifest written by an earlier command is
    /// accepted as well; its embedded config is used.
    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError(kModule, "cannot open config file " + path);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(kModule, path + ": " + e.what());
        }
        if (doc.is_object() && doc.contains("manifest_version") && doc.contains("config")) doc = doc["config"];
        if (!doc.is_object()) throw ConfigError(kModule, path + ": config must be a JSON object");
        Config c;
        for (const auto& [k, v] : doc.items()) c.set(k, v);
        return c;
    }

    void set(const std::string& key, const nlohmann::json& value) {
        const auto& defaults = config_defaults();
        auto it = defaults.find(key);
        if (it == defaults.end()) throw ConfigError(kModule, "unknown config key '" + key + "'");
        const auto& d = *it;
        const bool ok = d.is_null()                ? (value.is_null() || value.is_string() || value.is_number())
                        : d.is_boolean()           ? value.is_boolean()
                        : d.is_number_integer()    ? value.is_number_integer()
                        : d.is_number()            ? value.is_number()
                        : d.is_string()            ? value.is_string()
                        : d.is_array()             ? value.is_array()
                                                   : false;
        if (!ok) throw ConfigError(kModule, "config key '" + key + "' has the wrong type: " + value.dump());
        if (d.is_number_integer() && value.get<long long>() < 0) {
            throw ConfigError(kModule, "config key '" + key + "' must be non-negative");
        }
        values_[key] = value;
    }

    /// "key=value" from the command line. The value is parsed as JSON when
    /// it is valid JSON and taken as a plain string otherwise.
    void set_from_text(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError(kModule, "override '" + assignment + "' is not key=value");
        }
        const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
        nlohmann::json v;
        try {
            v = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception&) {
            v = text;
        }
        auto d = config_defaults().find(key);
        if (d != config_defaults().end() && d->is_string() && !v.is_string()) v = text;
        set(key, v);
    }

    const nlohmann::json& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError(kModule, "unknown config key '" + key + "'");
        return *it;
    }
    std::string str(const std::string& key) const { return get(key).is_null() ? "" : get(key).get<std::string>(); }
    double num(const std::string& key) const { return get(key).get<double>(); }
    std::size_t count(const std::string& key) const { return get(key).get<std::size_t>(); }
    bool flag(const std::string& key) const { return get(key).get<bool>(); }
    Date date(const std::string& key) const {
        try {
            return parse_date(str(key));
        } catch (const Error& e) {
            throw ConfigError(kModule, "config key '" + key + "': " + e.message());
        }
    }

    const nlohmann::json& values() const noexcept { return values_; }

    std::string digest() const {
        nlohmann::json j;
        for (const auto& [k, v] : values_.items()) {
            if (!digest_neutral(k)) j[k] = v;
        }
        return hex64(fnv1a64(j.dump()));
    }

    /// Checks cross-key invariants. Called once before any command runs.
    void validate() const {
        const Date ts = date("dates.train_start"), te = date("dates.train_end");
        const Date os = date("dates.oos_start"), oe = date("dates.oos_end");
        if (!(ts < te)) throw ConfigError(kModule, "training range is empty");
        if (!(os < oe)) throw ConfigError(kModule, "out-of-sample range is empty");
        if (!(te < os)) throw ConfigError(kModule, "training range must end before the out-of-sample range");
        llm::parse_prompt_version(str("prompt.version"));
        parse_signal_mode(str("signal.mode"));
        const auto backend = str("llm.backend");
        if (backend != "stub" && backend != "http" && backend != "replay") {
            throw ConfigError(kModule, "llm.backend must be stub, http or replay");
        }
        if (backend == "replay" && str("llm.replay").empty()) throw ConfigError(kModule, "replay backend needs llm.replay");
        const auto mode = str("backtest.mode");
        if (mode != "rl" && mode != "llm") throw ConfigError(kModule, "backtest.mode must be rl or llm");
        const auto reward = str("env.reward");
        if (reward != "simple" && reward != "log") throw ConfigError(kModule, "env.reward must be simple or log");
        const auto opt = str("train.optimizer");
        if (opt != "adam" && opt != "sgd") throw ConfigError(kModule, "train.optimizer must be adam or sgd");
        if (count("signal.block") == 0) throw ConfigError(kModule, "signal.block must be positive");
        const double ratio = num("tune.hitl_ratio");
        if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError(kModule, "tune.hitl_ratio must be in [0, 1]");
        for (const auto& a : get("instrument.aliases")) {
            if (!a.is_string()) throw ConfigError(kModule, "instrument.aliases must be strings");
        }
    }

private:
    nlohmann::json values_;
};

inline features::IndicatorConfig indicator_config(const Config& c) {
    features::IndicatorConfig f;
    f.sma_windows = c.get("features.sma_windows").get<std::vector<int>>();
    f.rsi_period = c.get("features.rsi_period").get<int>();
    f.macd = {c.get("features.macd_fast").get<int>(), c.get("features.macd_slow").get<int>(),
              c.get("features.macd_signal").get<int>()};
    f.atr_period = c.get("features.atr_period").get<int>();
    f.rolling_window = c.get("features.rolling_window").get<int>();
    f.slope_lookback = c.get("features.slope_lookback").get<int>();
    return f;
}

inline env::EpisodeConfig episode_config(const Config& c, Date start, Date end, SignalMode mode) {
    env::EpisodeConfig e;
    e.start = start;
    e.end = end;
    e.initial_cash = c.num("env.initial_cash");
    e.cost_rate = c.num("env.cost_rate");
    e.leverage_cap = c.num("env.leverage_cap");
    e.window = c.count("env.window");
    e.reward = c.str("env.reward") == "log" ? env::RewardKind::log : env::RewardKind::simple;
    e.signal_mode = mode;
    e.signal_block = c.count("signal.block");
    return e;
}

inline rl::TrainConfig train_config(const Config& c) {
    rl::TrainConfig t;
    t.runs = c.count("train.runs");
    t.episodes_per_run = c.count("train.episodes");
    t.gamma = c.num("train.gamma");
    t.learning_rate = c.num("train.learning_rate");
    t.optimizer = c.str("train.optimizer") == "sgd" ? rl::OptimizerKind::sgd : rl::OptimizerKind::adam;
    t.batch_size = c.count("train.batch_size");
    t.buffer_capacity = c.count("train.buffer_capacity");
    t.target_sync_interval = c.count("train.target_sync");
    t.epsilon_start = c.num("train.epsilon_start");
    t.epsilon_end = c.num("train.epsilon_end");
    t.epsilon_decay_steps = c.count("train.epsilon_decay_steps");
    t.hidden = c.get("train.hidden").get<std::vector<std::size_t>>();
    t.grad_clip_norm = c.num("train.grad_clip");
    t.reward_scale = c.num("train.reward_scale");
    t.train_every = c.count("train.train_every");
    t.base_seed = c.get("train.seed").get<std::uint64_t>();
    t.workers = c.count("train.workers");
    t.validate();
    return t;
}

}  // namespace llmrl::pipeline
