#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrl/env/trading_env.hpp"
#include "llmrl/eval/metrics.hpp"
#include "llmrl/rl/ddqn_agent.hpp"

namespace llmrl::rl {

/// Builds fresh environments for a run. Called from worker threads, so the
/// callables must not share mutable state.
struct EnvFactory {
    std::function<env::TradingEnv(std::size_t run)> train;
    std::function<env::TradingEnv(std::size_t run)> evaluation;
};

struct RunRecord {
    std::size_t run_id = 0;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::vector<double> train_sr;      // annualized SR of each training episode
    std::vector<double> train_q_long;  // mean Q(LONG) over each training episode
    std::vector<double> train_q_short;
    double oos_sr = 0.0;
    double oos_mdd = 0.0;
    double oos_cumulative_return = 0.0;
    std::vector<double> equity_curve;  // OOS, starting at initial cash
    std::vector<double> q_long;        // OOS per-step Q traces
    std::vector<double> q_short;
    std::vector<int> actions;          // OOS greedy actions
    std::vector<std::string> dates;    // OOS decision dates
};

inline nlohmann::json to_json(const RunRecord& r) {
    return {{"run_id", r.run_id},
            {"seed", r.seed},
            {"config_digest", r.config_digest},
            {"train_sr", r.train_sr},
            {"train_q_long", r.train_q_long},
            {"train_q_short", r.train_q_short},
            {"oos_sr", r.oos_sr},
            {"oos_mdd", r.oos_mdd},
            {"oos_cumulative_return", r.oos_cumulative_return},
            {"equity_curve", r.equity_curve},
            {"q_traces", {{"long", r.q_long}, {"short", r.q_short}}},
            {"actions", r.actions},
            {"dates", r.dates}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
    RunRecord r;
    try {
        r.run_id = j.at("run_id").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.config_digest = j.at("config_digest").get<std::string>();
        r.train_sr = j.value("train_sr", std::vector<double>{});
        r.train_q_long = j.value("train_q_long", std::vector<double>{});
        r.train_q_short = j.value("train_q_short", std::vector<double>{});
        r.oos_sr = j.at("oos_sr").get<double>();
        r.oos_mdd = j.at("oos_mdd").get<double>();
        r.oos_cumulative_return = j.value("oos_cumulative_return", 0.0);
        r.equity_curve = j.value("equity_curve", std::vector<double>{});
        if (j.contains("q_traces")) {
            r.q_long = j["q_traces"].value("long", std::vector<double>{});
            r.q_short = j["q_traces"].value("short", std::vector<double>{});
        }
        r.actions = j.value("actions", std::vector<int>{});
        r.dates = j.value("dates", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("ddqn_agent", std::string("malformed run record: ") + e.what());
    }
    return r;
}

/// Greedy (epsilon 0) episode; fills the OOS part of `rec`.
inline void evaluate_greedy(const QNetwork& net, env::TradingEnv& environment, RunRecord& rec) {
    auto obs = environment.reset();
    while (!environment.done()) {
        const auto q = q_values(net, obs.values);
        const int a = greedy_action(q[0], q[1]);
        rec.q_short.push_back(q[0]);
        rec.q_long.push_back(q[1]);
        rec.actions.push_back(a);
        rec.dates.push_back(format_date(environment.data().index()[environment.current_index()]));
        obs = environment.step(a).observation;
    }
    rec.equity_curve = environment.equity_curve();
    const auto returns = eval::simple_returns(rec.equity_curve);
    rec.oos_sr = eval::annualized_sharpe_or(returns, 0.0);
    rec.oos_cumulative_return = eval::cumulative_return(returns);
    // A bankrupt curve ends at or below zero; report a full drawdown.
    const bool positive = std::all_of(rec.equity_curve.begin(), rec.equity_curve.end(), [](double v) { return v > 0; });
    rec.oos_mdd = positive ? eval::max_drawdown(rec.equity_curve) : 1.0;
}

/// Linear epsilon schedule from start to end over `decay_steps`, then flat.
inline double epsilon_at(const TrainConfig& cfg, std::size_t step, std::size_t decay_steps) {
    if (decay_steps == 0) return cfg.epsilon_end;
    const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(decay_steps));
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);
}

/// One seeded run: episodes of interaction and learning, then a greedy
/// out-of-sample episode. Returns the trained agent through `agent_out`
/// when it is non-null.
inline RunRecord train_run(const EnvFactory& factory, const TrainConfig& cfg, std::size_t run,
                           std::unique_ptr<DdqnAgent>* agent_out = nullptr) {
    try {
        RunRecord rec;
        rec.run_id = run;
        rec.seed = cfg.base_seed + run;
        rec.config_digest = config_digest(cfg);

        auto train_env = factory.train(run);
        const std::size_t dim = train_env.observation_size();
        auto agent = std::make_unique<DdqnAgent>(dim, cfg, rec.seed);
        ReplayBuffer buffer(cfg.buffer_capacity, dim);
        const std::size_t total = cfg.episodes_per_run * train_env.steps_per_episode();
        const std::size_t decay = cfg.epsilon_decay_steps == 0 ? total : cfg.epsilon_decay_steps;

        std::size_t step = 0;
        for (std::size_t ep = 0; ep < cfg.episodes_per_run; ++ep) {
            auto obs = train_env.reset();
            double q_long = 0.0, q_short = 0.0;
            std::size_t n = 0;
            while (!train_env.done()) {
                const auto q = agent->q(obs.values);
                q_short += q[0];
                q_long += q[1];
                ++n;
                const int a = agent->act(obs.values, epsilon_at(cfg, step, decay));
                auto r = train_env.step(a);
                // Only bankruptcy is terminal; the final bar is a time limit.
                buffer.push({obs.values, a, r.reward * cfg.reward_scale, r.observation.values, r.info.bankrupt});
                obs = std::move(r.observation);
                ++step;
                if (buffer.size() >= cfg.batch_size && step % cfg.train_every == 0) agent->train_step(buffer);
            }
            rec.train_sr.push_back(eval::annualized_sharpe_or(eval::simple_returns(train_env.equity_curve()), 0.0));
            rec.train_q_long.push_back(n ? q_long / n : 0.0);
            rec.train_q_short.push_back(n ? q_short / n : 0.0);
        }

        auto eval_env = factory.evaluation(run);
        evaluate_greedy(agent->online(), eval_env, rec);
        if (agent_out) *agent_out = std::move(agent);
        return rec;
    } catch (const Error& e) {
        throw Error(e.module(), e.kind(), "run " + std::to_string(run) + ": " + e.message());
    }
}

/// The full protocol: cfg.runs independent runs spread over cfg.workers
/// threads. Results come back ordered by run index regardless of scheduling.
/// The trained agents are handed back through `agents` when it is non-null.
inline std::vector<RunRecord> train(const EnvFactory& factory, const TrainConfig& cfg,
                                    std::vector<std::unique_ptr<DdqnAgent>>* agents = nullptr) {
    cfg.validate();
    std::vector<RunRecord> out(cfg.runs);
    if (agents) {
        agents->clear();
        agents->resize(cfg.runs);
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t run = next++; run < cfg.runs; run = next++) {
            try {
                out[run] = train_run(factory, cfg, run, agents ? &(*agents)[run] : nullptr);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = cfg.runs;
            }
        }
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, cfg.runs));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

/// Checkpoint: layer sizes, flat parameters and the config digest.
inline nlohmann::json checkpoint(const QNetwork& net, const std::string& digest) {
    const auto p = net.parameters();
    return {{"config_digest", digest},
            {"sizes", net.sizes()},
            {"parameters", std::vector<double>(p.begin(), p.end())}};
}

inline QNetwork load_checkpoint(const nlohmann::json& j, const std::string& expected_digest = {}) {
    try {
        const auto digest = j.at("config_digest").get<std::string>();
        if (!expected_digest.empty() && digest != expected_digest) {
            throw ConfigError("ddqn_agent", "checkpoint digest " + digest + " does not match " + expected_digest);
        }
        auto sizes = j.at("sizes").get<std::vector<std::size_t>>();
        if (sizes.size() < 2) throw SchemaError("ddqn_agent", "checkpoint needs input and output sizes");
        std::vector<std::size_t> hidden(sizes.begin() + 1, sizes.end() - 1);
        QNetwork net(sizes.front(), hidden, sizes.back());
        auto params = j.at("parameters").get<std::vector<double>>();
        if (params.size() != net.parameter_count()) throw SchemaError("ddqn_agent", "checkpoint parameter count mismatch");
        std::copy(params.begin(), params.end(), net.parameters().begin());
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("ddqn_agent", std::string("malformed checkpoint: ") + e.what());
    }
}

}  // namespace llmrl::rl
