#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrl/env/trading_env.hpp"
#include "llmrl/eval/metrics.hpp"
#include "llmrl/llm/gateway.hpp"
#include "llmrl/llm/prompts.hpp"
#include "llmrl/pipeline/config.hpp"
#include "llmrl/signal/signal_math.hpp"
#include "llmrl/signal/strategy.hpp"

namespace llmrl::pipeline {

/// Rows at which strategies are generated: the first row on or after
/// `start`, then every `block` rows up to the last row on or before `end`.
inline std::vector<std::size_t> block_anchors(const std::vector<Date>& index, Date start, Date end, std::size_t block) {
    if (block == 0) throw ArgumentError(kModule, "block length must be positive");
    auto s = std::lower_bound(index.begin(), index.end(), start);
    auto e = std::upper_bound(index.begin(), index.end(), end);
    std::vector<std::size_t> out;
    if (s >= e) return out;
    const auto first = static_cast<std::size_t>(s - index.begin()), last = static_cast<std::size_t>(e - index.begin());
    for (std::size_t r = first; r < last; r += block) out.push_back(r);
    return out;
}

/// Presents a gateway as a plain backend, tagging its usage with a fixed
/// instrument and prompt version. Used for the tuner's writer and judge.
class GatewayBackend : public llm::CompletionBackend {
public:
    GatewayBackend(llm::Gateway& gateway, std::string instrument, std::string version)
        : gateway_(gateway), instrument_(std::move(instrument)), version_(std::move(version)) {}

    llm::CompletionResult complete(const std::string& prompt, const llm::CompletionParams& params) override {
        return gateway_.complete(prompt, params, instrument_, version_);
    }
    std::string name() const override { return "gateway:" + gateway_.backend().name(); }

private:
    llm::Gateway& gateway_;
    std::string instrument_, version_;
};

struct GenerationRequest {
    std::string strategist_template;
    std::string analyst_template;  // needed only when there is news
    std::vector<std::size_t> anchors;
    llm::StrategistInputs inputs;  // persona, objectives, classification, beta
    std::vector<NewsArticle> news;  // already anonymized, sorted by date
    std::string instrument;
    std::string prompt_version;
    llm::CompletionParams params = llm::generation_params();
    int news_lookback_days = 31;  // window before the first anchor
};

struct GeneratedStrategy {
    std::size_t row = 0;
    Strategy strategy;
    SignalFeature signal;
    double perplexity = 0.0;
    double news_sentiment = 0.0;
    int news_impact = 1;
    llm::Usage usage;
};

inline nlohmann::json to_json(const GeneratedStrategy& g) {
    return {{"date", format_date(g.strategy.date)},
            {"action", to_string(g.strategy.direction)},
            {"likert", g.strategy.confidence_likert},
            {"h_norm", g.signal.h_norm},
            {"certainty", g.signal.certainty},
            {"strength", g.signal.strength},
            {"tau", g.signal.tau},
            {"perplexity", g.perplexity},
            {"news_sentiment", g.news_sentiment},
            {"news_impact", g.news_impact},
            {"usage", {{"prompt_tokens", g.usage.prompt_tokens}, {"completion_tokens", g.usage.completion_tokens}}},
            {"strategy", to_json(g.strategy)}};
}

/// Replaces entity names and absolute dates in every article, relative to
/// the article's own date. Fails if anything identifying survives.
inline std::vector<NewsArticle> anonymize_articles(const std::vector<NewsArticle>& news,
                                                   const std::map<std::string, std::string>& entities) {
    std::vector<NewsArticle> out;
    out.reserve(news.size());
    for (const auto& a : news) {
        NewsArticle b{a.date, llm::anonymize(a.headline, entities, a.date), llm::anonymize(a.body, entities, a.date)};
        if (llm::anonymization_leaks(b.headline + "\n" + b.body, entities)) {
            throw ValidationError(kModule, "article dated " + format_date(a.date) + " still names the instrument");
        }
        out.push_back(std::move(b));
    }
    return out;
}

/// Articles in (from, to].
inline std::vector<std::string> articles_between(const std::vector<NewsArticle>& news, Date from, Date to) {
    std::vector<std::string> out;
    for (const auto& a : news) {
        if (a.date > from && a.date <= to) out.push_back(a.body.empty() ? a.headline : a.headline + ". " + a.body);
    }
    return out;
}

/// One strategy per anchor row, in order. Each block sees the previous
/// block's strategy and its realized return, and the news published since
/// the previous anchor (summarized by the analyst prompt first).
inline std::vector<GeneratedStrategy> generate_strategies(llm::Gateway& gateway, const FeatureFrame& frame,
                                                          const GenerationRequest& req) {
    llm::validate_strategist_template(req.strategist_template);
    const auto& index = frame.index();
    const auto& close = frame.column("Close");
    std::vector<GeneratedStrategy> out;
    for (std::size_t k = 0; k < req.anchors.size(); ++k) {
        const std::size_t row = req.anchors[k];
        if (row >= frame.rows()) throw ArgumentError(kModule, "anchor row outside the feature frame");
        llm::StrategistInputs in = req.inputs;
        if (!out.empty()) {
            const auto& prev = out.back();
            in.last = llm::PriorStrategy{prev.strategy, close[row] / close[prev.row] - 1.0};
        }
        GeneratedStrategy g;
        g.row = row;
        const Date from = out.empty() ? index[row] - std::chrono::days(req.news_lookback_days) : index[out.back().row];
        auto articles = articles_between(req.news, from, index[row]);
        if (!articles.empty()) {
            auto r = gateway.complete(llm::render_analyst_prompt(articles, req.analyst_template), req.params,
                                      req.instrument, req.prompt_version);
            in.news = llm::parse_news_factors(r.text);
            g.usage.prompt_tokens += r.usage.prompt_tokens;
            g.usage.completion_tokens += r.usage.completion_tokens;
        }
        std::tie(g.news_sentiment, g.news_impact) = llm::aggregate_news(in.news);

        const auto prompt = llm::render_strategist_prompt(req.strategist_template, frame, row, in);
        auto r = gateway.complete(prompt, req.params, req.instrument, req.prompt_version);
        g.usage.prompt_tokens += r.usage.prompt_tokens;
        g.usage.completion_tokens += r.usage.completion_tokens;
        g.strategy = parse_strategy(r.text, index[row]);
        const double h = decision_entropy(r.text, r.tokens);
        g.signal = make_signal_feature(index[row], g.strategy.direction, g.strategy.confidence_likert, h);
        std::vector<double> lps;
        for (const auto& t : r.tokens) lps.push_back(t.chosen_logprob);
        g.perplexity = lps.empty() ? 1.0 : perplexity(lps);
        out.push_back(std::move(g));
    }
    return out;
}

inline std::vector<SignalFeature> signals_of(const std::vector<GeneratedStrategy>& gs) {
    std::vector<SignalFeature> out;
    for (const auto& g : gs) out.push_back(g.signal);
    return out;
}

/// Trades the strategist's direction directly (no RL): LONG or SHORT for
/// each whole block. Returns the environment after the episode so callers
/// can read the trace.
inline env::TradingEnv direction_backtest(const FeatureFrame& market, std::span<const SignalFeature> signals,
                                          env::EpisodeConfig cfg) {
    cfg.signal_mode = SignalMode::dir_only;
    env::TradingEnv e(market, cfg);
    e.attach_signals(signals);
    e.reset();
    while (!e.done()) e.step(e.signal_at(e.current_index()) > 0 ? env::kLong : env::kShort);
    return e;
}

inline double annualized_sharpe_of(const env::TradingEnv& e) {
    return eval::annualized_sharpe_or(eval::simple_returns(e.equity_curve()), 0.0);
}

}  // namespace llmrl::pipeline
