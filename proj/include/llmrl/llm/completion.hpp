#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrl/core/common.hpp"
#include "llmrl/signal/signal_math.hpp"

namespace llmrl::llm {

/// Sampling controls sent with every request. top_logprobs stays at 5 since
/// the entropy measure needs k = 5 distributions per token.
struct CompletionParams {
    double temperature = 0.0;
    std::optional<std::uint64_t> seed;
    double frequency_penalty = 0.0;
    double presence_penalty = 0.0;
    int top_logprobs = static_cast<int>(kTopK);
    int max_tokens = 1024;

    friend bool operator==(const CompletionParams&, const CompletionParams&) = default;
};

/// Exploration setting used while tuning prompts.
inline CompletionParams tuning_params() {
    CompletionParams p;
    p.temperature = 0.7;
    p.frequency_penalty = 1.0;
    p.presence_penalty = 0.25;
    return p;
}

/// Deterministic setting used to generate the strategies the agent sees.
inline CompletionParams generation_params() {
    CompletionParams p;
    p.temperature = 0.0;
    p.seed = 49;
    return p;
}

inline nlohmann::json to_json(const CompletionParams& p) {
    nlohmann::json j = {{"temperature", p.temperature},
                        {"frequency_penalty", p.frequency_penalty},
                        {"presence_penalty", p.presence_penalty},
                        {"top_logprobs", p.top_logprobs},
                        {"max_tokens", p.max_tokens}};
    j["seed"] = p.seed ? nlohmann::json(*p.seed) : nlohmann::json(nullptr);
    return j;
}

inline CompletionParams params_from_json(const nlohmann::json& j) {
    CompletionParams p;
    p.temperature = j.value("temperature", 0.0);
    p.frequency_penalty = j.value("frequency_penalty", 0.0);
    p.presence_penalty = j.value("presence_penalty", 0.0);
    p.top_logprobs = j.value("top_logprobs", static_cast<int>(kTopK));
    p.max_tokens = j.value("max_tokens", 1024);
    if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::uint64_t>();
    return p;
}

struct Usage {
    long long prompt_tokens = 0;
    long long completion_tokens = 0;

    long long total() const { return prompt_tokens + completion_tokens; }
    friend bool operator==(const Usage&, const Usage&) = default;
};

struct CompletionResult {
    std::string text;
    std::vector<TokenDistribution> tokens;
    Usage usage;
};

inline nlohmann::json to_json(const TokenDistribution& t) {
    return {{"token", t.token}, {"logprob", t.chosen_logprob}, {"top", t.top}, {"tail", t.tail}};
}

inline nlohmann::json to_json(const CompletionResult& r) {
    nlohmann::json tokens = nlohmann::json::array();
    for (const auto& t : r.tokens) tokens.push_back(to_json(t));
    return {{"text", r.text},
            {"tokens", tokens},
            {"usage", {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}}}};
}

inline CompletionResult result_from_json(const nlohmann::json& j) {
    CompletionResult r;
    r.text = j.at("text").get<std::string>();
    for (const auto& t : j.at("tokens")) {
        TokenDistribution d;
        d.token = t.at("token").get<std::string>();
        d.chosen_logprob = t.at("logprob").get<double>();
        d.top = t.at("top").get<std::vector<double>>();
        d.tail = t.at("tail").get<double>();
        r.tokens.push_back(std::move(d));
    }
    r.usage.prompt_tokens = j.at("usage").at("prompt_tokens").get<long long>();
    r.usage.completion_tokens = j.at("usage").at("completion_tokens").get<long long>();
    return r;
}

/// Typed gateway failures. `raw_body` keeps whatever the provider sent.
class GatewayError : public Error {
public:
    enum class Kind { auth, rate_limit, server, transport, malformed_response, rejected, replay_miss, config };

    GatewayError(Kind kind, const std::string& message, std::string raw_body = {})
        : Error("llm_gateway", kind_name(kind), message), kind_(kind), raw_body_(std::move(raw_body)) {}

    Kind gateway_kind() const noexcept { return kind_; }
    const std::string& raw_body() const noexcept { return raw_body_; }

    static const char* kind_name(Kind k) {
        switch (k) {
            case Kind::auth: return "auth error";
            case Kind::rate_limit: return "rate limit exhausted";
            case Kind::server: return "server error";
            case Kind::transport: return "transport error";
            case Kind::malformed_response: return "malformed response";
            case Kind::rejected: return "request rejected";
            case Kind::replay_miss: return "replay miss";
            case Kind::config: return "config error";
        }
        return "gateway error";
    }

private:
    Kind kind_;
    std::string raw_body_;
};

/// Anything that turns a prompt into a completion with per-token distributions.
class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    virtual CompletionResult complete(const std::string& prompt, const CompletionParams& params) = 0;
    virtual std::string name() const = 0;
};

/// Rough whitespace-and-punctuation token count, used where a provider does
/// not report usage.
inline long long approximate_token_count(const std::string& text) {
    long long n = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            if (!in_word) ++n;
            in_word = true;
        } else {
            in_word = false;
            if (!std::isspace(c)) ++n;
        }
    }
    return n;
}

}  // namespace llmrl::llm
