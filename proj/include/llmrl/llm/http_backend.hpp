#pragma once

#include <chrono>
#include <cstdlib>
#include <functional>
#include <regex>
#include <string>
#include <thread>

#include <httplib.h>
// httplib pulls in <resolv.h>, whose _res macro breaks Eigen if included later.
#ifdef _res
#undef _res
#endif
#include <nlohmann/json.hpp>

#include "llmrl/llm/completion.hpp"

namespace llmrl::llm {

struct HttpResponse {
    int status = 0;  // 0: the request never completed
    std::string body;
    std::string error;
};

/// Sends one JSON body and returns the raw response.
using Transport = std::function<HttpResponse(const std::string& body)>;

struct HttpConfig {
    std::string url = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4o";
    std::string api_key_env = "LLMRL_API_KEY";  // name of the variable holding the credential
    int max_retries = 4;
    double initial_backoff_seconds = 1.0;
    double backoff_multiplier = 2.0;
    int timeout_seconds = 120;
};

/// Request body for an OpenAI-style chat completion with top-5 logprobs.
inline nlohmann::json chat_request(const HttpConfig& cfg, const std::string& prompt, const CompletionParams& p) {
    nlohmann::json j = {{"model", cfg.model},
                        {"messages", {{{"role", "user"}, {"content", prompt}}}},
                        {"temperature", p.temperature},
                        {"frequency_penalty", p.frequency_penalty},
                        {"presence_penalty", p.presence_penalty},
                        {"logprobs", true},
                        {"top_logprobs", p.top_logprobs},
                        {"max_tokens", p.max_tokens}};
    if (p.seed) j["seed"] = *p.seed;
    return j;
}

/// Parses a chat-completion response body into text, token distributions
/// and usage. Anything that does not fit the schema is a malformed response.
inline CompletionResult parse_chat_response(const std::string& body) {
    using K = GatewayError::Kind;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        throw GatewayError(K::malformed_response, "provider response is not JSON", body);
    }
    try {
        CompletionResult r;
        const auto& choice = j.at("choices").at(0);
        r.text = choice.at("message").at("content").get<std::string>();
        if (choice.contains("logprobs") && !choice["logprobs"].is_null()) {
            for (const auto& t : choice["logprobs"].at("content")) {
                TokenDistribution d;
                d.token = t.at("token").get<std::string>();
                d.chosen_logprob = std::min(0.0, t.at("logprob").get<double>());
                double sum = 0.0;
                for (const auto& alt : t.value("top_logprobs", nlohmann::json::array())) {
                    if (d.top.size() == kTopK) break;
                    const double p = std::exp(std::min(0.0, alt.at("logprob").get<double>()));
                    d.top.push_back(p);
                    sum += p;
                }
                if (d.top.empty()) {
                    d.top.push_back(std::exp(d.chosen_logprob));
                    sum = d.top[0];
                }
                // Rounded logprobs can overshoot 1 by a hair; renormalize then.
                if (sum > 1.0) {
                    for (double& p : d.top) p /= sum;
                    sum = 1.0;
                }
                d.tail = std::max(0.0, 1.0 - sum);
                r.tokens.push_back(std::move(d));
            }
        }
        if (j.contains("usage")) {
            r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0LL);
            r.usage.completion_tokens = j["usage"].value("completion_tokens", 0LL);
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw GatewayError(K::malformed_response, std::string("unexpected response shape: ") + e.what(), body);
    }
}

/// Default transport over cpp-httplib. The credential is read from the
/// environment at call time and never stored.
inline Transport httplib_transport(const HttpConfig& cfg) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg.url, m, url_re)) {
        throw GatewayError(GatewayError::Kind::config, "endpoint URL '" + cfg.url + "' is not http(s)://host/path");
    }
    const std::string host = m[1].str();
    const std::string path = m[2].matched ? m[2].str() : "/";
    return [cfg, host, path](const std::string& body) {
        const char* key = std::getenv(cfg.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw GatewayError(GatewayError::Kind::auth, "environment variable " + cfg.api_key_env + " is not set");
        }
        httplib::Client client(host);
        client.set_connection_timeout(cfg.timeout_seconds, 0);
        client.set_read_timeout(cfg.timeout_seconds, 0);
        httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) return HttpResponse{0, {}, httplib::to_string(res.error())};
        return HttpResponse{res->status, res->body, {}};
    };
}

/// Chat-completion backend with exponential backoff on 429, 5xx and
/// transport failures.
class HttpBackend : public CompletionBackend {
public:
    using Sleeper = std::function<void(double seconds)>;

    explicit HttpBackend(HttpConfig cfg, Transport transport = {}, Sleeper sleeper = {})
        : cfg_(std::move(cfg)),
          transport_(transport ? std::move(transport) : httplib_transport(cfg_)),
          sleep_(sleeper ? std::move(sleeper) : [](double s) {
              std::this_thread::sleep_for(std::chrono::duration<double>(s));
          }) {}

    std::string name() const override { return "http:" + cfg_.model; }

    /// Retries performed by the most recent call on this thread of control.
    int last_retries() const noexcept { return last_retries_; }

    CompletionResult complete(const std::string& prompt, const CompletionParams& params) override {
        using K = GatewayError::Kind;
        const std::string body = chat_request(cfg_, prompt, params).dump();
        double delay = cfg_.initial_backoff_seconds;
        HttpResponse last;
        int retries = 0;
        for (int attempt = 0;; ++attempt) {
            last = transport_(body);
            if (last.status >= 200 && last.status < 300) {
                last_retries_ = retries;
                return parse_chat_response(last.body);
            }
            if (last.status == 401 || last.status == 403) {
                throw GatewayError(K::auth, "provider rejected the credential (HTTP " + std::to_string(last.status) + ")",
                                   last.body);
            }
            const bool transient = last.status == 0 || last.status == 429 || last.status >= 500;
            if (!transient) {
                throw GatewayError(K::rejected, "HTTP " + std::to_string(last.status), last.body);
            }
            if (attempt >= cfg_.max_retries) break;
            sleep_(delay);
            delay *= cfg_.backoff_multiplier;
            ++retries;
        }
        last_retries_ = retries;
        const std::string tries = " after " + std::to_string(retries) + " retries";
        if (last.status == 429) throw GatewayError(K::rate_limit, "HTTP 429" + tries, last.body);
        if (last.status == 0) throw GatewayError(K::transport, last.error + tries, last.body);
        throw GatewayError(K::server, "HTTP " + std::to_string(last.status) + tries, last.body);
    }

private:
    HttpConfig cfg_;
    Transport transport_;
    Sleeper sleep_;
    int last_retries_ = 0;
};

}  // namespace llmrl::llm
