#pragma once

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "llmrl/llm/completion.hpp"

namespace llmrl::llm {

/// Cumulative token counts per (instrument, prompt version).
class UsageLedger {
public:
    using Key = std::pair<std::string, std::string>;

    void record(const Key& key, const Usage& u) {
        auto& t = totals_[key];
        t.prompt_tokens += u.prompt_tokens;
        t.completion_tokens += u.completion_tokens;
        ++calls_[key];
    }

    void merge(const UsageLedger& other) {
        for (const auto& [k, u] : other.totals_) {
            auto& t = totals_[k];
            t.prompt_tokens += u.prompt_tokens;
            t.completion_tokens += u.completion_tokens;
        }
        for (const auto& [k, n] : other.calls_) calls_[k] += n;
    }

    Usage totals(const Key& key) const {
        auto it = totals_.find(key);
        return it == totals_.end() ? Usage{} : it->second;
    }

    long long calls(const Key& key) const {
        auto it = calls_.find(key);
        return it == calls_.end() ? 0 : it->second;
    }

    Usage grand_total() const {
        Usage g;
        for (const auto& [k, u] : totals_) {
            g.prompt_tokens += u.prompt_tokens;
            g.completion_tokens += u.completion_tokens;
        }
        return g;
    }

    const std::map<Key, Usage>& entries() const noexcept { return totals_; }

    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& [k, u] : totals_) {
            j.push_back({{"instrument", k.first},
                         {"prompt_version", k.second},
                         {"calls", calls(k)},
                         {"prompt_tokens", u.prompt_tokens},
                         {"completion_tokens", u.completion_tokens}});
        }
        return j;
    }

    static UsageLedger from_json(const nlohmann::json& j) {
        UsageLedger l;
        try {
            for (const auto& e : j) {
                Key k{e.at("instrument").get<std::string>(), e.at("prompt_version").get<std::string>()};
                l.totals_[k] = {e.at("prompt_tokens").get<long long>(), e.at("completion_tokens").get<long long>()};
                l.calls_[k] = e.value("calls", 0LL);
            }
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("llm_gateway", std::string("malformed usage ledger: ") + e.what());
        }
        return l;
    }

    friend bool operator==(const UsageLedger& a, const UsageLedger& b) {
        return a.totals_ == b.totals_ && a.calls_ == b.calls_;
    }

private:
    std::map<Key, Usage> totals_;
    std::map<Key, long long> calls_;
};

/// Key under which a transcript entry is stored and replayed.
inline std::string transcript_key(const std::string& prompt, const CompletionParams& p) {
    return hex64(fnv1a64(to_json(p).dump(), fnv1a64(prompt)));
}

/// Serves completions from recorded transcripts (JSON lines written by the
/// gateway). A prompt that was never recorded is a replay miss.
class ReplayBackend : public CompletionBackend {
public:
    explicit ReplayBackend(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw GatewayError(GatewayError::Kind::config, "cannot open transcript file " + path);
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            try {
                auto j = nlohmann::json::parse(line);
                entries_.emplace(j.at("key").get<std::string>(), result_from_json(j.at("result")));
            } catch (const nlohmann::json::exception& e) {
                throw GatewayError(GatewayError::Kind::malformed_response,
                                   std::string("bad transcript line: ") + e.what(), line);
            }
        }
    }

    std::string name() const override { return "replay"; }

    CompletionResult complete(const std::string& prompt, const CompletionParams& params) override {
        auto it = entries_.find(transcript_key(prompt, params));
        if (it == entries_.end()) throw GatewayError(GatewayError::Kind::replay_miss, "prompt not in transcripts");
        return it->second;
    }

private:
    std::map<std::string, CompletionResult> entries_;
};

struct GatewayConfig {
    std::size_t max_in_flight = 4;
    double requests_per_second = 0.0;  // 0: no rate limit
    double burst = 1.0;
    std::string transcript_path;  // empty: no transcripts
};

/// Thread-safe front door to a backend: bounds in-flight calls, applies a
/// token-bucket rate limit, records usage and appends transcripts.
class Gateway {
public:
    Gateway(std::shared_ptr<CompletionBackend> backend, GatewayConfig cfg = {})
        : backend_(std::move(backend)), cfg_(std::move(cfg)), tokens_(cfg_.burst),
          refill_at_(std::chrono::steady_clock::now()) {
        if (!backend_) throw GatewayError(GatewayError::Kind::config, "no completion backend configured");
        if (cfg_.max_in_flight == 0) throw GatewayError(GatewayError::Kind::config, "concurrency limit must be positive");
        if (!cfg_.transcript_path.empty()) {
            transcript_.open(cfg_.transcript_path, std::ios::app);
            if (!transcript_) throw GatewayError(GatewayError::Kind::config, "cannot write " + cfg_.transcript_path);
        }
    }

    CompletionResult complete(const std::string& prompt, const CompletionParams& params,
                              const std::string& instrument = "", const std::string& prompt_version = "") {
        acquire_slot();
        struct Release {
            Gateway* g;
            ~Release() { g->release_slot(); }
        } release{this};
        wait_for_token();
        CompletionResult r = backend_->complete(prompt, params);
        for (const auto& t : r.tokens) t.validate(1e-6);
        std::lock_guard lock(ledger_mutex_);
        ledger_.record({instrument, prompt_version}, r.usage);
        if (transcript_.is_open()) {
            nlohmann::json j = {{"key", transcript_key(prompt, params)},
                                {"instrument", instrument},
                                {"prompt_version", prompt_version},
                                {"params", to_json(params)},
                                {"prompt", prompt},
                                {"result", to_json(r)}};
            transcript_ << j.dump() << '\n';
            transcript_.flush();
        }
        return r;
    }

    UsageLedger ledger() const {
        std::lock_guard lock(ledger_mutex_);
        return ledger_;
    }

    CompletionBackend& backend() noexcept { return *backend_; }
    std::size_t peak_in_flight() const {
        std::lock_guard lock(slot_mutex_);
        return peak_;
    }

private:
    void acquire_slot() {
        std::unique_lock lock(slot_mutex_);
        slot_cv_.wait(lock, [&] { return in_flight_ < cfg_.max_in_flight; });
        ++in_flight_;
        peak_ = std::max(peak_, in_flight_);
    }

    void release_slot() {
        {
            std::lock_guard lock(slot_mutex_);
            --in_flight_;
        }
        slot_cv_.notify_one();
    }

    void wait_for_token() {
        if (cfg_.requests_per_second <= 0) return;
        for (;;) {
            std::chrono::duration<double> wait{0};
            {
                std::lock_guard lock(bucket_mutex_);
                const auto now = std::chrono::steady_clock::now();
                tokens_ = std::min(cfg_.burst, tokens_ + std::chrono::duration<double>(now - refill_at_).count() *
                                                             cfg_.requests_per_second);
                refill_at_ = now;
                if (tokens_ >= 1.0) {
                    tokens_ -= 1.0;
                    return;
                }
                wait = std::chrono::duration<double>((1.0 - tokens_) / cfg_.requests_per_second);
            }
            std::this_thread::sleep_for(wait);
        }
    }

    std::shared_ptr<CompletionBackend> backend_;
    GatewayConfig cfg_;

    mutable std::mutex slot_mutex_;
    std::condition_variable slot_cv_;
    std::size_t in_flight_ = 0, peak_ = 0;

    std::mutex bucket_mutex_;
    double tokens_;
    std::chrono::steady_clock::time_point refill_at_;

    mutable std::mutex ledger_mutex_;
    UsageLedger ledger_;
    std::ofstream transcript_;
};

}  // namespace llmrl::llm
