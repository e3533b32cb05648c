#pragma once

#include <cmath>
#include <deque>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrl/llm/completion.hpp"

namespace llmrl::llm {

/// Markers shared by the prompt tuner's writer/judge prompts and the stub.
namespace protocol {
inline constexpr const char* kWriterRole = "Role: Prompt_Writer";
inline constexpr const char* kJudgeRole = "Role: Prompt_Judge";
inline constexpr const char* kBaseBegin = "<<<BASE_PROMPT";
inline constexpr const char* kBaseEnd = "BASE_PROMPT>>>";
inline constexpr const char* kInstructionBullet = "- instruction: ";
inline constexpr const char* kAnalystMarker = "Monthly_News_Articles_List";
}  // namespace protocol

/// Splits text into word runs, whitespace runs and single punctuation
/// characters; the pieces concatenate back to the input.
inline std::vector<std::string> stub_tokenize(const std::string& text) {
    std::vector<std::string> out;
    auto cls = [](unsigned char c) { return (std::isalnum(c) || c == '_' || c >= 128) ? 0 : (std::isspace(c) ? 1 : 2); };
    std::size_t i = 0;
    while (i < text.size()) {
        const int k = cls(static_cast<unsigned char>(text[i]));
        std::size_t j = i + 1;
        if (k != 2) {
            while (j < text.size() && cls(static_cast<unsigned char>(text[j])) == k) ++j;
        }
        out.push_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

/// Entropy (nats) of the five-bucket family: one token with mass 1 - q and
/// four top-k runners-up plus the tail sharing q equally.
inline double stub_family_entropy(double q) { return -plogp(1.0 - q) - 5.0 * plogp(q / 5.0); }

/// Distribution from the family above whose entropy equals `h` nats,
/// h in [0, ln 6]. Found by bisection (the entropy is increasing in q on [0, 5/6]).
inline TokenDistribution stub_distribution(const std::string& token, double h) {
    h = std::clamp(h, 0.0, std::log(6.0));
    double lo = 0.0, hi = 5.0 / 6.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (stub_family_entropy(mid) < h ? lo : hi) = mid;
    }
    const double q = 0.5 * (lo + hi);
    TokenDistribution d;
    d.token = token;
    d.top = {1.0 - q, q / 5.0, q / 5.0, q / 5.0, q / 5.0};
    d.tail = 1.0 - (d.top[0] + 4.0 * (q / 5.0));
    if (d.tail < 0.0) d.tail = 0.0;
    d.chosen_logprob = std::log(d.top[0]);
    return d;
}

/// A pinned strategist decision the stub returns instead of a hashed one.
struct ScriptedDecision {
    Direction direction = Direction::long_;
    int likert = 3;
    double h_norm = 0.0;
};

/// Deterministic offline backend. Output depends only on the prompt bytes,
/// the request seed and the backend seed, except that scripted decisions
/// (if any) are handed out to strategist calls in call order.
class StubBackend : public CompletionBackend {
public:
    explicit StubBackend(std::uint64_t seed = 0) : seed_(seed) {}

    void script(std::vector<ScriptedDecision> decisions) {
        std::lock_guard lock(mutex_);
        script_.assign(decisions.begin(), decisions.end());
    }

    std::size_t scripted_remaining() const {
        std::lock_guard lock(mutex_);
        return script_.size();
    }

    std::string name() const override { return "stub"; }

    CompletionResult complete(const std::string& prompt, const CompletionParams& params) override {
        std::uint64_t state = fnv1a64(prompt) ^ (seed_ * 0x9e3779b97f4a7c15ULL) ^ params.seed.value_or(0);
        std::string text;
        std::vector<std::pair<std::string, double>> pinned;  // token text -> target entropy (normalized)
        if (prompt.find(protocol::kWriterRole) != std::string::npos) {
            text = writer_output(prompt, state);
        } else if (prompt.find(protocol::kJudgeRole) != std::string::npos) {
            text = judge_output(prompt, state);
        } else if (prompt.find(protocol::kAnalystMarker) != std::string::npos) {
            text = analyst_output(prompt, state);
        } else {
            ScriptedDecision d = next_decision(state);
            text = strategist_output(prompt, d, state);
            pinned = {{to_string(d.direction), d.h_norm}, {std::to_string(d.likert), d.h_norm}};
        }
        return finish(prompt, text, state, pinned);
    }

private:
    static double unit(std::uint64_t& state) { return (splitmix64(state) >> 11) * 0x1.0p-53; }

    ScriptedDecision next_decision(std::uint64_t& state) {
        {
            std::lock_guard lock(mutex_);
            if (!script_.empty()) {
                auto d = script_.front();
                script_.pop_front();
                return d;
            }
        }
        ScriptedDecision d;
        d.direction = (splitmix64(state) & 1) ? Direction::long_ : Direction::short_;
        d.likert = 1 + static_cast<int>(splitmix64(state) % 3);
        d.h_norm = 0.05 + 0.5 * unit(state);
        return d;
    }

    static std::vector<std::string> features_in(const std::string& prompt) {
        static const std::vector<std::string> known{
            "Close", "Volume", "20MA", "50MA", "200MA", "20MA_Slope", "RSI", "MACD", "Signal_Line", "MACD_Strength",
            "ATR", "HV_Close", "IV_Close", "Weekly_Past_Returns", "Beta", "EPS_YoY", "PE_Ratio", "Debt_to_Equity_Ratio",
            "SPX_Close_Slope", "VIX_Close_Slope", "GDP_QoQ", "PMI", "ATM_Skew", "News_Sentiment", "last_returns"};
        std::vector<std::string> out;
        for (const auto& f : known) {
            if (prompt.find(f + ":") != std::string::npos || prompt.find(f + "\":") != std::string::npos) {
                out.push_back(f);
            }
        }
        if (out.empty()) out.push_back("Close");
        return out;
    }

    static std::string strategist_output(const std::string& prompt, const ScriptedDecision& d, std::uint64_t& state) {
        auto pool = features_in(prompt);
        for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[splitmix64(state) % i]);
        pool.resize(std::min<std::size_t>(5, pool.size()));
        nlohmann::json features = nlohmann::json::array();
        std::ostringstream why;
        why << "The " << to_string(d.direction) << " view rests on";
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const int w = 1 + static_cast<int>(splitmix64(state) % 3);
            const bool agrees = splitmix64(state) % 4 != 0;
            const char* dir = agrees ? to_string(d.direction) : "NEUTRAL";
            features.push_back({{"feature", pool[i]}, {"direction", dir}, {"weight", w}});
            why << (i ? ", " : " ") << pool[i] << " (weight " << w << ")";
        }
        why << ". Confidence " << d.likert << " of 3.";
        nlohmann::json j = {{"action", to_string(d.direction)},
                            {"action_confidence", d.likert},
                            {"explanation", why.str()},
                            {"features_used", features}};
        return j.dump(2);
    }

    static std::string analyst_output(const std::string& prompt, std::uint64_t& state) {
        std::vector<std::string> lines;
        const auto b = prompt.find(protocol::kAnalystMarker);
        const auto e = prompt.find("System_Context", b);
        std::istringstream in(prompt.substr(b, e == std::string::npos ? std::string::npos : e - b));
        std::string line;
        std::getline(in, line);  // the marker line itself
        while (std::getline(in, line)) {
            auto t = trim(line);
            while (!t.empty() && (t.front() == '"' || t.front() == '-' || t.front() == ' ')) t.erase(t.begin());
            while (!t.empty() && t.back() == '"') t.pop_back();
            if (!t.empty()) lines.push_back(t);
        }
        nlohmann::json factors = nlohmann::json::array();
        for (std::size_t k = 0; k < 3; ++k) {
            std::string src = lines.empty() ? "No material news" : lines[k % lines.size()];
            std::istringstream words(src);
            std::string w, summary;
            for (int n = 0; n < 20 && words >> w; ++n) summary += (summary.empty() ? "" : " ") + w;
            const int sentiment = static_cast<int>(splitmix64(state) % 3) - 1;
            const int impact = 1 + static_cast<int>(splitmix64(state) % 3);
            factors.push_back({{"factor", summary}, {"sentiment", sentiment}, {"market_impact", impact}});
        }
        return nlohmann::json{{"factors", factors}}.dump(2);
    }

    /// Returns the base prompt with the listed instructions appended as an
    /// extra guideline block before the Output section.
    static std::string writer_output(const std::string& prompt, std::uint64_t& state) {
        const auto b = prompt.find(protocol::kBaseBegin);
        const auto e = prompt.find(protocol::kBaseEnd);
        if (b == std::string::npos || e == std::string::npos || e < b) return "No base prompt supplied.";
        auto base_start = prompt.find('\n', b);
        std::string base = prompt.substr(base_start + 1, e - base_start - 1);
        std::vector<std::string> instructions;
        std::istringstream in(prompt);
        std::string line;
        const std::string bullet = protocol::kInstructionBullet;
        while (std::getline(in, line)) {
            auto t = trim(line);
            if (t.rfind(bullet, 0) == 0) instructions.push_back(t.substr(bullet.size()));
        }
        std::ostringstream block;
        block << "    Candidate_Guidelines (variant " << hex64(splitmix64(state)).substr(0, 6) << "):\n";
        for (const auto& i : instructions) {
            std::string clean;
            for (char c : i) {
                if (c != '{' && c != '}') clean += c;
            }
            block << "      - " << clean << "\n";
        }
        block << "\n";
        auto out_pos = base.rfind("\nOutput:");
        if (out_pos == std::string::npos) return base + "\n" + block.str();
        return base.substr(0, out_pos + 1) + block.str() + base.substr(out_pos + 1);
    }

    static std::string judge_output(const std::string&, std::uint64_t& state) {
        static const std::vector<std::string> notes{
            "Weight trend confirmation across the moving averages more heavily.",
            "Reduce reliance on a single oscillator reading.",
            "Require agreement between momentum and volatility before high confidence.",
            "Reflect on the prior strategy outcome before restating the view.",
            "Use macro risk-on and risk-off conditions to temper confidence."};
        std::ostringstream out;
        out << "Critique: the candidate's rationale is partially supported. Suggestion: "
            << notes[splitmix64(state) % notes.size()];
        return out.str();
    }

    static CompletionResult finish(const std::string& prompt, const std::string& text, std::uint64_t& state,
                                   const std::vector<std::pair<std::string, double>>& pinned) {
        CompletionResult r;
        r.text = text;
        const double ln6 = std::log(6.0);
        // Pinned values are located as the first matching token after the
        // field names, which is where the decision regex will look.
        std::size_t action_pos = std::string::npos, conf_pos = std::string::npos;
        if (!pinned.empty()) {
            action_pos = text.find("\"action\"");
            conf_pos = text.find("\"action_confidence\"");
        }
        bool action_done = false, conf_done = false;
        std::size_t offset = 0;
        for (const auto& tok : stub_tokenize(text)) {
            double h = (0.01 + 0.3 * unit(state)) * ln6;
            if (!pinned.empty()) {
                if (!action_done && offset > action_pos && tok == pinned[0].first) {
                    h = pinned[0].second * ln6;
                    action_done = true;
                } else if (!conf_done && offset > conf_pos && tok == pinned[1].first) {
                    h = pinned[1].second * ln6;
                    conf_done = true;
                }
            }
            r.tokens.push_back(stub_distribution(tok, h));
            offset += tok.size();
        }
        r.usage.prompt_tokens = approximate_token_count(prompt);
        r.usage.completion_tokens = static_cast<long long>(r.tokens.size());
        return r;
    }

    std::uint64_t seed_;
    mutable std::mutex mutex_;
    std::deque<ScriptedDecision> script_;
};

}  // namespace llmrl::llm
