#pragma once

#include <cmath>
#include <fstream>
#include <regex>
#include <span>
#include <string>
#include <vector>

#include "llmrl/core/csv.hpp"
#include "llmrl/signal/strategy.hpp"

namespace llmrl {

inline constexpr std::size_t kTopK = 5;
inline constexpr double kCertaintyFloor = 0.01;  // epsilon in the certainty blend

/// Top-k next-token probabilities at one generated position, plus the mass
/// outside the top-k.
struct TokenDistribution {
    std::string token;            // the chosen token text
    double chosen_logprob = 0.0;  // log-probability of the chosen token
    std::vector<double> top;      // top-k probabilities, k <= 5
    double tail = 0.0;            // 1 - sum(top)

    void validate(double tol = 1e-9) const {
        double sum = tail;
        if (!(tail >= 0.0 && tail <= 1.0)) throw ArgumentError("signal_math", "tail probability outside [0,1]");
        for (double p : top) {
            if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("signal_math", "token probability outside [0,1]");
            sum += p;
        }
        if (std::abs(sum - 1.0) > tol) throw ArgumentError("signal_math", "top-k plus tail mass does not sum to 1");
    }
};

/// exp(-mean(logprobs)).
inline double perplexity(std::span<const double> token_logprobs) {
    if (token_logprobs.empty()) throw ArgumentError("signal_math", "perplexity of an empty sequence");
    double sum = 0.0;
    for (double lp : token_logprobs) {
        if (!(lp <= 0.0)) throw ArgumentError("signal_math", "log-probability must be <= 0");
        sum += lp;
    }
    return std::exp(-sum / static_cast<double>(token_logprobs.size()));
}

inline double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

/// Mean per-token entropy (nats) over the top-k buckets plus one tail bucket,
/// with 0 ln 0 = 0.
inline double truncated_entropy(std::span<const TokenDistribution> dists) {
    if (dists.empty()) throw ArgumentError("signal_math", "entropy of an empty token sequence");
    double total = 0.0;
    for (const auto& d : dists) {
        d.validate();
        double h = -plogp(d.tail);
        for (double p : d.top) h -= plogp(p);
        total += h;
    }
    return total / static_cast<double>(dists.size());
}

/// H_raw / ln(k + 1), clamped to 1.
inline double normalize_entropy(double h_raw, std::size_t k = kTopK) {
    if (!(h_raw >= 0.0)) throw ArgumentError("signal_math", "entropy must be non-negative");
    return std::min(1.0, h_raw / std::log(static_cast<double>(k + 1)));
}

inline double confidence_weight(int likert) {
    if (likert < 1 || likert > 3) throw ArgumentError("signal_math", "Likert confidence outside {1,2,3}");
    return likert / 3.0;
}

/// C = eps + (1 - eps)(1 - H_norm).
inline double certainty(double h_norm) {
    if (!(h_norm >= 0.0 && h_norm <= 1.0)) throw ArgumentError("signal_math", "normalized entropy outside [0,1]");
    return kCertaintyFloor + (1.0 - kCertaintyFloor) * (1.0 - h_norm);
}

inline double signal_strength(int likert, double h_norm) { return confidence_weight(likert) * certainty(h_norm); }

/// tau = (2 dir - 1) * strength.
inline double interaction_term(Direction direction, double strength) {
    return (direction == Direction::long_ ? 1.0 : -1.0) * strength;
}

/// Which scalar goes into the observation. `tau` is the entropy-weighted form;
/// the others are the earlier ablation variants.
enum class SignalMode { off, dir_only, conf_dir, tau };

inline const char* to_string(SignalMode m) {
    switch (m) {
        case SignalMode::off: return "off";
        case SignalMode::dir_only: return "dir_only";
        case SignalMode::conf_dir: return "conf_dir";
        case SignalMode::tau: return "tau";
    }
    return "off";
}

inline SignalMode parse_signal_mode(std::string_view s) {
    if (s == "off") return SignalMode::off;
    if (s == "dir_only") return SignalMode::dir_only;
    if (s == "conf_dir") return SignalMode::conf_dir;
    if (s == "tau") return SignalMode::tau;
    throw ArgumentError("signal_math", "unknown signal mode '" + std::string(s) + "'");
}

struct SignalFeature {
    Date date{};
    int dir = 1;  // remapped: -1 SHORT, +1 LONG
    int likert = 1;
    double mu_conf = 1.0 / 3.0;
    double h_norm = 0.0;
    double certainty = 1.0;
    double strength = 1.0 / 3.0;
    double tau = 1.0 / 3.0;

    /// Observation scalar under the given mode.
    double value(SignalMode mode) const {
        switch (mode) {
            case SignalMode::off: return 0.0;
            case SignalMode::dir_only: return static_cast<double>(dir);
            case SignalMode::conf_dir: return dir * mu_conf;
            case SignalMode::tau: return tau;
        }
        return 0.0;
    }
};

inline SignalFeature make_signal_feature(Date date, Direction direction, int likert, double h_norm) {
    SignalFeature s;
    s.date = date;
    s.dir = direction == Direction::long_ ? 1 : -1;
    s.likert = likert;
    s.mu_conf = confidence_weight(likert);
    s.h_norm = h_norm;
    s.certainty = certainty(h_norm);
    s.strength = s.mu_conf * s.certainty;
    s.tau = interaction_term(direction, s.strength);
    return s;
}

/// Token positions covering the values of "action" and "action_confidence",
/// found by matching the concatenated token texts against the completion.
/// Returns an empty list when the tokens do not reconstruct the text or the
/// fields are absent; callers then fall back to the whole completion.
inline std::vector<std::size_t> decision_token_positions(const std::string& text,
                                                         std::span<const TokenDistribution> tokens) {
    std::string joined;
    std::vector<std::size_t> starts;
    for (const auto& t : tokens) {
        starts.push_back(joined.size());
        joined += t.token;
    }
    if (joined != text) return {};
    static const std::regex action_re(R"re("action"\s*:\s*"(LONG|SHORT)")re");
    static const std::regex conf_re(R"re("action_confidence"\s*:\s*([0-9]+))re");
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::smatch m;
    if (std::regex_search(text, m, action_re)) {
        ranges.emplace_back(m.position(1), m.position(1) + m.length(1));
    }
    if (std::regex_search(text, m, conf_re)) {
        ranges.emplace_back(m.position(1), m.position(1) + m.length(1));
    }
    if (ranges.size() != 2) return {};
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::size_t b = starts[i], e = starts[i] + tokens[i].token.size();
        for (const auto& [rb, re] : ranges) {
            if (b < re && rb < e) {
                out.push_back(i);
                break;
            }
        }
    }
    return out;
}

/// Normalized entropy of the decision tokens, or of the whole completion when
/// the decision span cannot be located.
inline double decision_entropy(const std::string& text, std::span<const TokenDistribution> tokens) {
    auto positions = decision_token_positions(text, tokens);
    if (positions.empty()) return normalize_entropy(truncated_entropy(tokens));
    std::vector<TokenDistribution> subset;
    for (auto i : positions) subset.push_back(tokens[i]);
    return normalize_entropy(truncated_entropy(subset));
}

/// CSV columns: date,dir,likert,H_norm,C,strength,tau (dir is -1/+1).
inline void write_signals_csv(std::span<const SignalFeature> signals, std::ostream& out) {
    out << "date,dir,likert,H_norm,C,strength,tau\n";
    for (const auto& s : signals) {
        out << format_date(s.date) << ',' << s.dir << ',' << s.likert << ',' << format_double(s.h_norm) << ','
            << format_double(s.certainty) << ',' << format_double(s.strength) << ',' << format_double(s.tau) << '\n';
    }
}

inline std::vector<SignalFeature> read_signals_csv(const std::string& path) {
    auto table = csv::read_file(path);
    for (const char* c : {"date", "dir", "likert", "H_norm", "C", "strength", "tau"}) {
        if (table.find(c) < 0) throw SchemaError("signal_math", path + ": missing column '" + c + "'");
    }
    std::vector<SignalFeature> out;
    for (const auto& r : table.rows) {
        SignalFeature s;
        s.date = parse_date(r[table.find("date")]);
        s.dir = static_cast<int>(parse_double(r[table.find("dir")]));
        if (s.dir != 1 && s.dir != -1) throw SchemaError("signal_math", path + ": dir must be -1 or +1");
        s.likert = static_cast<int>(parse_double(r[table.find("likert")]));
        s.mu_conf = confidence_weight(s.likert);
        s.h_norm = parse_double(r[table.find("H_norm")]);
        s.certainty = parse_double(r[table.find("C")]);
        s.strength = parse_double(r[table.find("strength")]);
        s.tau = parse_double(r[table.find("tau")]);
        out.push_back(s);
    }
    return out;
}

}  // namespace llmrl
