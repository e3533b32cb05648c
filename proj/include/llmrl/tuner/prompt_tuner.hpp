#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrl/llm/completion.hpp"
#include "llmrl/llm/prompts.hpp"
#include "llmrl/llm/stub_backend.hpp"

namespace llmrl::tuner {

inline constexpr const char* kModule = "prompt_tuner";
inline constexpr double kMinimumTarget = 0.8;
inline constexpr std::size_t kMaxInstructions = 10;

struct KbEntry {
    std::size_t iteration = 0;
    std::string prompt;
    std::vector<std::string> features;
    std::vector<std::string> instructions;
    std::optional<double> sr;  // empty when the backtest failed
    std::string critique;
    std::string failure;       // failure message, empty on success

    bool ok() const { return sr.has_value(); }
};

inline nlohmann::json to_json(const KbEntry& e) {
    return {{"iteration", e.iteration},
            {"prompt", e.prompt},
            {"features", e.features},
            {"instructions", e.instructions},
            {"sr", e.sr ? nlohmann::json(*e.sr) : nlohmann::json(nullptr)},
            {"critique", e.critique},
            {"failure", e.failure}};
}

inline KbEntry kb_entry_from_json(const nlohmann::json& j) {
    KbEntry e;
    try {
        e.iteration = j.at("iteration").get<std::size_t>();
        e.prompt = j.at("prompt").get<std::string>();
        e.features = j.value("features", std::vector<std::string>{});
        e.instructions = j.value("instructions", std::vector<std::string>{});
        if (j.contains("sr") && !j["sr"].is_null()) e.sr = j["sr"].get<double>();
        e.critique = j.value("critique", std::string{});
        e.failure = j.value("failure", std::string{});
    } catch (const nlohmann::json::exception& ex) {
        throw SchemaError(kModule, std::string("malformed knowledge-base entry: ") + ex.what());
    }
    return e;
}

/// Append-only record of every tuning iteration.
class KnowledgeBase {
public:
    void append(KbEntry e) {
        if (!entries_.empty() && e.iteration <= entries_.back().iteration) {
            throw ArgumentError(kModule, "knowledge-base iterations must be strictly increasing");
        }
        entries_.push_back(std::move(e));
    }

    const std::vector<KbEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t next_iteration() const { return entries_.empty() ? 1 : entries_.back().iteration + 1; }

    void write_ndjson(std::ostream& out) const {
        for (const auto& e : entries_) out << to_json(e).dump() << '\n';
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw ArgumentError(kModule, "cannot write " + path);
        write_ndjson(out);
    }

    static KnowledgeBase load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ArgumentError(kModule, "cannot read " + path);
        KnowledgeBase kb;
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            try {
                kb.append(kb_entry_from_json(nlohmann::json::parse(line)));
            } catch (const nlohmann::json::parse_error& e) {
                throw SchemaError(kModule, path + ": " + e.what());
            }
        }
        return kb;
    }

private:
    std::vector<KbEntry> entries_;
};

/// Best and worst successful entries.
struct ExtremesMemory {
    std::optional<KbEntry> best;
    std::optional<KbEntry> worst;
};

/// Scans the KB; ties keep the earliest entry.
inline ExtremesMemory extremes(const KnowledgeBase& kb) {
    ExtremesMemory m;
    for (const auto& e : kb.entries()) {
        if (!e.ok()) continue;
        if (!m.best || *e.sr > *m.best->sr) m.best = e;
        if (!m.worst || *e.sr < *m.worst->sr) m.worst = e;
    }
    return m;
}

struct RegretState {
    double v_star = kMinimumTarget;
    std::vector<double> history;  // SR of each successful candidate
    std::size_t t_max = 3;
};

/// V* = max(baseline SR, 0.8).
inline RegretState make_regret_state(double baseline_sr, std::size_t t_max = 3) {
    if (t_max == 0) throw ArgumentError(kModule, "at least one tuning iteration is required");
    return {std::max(baseline_sr, kMinimumTarget), {}, t_max};
}

/// Sum of shortfalls V* - V_t over the history.
inline double regret(const RegretState& s) {
    double r = 0.0;
    for (double v : s.history) r += s.v_star - v;
    return r;
}

/// Features whose mean importance reaches the 75th percentile (linear
/// interpolation) of all mean importances.
inline std::vector<std::string> select_features(const std::vector<std::pair<std::string, int>>& rankings) {
    if (rankings.empty()) throw ArgumentError(kModule, "no feature rankings to select from");
    std::vector<std::string> order;
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& [f, w] : rankings) {
        if (w < 1 || w > 3) throw ArgumentError(kModule, "importance must be a Likert score in 1..3");
        if (!acc.count(f)) order.push_back(f);
        acc[f].first += w;
        acc[f].second += 1;
    }
    std::vector<double> means;
    for (const auto& f : order) means.push_back(acc[f].first / acc[f].second);
    std::vector<double> sorted = means;
    std::sort(sorted.begin(), sorted.end());
    const double pos = 0.75 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double cut = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (means[i] >= cut - 1e-12) out.push_back(order[i]);
    }
    return out;
}

/// Lowercase, punctuation stripped (decimal points kept), whitespace collapsed.
inline std::string normalize_text(const std::string& s) {
    std::string out;
    bool space = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto c = static_cast<unsigned char>(s[i]);
        const bool decimal_point = c == '.' && i > 0 && i + 1 < s.size() &&
                                   std::isdigit(static_cast<unsigned char>(s[i - 1])) &&
                                   std::isdigit(static_cast<unsigned char>(s[i + 1]));
        if (std::isalnum(c) || c == '_' || c >= 128 || decimal_point) {
            if (space && !out.empty()) out += ' ';
            space = false;
            out += static_cast<char>(std::tolower(c));
        } else {
            space = true;
        }
    }
    return out;
}

inline std::set<std::string> token_set(const std::string& normalized) {
    std::istringstream in(normalized);
    std::set<std::string> out;
    std::string w;
    while (in >> w) out.insert(w);
    return out;
}

/// 1 - |A ∩ B| / |A ∪ B|; two empty sets are identical.
inline double jaccard_distance(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& w : a) inter += b.count(w);
    const std::size_t uni = a.size() + b.size() - inter;
    return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

/// Deduplicates rationales by normalized text, then picks up to `limit`
/// representatives greedily: the first unique rationale seeds the set and
/// each next pick maximizes its minimum token-overlap distance to the picks
/// so far (earliest wins ties). Candidates at distance 0 count as duplicates.
inline std::vector<std::string> distill_instructions(const std::vector<std::string>& rationales,
                                                     std::size_t limit = kMaxInstructions) {
    if (rationales.empty()) throw ArgumentError(kModule, "no rationales to distill");
    std::vector<std::string> unique;
    std::vector<std::set<std::string>> tokens;
    std::set<std::string> seen;
    for (const auto& r : rationales) {
        auto n = normalize_text(r);
        if (n.empty() || !seen.insert(n).second) continue;
        unique.push_back(trim(r));
        tokens.push_back(token_set(n));
    }
    std::vector<std::string> out;
    if (unique.empty()) return out;
    std::vector<double> min_dist(unique.size(), std::numeric_limits<double>::infinity());
    std::vector<bool> taken(unique.size(), false);
    std::size_t pick = 0;
    while (out.size() < limit) {
        taken[pick] = true;
        out.push_back(unique[pick]);
        for (std::size_t i = 0; i < unique.size(); ++i) {
            if (!taken[i]) min_dist[i] = std::min(min_dist[i], jaccard_distance(tokens[i], tokens[pick]));
        }
        std::optional<std::size_t> next;
        for (std::size_t i = 0; i < unique.size(); ++i) {
            if (taken[i] || min_dist[i] <= 0.0) continue;
            if (!next || min_dist[i] > min_dist[*next]) next = i;
        }
        if (!next) break;
        pick = *next;
    }
    return out;
}

// ---------------------------------------------------------------- the loop

struct TuneInputs {
    std::string base_prompt;
    std::vector<std::string> features;
    std::vector<std::string> instructions;
};

struct TuneConfig {
    llm::CompletionParams params = llm::tuning_params();
};

struct TuneResult {
    std::string best_prompt;
    ExtremesMemory extremes;
    RegretState state;
    KnowledgeBase kb;
    std::vector<double> regret_trace;  // regret after each iteration
    std::size_t iterations = 0;
    bool early_stop = false;
};

inline std::string prompt_sr(const KbEntry& e) { return e.sr ? llm::prompt_number(*e.sr) : "failed"; }

inline std::string describe_entry(const char* label, const std::optional<KbEntry>& e) {
    std::ostringstream out;
    out << label << ":\n";
    if (!e) {
        out << "  none yet\n";
        return out.str();
    }
    out << "  iteration: " << e->iteration << "\n  sharpe_ratio: " << prompt_sr(*e) << "\n  features: ";
    for (std::size_t i = 0; i < e->features.size(); ++i) out << (i ? ", " : "") << e->features[i];
    out << "\n  instructions:\n";
    for (const auto& i : e->instructions) out << "    * " << i << "\n";
    out << "  judge_critique: " << e->critique << "\n";
    return out.str();
}

/// Writer request: the base prompt, the retained features and instructions,
/// and the extremes memory (never the full knowledge base).
inline std::string writer_prompt(const std::string& base, const TuneInputs& in, const ExtremesMemory& mem) {
    std::ostringstream out;
    out << llm::protocol::kWriterRole << "\n"
        << "Task: rewrite the base strategy prompt into a candidate that keeps every placeholder valid, "
           "emphasizes the selected features and folds in the instructions below.\n"
        << "Selected_Features: ";
    for (std::size_t i = 0; i < in.features.size(); ++i) out << (i ? ", " : "") << in.features[i];
    out << "\nInstructions:\n";
    for (const auto& i : in.instructions) out << llm::protocol::kInstructionBullet << i << "\n";
    out << "Extremes_Memory:\n" << describe_entry("best", mem.best) << describe_entry("worst", mem.worst);
    out << llm::protocol::kBaseBegin << "\n" << base << llm::protocol::kBaseEnd << "\n";
    return out.str();
}

inline std::string judge_prompt(const std::string& candidate, const std::optional<double>& sr) {
    std::ostringstream out;
    out << llm::protocol::kJudgeRole << "\n"
        << "Task: assess the candidate prompt's rationale and suggest alternative instructions or feature "
           "combinations for the next iteration.\n"
        << "Backtest_Sharpe_Ratio: " << (sr ? llm::prompt_number(*sr) : "failed") << "\n"
        << "Candidate:\n" << candidate << "\n";
    return out.str();
}

using Backtest = std::function<double(const std::string& prompt)>;

/// Writer-judge regret loop. Stops after state.t_max iterations, or early
/// once regret <= 0 or a candidate beats V*. A failed backtest is recorded
/// in the KB with its failure message and left out of the extremes.
inline TuneResult tune(llm::CompletionBackend& writer, llm::CompletionBackend& judge, const Backtest& backtest,
                       RegretState state, KnowledgeBase kb, const TuneInputs& in, const TuneConfig& cfg = {}) {
    if (state.t_max == 0) throw ArgumentError(kModule, "at least one tuning iteration is required");
    if (!backtest) throw ArgumentError(kModule, "no backtest callable");
    TuneResult res;
    for (std::size_t t = 0; t < state.t_max; ++t) {
        const auto mem = extremes(kb);
        const std::string base = mem.best ? mem.best->prompt : in.base_prompt;
        KbEntry entry;
        entry.iteration = kb.next_iteration();
        entry.features = in.features;
        entry.instructions = in.instructions;
        entry.prompt = writer.complete(writer_prompt(base, in, mem), cfg.params).text;
        try {
            llm::validate_strategist_template(entry.prompt);
            entry.sr = backtest(entry.prompt);
        } catch (const std::exception& e) {
            entry.failure = e.what();
        }
        entry.critique = judge.complete(judge_prompt(entry.prompt, entry.sr), cfg.params).text;
        const bool beat_target = entry.sr && *entry.sr > state.v_star;
        if (entry.sr) state.history.push_back(*entry.sr);
        kb.append(entry);
        res.regret_trace.push_back(regret(state));
        ++res.iterations;
        if (entry.sr && (regret(state) <= 0.0 || beat_target)) {
            res.early_stop = t + 1 < state.t_max;
            break;
        }
    }
    res.extremes = extremes(kb);
    res.best_prompt = res.extremes.best ? res.extremes.best->prompt : in.base_prompt;
    res.state = std::move(state);
    res.kb = std::move(kb);
    return res;
}

// --------------------------------------------------------- window sampling

struct IndexRange {
    std::size_t begin = 0;  // first bar
    std::size_t end = 0;    // one past the last bar
};

/// `n_windows` pairwise-disjoint windows of `length` bars, uniform over all
/// non-overlapping placements (stars and bars over the free bars).
inline std::vector<IndexRange> sample_tuning_windows(std::size_t n_bars, std::size_t n_windows = 5,
                                                     std::size_t length = 252, std::uint64_t seed = 0) {
    if (n_windows == 0 || length == 0) throw ArgumentError(kModule, "window count and length must be positive");
    if (n_bars < n_windows * length) {
        throw SamplingError(kModule, std::to_string(n_bars) + " bars cannot hold " + std::to_string(n_windows) +
                                         " disjoint windows of " + std::to_string(length));
    }
    const std::size_t free = n_bars - n_windows * length;
    std::mt19937_64 rng(seed);
    // Choose n_windows distinct slots among free + n_windows (Floyd's algorithm).
    const std::size_t slots = free + n_windows;
    std::set<std::size_t> chosen;
    for (std::size_t j = slots - n_windows; j < slots; ++j) {
        const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    std::vector<IndexRange> out;
    std::size_t i = 0;
    for (std::size_t c : chosen) {
        const std::size_t begin = (c - i) + i * length;
        out.push_back({begin, begin + length});
        ++i;
    }
    return out;
}

}  // namespace llmrl::tuner
