#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrl/data/market_data.hpp"
#include "llmrl/signal/strategy.hpp"

#ifndef LLMRL_TEMPLATE_DIR
#define LLMRL_TEMPLATE_DIR "templates"
#endif

namespace llmrl::llm {

inline constexpr const char* kModule = "llm_gateway";

/// Strategist prompt ladder; each version adds information to the previous one.
enum class PromptVersion { P0, P1, P2, P3, P4 };

inline const char* to_string(PromptVersion v) {
    static constexpr const char* names[] = {"P0", "P1", "P2", "P3", "P4"};
    return names[static_cast<int>(v)];
}

inline PromptVersion parse_prompt_version(std::string_view s) {
    static constexpr PromptVersion all[] = {PromptVersion::P0, PromptVersion::P1, PromptVersion::P2,
                                            PromptVersion::P3, PromptVersion::P4};
    for (auto v : all) {
        if (s == to_string(v)) return v;
    }
    throw ArgumentError(kModule, "prompt version '" + std::string(s) + "' is not one of P0..P4");
}

inline std::string default_template_dir() {
    if (const char* env = std::getenv("LLMRL_TEMPLATE_DIR"); env && *env) return env;
    return LLMRL_TEMPLATE_DIR;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TemplateError(kModule, "cannot read template " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline std::string load_strategist_template(PromptVersion v, const std::string& dir = default_template_dir()) {
    std::string file = "strategist_p" + std::to_string(static_cast<int>(v)) + ".yaml";
    return read_text_file(std::filesystem::path(dir) / file);
}

inline std::string load_analyst_template(const std::string& dir = default_template_dir()) {
    return read_text_file(std::filesystem::path(dir) / "analyst.yaml");
}

/// Placeholder names ("{name}") in order of first appearance.
inline std::vector<std::string> placeholders(const std::string& tmpl) {
    static const std::regex re(R"(\{([A-Za-z0-9_]+)\})");
    std::vector<std::string> out;
    for (auto it = std::sregex_iterator(tmpl.begin(), tmpl.end(), re); it != std::sregex_iterator(); ++it) {
        auto name = (*it)[1].str();
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    }
    return out;
}

/// Value per placeholder. std::nullopt renders as "N/A"; a placeholder with
/// no entry at all is an error.
using PromptContext = std::map<std::string, std::optional<std::string>>;

inline constexpr const char* kNotAvailable = "N/A";

/// Substitutes every placeholder. Braces inside values are turned into
/// parentheses so the output never contains a stray brace pair.
inline std::string render(const std::string& tmpl, const PromptContext& ctx) {
    static const std::regex re(R"(\{([A-Za-z0-9_]+)\})");
    std::string out;
    auto last = tmpl.cbegin();
    for (auto it = std::sregex_iterator(tmpl.begin(), tmpl.end(), re); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        out.append(last, m[0].first);
        const auto name = m[1].str();
        auto found = ctx.find(name);
        if (found == ctx.end()) throw TemplateError(kModule, "no value for placeholder {" + name + "}");
        std::string value = found->second.value_or(kNotAvailable);
        std::replace(value.begin(), value.end(), '{', '(');
        std::replace(value.begin(), value.end(), '}', ')');
        out += value;
        last = m[0].second;
    }
    out.append(last, tmpl.cend());
    return out;
}

/// Every placeholder the strategist ladder knows how to fill.
inline const std::set<std::string>& strategist_placeholders() {
    static const std::set<std::string> names{
        "Last_LLM_Strat_Returns", "Last_LLM_Strat_Action", "Last_LLM_Strat", "Market_Beta", "classification", "Close",
        "Volume", "Weekly_Past_Returns", "HV_Close", "IV_Close", "Current_Ratio", "Quick_Ratio",
        "Debt_to_Equity_Ratio", "PE_Ratio", "Gross_Margin", "Operating_Margin", "Net_Profit_Margin", "EPS_YoY_Growth",
        "Net_Income_YoY_Growth", "Free_Cash_Flow_Per_Share_YoY_Growth", "20MA", "50MA", "200MA", "20MA_Slope",
        "50MA_Slope", "100MA_Slope", "200MA_Slope", "MACD", "Signal_Line", "MACD_Strength", "RSI", "ATR", "SPX_Close",
        "SPX_Close_MA", "SPX_Close_Slope", "VIX_Close", "VIX_Close_MA", "VIX_Close_Slope", "GDP_QoQ", "PMI",
        "Consumer_Confidence_QoQ", "M2_Money_Supply_QoQ", "PPI_YoY", "Treasury_Yields_YoY", "OTM_Skew", "ATM_Skew",
        "ITM_Skew", "MA_OTM_Skew", "MA_ATM_Skew", "MA_ITM_Skew", "news_sentiment", "news_impact_score", "persona",
        "portfolio_objectives"};
    return names;
}

/// Rejects templates that use a placeholder outside the strategist set.
inline void validate_strategist_template(const std::string& tmpl) {
    for (const auto& p : placeholders(tmpl)) {
        if (!strategist_placeholders().count(p)) throw TemplateError(kModule, "unknown placeholder {" + p + "}");
    }
}

/// Compact number text for prompts (up to 6 significant digits).
inline std::string prompt_number(double x) {
    if (is_missing(x) || !std::isfinite(x)) return kNotAvailable;
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 6);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------- news

struct NewsFactor {
    std::string factor;
    int sentiment = 0;      // -1, 0, +1
    int market_impact = 1;  // 1..3
};

inline constexpr std::size_t kFactorsPerResponse = 3;
inline constexpr std::size_t kMaxFactorWords = 70;

/// Parses the analyst's {"factors": [...]} reply. Exactly three factors.
inline std::vector<NewsFactor> parse_news_factors(const std::string& payload) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(::llmrl::detail::json_object_slice(payload));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(kModule, std::string("analyst payload is not JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("factors") || !j["factors"].is_array()) {
        throw ValidationError(kModule, "analyst payload needs a 'factors' list");
    }
    if (j["factors"].size() != kFactorsPerResponse) {
        throw ValidationError(kModule, "analyst returned " + std::to_string(j["factors"].size()) + " factors, not 3");
    }
    std::vector<NewsFactor> out;
    for (const auto& f : j["factors"]) {
        NewsFactor n;
        try {
            n.factor = f.at("factor").get<std::string>();
            n.sentiment = f.at("sentiment").get<int>();
            n.market_impact = f.at("market_impact").get<int>();
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(kModule, std::string("bad factor entry: ") + e.what());
        }
        if (word_count(n.factor) > kMaxFactorWords) throw ValidationError(kModule, "factor exceeds 70 words");
        if (n.sentiment < -1 || n.sentiment > 1) throw ValidationError(kModule, "sentiment must be -1, 0 or +1");
        if (n.market_impact < 1 || n.market_impact > 3) throw ValidationError(kModule, "market impact outside 1..3");
        out.push_back(std::move(n));
    }
    return out;
}

/// Impact-weighted mean sentiment and the largest impact score. With no
/// factors the neutral pair (0, 1) is returned.
inline std::pair<double, int> aggregate_news(const std::vector<NewsFactor>& factors) {
    if (factors.empty()) return {0.0, 1};
    double num = 0.0, den = 0.0;
    int impact = 1;
    for (const auto& f : factors) {
        num += f.sentiment * f.market_impact;
        den += f.market_impact;
        impact = std::max(impact, f.market_impact);
    }
    return {num / den, impact};
}

inline std::string render_analyst_prompt(const std::vector<std::string>& articles,
                                         const std::string& tmpl = load_analyst_template()) {
    if (articles.empty()) throw ArgumentError(kModule, "analyst prompt needs at least one article");
    std::string joined;
    for (std::size_t i = 0; i < articles.size(); ++i) {
        std::string a = articles[i];
        std::replace(a.begin(), a.end(), '\n', ' ');
        std::replace(a.begin(), a.end(), '"', '\'');
        if (i) joined += "\n    - ";
        joined += a;
    }
    return render(tmpl, {{"articles_list", joined}});
}

// ---------------------------------------------------------- anonymization

namespace detail {

inline std::string regex_escape(const std::string& s) {
    static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
    return std::regex_replace(s, special, R"(\$&)");
}

inline int month_from_name(std::string name) {
    static const char* months[] = {"jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"};
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    for (int i = 0; i < 12; ++i) {
        if (name.rfind(months[i], 0) == 0) return i + 1;
    }
    return 0;
}

/// Relative phrase for a (year, month) against the reference month.
inline std::string relative_marker(int year, int month, std::optional<Date> reference) {
    if (!reference || month < 1) return "recently";
    const std::chrono::year_month_day ref{*reference};
    const int diff = (static_cast<int>(ref.year()) * 12 + static_cast<int>(static_cast<unsigned>(ref.month()))) -
                     (year * 12 + month);
    if (diff == 0) return "this month";
    if (diff == 1) return "last month";
    if (diff >= 2 && diff <= 3) return "last quarter";
    if (diff >= 4 && diff <= 12) return "earlier this year";
    if (diff > 12) return "more than a year ago";
    if (diff == -1) return "next month";
    return "in the coming months";
}

}  // namespace detail

/// Replaces every mapped entity (case-insensitive, whole words, longest
/// names first) and turns absolute dates into relative markers. The marker
/// is computed against `reference` when given. Idempotent as long as no
/// replacement text contains a mapped name.
inline std::string anonymize(const std::string& text, const std::map<std::string, std::string>& entity_map,
                             std::optional<Date> reference = std::nullopt) {
    std::string out = text;
    // Dates first, so month names inside entity names are not touched later.
    static const std::string month_names =
        "(Jan(?:uary)?|Feb(?:ruary)?|Mar(?:ch)?|Apr(?:il)?|May|Jun(?:e)?|Jul(?:y)?|Aug(?:ust)?|"
        "Sep(?:t(?:ember)?)?|Oct(?:ober)?|Nov(?:ember)?|Dec(?:ember)?)\\.?";
    struct DatePattern {
        std::regex re;
        int year_group, month_group;
        bool month_is_name;
    };
    static const std::vector<DatePattern> patterns = [] {
        std::vector<DatePattern> p;
        p.push_back({std::regex(R"(\b(\d{4})-(\d{2})-(\d{2})(?:T[0-9:.]+(?:Z|[+-]\d{2}:?\d{2})?)?\b)"), 1, 2, false});
        p.push_back({std::regex(R"(\b(\d{4})/(\d{1,2})/(\d{1,2})\b)"), 1, 2, false});
        p.push_back({std::regex("\\b" + month_names + R"(\s+\d{1,2}(?:st|nd|rd|th)?,?\s+(\d{4})\b)",
                                std::regex::icase),
                     2, 1, true});
        p.push_back({std::regex(R"(\b\d{1,2}(?:st|nd|rd|th)?\s+)" + month_names + R"(,?\s+(\d{4})\b)",
                                std::regex::icase),
                     2, 1, true});
        p.push_back({std::regex("\\b" + month_names + R"(,?\s+(\d{4})\b)", std::regex::icase), 2, 1, true});
        return p;
    }();
    for (const auto& p : patterns) {
        std::string next;
        auto last = out.cbegin();
        for (auto it = std::sregex_iterator(out.begin(), out.end(), p.re); it != std::sregex_iterator(); ++it) {
            const auto& m = *it;
            next.append(last, m[0].first);
            const int year = std::stoi(m[p.year_group].str());
            const int month =
                p.month_is_name ? detail::month_from_name(m[p.month_group].str()) : std::stoi(m[p.month_group].str());
            next += detail::relative_marker(year, month, reference);
            last = m[0].second;
        }
        next.append(last, out.cend());
        out = std::move(next);
    }
    if (entity_map.empty()) return out;
    std::vector<std::pair<std::string, std::string>> entities(entity_map.begin(), entity_map.end());
    std::stable_sort(entities.begin(), entities.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
    std::string alternation;
    for (const auto& [name, _] : entities) {
        if (name.empty()) continue;
        alternation += (alternation.empty() ? "" : "|") + detail::regex_escape(name);
    }
    if (alternation.empty()) return out;
    // One pass over an alternation, so replacement text is never rescanned.
    const std::regex re("(^|[^A-Za-z0-9_])(" + alternation + ")(?![A-Za-z0-9_])", std::regex::icase);
    std::string next;
    auto last = out.cbegin();
    for (auto it = std::sregex_iterator(out.begin(), out.end(), re); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        next.append(last, m[2].first);
        std::string hit = m[2].str();
        std::string lower_hit = hit;
        std::transform(lower_hit.begin(), lower_hit.end(), lower_hit.begin(), [](unsigned char c) { return std::tolower(c); });
        for (const auto& [name, replacement] : entities) {
            std::string lower_name = name;
            std::transform(lower_name.begin(), lower_name.end(), lower_name.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (lower_name == lower_hit) {
                next += replacement;
                break;
            }
        }
        last = m[2].second;
    }
    next.append(last, out.cend());
    return next;
}

/// True when the text still mentions a mapped entity or an ISO date.
inline bool anonymization_leaks(const std::string& text, const std::map<std::string, std::string>& entity_map) {
    static const std::regex iso(R"(\d{4}-\d{2}-\d{2})");
    if (std::regex_search(text, iso)) return true;
    std::string lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const auto& [name, _] : entity_map) {
        std::string n = name;
        std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
        if (!n.empty() && lower.find(n) != std::string::npos) return true;
    }
    return false;
}

// ------------------------------------------------------- strategist context

struct PriorStrategy {
    Strategy strategy;
    double realized_return = 0.0;  // return of the instrument over the block the strategy covered
};

struct StrategistInputs {
    std::string persona = "Quantitative equity strategist";
    std::string portfolio_objectives = "Maximize risk-adjusted return (Sharpe ratio) with controlled drawdowns.";
    std::optional<std::string> classification;
    std::optional<double> beta;
    std::optional<PriorStrategy> last;
    std::vector<NewsFactor> news;
    std::size_t price_history = 5;  // bars shown for Close and Volume
};

/// Fills every strategist placeholder from one row of a feature frame.
/// Columns named like a placeholder supply it directly; anything missing
/// becomes N/A.
inline PromptContext strategist_context(const FeatureFrame& frame, std::size_t row, const StrategistInputs& in) {
    if (row >= frame.rows()) throw ArgumentError(kModule, "row outside the feature frame");
    PromptContext ctx;
    auto value = [&](const std::string& column) -> std::optional<std::string> {
        if (!frame.has_column(column)) return std::nullopt;
        const double v = frame.at(column, row);
        if (is_missing(v)) return std::nullopt;
        return prompt_number(v);
    };
    for (const auto& name : strategist_placeholders()) ctx[name] = value(name);

    auto history = [&](const std::string& column) -> std::optional<std::string> {
        if (!frame.has_column(column)) return std::nullopt;
        const auto& c = frame.column(column);
        const std::size_t first = row + 1 >= in.price_history ? row + 1 - in.price_history : 0;
        std::string s;
        for (std::size_t i = first; i <= row; ++i) s += (s.empty() ? "" : ", ") + prompt_number(c[i]);
        return s;
    };
    ctx["Close"] = history("Close");
    ctx["Volume"] = history("Volume");

    std::string weekly;
    bool complete = true;
    for (int k = 1; k <= 4; ++k) {
        auto v = value("Weekly_Return_" + std::to_string(k));
        if (!v) {
            complete = false;
            break;
        }
        weekly += (weekly.empty() ? "" : ", ") + *v;
    }
    ctx["Weekly_Past_Returns"] = complete ? std::optional<std::string>(weekly) : std::nullopt;

    if (in.beta) ctx["Market_Beta"] = prompt_number(*in.beta);
    ctx["classification"] = in.classification;
    ctx["persona"] = in.persona;
    ctx["portfolio_objectives"] = in.portfolio_objectives;

    if (in.last) {
        ctx["Last_LLM_Strat_Returns"] = prompt_number(in.last->realized_return);
        ctx["Last_LLM_Strat_Action"] = std::string(to_string(in.last->strategy.direction));
        ctx["Last_LLM_Strat"] = in.last->strategy.explanation;
    } else {
        ctx["Last_LLM_Strat_Returns"] = std::nullopt;
        ctx["Last_LLM_Strat_Action"] = std::nullopt;
        ctx["Last_LLM_Strat"] = std::nullopt;
    }
    const auto [sentiment, impact] = aggregate_news(in.news);
    ctx["news_sentiment"] = prompt_number(sentiment);
    ctx["news_impact_score"] = std::to_string(impact);
    return ctx;
}

inline std::string render_strategist_prompt(const std::string& tmpl, const FeatureFrame& frame, std::size_t row,
                                            const StrategistInputs& in) {
    return render(tmpl, strategist_context(frame, row, in));
}

}  // namespace llmrl::llm
