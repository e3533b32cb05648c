#pragma once

// Hindsight labels built from future returns. Nothing under env/ or rl/
// includes this header; labels only feed the prompt tuner's exemplar pool.

#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "llmrl/core/csv.hpp"

namespace llmrl::hindsight {

enum class LabelAction { short_ = 0, long_ = 1 };

inline const char* to_string(LabelAction a) { return a == LabelAction::long_ ? "LONG" : "SHORT"; }

struct TradeLabel {
    std::size_t index = 0;
    Date date{};
    LabelAction action = LabelAction::long_;
    double r10 = 0.0;
    double r20 = 0.0;
    double r_weighted = 0.0;

    friend bool operator==(const TradeLabel&, const TradeLabel&) = default;
};

inline constexpr std::size_t kShortHorizon = 10;
inline constexpr std::size_t kLongHorizon = 20;
inline constexpr double kShortWeight = 0.4;
inline constexpr double kLongWeight = 0.6;

/// Label for bar t: LONG iff 0.4 * r10 + 0.6 * r20 >= 0.
inline TradeLabel expert_label(std::span<const double> closes, std::size_t t) {
    if (t + kLongHorizon >= closes.size()) {
        throw HorizonError("labeler", "index " + std::to_string(t) + " lacks 20 bars of future data");
    }
    TradeLabel l;
    l.index = t;
    const double p = closes[t];
    l.r10 = closes[t + kShortHorizon] / p - 1.0;
    l.r20 = closes[t + kLongHorizon] / p - 1.0;
    l.r_weighted = kShortWeight * l.r10 + kLongWeight * l.r20;
    l.action = l.r_weighted >= 0.0 ? LabelAction::long_ : LabelAction::short_;
    return l;
}

/// One label per index whose 20-bar horizon is in range; dates are attached
/// when provided (same length as closes).
inline std::vector<TradeLabel> label_series(std::span<const double> closes, std::span<const Date> dates = {}) {
    if (closes.size() <= kLongHorizon) {
        throw HorizonError("labeler", "series of length " + std::to_string(closes.size()) +
                                          " has no index with a full 20-bar horizon");
    }
    if (!dates.empty() && dates.size() != closes.size()) {
        throw ArgumentError("labeler", "dates and closes differ in length");
    }
    std::vector<TradeLabel> out;
    out.reserve(closes.size() - kLongHorizon);
    for (std::size_t t = 0; t + kLongHorizon < closes.size(); ++t) {
        out.push_back(expert_label(closes, t));
        if (!dates.empty()) out.back().date = dates[t];
    }
    return out;
}

/// CSV schema shared with hand-annotated exemplars: date,action,r10,r20,r_weighted.
inline void write_labels_csv(std::span<const TradeLabel> labels, std::ostream& out) {
    out << "date,action,r10,r20,r_weighted\n";
    for (const auto& l : labels) {
        out << format_date(l.date) << ',' << to_string(l.action) << ',' << format_double(l.r10) << ','
            << format_double(l.r20) << ',' << format_double(l.r_weighted) << '\n';
    }
}

inline std::vector<TradeLabel> read_labels_csv(const std::string& path) {
    auto table = csv::read_file(path);
    const int cd = table.find("date"), ca = table.find("action"), c10 = table.find("r10"), c20 = table.find("r20"),
              cw = table.find("r_weighted");
    if (cd < 0 || ca < 0) throw SchemaError("labeler", path + ": needs at least date,action columns");
    std::vector<TradeLabel> out;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& r = table.rows[i];
        TradeLabel l;
        l.index = i;
        l.date = parse_date(r[cd]);
        if (r[ca] == "LONG" || r[ca] == "1") l.action = LabelAction::long_;
        else if (r[ca] == "SHORT" || r[ca] == "0") l.action = LabelAction::short_;
        else throw SchemaError("labeler", path + ": bad action '" + r[ca] + "'");
        l.r10 = c10 >= 0 ? parse_double(r[c10]) : kMissing;
        l.r20 = c20 >= 0 ? parse_double(r[c20]) : kMissing;
        l.r_weighted = cw >= 0 ? parse_double(r[cw]) : kMissing;
        out.push_back(l);
    }
    return out;
}

}  // namespace llmrl::hindsight
