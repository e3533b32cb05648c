#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrl/core/csv.hpp"
#include "llmrl/data/market_data.hpp"

namespace llmrl {

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

inline bool has_extension(const std::string& path, const char* ext) {
    return lower(std::filesystem::path(path).extension().string()) == ext;
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("data_ingest", "cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("data_ingest", path + ": " + e.what());
    }
}

inline BarSeries finish_bars(std::vector<Bar> bars, const std::string& source) {
    std::stable_sort(bars.begin(), bars.end(), [](const Bar& a, const Bar& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < bars.size(); ++i) {
        if (bars[i].date == bars[i - 1].date) {
            throw DataError("data_ingest", source + ": duplicate date " + format_date(bars[i].date));
        }
    }
    return BarSeries(std::move(bars));
}

}  // namespace detail

inline constexpr std::array<const char*, 6> kOhlcvFields{"date", "open", "high", "low", "close", "volume"};

/// Loads daily OHLCV bars from CSV (header row with date,open,high,low,close,volume,
/// case-insensitive, extra columns ignored) or from a JSON array of objects with the
/// same field names. Output is sorted ascending by date.
inline BarSeries load_ohlcv(const std::string& path) {
    std::vector<Bar> bars;
    if (detail::has_extension(path, ".json")) {
        auto doc = detail::read_json_file(path);
        if (!doc.is_array()) throw SchemaError("data_ingest", path + ": expected a JSON array of bars");
        for (const auto& row : doc) {
            for (const char* f : kOhlcvFields) {
                if (!row.contains(f)) throw SchemaError("data_ingest", path + ": missing field '" + f + "'");
            }
            try {
                bars.push_back(Bar{parse_date(row.at("date").get<std::string>()), row.at("open").get<double>(),
                                   row.at("high").get<double>(), row.at("low").get<double>(),
                                   row.at("close").get<double>(), row.at("volume").get<double>()});
            } catch (const nlohmann::json::exception& e) {
                throw SchemaError("data_ingest", path + ": " + e.what());
            }
        }
        return detail::finish_bars(std::move(bars), path);
    }

    auto table = csv::read_file(path);
    for (auto& h : table.header) h = detail::lower(h);
    std::array<int, 6> pos{};
    for (std::size_t i = 0; i < kOhlcvFields.size(); ++i) {
        pos[i] = table.find(kOhlcvFields[i]);
        if (pos[i] < 0) throw SchemaError("data_ingest", path + ": missing column '" + kOhlcvFields[i] + "'");
    }
    bars.reserve(table.rows.size());
    for (const auto& r : table.rows) {
        Bar b{parse_date(r[pos[0]]), parse_double(r[pos[1]]), parse_double(r[pos[2]]),
              parse_double(r[pos[3]]), parse_double(r[pos[4]]), parse_double(r[pos[5]])};
        bars.push_back(b);
    }
    return detail::finish_bars(std::move(bars), path);
}

inline void write_ohlcv_csv(const BarSeries& bars, std::ostream& out) {
    out << "date,open,high,low,close,volume\n";
    for (const auto& b : bars) {
        out << format_date(b.date) << ',' << format_double(b.open) << ',' << format_double(b.high) << ','
            << format_double(b.low) << ',' << format_double(b.close) << ',' << format_double(b.volume) << '\n';
    }
}

inline void save_ohlcv_csv(const BarSeries& bars, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("data_ingest", "cannot write '" + path + "'");
    write_ohlcv_csv(bars, out);
}

/// FeatureFrame CSV: first column "date", then one column per feature; "NA" marks missing.
inline void write_frame_csv(const FeatureFrame& frame, std::ostream& out) {
    std::vector<std::string> header{"date"};
    for (const auto& [k, v] : frame.columns()) header.push_back(k);
    csv::write_row(out, header);
    for (std::size_t i = 0; i < frame.rows(); ++i) {
        std::vector<std::string> row{format_date(frame.index()[i])};
        for (const auto& [k, v] : frame.columns()) row.push_back(format_double(v[i]));
        csv::write_row(out, row);
    }
}

inline void save_frame_csv(const FeatureFrame& frame, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("data_ingest", "cannot write '" + path + "'");
    write_frame_csv(frame, out);
}

inline FeatureFrame load_frame_csv(const std::string& path, Frequency frequency = Frequency::daily) {
    auto table = csv::read_file(path);
    if (table.header.empty() || detail::lower(table.header[0]) != "date") {
        throw SchemaError("data_ingest", path + ": first column must be 'date'");
    }
    std::vector<std::pair<Date, std::size_t>> order;
    for (std::size_t i = 0; i < table.rows.size(); ++i) order.emplace_back(parse_date(table.rows[i][0]), i);
    std::stable_sort(order.begin(), order.end());
    std::vector<Date> idx;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i > 0 && order[i].first == order[i - 1].first) {
            throw DataError("data_ingest", path + ": duplicate date " + format_date(order[i].first));
        }
        idx.push_back(order[i].first);
    }
    FeatureFrame frame(std::move(idx), frequency);
    for (std::size_t c = 1; c < table.header.size(); ++c) {
        std::vector<double> col;
        col.reserve(order.size());
        for (const auto& [d, r] : order) col.push_back(parse_double(table.rows[r][c]));
        frame.add_column(table.header[c], std::move(col));
    }
    return frame;
}

/// Macro series from CSV with header date,value (or date,<name>) or from JSON
/// {"name", "frequency", "observations": [{"date", "value"}]}.
inline MacroSeries load_macro_series(const std::string& path, std::string name = {},
                                     Frequency frequency = Frequency::quarterly) {
    MacroSeries s;
    s.name = std::move(name);
    s.frequency = frequency;
    if (detail::has_extension(path, ".json")) {
        auto doc = detail::read_json_file(path);
        try {
            if (s.name.empty()) s.name = doc.at("name").get<std::string>();
            if (doc.contains("frequency")) s.frequency = parse_frequency(doc.at("frequency").get<std::string>());
            for (const auto& o : doc.at("observations")) {
                s.observations.emplace_back(parse_date(o.at("date").get<std::string>()), o.at("value").get<double>());
            }
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("data_ingest", path + ": " + e.what());
        }
    } else {
        auto table = csv::read_file(path);
        if (table.header.size() != 2 || detail::lower(table.header[0]) != "date") {
            throw SchemaError("data_ingest", path + ": macro CSV must have columns date,value");
        }
        if (s.name.empty()) s.name = table.header[1];
        for (const auto& r : table.rows) s.observations.emplace_back(parse_date(r[0]), parse_double(r[1]));
    }
    std::stable_sort(s.observations.begin(), s.observations.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    s.validate();
    return s;
}

/// News: JSON list of {date, headline, body}, returned sorted by date.
inline std::vector<NewsArticle> load_news(const std::string& path) {
    auto doc = detail::read_json_file(path);
    if (!doc.is_array()) throw SchemaError("data_ingest", path + ": expected a JSON array of articles");
    std::vector<NewsArticle> out;
    try {
        for (const auto& a : doc) {
            out.push_back({parse_date(a.at("date").get<std::string>()), a.at("headline").get<std::string>(),
                           a.value("body", std::string{})});
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("data_ingest", path + ": " + e.what());
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.date < b.date; });
    return out;
}

enum class AlignPolicy { inner, forward_fill };

/// Joins frames on their date index.
///
/// inner: rows present in every frame.
/// forward_fill: rows are the union of the daily frames' indices (all frames when
/// none is daily). Daily frames contribute only exact-date matches, so gaps stay
/// missing; lower-frequency frames carry their last observation at or before
/// each row date forward, and are missing before their first observation.
inline FeatureFrame align_by_timestamp(std::span<const FeatureFrame> frames, AlignPolicy policy) {
    if (std::none_of(frames.begin(), frames.end(), [](const FeatureFrame& f) { return !f.empty(); })) {
        throw ArgumentError("data_ingest", "align_by_timestamp needs at least one non-empty frame");
    }
    std::vector<Date> index;
    if (policy == AlignPolicy::inner) {
        index = frames[0].index();
        for (std::size_t i = 1; i < frames.size(); ++i) {
            std::vector<Date> next;
            std::set_intersection(index.begin(), index.end(), frames[i].index().begin(), frames[i].index().end(),
                                  std::back_inserter(next));
            index = std::move(next);
        }
        if (index.empty()) throw AlignmentError("data_ingest", "inner alignment produced an empty intersection");
    } else {
        bool any_daily = std::any_of(frames.begin(), frames.end(),
                                     [](const FeatureFrame& f) { return f.frequency() == Frequency::daily; });
        std::set<Date> dates;
        for (const auto& f : frames) {
            if (!any_daily || f.frequency() == Frequency::daily) dates.insert(f.index().begin(), f.index().end());
        }
        index.assign(dates.begin(), dates.end());
    }

    FeatureFrame out(index);
    for (const auto& f : frames) {
        const bool carry = policy == AlignPolicy::forward_fill && f.frequency() != Frequency::daily;
        for (const auto& [name, values] : f.columns()) {
            if (out.has_column(name)) throw AlignmentError("data_ingest", "column '" + name + "' appears twice");
            std::vector<double> col(index.size(), kMissing);
            std::size_t src = 0;
            for (std::size_t r = 0; r < index.size(); ++r) {
                if (carry) {
                    while (src < f.rows() && f.index()[src] <= index[r]) ++src;
                    if (src > 0) col[r] = values[src - 1];
                } else if (auto pos = f.find(index[r])) {
                    col[r] = values[*pos];
                }
            }
            out.add_column(name, std::move(col));
        }
    }
    return out;
}

inline FeatureFrame align_by_timestamp(std::initializer_list<FeatureFrame> frames, AlignPolicy policy) {
    return align_by_timestamp(std::span<const FeatureFrame>(frames.begin(), frames.size()), policy);
}

/// Relative change over `lag` observations: out[t] = s[t]/s[t-lag] - 1.
/// The first `lag` entries are missing. A zero (or missing) denominator yields a
/// missing value; its position is appended to `flagged` when provided.
inline std::vector<double> pct_change_period(std::span<const double> series, std::size_t lag,
                                             std::vector<std::size_t>* flagged = nullptr) {
    if (lag == 0) throw ArgumentError("data_ingest", "lag must be positive");
    if (lag >= series.size()) {
        throw ArgumentError("data_ingest", "lag " + std::to_string(lag) + " not below series length " +
                                               std::to_string(series.size()));
    }
    std::vector<double> out(series.size(), kMissing);
    for (std::size_t t = lag; t < series.size(); ++t) {
        const double base = series[t - lag];
        if (base == 0.0 || is_missing(base)) {
            if (flagged) flagged->push_back(t);
            continue;
        }
        out[t] = series[t] / base - 1.0;
    }
    return out;
}

}  // namespace llmrl
