#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "llmrl/core/common.hpp"

namespace llmrl {

struct Bar {
    Date date;
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double volume = 0.0;

    friend bool operator==(const Bar&, const Bar&) = default;
};

/// Validates one bar: positive prices, non-negative volume, and
/// low <= min(open, close) <= max(open, close) <= high.
inline void validate_bar(const Bar& b) {
    const std::string where = " on " + format_date(b.date);
    if (!(b.open > 0 && b.high > 0 && b.low > 0 && b.close > 0)) {
        throw DataError("data_ingest", "non-positive price" + where);
    }
    if (!(b.volume >= 0)) throw DataError("data_ingest", "negative volume" + where);
    if (b.low > std::min(b.open, b.close) || b.high < std::max(b.open, b.close)) {
        throw DataError("data_ingest", "inconsistent high/low range" + where);
    }
}

/// Daily bars with strictly increasing dates.
class BarSeries {
public:
    BarSeries() = default;

    explicit BarSeries(std::vector<Bar> bars) : bars_(std::move(bars)) {
        for (std::size_t i = 0; i < bars_.size(); ++i) {
            validate_bar(bars_[i]);
            if (i > 0 && !(bars_[i - 1].date < bars_[i].date)) {
                throw DataError("data_ingest", "dates not strictly increasing at " + format_date(bars_[i].date));
            }
        }
    }

    std::size_t size() const noexcept { return bars_.size(); }
    bool empty() const noexcept { return bars_.empty(); }
    const Bar& operator[](std::size_t i) const { return bars_[i]; }
    auto begin() const noexcept { return bars_.begin(); }
    auto end() const noexcept { return bars_.end(); }
    const std::vector<Bar>& bars() const noexcept { return bars_; }

    std::vector<double> closes() const { return project(&Bar::close); }
    std::vector<double> opens() const { return project(&Bar::open); }
    std::vector<double> highs() const { return project(&Bar::high); }
    std::vector<double> lows() const { return project(&Bar::low); }
    std::vector<double> volumes() const { return project(&Bar::volume); }
    std::vector<Date> dates() const {
        std::vector<Date> out;
        out.reserve(bars_.size());
        for (const auto& b : bars_) out.push_back(b.date);
        return out;
    }

    friend bool operator==(const BarSeries&, const BarSeries&) = default;

private:
    std::vector<double> project(double Bar::*field) const {
        std::vector<double> out;
        out.reserve(bars_.size());
        for (const auto& b : bars_) out.push_back(b.*field);
        return out;
    }

    std::vector<Bar> bars_;
};

enum class Frequency { daily, monthly, quarterly };

inline std::string to_string(Frequency f) {
    switch (f) {
        case Frequency::daily: return "daily";
        case Frequency::monthly: return "monthly";
        case Frequency::quarterly: return "quarterly";
    }
    return "daily";
}

inline Frequency parse_frequency(std::string_view s) {
    if (s == "daily") return Frequency::daily;
    if (s == "monthly") return Frequency::monthly;
    if (s == "quarterly") return Frequency::quarterly;
    throw SchemaError("data_ingest", "unknown frequency '" + std::string(s) + "'");
}

/// Timestamp-aligned table of named real-valued columns. Every column has
/// exactly one value per index entry; missing values are kMissing.
class FeatureFrame {
public:
    FeatureFrame() = default;

    explicit FeatureFrame(std::vector<Date> index, Frequency frequency = Frequency::daily)
        : index_(std::move(index)), frequency_(frequency) {
        for (std::size_t i = 1; i < index_.size(); ++i) {
            if (!(index_[i - 1] < index_[i])) {
                throw DataError("data_ingest",
                                "frame index not strictly increasing at " + format_date(index_[i]));
            }
        }
    }

    const std::vector<Date>& index() const noexcept { return index_; }
    std::size_t rows() const noexcept { return index_.size(); }
    bool empty() const noexcept { return index_.empty(); }
    Frequency frequency() const noexcept { return frequency_; }

    void add_column(const std::string& name, std::vector<double> values) {
        if (values.size() != index_.size()) {
            throw SchemaError("data_ingest", "column '" + name + "' has " + std::to_string(values.size()) +
                                                 " values for an index of " + std::to_string(index_.size()));
        }
        if (columns_.count(name)) throw SchemaError("data_ingest", "duplicate column '" + name + "'");
        columns_.emplace(name, std::move(values));
    }

    /// Replaces or inserts.
    void set_column(const std::string& name, std::vector<double> values) {
        columns_.erase(name);
        add_column(name, std::move(values));
    }

    bool has_column(const std::string& name) const { return columns_.count(name) > 0; }

    const std::vector<double>& column(const std::string& name) const {
        auto it = columns_.find(name);
        if (it == columns_.end()) throw SchemaError("data_ingest", "no column '" + name + "'");
        return it->second;
    }

    double at(const std::string& name, std::size_t row) const { return column(name).at(row); }

    const std::map<std::string, std::vector<double>>& columns() const noexcept { return columns_; }

    std::vector<std::string> column_names() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : columns_) out.push_back(k);
        return out;
    }

    std::optional<std::size_t> find(Date d) const {
        auto it = std::lower_bound(index_.begin(), index_.end(), d);
        if (it == index_.end() || *it != d) return std::nullopt;
        return static_cast<std::size_t>(it - index_.begin());
    }

    /// Rows [begin, end).
    FeatureFrame slice(std::size_t begin, std::size_t end) const {
        end = std::min(end, index_.size());
        begin = std::min(begin, end);
        FeatureFrame out(std::vector<Date>(index_.begin() + begin, index_.begin() + end), frequency_);
        for (const auto& [k, v] : columns_) {
            out.add_column(k, std::vector<double>(v.begin() + begin, v.begin() + end));
        }
        return out;
    }

    /// Adds every column of `other`, which must share this index exactly.
    void merge(const FeatureFrame& other) {
        if (other.index_ != index_) throw AlignmentError("data_ingest", "merge requires identical indices");
        for (const auto& [k, v] : other.columns_) add_column(k, v);
    }

    friend bool operator==(const FeatureFrame& a, const FeatureFrame& b) {
        if (a.index_ != b.index_ || a.columns_.size() != b.columns_.size()) return false;
        for (const auto& [k, v] : a.columns_) {
            auto it = b.columns_.find(k);
            if (it == b.columns_.end() || it->second.size() != v.size()) return false;
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (is_missing(v[i]) != is_missing(it->second[i])) return false;
                if (!is_missing(v[i]) && v[i] != it->second[i]) return false;
            }
        }
        return true;
    }

private:
    std::vector<Date> index_;
    std::map<std::string, std::vector<double>> columns_;
    Frequency frequency_ = Frequency::daily;
};

/// Lower-frequency macro or fundamental series.
struct MacroSeries {
    std::string name;
    Frequency frequency = Frequency::quarterly;
    std::vector<std::pair<Date, double>> observations;

    void validate() const {
        for (std::size_t i = 1; i < observations.size(); ++i) {
            if (!(observations[i - 1].first < observations[i].first)) {
                throw DataError("data_ingest", "macro series '" + name + "' not strictly increasing at " +
                                                   format_date(observations[i].first));
            }
        }
    }

    FeatureFrame to_frame() const {
        validate();
        std::vector<Date> idx;
        std::vector<double> vals;
        for (const auto& [d, v] : observations) {
            idx.push_back(d);
            vals.push_back(v);
        }
        FeatureFrame f(std::move(idx), frequency);
        f.add_column(name, std::move(vals));
        return f;
    }
};

struct NewsArticle {
    Date date;
    std::string headline;
    std::string body;
};

inline FeatureFrame to_frame(const BarSeries& bars) {
    FeatureFrame f(bars.dates());
    f.add_column("Open", bars.opens());
    f.add_column("High", bars.highs());
    f.add_column("Low", bars.lows());
    f.add_column("Close", bars.closes());
    f.add_column("Volume", bars.volumes());
    return f;
}

}  // namespace llmrl
