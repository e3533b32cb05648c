#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "llmrl/data/market_data.hpp"
#include "llmrl/signal/signal_math.hpp"

namespace llmrl::env {

inline constexpr int kShort = 0;
inline constexpr int kLong = 1;

enum class RewardKind { simple, log };

struct EpisodeConfig {
    Date start{};  // first decision bar (first index on or after this date)
    Date end{};    // final bar (last index on or before this date)
    double initial_cash = 100'000.0;
    double cost_rate = 0.001;    // fraction of traded notional
    double leverage_cap = 1.0;   // max |position notional| / equity
    std::size_t window = 30;     // bars in the observation window
    RewardKind reward = RewardKind::simple;
    SignalMode signal_mode = SignalMode::off;  // off: RL-only, signal slot fixed at 0
    std::size_t signal_block = 20;             // bars per strategy block
};

inline constexpr std::array<const char*, 5> kMarketColumns{"Open", "High", "Low", "Close", "Volume"};

/// Window of price-relative OHLCV values (each divided by its value at the
/// window start, minus one), the position sign, and the signal slot last.
struct Observation {
    std::vector<double> values;

    double signal() const { return values.back(); }
    double position() const { return values[values.size() - 2]; }
};

struct Fill {
    long long delta_shares = 0;  // + buy, - sell
    double price = 0.0;
    double cost = 0.0;
    bool forced = false;  // buy-to-cover triggered by the leverage cap
};

/// Bookkeeping for one step, enough to replay the equity ledger externally.
struct StepInfo {
    std::size_t bar = 0;  // decision bar index
    double price_before = 0.0;
    double price_after = 0.0;
    double equity_before = 0.0;
    double equity_after = 0.0;
    long long shares_held = 0;  // position carried over the price move
    double costs = 0.0;
    std::vector<Fill> fills;
    bool bankrupt = false;
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
    StepInfo info;
};

struct TraceRow {
    Date date{};
    int action = kLong;
    double price = 0.0;
    long long shares = 0;
    double cash = 0.0;
    double equity = 0.0;
    double signal = 0.0;
    double reward = 0.0;
};

/// Single-asset environment with discrete LONG/SHORT targets, proportional
/// costs and a leverage cap enforced by forced buy-to-cover.
class TradingEnv {
public:
    TradingEnv(FeatureFrame data, EpisodeConfig cfg) : data_(std::move(data)), cfg_(cfg) {
        constexpr const char* kModule = "trading_env";
        if (cfg_.cost_rate < 0) throw ArgumentError(kModule, "cost rate must be >= 0");
        if (!(cfg_.leverage_cap > 0)) throw ArgumentError(kModule, "leverage cap must be > 0");
        if (!(cfg_.initial_cash > 0)) throw ArgumentError(kModule, "initial cash must be > 0");
        if (cfg_.window < 2) throw ArgumentError(kModule, "observation window must be >= 2");
        if (cfg_.signal_block == 0) throw ArgumentError(kModule, "signal block must be positive");
        for (std::size_t c = 0; c < kMarketColumns.size(); ++c) market_[c] = data_.column(kMarketColumns[c]);
        const auto& idx = data_.index();
        auto s = std::lower_bound(idx.begin(), idx.end(), cfg_.start);
        auto e = std::upper_bound(idx.begin(), idx.end(), cfg_.end);
        if (s == idx.end() || e == idx.begin()) throw DataError(kModule, "episode range not covered by data");
        start_ = static_cast<std::size_t>(s - idx.begin());
        end_ = static_cast<std::size_t>(e - idx.begin()) - 1;
        if (end_ <= start_) throw DataError(kModule, "episode range needs at least two bars");
        if (start_ + 1 < cfg_.window) {
            throw DataError(kModule, "episode start lacks " + std::to_string(cfg_.window - 1) + " warm-up bars");
        }
        for (std::size_t i = start_ + 1 - cfg_.window; i <= end_; ++i) {
            for (std::size_t c = 0; c < market_.size(); ++c) {
                const double v = market_[c][i];
                if (is_missing(v) || !std::isfinite(v)) {
                    throw DataError(kModule, std::string("missing ") + kMarketColumns[c] + " bar on " +
                                                 format_date(idx[i]));
                }
            }
            if (!(market_[3][i] > 0)) throw DataError(kModule, "non-positive close on " + format_date(idx[i]));
        }
        schedule_.assign(data_.rows(), 0.0);
    }

    const EpisodeConfig& config() const noexcept { return cfg_; }
    const FeatureFrame& data() const noexcept { return data_; }
    std::size_t start_index() const noexcept { return start_; }
    std::size_t end_index() const noexcept { return end_; }
    std::size_t steps_per_episode() const noexcept { return end_ - start_; }
    std::size_t observation_size() const noexcept { return kMarketColumns.size() * cfg_.window + 2; }

    /// Installs a per-bar signal schedule: each bar takes the value of the
    /// most recent signal dated at or before it. Signals inside the episode
    /// must fall on block starts (start + k * signal_block).
    void attach_signals(std::span<const SignalFeature> signals) {
        constexpr const char* kModule = "trading_env";
        std::vector<SignalFeature> sorted(signals.begin(), signals.end());
        std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.date < b.date; });
        const auto& idx = data_.index();
        const Date first = idx[start_], last = idx[end_];
        std::vector<std::pair<std::size_t, double>> points;
        std::optional<double> before_start;
        for (const auto& s : sorted) {
            if (s.date < first) {
                before_start = s.value(cfg_.signal_mode);
                continue;
            }
            if (s.date > last) break;
            auto pos = data_.find(s.date);
            if (!pos) throw ScheduleError(kModule, "signal date " + format_date(s.date) + " is not a trading bar");
            if ((*pos - start_) % cfg_.signal_block != 0) {
                throw ScheduleError(kModule, "signal dated " + format_date(s.date) + " is not on a " +
                                                 std::to_string(cfg_.signal_block) + "-bar block start");
            }
            points.emplace_back(*pos, s.value(cfg_.signal_mode));
        }
        if ((points.empty() || points.front().first != start_) && !before_start) {
            throw ScheduleError(kModule, "no signal covers the episode start " + format_date(first));
        }
        std::vector<double> schedule(data_.rows(), 0.0);
        double current = before_start.value_or(0.0);
        std::size_t p = 0;
        for (std::size_t t = start_; t <= end_; ++t) {
            while (p < points.size() && points[p].first <= t) current = points[p++].second;
            schedule[t] = current;
        }
        schedule_ = std::move(schedule);
        signals_attached_ = true;
    }

    /// Signal slot value at bar t (0 when signals are off).
    double signal_at(std::size_t t) const { return cfg_.signal_mode == SignalMode::off ? 0.0 : schedule_.at(t); }

    Observation reset() {
        if (cfg_.signal_mode != SignalMode::off && !signals_attached_) {
            throw ScheduleError("trading_env", "signal mode is on but no signals are attached");
        }
        t_ = start_;
        cash_ = cfg_.initial_cash;
        shares_ = 0;
        done_ = false;
        active_ = true;
        trace_.clear();
        return observe();
    }

    StepResult step(int action) {
        constexpr const char* kModule = "trading_env";
        if (action != kShort && action != kLong) throw ArgumentError(kModule, "action must be 0 (SHORT) or 1 (LONG)");
        if (!active_) throw ProtocolError(kModule, "reset() must be called before step()");
        if (done_) throw ProtocolError(kModule, "step() after the episode finished");

        const auto& close = market_[3];
        StepInfo info;
        info.bar = t_;
        info.price_before = close[t_];
        info.equity_before = equity_at(info.price_before);

        const double p = info.price_before;
        if (action == kLong && shares_ <= 0) {
            if (shares_ < 0) trade(-shares_, p, false, info);
            trade(target_shares(p), p, false, info);
        } else if (action == kShort && shares_ >= 0) {
            if (shares_ > 0) trade(-shares_, p, false, info);
            trade(-target_shares(p), p, false, info);
        }
        info.shares_held = shares_;
        const double cash_after_trade = cash_;

        ++t_;
        const double p1 = close[t_];
        info.price_after = p1;
        double equity = equity_at(p1);
        if (shares_ < 0 && equity > 0 && -shares_ * p1 > cfg_.leverage_cap * equity) {
            // Cover enough shares that the remaining short fits under the cap.
            const double c = cfg_.cost_rate, cap = cfg_.leverage_cap;
            const double excess = (-shares_ * p1 - cap * equity) / (p1 * (1.0 - cap * c));
            long long cover = std::min<long long>(-shares_, static_cast<long long>(std::ceil(excess - 1e-12)));
            if (cover > 0) trade(cover, p1, true, info);
            equity = equity_at(p1);
        }
        info.equity_after = equity;
        info.bankrupt = !(equity > 0);
        done_ = info.bankrupt || t_ == end_;

        StepResult r;
        if (info.bankrupt) {
            r.reward = -1.0;
        } else if (cfg_.reward == RewardKind::log) {
            r.reward = std::log(equity / info.equity_before);
        } else {
            r.reward = equity / info.equity_before - 1.0;
        }
        r.done = done_;
        trace_.push_back({data_.index()[info.bar], action, p, info.shares_held, cash_after_trade, equity,
                          signal_at(info.bar), r.reward});
        r.info = std::move(info);
        r.observation = observe();
        return r;
    }

    bool done() const noexcept { return done_; }
    std::size_t current_index() const noexcept { return t_; }
    double cash() const noexcept { return cash_; }
    long long shares() const noexcept { return shares_; }
    double equity() const { return equity_at(market_[3][t_]); }
    const std::vector<TraceRow>& trace() const noexcept { return trace_; }

    /// Equity at the episode start followed by equity after every step.
    std::vector<double> equity_curve() const {
        std::vector<double> out{cfg_.initial_cash};
        for (const auto& r : trace_) out.push_back(r.equity);
        return out;
    }

    std::vector<double> rewards() const {
        std::vector<double> out;
        for (const auto& r : trace_) out.push_back(r.reward);
        return out;
    }

private:
    double equity_at(double price) const { return cash_ + static_cast<double>(shares_) * price; }

    /// Largest share count whose notional stays within the cap after paying
    /// the cost of opening it.
    long long target_shares(double price) const {
        const double e = equity_at(price);
        if (!(e > 0)) return 0;
        const double cap = cfg_.leverage_cap;
        return static_cast<long long>(std::floor(cap * e / (price * (1.0 + cap * cfg_.cost_rate))));
    }

    void trade(long long delta, double price, bool forced, StepInfo& info) {
        if (delta == 0) return;
        const double notional = std::abs(static_cast<double>(delta)) * price;
        const double cost = cfg_.cost_rate * notional;
        cash_ -= static_cast<double>(delta) * price + cost;
        shares_ += delta;
        info.costs += cost;
        info.fills.push_back({delta, price, cost, forced});
    }

    Observation observe() const {
        Observation o;
        o.values.reserve(observation_size());
        const std::size_t first = t_ + 1 - cfg_.window;
        for (std::size_t i = first; i <= t_; ++i) {
            for (const auto& col : market_) {
                const double base = col[first];
                o.values.push_back(base == 0.0 ? 0.0 : col[i] / base - 1.0);
            }
        }
        o.values.push_back(shares_ > 0 ? 1.0 : (shares_ < 0 ? -1.0 : 0.0));
        o.values.push_back(signal_at(t_));
        return o;
    }

    FeatureFrame data_;
    EpisodeConfig cfg_;
    std::array<std::vector<double>, 5> market_;
    std::vector<double> schedule_;
    bool signals_attached_ = false;
    std::size_t start_ = 0, end_ = 0, t_ = 0;
    double cash_ = 0.0;
    long long shares_ = 0;
    bool done_ = false;
    bool active_ = false;
    std::vector<TraceRow> trace_;
};

/// Trace CSV: date,action,price,shares,cash,equity,tau,reward.
inline void write_trace_csv(std::span<const TraceRow> rows, std::ostream& out) {
    out << "date,action,price,shares,cash,equity,tau,reward\n";
    for (const auto& r : rows) {
        out << format_date(r.date) << ',' << (r.action == kLong ? "LONG" : "SHORT") << ',' << format_double(r.price)
            << ',' << r.shares << ',' << format_double(r.cash) << ',' << format_double(r.equity) << ','
            << format_double(r.signal) << ',' << format_double(r.reward) << '\n';
    }
}

}  // namespace llmrl::env
