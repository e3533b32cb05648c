#pragma once

#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrl/eval/ttest.hpp"

namespace llmrl::eval {

/// The two per-run numbers the comparison tables need.
struct RunMetrics {
    double sr = 0.0;   // annualized out-of-sample Sharpe
    double mdd = 0.0;  // out-of-sample max drawdown
};

struct InstrumentRuns {
    std::string ticker;
    std::map<std::string, std::vector<RunMetrics>> conditions;  // condition name -> runs
};

struct ConditionSummary {
    double sr_mean = 0.0, sr_std = 0.0, mdd_mean = 0.0, mdd_std = 0.0;
    std::size_t runs = 0;
};

struct PairTest {
    std::string first, second;
    TestResult result;
};

struct InstrumentReport {
    std::string ticker;
    std::map<std::string, ConditionSummary> conditions;
    std::vector<PairTest> tests;
};

struct MetricsReport {
    std::vector<InstrumentReport> instruments;
    std::map<std::string, ConditionSummary> condition_means;  // mean over instruments
    bool paired = true;
};

/// Welch's unequal-variance t-test, used when the report runs unpaired.
inline TestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw ArgumentError("evaluator", "Welch test needs 2+ values per sample");
    const double ma = mean(a), mb = mean(b);
    const double va = std::pow(sample_std(a), 2) / a.size(), vb = std::pow(sample_std(b), 2) / b.size();
    TestResult r;
    r.kind = TestKind::paired;
    r.n = a.size() + b.size();
    r.mean_difference = ma - mb;
    if (va + vb == 0.0) {
        r.t = r.mean_difference == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.mean_difference);
        r.p = r.mean_difference == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.t = r.mean_difference / std::sqrt(va + vb);
    const double df = (va + vb) * (va + vb) / (va * va / (a.size() - 1) + vb * vb / (b.size() - 1));
    r.p = stats::two_sided_p(r.t, df);
    return r;
}

namespace detail {

inline double std_or_zero(std::span<const double> x) { return x.size() < 2 ? 0.0 : sample_std(x); }

inline ConditionSummary summarize(const std::vector<RunMetrics>& runs) {
    std::vector<double> sr, mdd;
    for (const auto& r : runs) {
        sr.push_back(r.sr);
        mdd.push_back(r.mdd);
    }
    return {mean(sr), std_or_zero(sr), mean(mdd), std_or_zero(mdd), runs.size()};
}

}  // namespace detail

/// Per-instrument mean (sigma) SR and MDD per condition, condition means across
/// instruments, and a t-test on SR for every pair of conditions.
inline MetricsReport build_report(const std::vector<InstrumentRuns>& instruments, bool paired = true) {
    MetricsReport rep;
    rep.paired = paired;
    std::map<std::string, std::vector<ConditionSummary>> per_condition;
    for (const auto& inst : instruments) {
        InstrumentReport ir;
        ir.ticker = inst.ticker;
        for (const auto& [name, runs] : inst.conditions) {
            if (runs.empty()) throw ReportError("evaluator", inst.ticker + "/" + name + " has no runs");
            ir.conditions[name] = detail::summarize(runs);
            per_condition[name].push_back(ir.conditions[name]);
        }
        for (auto a = inst.conditions.begin(); a != inst.conditions.end(); ++a) {
            for (auto b = std::next(a); b != inst.conditions.end(); ++b) {
                std::vector<double> sa, sb;
                for (const auto& r : a->second) sa.push_back(r.sr);
                for (const auto& r : b->second) sb.push_back(r.sr);
                PairTest pt{a->first, b->first, {}};
                if (paired) {
                    if (sa.size() != sb.size()) {
                        throw ReportError("evaluator", inst.ticker + ": paired test between '" + a->first + "' (" +
                                                           std::to_string(sa.size()) + " runs) and '" + b->first +
                                                           "' (" + std::to_string(sb.size()) + " runs)");
                    }
                    pt.result = paired_t_test(sa, sb);
                } else {
                    pt.result = welch_t_test(sa, sb);
                }
                ir.tests.push_back(pt);
            }
        }
        rep.instruments.push_back(std::move(ir));
    }
    for (const auto& [name, sums] : per_condition) {
        ConditionSummary m;
        for (const auto& s : sums) {
            m.sr_mean += s.sr_mean / sums.size();
            m.mdd_mean += s.mdd_mean / sums.size();
            m.runs += s.runs;
        }
        rep.condition_means[name] = m;
    }
    return rep;
}

inline nlohmann::json to_json(const MetricsReport& rep) {
    nlohmann::json j;
    j["instruments"] = nlohmann::json::array();
    for (const auto& ir : rep.instruments) {
        nlohmann::json ij;
        ij["ticker"] = ir.ticker;
        ij["conditions"] = nlohmann::json::object();
        for (const auto& [name, s] : ir.conditions) {
            ij["conditions"][name] = {{"sr_mean", s.sr_mean}, {"sr_std", s.sr_std}, {"mdd_mean", s.mdd_mean},
                                      {"mdd_std", s.mdd_std}, {"runs", s.runs}};
        }
        ij["tests"] = nlohmann::json::array();
        for (const auto& t : ir.tests) {
            nlohmann::json tj = {{"pair", {t.first, t.second}},
                                 {"t", std::isfinite(t.result.t) ? nlohmann::json(t.result.t)
                                                                 : nlohmann::json(t.result.t > 0 ? "inf" : "-inf")},
                                 {"p", t.result.p},
                                 {"n", t.result.n},
                                 {"mean_difference", t.result.mean_difference},
                                 {"kind", rep.paired ? "paired" : "welch"}};
            ij["tests"].push_back(tj);
        }
        j["instruments"].push_back(ij);
    }
    j["condition_means"] = nlohmann::json::object();
    for (const auto& [name, s] : rep.condition_means) {
        j["condition_means"][name] = {{"sr_mean", s.sr_mean}, {"mdd_mean", s.mdd_mean}};
    }
    return j;
}

/// Aligned-text tables: one for SR, one for MDD, and a test table when there
/// is more than one condition.
inline std::string to_text(const MetricsReport& rep) {
    std::vector<std::string> names;
    for (const auto& [name, s] : rep.condition_means) names.push_back(name);
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    auto cell = [](double m, double s) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(2) << m << " (" << s << ")";
        return c.str();
    };
    for (const auto* metric : {"Sharpe Ratio", "Maximum Drawdown"}) {
        const bool is_sr = std::string(metric) == "Sharpe Ratio";
        out << metric << "\n" << std::left << std::setw(10) << "Ticker";
        for (const auto& n : names) out << std::right << std::setw(18) << (n + " (s)");
        out << "\n";
        for (const auto& ir : rep.instruments) {
            out << std::left << std::setw(10) << ir.ticker;
            for (const auto& n : names) {
                auto it = ir.conditions.find(n);
                std::string c = it == ir.conditions.end()
                                    ? "-"
                                    : (is_sr ? cell(it->second.sr_mean, it->second.sr_std)
                                             : cell(it->second.mdd_mean, it->second.mdd_std));
                out << std::right << std::setw(18) << c;
            }
            out << "\n";
        }
        out << std::left << std::setw(10) << "Mean";
        for (const auto& n : names) {
            const auto& s = rep.condition_means.at(n);
            std::ostringstream c;
            c << std::fixed << std::setprecision(2) << (is_sr ? s.sr_mean : s.mdd_mean);
            out << std::right << std::setw(18) << c.str();
        }
        out << "\n\n";
    }
    bool any_tests = false;
    for (const auto& ir : rep.instruments) any_tests = any_tests || !ir.tests.empty();
    if (any_tests) {
        out << (rep.paired ? "Paired" : "Welch") << " t-tests on SR\n";
        out << std::left << std::setw(10) << "Ticker" << std::setw(32) << "Pair" << std::right << std::setw(10)
            << "t" << std::setw(12) << "p" << "\n";
        for (const auto& ir : rep.instruments) {
            for (const auto& t : ir.tests) {
                std::ostringstream p;
                p << std::setprecision(3) << std::scientific << t.result.p;
                out << std::left << std::setw(10) << ir.ticker << std::setw(32) << (t.first + " vs " + t.second)
                    << std::right << std::setw(10) << t.result.t << std::setw(12) << p.str() << "\n";
            }
        }
    }
    return out.str();
}

}  // namespace llmrl::eval
