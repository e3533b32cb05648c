#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "llmrl/eval/metrics.hpp"
#include "llmrl/eval/student_t.hpp"

namespace llmrl::eval {

enum class TestKind { paired, one_sample };

inline const char* to_string(TestKind k) { return k == TestKind::paired ? "paired" : "one_sample"; }

struct TestResult {
    TestKind kind = TestKind::paired;
    double t = 0.0;
    double p = 1.0;
    std::size_t n = 0;
    double mean_difference = 0.0;

    std::size_t df() const { return n - 1; }
};

namespace detail {

/// One-sample test of mean(x) against mu0. Zero variance: p = 1 when the mean
/// equals mu0, otherwise p = 0 with t = +/-inf. A spread at rounding level
/// (differences of shifted copies, say) counts as zero variance.
inline TestResult location_test(std::span<const double> x, double mu0, TestKind kind) {
    if (x.size() < 2) throw ArgumentError("evaluator", "t-test needs at least 2 observations");
    TestResult r;
    r.kind = kind;
    r.n = x.size();
    const double m = mean(x);
    r.mean_difference = m - mu0;
    double scale = std::abs(mu0);
    for (double v : x) scale = std::max(scale, std::abs(v));
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * scale;
    const double sd = sample_std(x);
    if (sd <= noise) {
        if (std::abs(r.mean_difference) <= noise) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = std::copysign(std::numeric_limits<double>::infinity(), r.mean_difference);
            r.p = 0.0;
        }
        return r;
    }
    r.t = r.mean_difference / (sd / std::sqrt(static_cast<double>(r.n)));
    r.p = stats::two_sided_p(r.t, static_cast<double>(r.n - 1));
    return r;
}

}  // namespace detail

/// Two-sided paired t-test on d = a - b.
inline TestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ArgumentError("evaluator", "paired t-test needs equal-length samples");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return detail::location_test(d, 0.0, TestKind::paired);
}

/// Two-sided one-sample t-test of the mean against mu0.
inline TestResult one_sample_t_test(std::span<const double> sample, double mu0) {
    return detail::location_test(sample, mu0, TestKind::one_sample);
}

}  // namespace llmrl::eval
