// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "toxprompt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "toxprompt/errors.hpp"

namespace toxprompt {

std::string to_string(TestKind kind) {
    return kind == TestKind::paired_t ? "paired-t" : "mann-whitney-u";
}

TestKind test_kind_from_string(std::string_view name) {
    if (name == "paired-t" || name == "paired_t") return TestKind::paired_t;
    if (name == "mann-whitney-u" || name == "mann_whitney_u") return TestKind::mann_whitney_u;
    throw ConfigError("unknown significance test '" + std::string(name) + "'");
}

nlohmann::json TestResult::to_json() const {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"kind", to_string(kind)}, {"statistic", num(statistic)}, {"df", df},
            {"p_value", p_value},      {"n", n},                      {"degenerate", degenerate}};
}

namespace {

// Continued fraction for I_x(a, b) by the modified Lentz method.
double beta_continued_fraction(double a, double b, double x) {
    constexpr double kTiny = 1e-300;
    constexpr double kEps = 1e-16;
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 100000; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0 && b > 0)) throw std::domain_error("incomplete_beta: a and b must be positive");
    if (!(x >= 0 && x <= 1)) throw std::domain_error("incomplete_beta: x outside [0, 1]");
    if (x == 0) return 0.0;
    if (x == 1) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    return t > 0 ? 1.0 - tail : tail;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

TestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw LengthMismatch("paired_t_test: samples differ in length");
    if (a.size() < 2) throw EmptyInput("paired_t_test: need at least two pairs");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));

    TestResult r;
    r.kind = TestKind::paired_t;
    r.n = n;
    r.df = static_cast<double>(n - 1);
    if (sd == 0.0) {
        r.degenerate = true;
        if (mean == 0.0) {
            r.statistic = 0.0;
            r.p_value = 1.0;
        } else {
            r.statistic = std::copysign(std::numeric_limits<double>::infinity(), mean);
            r.p_value = 0.0;
        }
        return r;
    }
    r.statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
    r.p_value = std::clamp(incomplete_beta(r.df / 2.0, 0.5, r.df / (r.df + r.statistic * r.statistic)), 0.0, 1.0);
    return r;
}

TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw EmptyInput("mann_whitney_u: both samples must be non-empty");
    const std::size_t n1 = a.size(), n2 = b.size(), total = n1 + n2;
    std::vector<std::pair<double, int>> all;
    all.reserve(total);
    for (double v : a) all.emplace_back(v, 0);
    for (double v : b) all.emplace_back(v, 1);
    std::sort(all.begin(), all.end());

    double rank_sum_a = 0.0, tie_term = 0.0;
    for (std::size_t i = 0; i < total;) {
        std::size_t j = i;
        while (j < total && all[j].first == all[i].first) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        for (std::size_t k = i; k < j; ++k) {
            if (all[k].second == 0) rank_sum_a += avg_rank;
        }
        i = j;
    }
    const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2), dn = static_cast<double>(total);
    TestResult r;
    r.kind = TestKind::mann_whitney_u;
    r.n = total;
    r.statistic = rank_sum_a - dn1 * (dn1 + 1.0) / 2.0;
    const double mu = dn1 * dn2 / 2.0;
    const double var = dn1 * dn2 / 12.0 * ((dn + 1.0) - (total > 1 ? tie_term / (dn * (dn - 1.0)) : 0.0));
    if (!(var > 0.0)) {
        r.degenerate = true;
        r.p_value = 1.0;
        return r;
    }
    const double z = std::max(0.0, std::fabs(r.statistic - mu) - 0.5) / std::sqrt(var);
    r.p_value = std::clamp(std::erfc(z / std::sqrt(2.0)), 0.0, 1.0);
    return r;
}

TestResult significance_test(std::span<const int> preds_a, std::span<const int> preds_b,
                             std::span<const int> gold, TestKind kind) {
    if (preds_a.size() != gold.size() || preds_b.size() != gold.size()) {
        throw LengthMismatch("significance_test: predictions and gold differ in length");
    }
    std::vector<double> ca(gold.size()), cb(gold.size());
    for (std::size_t i = 0; i < gold.size(); ++i) {
        ca[i] = preds_a[i] == gold[i] ? 1.0 : 0.0;
        cb[i] = preds_b[i] == gold[i] ? 1.0 : 0.0;
    }
    return kind == TestKind::paired_t ? paired_t_test(ca, cb) : mann_whitney_u(ca, cb);
}

}  // namespace toxprompt
