// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace toxprompt {

enum class TestKind { paired_t, mann_whitney_u };

std::string to_string(TestKind kind);
TestKind test_kind_from_string(std::string_view name);

struct TestResult {
    TestKind kind = TestKind::paired_t;
    double statistic = 0.0;
    double df = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
    /// Zero variance: p is 1 when the samples agree, 0 when they differ by a constant.
    bool degenerate = false;

    nlohmann::json to_json() const;
};

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

/// Standard normal CDF.
double normal_cdf(double z);

/// Two-sided paired t-test on a - b.
TestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// Two-sided Mann-Whitney U with normal approximation, tie and continuity corrections.
TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b);

/// Compares two systems on per-example correctness (1 if pred == gold, else 0).
TestResult significance_test(std::span<const int> preds_a, std::span<const int> preds_b,
                             std::span<const int> gold, TestKind kind);

}  // namespace toxprompt
