// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "toxprompt/span_align.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <limits>

#include "toxprompt/errors.hpp"
#include "toxprompt/util.hpp"

namespace toxprompt {

SpanSet normalize_offsets(std::vector<std::size_t> offsets) {
    std::sort(offsets.begin(), offsets.end());
    offsets.erase(std::unique(offsets.begin(), offsets.end()), offsets.end());
    return offsets;
}

std::vector<Interval> span_offsets_to_intervals(std::span<const std::size_t> offsets) {
    const SpanSet sorted = normalize_offsets({offsets.begin(), offsets.end()});
    std::vector<Interval> out;
    for (std::size_t off : sorted) {
        if (!out.empty() && out.back().second == off) {
            ++out.back().second;
        } else {
            out.emplace_back(off, off + 1);
        }
    }
    return out;
}

SpanSet intervals_to_offsets(std::span<const Interval> intervals) {
    std::vector<std::size_t> out;
    for (const auto& [a, b] : intervals) {
        for (std::size_t i = a; i < b; ++i) out.push_back(i);
    }
    return normalize_offsets(std::move(out));
}

std::string remove_spans(std::string_view text, std::span<const std::size_t> offsets) {
    const std::u32string cps = utf8_decode(text);
    if (offsets.empty()) return std::string(text);
    std::vector<bool> gone(cps.size(), false);
    for (std::size_t off : offsets) {
        if (off >= cps.size()) {
            throw OffsetOutOfRange("offset " + std::to_string(off) + " outside text of length " +
                                   std::to_string(cps.size()));
        }
        gone[off] = true;
    }
    std::u32string out;
    bool pending = false;  // inside a deletion site
    bool spaced = false;   // the site touched whitespace
    for (std::size_t i = 0; i < cps.size(); ++i) {
        const char32_t c = cps[i];
        if (gone[i]) {
            if (!pending) {
                while (!out.empty() && is_space(out.back())) {
                    out.pop_back();
                    spaced = true;
                }
            }
            pending = true;
            continue;
        }
        if (pending && is_space(c)) {
            spaced = true;
            continue;
        }
        if (pending) {
            if (spaced && !out.empty()) out.push_back(U' ');
            pending = false;
            spaced = false;
        }
        out.push_back(c);
    }
    return utf8_encode(out);
}

namespace {

// Alignment costs packed into one integer so that addition keeps the
// lexicographic order: unmatched characters, then run ends inside a word, then runs.
constexpr int kFieldBits = 21;
constexpr std::int64_t kUnmatched = std::int64_t{1} << (2 * kFieldBits);
constexpr std::int64_t kRagged = std::int64_t{1} << kFieldBits;
constexpr std::int64_t kRun = 1;

}  // namespace

SpanSet unmatched_offsets(std::string_view original, std::string_view generated) {
    const std::u32string a = utf8_decode_lossy(original);
    const std::u32string b = utf8_decode_lossy(generated);
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    if (a == b) return {};
    if (n >= (std::size_t{1} << (kFieldBits - 2))) {
        throw std::length_error("unmatched_offsets: text longer than 2^19 code points");
    }
    // A cut before position p lies on a word boundary if either neighbour is whitespace
    // or p is a text edge.
    auto ragged = [&](std::size_t p) -> std::int64_t {
        if (p == 0 || p == n) return 0;
        return (is_space(a[p - 1]) || is_space(a[p])) ? 0 : kRagged;
    };
    // State 0: previous original character matched. 1: inside an unmatched run.
    // 2: inside a run that began by swallowing the space after a word; closing it
    // with another swallowed space before a word glues two words together, which
    // removing whole words never does.
    auto opened_state = [&](std::size_t i) { return i > 0 && is_space(a[i]) && !is_space(a[i - 1]) ? 2 : 1; };
    auto close_cost = [&](int s, std::size_t i) -> std::int64_t {
        if (s == 0) return 0;
        std::int64_t c = ragged(i);
        if (s == 2 && i < n && is_space(a[i - 1]) && !is_space(a[i])) c += kRagged;
        return c;
    };
    auto open_cost = [&](int s, std::size_t i) { return s == 0 ? kRun + ragged(i) : 0; };
    auto next_state = [&](int s, std::size_t i) { return s == 0 ? opened_state(i) : s; };

    // best[(i * (m + 1) + j) * 3 + s]: cheapest completion from (i, j) in state s.
    const std::size_t stride = m + 1;
    std::vector<std::int64_t> best((n + 1) * stride * 3);
    auto at = [&](std::size_t i, std::size_t j, int s) -> std::int64_t& { return best[(i * stride + j) * 3 + s]; };

    for (std::size_t i = n + 1; i-- > 0;) {
        for (std::size_t j = m + 1; j-- > 0;) {
            for (int s = 0; s < 3; ++s) {
                std::int64_t v = std::numeric_limits<std::int64_t>::max();
                if (i == n && j == m) v = close_cost(s, i);
                if (i < n && j < m && a[i] == b[j]) v = std::min(v, close_cost(s, i) + at(i + 1, j + 1, 0));
                if (j < m) v = std::min(v, at(i, j + 1, s));
                if (i < n) v = std::min(v, open_cost(s, i) + kUnmatched + at(i + 1, j, next_state(s, i)));
                at(i, j, s) = v;
            }
        }
    }

    SpanSet out;
    std::size_t i = 0, j = 0;
    int s = 0;
    while (i < n || j < m) {
        const std::int64_t here = at(i, j, s);
        if (i < n && j < m && a[i] == b[j] && close_cost(s, i) + at(i + 1, j + 1, 0) == here) {
            ++i, ++j, s = 0;
        } else if (j < m && at(i, j + 1, s) == here) {
            ++j;
        } else {
            out.push_back(i);
            s = next_state(s, i);
            ++i;
        }
    }
    return out;
}

SpanSet trim_spans(std::string_view text, std::span<const std::size_t> offsets) {
    const std::u32string cps = utf8_decode_lossy(text);
    SpanSet out;
    for (auto [lo, hi] : span_offsets_to_intervals(offsets)) {
        hi = std::min(hi, cps.size());
        while (lo < hi && is_space(cps[lo])) ++lo;
        while (hi > lo && is_space(cps[hi - 1])) --hi;
        for (std::size_t k = lo; k < hi; ++k) out.push_back(k);
    }
    return out;
}

SpanSet subtract_spans(std::string_view original, std::string_view generated) {
    return trim_spans(original, unmatched_offsets(original, generated));
}

std::string span_report_line(std::string_view text, std::span<const std::size_t> offsets) {
    nlohmann::json j;
    j["text"] = std::string(text);
    j["offsets"] = normalize_offsets({offsets.begin(), offsets.end()});
    auto& iv = j["intervals"] = nlohmann::json::array();
    for (const auto& [a, b] : span_offsets_to_intervals(offsets)) iv.push_back({a, b});
    return j.dump();
}

}  // namespace toxprompt
