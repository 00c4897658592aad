// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace toxprompt {

/// Sorted, duplicate-free code-point offsets into a text.
using SpanSet = std::vector<std::size_t>;
/// Half-open code-point range [first, second).
using Interval = std::pair<std::size_t, std::size_t>;

/// Sorts and deduplicates.
SpanSet normalize_offsets(std::vector<std::size_t> offsets);

/// Maximal half-open runs, sorted. {1,2,4} -> [(1,3),(4,5)].
std::vector<Interval> span_offsets_to_intervals(std::span<const std::size_t> offsets);
SpanSet intervals_to_offsets(std::span<const Interval> intervals);

/// Deletes the characters at `offsets`. Whitespace touching a deletion site is
/// merged into a single space, or dropped where the deletion reaches the start or
/// end of the text. Throws OffsetOutOfRange.
std::string remove_spans(std::string_view text, std::span<const std::size_t> offsets);

/// Offsets of `original` left unmatched by a longest common subsequence with
/// `generated`. Among maximum alignments the one with the fewest unmatched-run
/// ends falling inside a word wins, then the fewest runs, then the leftmost matches.
SpanSet unmatched_offsets(std::string_view original, std::string_view generated);

/// Drops whitespace at both ends of every maximal run.
SpanSet trim_spans(std::string_view text, std::span<const std::size_t> offsets);

/// The subtract mapping: unmatched_offsets followed by trim_spans.
SpanSet subtract_spans(std::string_view original, std::string_view generated);

/// {"text": ..., "offsets": [...], "intervals": [[start, end], ...]}
std::string span_report_line(std::string_view text, std::span<const std::size_t> offsets);

}  // namespace toxprompt
