// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace toxprompt {

/// Token ids plus the half-open code-point range each token covers in the source text.
struct TokenSeq {
    std::vector<int> ids;
    std::vector<std::pair<std::size_t, std::size_t>> offsets;

    std::size_t size() const { return ids.size(); }
    bool empty() const { return ids.empty(); }
    bool operator==(const TokenSeq&) const = default;
};

/// Whitespace word tokenizer with a byte-level fallback.
///
/// A whitespace-delimited chunk that appears in the word list becomes one token;
/// any other chunk is spelled out as UTF-8 bytes, the first byte using the
/// "word-start" byte range so decoding can restore the separating space.
/// Normalization: decode(encode(x)) collapses whitespace runs to one space and
/// strips leading/trailing whitespace.
///
/// Layout: 4 special tokens, 256 word-start bytes, 256 continuation bytes, words.
class WordByteTokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kEos = 1;
    static constexpr int kUnk = 2;
    static constexpr int kSep = 3;
    static constexpr int kStartByteBase = 4;
    static constexpr int kContByteBase = kStartByteBase + 256;
    static constexpr int kWordBase = kContByteBase + 256;

    explicit WordByteTokenizer(std::vector<std::string> words = {});

    TokenSeq encode(std::string_view text) const;
    std::string decode(std::span<const int> ids) const;

    std::size_t vocab_size() const { return kWordBase + words_.size(); }
    const std::vector<std::string>& words() const { return words_; }

    /// Id of a whole-word token, or -1.
    int word_id(std::string_view word) const;
    std::string token_text(int id) const;

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

/// Splits text on whitespace into the distinct words, in first-seen order.
std::vector<std::string> collect_words(std::span<const std::string> texts);

}  // namespace toxprompt
