// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "toxprompt/errors.hpp"
#include "toxprompt/tokenizer.hpp"
#include "toxprompt/util.hpp"

namespace toxprompt {
namespace {

std::string normalize_ws(std::string_view s) {
    std::string out;
    const std::u32string cps = utf8_decode(s);
    bool pending = false;
    for (char32_t c : cps) {
        if (is_space(c)) {
            pending = !out.empty();
            continue;
        }
        if (pending) out.push_back(' ');
        pending = false;
        out += utf8_encode(std::u32string(1, c));
    }
    return out;
}

TEST(Tokenizer, WordsAndOffsets) {
    WordByteTokenizer tok({"a", "dog"});
    const TokenSeq s = tok.encode("a dog");
    EXPECT_EQ(s.ids, (std::vector<int>{tok.word_id("a"), tok.word_id("dog")}));
    EXPECT_EQ(s.offsets, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {2, 5}}));
    EXPECT_TRUE(tok.encode("").empty());
    EXPECT_EQ(tok.word_id("cat"), -1);
    EXPECT_EQ(tok.vocab_size(), static_cast<std::size_t>(WordByteTokenizer::kWordBase) + 2);
}

TEST(Tokenizer, ByteFallbackRoundTrip) {
    WordByteTokenizer tok({"keep"});
    EXPECT_EQ(tok.decode(tok.encode("keep hiring imbeciles").ids), "keep hiring imbeciles");
    EXPECT_EQ(tok.decode(tok.encode("  naïve\tcafé  ").ids), "naïve café");
    // special tokens decode to nothing
    EXPECT_EQ(tok.decode(std::vector<int>{WordByteTokenizer::kEos, WordByteTokenizer::kPad}), "");
}

TEST(Tokenizer, InvalidUtf8Rejected) {
    WordByteTokenizer tok;
    EXPECT_THROW(tok.encode("ok \xff"), TokenizationError);
    EXPECT_THROW(tok.encode("\xc3"), TokenizationError);
}

TEST(Tokenizer, RandomRoundTripAndOffsetCoverage) {
    const std::vector<std::string> pieces = {"the", "cat", "é", "ß", "😀", "x", " ", "  ", "\t", "\n", "a", "ok!"};
    WordByteTokenizer tok({"the", "cat", "a"});
    Rng rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        std::string text;
        const std::size_t n = rng.index(12);
        for (std::size_t k = 0; k < n; ++k) text += pieces[rng.index(pieces.size())];
        const TokenSeq s = tok.encode(text);
        ASSERT_EQ(tok.decode(s.ids), normalize_ws(text)) << text;
        ASSERT_EQ(s.ids.size(), s.offsets.size());
        // offsets are ordered, disjoint and cover each non-space code point once
        const std::u32string cps = utf8_decode(text);
        std::vector<int> covered(cps.size(), 0);
        std::size_t prev_end = 0;
        for (const auto& [b, e] : s.offsets) {
            ASSERT_LE(prev_end, b);
            ASSERT_LE(b, e);
            ASSERT_LE(e, cps.size());
            for (std::size_t i = b; i < e; ++i) ++covered[i];
            prev_end = e;
        }
        for (std::size_t i = 0; i < cps.size(); ++i) ASSERT_EQ(covered[i], is_space(cps[i]) ? 0 : 1) << text;
    }
}

TEST(Tokenizer, CollectWordsFirstSeenOrder) {
    const std::vector<std::string> texts = {"b a b", " c  a", ""};
    EXPECT_EQ(collect_words(texts), (std::vector<std::string>{"b", "a", "c"}));
}

}  // namespace
}  // namespace toxprompt
