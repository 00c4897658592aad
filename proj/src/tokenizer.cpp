// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "toxprompt/tokenizer.hpp"

#include <stdexcept>
#include <unordered_set>

#include "toxprompt/errors.hpp"
#include "toxprompt/util.hpp"

namespace toxprompt {

WordByteTokenizer::WordByteTokenizer(std::vector<std::string> words) {
    for (auto& w : words) {
        if (w.empty() || index_.count(w)) continue;
        const auto cps = utf8_decode(w);
        for (char32_t c : cps) {
            if (is_space(c)) throw std::invalid_argument("vocabulary word contains whitespace: " + w);
        }
        index_.emplace(w, kWordBase + static_cast<int>(words_.size()));
        words_.push_back(std::move(w));
    }
}

int WordByteTokenizer::word_id(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? -1 : it->second;
}

TokenSeq WordByteTokenizer::encode(std::string_view text) const {
    const std::u32string cps = utf8_decode(text);
    TokenSeq out;
    std::size_t i = 0;
    while (i < cps.size()) {
        if (is_space(cps[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < cps.size() && !is_space(cps[j])) ++j;
        const std::u32string_view chunk(cps.data() + i, j - i);
        const std::string chunk_utf8 = utf8_encode(chunk);
        if (const int id = word_id(chunk_utf8); id >= 0) {
            out.ids.push_back(id);
            out.offsets.emplace_back(i, j);
        } else {
            for (std::size_t k = 0; k < chunk.size(); ++k) {
                const std::string bytes = utf8_encode(chunk.substr(k, 1));
                const std::size_t cp = i + k;
                for (std::size_t b = 0; b < bytes.size(); ++b) {
                    const int byte = static_cast<unsigned char>(bytes[b]);
                    const bool word_start = (k == 0 && b == 0);
                    out.ids.push_back((word_start ? kStartByteBase : kContByteBase) + byte);
                    if (b == 0) {
                        out.offsets.emplace_back(cp, cp + 1);
                    } else {
                        out.offsets.emplace_back(cp + 1, cp + 1);
                    }
                }
            }
        }
        i = j;
    }
    return out;
}

std::string WordByteTokenizer::decode(std::span<const int> ids) const {
    std::string raw;
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_size()) continue;
        if (id < kStartByteBase) continue;
        if (id < kContByteBase) {
            if (!raw.empty()) raw.push_back(' ');
            raw.push_back(static_cast<char>(id - kStartByteBase));
        } else if (id < kWordBase) {
            raw.push_back(static_cast<char>(id - kContByteBase));
        } else {
            if (!raw.empty()) raw.push_back(' ');
            raw += words_[static_cast<std::size_t>(id - kWordBase)];
        }
    }
    // Model output may contain arbitrary byte tokens.
    return utf8_valid(raw) ? raw : utf8_encode(utf8_decode_lossy(raw));
}

std::string WordByteTokenizer::token_text(int id) const {
    switch (id) {
        case kPad: return "<pad>";
        case kEos: return "<eos>";
        case kUnk: return "<unk>";
        case kSep: return "<sep>";
        default: break;
    }
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size()) return "<invalid>";
    if (id < kContByteBase) return "<b" + std::to_string(id - kStartByteBase) + ">";
    if (id < kWordBase) return "<c" + std::to_string(id - kContByteBase) + ">";
    return words_[static_cast<std::size_t>(id - kWordBase)];
}

std::vector<std::string> collect_words(std::span<const std::string> texts) {
    std::vector<std::string> words;
    std::unordered_set<std::string> seen;
    for (const auto& text : texts) {
        const auto cps = utf8_decode_lossy(text);
        std::size_t i = 0;
        while (i < cps.size()) {
            if (is_space(cps[i])) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < cps.size() && !is_space(cps[j])) ++j;
            auto w = utf8_encode(std::u32string_view(cps.data() + i, j - i));
            if (seen.insert(w).second) words.push_back(std::move(w));
            i = j;
        }
    }
    return words;
}

}  // namespace toxprompt
