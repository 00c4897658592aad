// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "toxprompt/data_kit.hpp"
#include "toxprompt/lm_backend.hpp"
#include "toxprompt/prompt_engine.hpp"
#include "toxprompt/span_align.hpp"

namespace toxprompt {

/// Label words: toxic (1) maps to `toxic`, nontoxic (0) to `nontoxic`.
struct Verbalizer {
    std::string toxic = "Yes";
    std::string nontoxic = "No";

    const std::string& word(int label) const { return label ? toxic : nontoxic; }
    /// {nontoxic, toxic}, the order init_prompt expects for class-label init.
    std::vector<std::string> words() const { return {nontoxic, toxic}; }
    /// Throws ConfigError unless both words are non-empty, distinct and tokenize
    /// to different sequences.
    void validate(const LanguageModel& backend) const;
};

struct Prediction {
    int label = 0;
    /// Two-way softmax probability of the toxic word.
    double score = 0.0;
    /// Summed log-likelihood of each verbalizer word at the answer position.
    double toxic_logp = 0.0;
    double nontoxic_logp = 0.0;
};

/// Scores both verbalizer words after `text` and picks the likelier one
/// (ties go to nontoxic).
Prediction classify(const PromptParams& prompt, const LanguageModel& backend, const Verbalizer& verbalizer,
                    std::string_view text);

/// A hand-written prompt with one [INPUT] and one [MASK] slot.
class ManualTemplate {
public:
    static constexpr std::string_view kDefault =
        "[INPUT]\nQuestion: Does the above text contain rude, disrespectful, or unreasonable language?\nAnswer:[MASK]";

    explicit ManualTemplate(std::string text = std::string(kDefault));

    const std::string& text() const { return text_; }
    /// The template with [INPUT] replaced and [MASK] left in place.
    std::string fill(std::string_view input) const;
    /// Text before and after [MASK], with [INPUT] replaced.
    std::pair<std::string, std::string> split_at_mask(std::string_view input) const;

private:
    std::string text_;
};

/// Encodes the filled template up to [MASK] (anything after the mask follows a
/// separator token on encoder-decoder backends) and scores the verbalizer words there.
Prediction manual_classify(const ManualTemplate& tmpl, const LanguageModel& backend, const Verbalizer& verbalizer,
                           std::string_view text);

/// Generates a rewrite and maps the deleted characters back to offsets of `text`.
SpanSet detect_spans(const PromptParams& prompt, const LanguageModel& backend, std::string_view text,
                     const DecodeConfig& decode = {});

std::string detoxify(const PromptParams& prompt, const LanguageModel& backend, std::string_view text,
                     const DecodeConfig& decode = {});

// ---------------------------------------------------------------------------
// Training data

/// Task 1: input text -> verbalizer word (no end token). Task 2: text -> text with
/// spans removed. Task 3: toxic -> detox. Generation targets end with <eos>.
std::vector<EncodedPair> encode_training_pairs(const Dataset& ds, const LanguageModel& backend,
                                               const Verbalizer& verbalizer = {});

// ---------------------------------------------------------------------------
// Batch prediction

struct PredictionRow {
    std::string text;
    std::optional<int> pred_label;
    std::optional<SpanSet> offsets;
    std::optional<std::string> detox;
    std::optional<double> score;

    /// {"text", "pred_label"|"offsets"+"intervals"|"detox", "score"?}
    std::string to_json_line() const;
};

std::vector<PredictionRow> predict_labels(const PromptParams& prompt, const LanguageModel& backend,
                                          const Verbalizer& verbalizer, std::span<const std::string> texts,
                                          std::size_t workers = 1);
std::vector<PredictionRow> predict_spans(const PromptParams& prompt, const LanguageModel& backend,
                                         std::span<const std::string> texts, const DecodeConfig& decode = {},
                                         std::size_t workers = 1);
std::vector<PredictionRow> predict_detox(const PromptParams& prompt, const LanguageModel& backend,
                                         std::span<const std::string> texts, const DecodeConfig& decode = {},
                                         std::size_t workers = 1);

std::string predictions_jsonl(std::span<const PredictionRow> rows);

}  // namespace toxprompt
