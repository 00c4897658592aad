// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "toxprompt/span_align.hpp"

namespace toxprompt {

class LanguageModel;
class ToxicityScorer;

// ---------------------------------------------------------------------------
// Classification. Label 1 is toxic (the positive class), 0 nontoxic.

struct ClfReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    nlohmann::json to_json() const;
};

ClfReport clf_metrics(std::span<const int> preds, std::span<const int> gold);

// ---------------------------------------------------------------------------
// Spans

struct SpanScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Both empty scores (1, 1, 1); exactly one empty scores F1 0.
SpanScore span_f1(std::span<const std::size_t> gold, std::span<const std::size_t> pred);

struct SpanPair {
    SpanSet gold;
    SpanSet pred;
};

/// Unweighted mean of per-sample F1.
double corpus_span_f1(std::span<const SpanPair> pairs);

// ---------------------------------------------------------------------------
// Text similarity

/// Corpus BLEU-4 against one reference per hypothesis, whitespace tokens.
/// Unigram precision is unsmoothed; orders 2-4 use add-one smoothing.
double corpus_bleu(std::span<const std::string> hypotheses, std::span<const std::string> references);

double cosine_similarity(std::span<const float> u, std::span<const float> v);

/// Maps text to a fixed-width vector.
class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual std::vector<float> embed(std::string_view text) const = 0;
    virtual std::string name() const = 0;
};

/// Signed feature hashing of lower-cased whitespace tokens.
class HashingWordEmbedder final : public TextEmbedder {
public:
    explicit HashingWordEmbedder(std::size_t dim = 512) : dim_(dim) {}
    std::vector<float> embed(std::string_view text) const override;
    std::string name() const override { return "hash-word"; }

private:
    std::size_t dim_;
};

/// Signed feature hashing of character n-grams of the space-padded text.
class HashingCharEmbedder final : public TextEmbedder {
public:
    explicit HashingCharEmbedder(std::size_t n = 3, std::size_t dim = 512) : n_(n), dim_(dim) {}
    std::vector<float> embed(std::string_view text) const override;
    std::string name() const override { return "hash-char"; }

private:
    std::size_t n_;
    std::size_t dim_;
};

/// Mean of per-pair cosine similarities.
double mean_pair_similarity(const TextEmbedder& embedder, std::span<const std::string> a,
                            std::span<const std::string> b);

// ---------------------------------------------------------------------------
// Detoxification

struct DetoxInputs {
    std::span<const std::string> originals;
    std::span<const std::string> generated;
    /// Optional gold rewrites; when present, bleu_ref is BLEU against them.
    std::span<const std::string> references = {};
};

struct DetoxProviders {
    ToxicityScorer* scorer = nullptr;  // null: toxicity fields are left empty and flagged
    const TextEmbedder* word_embedder = nullptr;
    const TextEmbedder* flair_embedder = nullptr;
    const LanguageModel* fluency = nullptr;
    std::size_t workers = 1;
};

struct DetoxReport {
    std::size_t n = 0;
    std::optional<double> t_avg, t_07, t_09;
    double bleu = 0.0;
    std::optional<double> bleu_ref;
    double sim_w = 0.0;
    double sim_f = 0.0;
    std::optional<double> token_ppl;
    bool toxicity_unavailable = false;
    std::string scorer_error;
    /// Rows whose score failed (toxicity) or whose perplexity was undefined.
    std::vector<std::size_t> unscored_rows;
    std::vector<std::size_t> ppl_failed_rows;

    nlohmann::json to_json() const;
};

/// Toxicity aggregates from raw scores: mean and fractions strictly above 0.7 / 0.9.
void toxicity_aggregates(std::span<const double> scores, DetoxReport& report);

DetoxReport detox_report(const DetoxInputs& inputs, const DetoxProviders& providers);

// ---------------------------------------------------------------------------
// Threshold search

struct ThresholdResult {
    double threshold = 0.5;
    double f1 = 0.0;
};

/// Candidates are midpoints between consecutive distinct scores plus one below
/// the minimum (min/2, when min > 0) and one at or above the maximum ((max+1)/2).
/// Prediction is toxic iff score > threshold. Ties go to the lowest threshold.
ThresholdResult best_threshold(std::span<const double> scores, std::span<const int> gold);

std::vector<int> apply_threshold(std::span<const double> scores, double threshold);

}  // namespace toxprompt
