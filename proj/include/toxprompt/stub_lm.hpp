// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "toxprompt/lm_backend.hpp"

namespace toxprompt {

namespace detail {
struct TableLMWeights;
}

/// Hyperparameters of the deterministic stub transformer.
struct TableLMConfig {
    ModelFamily family = ModelFamily::encoder_decoder;
    std::size_t d_model = 16;
    std::size_t heads = 2;
    /// Layers per stack (encoder and decoder each, for encoder-decoder models).
    std::size_t layers = 2;
    std::size_t ffn = 32;
    std::size_t max_context = 256;
    std::uint64_t seed = 1234;

    double embed_scale = 1.0;     // half-width of the uniform token-embedding init
    double position_scale = 0.1;
    double value_noise = 0.1;     // W_v and W_o are identity plus this much uniform noise
    double ffn_scale = 0.1;

    /// Additive bigram scores: logit(to | previous token == from) += score.
    /// Words may also name the special tokens <pad>, <eos>, <sep>.
    struct Transition {
        std::string from;
        std::string to;
        double score = 0.0;
    };
    std::vector<Transition> transitions;

    /// Adds `amount` to coordinate `axis` of a word's embedding; lets tests plant
    /// a known direction (e.g. a marker word aligned with a verbalizer word).
    struct EmbeddingShift {
        std::string word;
        std::size_t axis = 0;
        double amount = 0.0;
    };
    std::vector<EmbeddingShift> embedding_shifts;
};

/// Small frozen transformer with table-driven output biases.
///
/// Encoder-decoder: bidirectional encoder over [soft prompt; input; <eos>], causal
/// decoder with cross-attention, started from <pad>. Decoder-only: one causal
/// stack over [soft prompt; input; <sep>; target]. Logits are tied to the input
/// embeddings plus the transition table. Immutable after construction.
class TableLM final : public LanguageModel {
public:
    TableLM(TableLMConfig config, WordByteTokenizer tokenizer);
    ~TableLM() override;

    static std::shared_ptr<TableLM> load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    const TableLMConfig& config() const { return config_; }

    const BackendDescriptor& descriptor() const override { return descriptor_; }
    const WordByteTokenizer& tokenizer() const override { return tokenizer_; }

    ForwardOutput forward_with_prompt(const PromptParams& prompt, const TokenSeq& input,
                                      const TokenSeq& target, GradMode mode = GradMode::none) const override;
    std::string generate(const PromptParams& prompt, const TokenSeq& input,
                         const DecodeConfig& cfg = {}) const override;
    double score_perplexity(std::string_view text) const override;
    std::vector<float> token_embedding(int id) const override;
    std::string compute_fingerprint() const override;

private:
    TableLM(TableLMConfig config, WordByteTokenizer tokenizer,
            std::unique_ptr<detail::TableLMWeights> weights);
    void finish_init();
    /// Log-probabilities for the next token after `decoder_tokens` (teacher forced).
    Eigen::VectorXd next_log_probs(const PromptParams& prompt, const TokenSeq& input,
                                   const std::vector<int>& generated) const;

    TableLMConfig config_;
    WordByteTokenizer tokenizer_;
    std::unique_ptr<detail::TableLMWeights> weights_;
    BackendDescriptor descriptor_;
};

/// Rule-driven LM for pipeline tests. The rule maps (input ids, ids generated so
/// far) to next-token logits over the vocabulary; entries may be -inf. Prompts
/// are shape-checked but have no effect, so prompt gradients are zero.
class ScriptedLM final : public LanguageModel {
public:
    using Rule = std::function<std::vector<double>(std::span<const int> input,
                                                   std::span<const int> generated)>;

    ScriptedLM(std::string name, WordByteTokenizer tokenizer, Rule rule,
               ModelFamily family = ModelFamily::encoder_decoder, std::size_t d_model = 8,
               std::size_t num_layers = 2, std::size_t max_context = 256);

    /// Uniform next-token distribution; perplexity equals the vocabulary size.
    static std::shared_ptr<ScriptedLM> uniform(WordByteTokenizer tokenizer);
    /// Emits encode(rewrite(decode(input))) followed by <eos> with probability 1.
    static std::shared_ptr<ScriptedLM> rewriter(WordByteTokenizer tokenizer,
                                                std::function<std::string(std::string_view)> rewrite,
                                                std::string name = "rewriter");
    static std::shared_ptr<ScriptedLM> echo(WordByteTokenizer tokenizer);
    /// First-position logits favour `yes_word` by `margin` iff the input holds `keyword`,
    /// otherwise `no_word`.
    static std::shared_ptr<ScriptedLM> keyword_classifier(WordByteTokenizer tokenizer,
                                                          const std::string& keyword,
                                                          const std::string& yes_word,
                                                          const std::string& no_word,
                                                          double margin = 2.0);

    const BackendDescriptor& descriptor() const override { return descriptor_; }
    const WordByteTokenizer& tokenizer() const override { return tokenizer_; }

    ForwardOutput forward_with_prompt(const PromptParams& prompt, const TokenSeq& input,
                                      const TokenSeq& target, GradMode mode = GradMode::none) const override;
    std::string generate(const PromptParams& prompt, const TokenSeq& input,
                         const DecodeConfig& cfg = {}) const override;
    double score_perplexity(std::string_view text) const override;
    std::vector<float> token_embedding(int id) const override;
    std::string compute_fingerprint() const override;

private:
    Eigen::VectorXd log_probs(std::span<const int> input, std::span<const int> generated) const;

    WordByteTokenizer tokenizer_;
    Rule rule_;
    BackendDescriptor descriptor_;
};

}  // namespace toxprompt
