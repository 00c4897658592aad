// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "toxprompt/prompt.hpp"
#include "toxprompt/tokenizer.hpp"

namespace toxprompt {

enum class ModelFamily { encoder_decoder, decoder_only };

std::string to_string(ModelFamily family);
ModelFamily model_family_from_string(std::string_view name);

/// Static facts about a frozen backend.
///
/// For encoder-decoder models `num_layers` counts every attention stack that
/// carries a prefix: encoder layers followed by decoder layers.
struct BackendDescriptor {
    std::string name;
    ModelFamily family = ModelFamily::encoder_decoder;
    std::size_t num_layers = 0;
    std::size_t d_model = 0;
    std::size_t vocab_size = 0;
    std::size_t max_context = 0;
    std::string frozen_fingerprint;
};

struct DecodeConfig {
    std::size_t max_len = 64;
    /// 1 = greedy; larger values run a fixed-width beam search.
    std::size_t beam_width = 1;
    std::uint64_t seed = 0;
};

enum class GradMode { none, prompt };

struct ForwardOutput {
    /// Sum of token negative log-likelihoods of the target.
    double loss = 0.0;
    /// Row t holds log P(. | context) for target position t.
    Eigen::MatrixXd log_probs;
    /// Gradient of `loss` per trainable prompt block (see trainable_blocks);
    /// empty unless GradMode::prompt was requested.
    std::vector<std::vector<double>> prompt_grad;
};

/// A frozen pretrained language model with prompt injection.
///
/// Soft prompts are prepended to the input embedding sequence; prefixes are
/// prepended to the key/value streams of every self-attention layer. All methods
/// are const: a backend never changes its own parameters.
class LanguageModel {
public:
    virtual ~LanguageModel() = default;

    virtual const BackendDescriptor& descriptor() const = 0;
    virtual const WordByteTokenizer& tokenizer() const = 0;

    TokenSeq encode(std::string_view text) const { return tokenizer().encode(text); }
    std::string decode(std::span<const int> ids) const { return tokenizer().decode(ids); }
    int eos_id() const { return WordByteTokenizer::kEos; }

    virtual ForwardOutput forward_with_prompt(const PromptParams& prompt, const TokenSeq& input,
                                              const TokenSeq& target,
                                              GradMode mode = GradMode::none) const = 0;

    virtual std::string generate(const PromptParams& prompt, const TokenSeq& input,
                                 const DecodeConfig& cfg = {}) const = 0;

    /// exp(mean token NLL) of `text` with no prompt. Throws EmptyText.
    virtual double score_perplexity(std::string_view text) const = 0;

    /// Input embedding row of a token.
    virtual std::vector<float> token_embedding(int id) const = 0;

    /// Digest recomputed from the current base parameters.
    virtual std::string compute_fingerprint() const = 0;
};

/// Throws ShapeMismatch when `prompt` does not fit `desc`.
void check_prompt_shape(const PromptParams& prompt, const BackendDescriptor& desc);

/// Token count the prompt adds to the attention span.
std::size_t prompt_span(const PromptParams& prompt);

/// Appends the end-of-sequence token (with an empty offset at the text end).
TokenSeq with_eos(TokenSeq seq, int eos_id = WordByteTokenizer::kEos);

/// Backend construction from the `backend.*` configuration keys:
///   backend.name   stub | stub-decoder | uniform | echo
///   backend.path   weights file written by TableLM::save (optional for stub)
///   backend.d_model, backend.layers, backend.heads, backend.max_context, backend.seed
/// `vocabulary` seeds the stub tokenizer's word list.
std::shared_ptr<const LanguageModel> make_backend(const std::map<std::string, std::string>& config,
                                                  std::vector<std::string> vocabulary);

}  // namespace toxprompt
