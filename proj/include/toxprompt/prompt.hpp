// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace toxprompt {

enum class PromptMethod { none, soft, prefix };

std::string to_string(PromptMethod method);
PromptMethod prompt_method_from_string(std::string_view name);

/// Training-time MLP that produces the prefix activations from a small seed
/// matrix: prefix_row(p) = W2 * tanh(W1 * seed_p + b1) + b2, split per layer into
/// key and value vectors. Dropped once training finishes.
struct PrefixReparam {
    std::size_t hidden = 0;
    std::vector<float> seed;  // [length x d_model]
    std::vector<float> w1;    // [d_model x hidden]
    std::vector<float> b1;    // [hidden]
    std::vector<float> w2;    // [hidden x (num_layers * 2 * d_model)]
    std::vector<float> b2;    // [num_layers * 2 * d_model]

    bool operator==(const PrefixReparam&) const = default;
};

/// Trainable prompt state.
///
/// soft:   values is [length x d_model], prepended to the input embeddings.
/// prefix: values is [num_layers x 2 x length x d_model] holding per-layer key
///         (index 0) and value (index 1) vectors prepended to every attention layer.
///         While `reparam` is set, the prefix is derived from it and `values` is unused.
/// none:   no learned parameters (manual templates).
struct PromptParams {
    PromptMethod method = PromptMethod::none;
    std::size_t length = 0;
    std::size_t num_layers = 0;
    std::size_t d_model = 0;
    std::vector<float> values;
    std::optional<PrefixReparam> reparam;

    static PromptParams none() { return {}; }

    std::vector<std::size_t> shape() const;
    std::size_t value_count() const;
    bool operator==(const PromptParams&) const = default;
};

/// A contiguous trainable matrix inside PromptParams, viewed as [rows x cols].
struct ParamBlock {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::span<float> data;
};

/// Trainable blocks in a fixed order; backends report gradients in the same order.
std::vector<ParamBlock> trainable_blocks(PromptParams& prompt);
std::vector<std::size_t> trainable_block_sizes(const PromptParams& prompt);

/// Runs the reparameterization MLP and returns a prompt holding the flat prefix.
/// Prompts without reparam are returned unchanged.
PromptParams materialize_prefix(const PromptParams& prompt);

}  // namespace toxprompt
