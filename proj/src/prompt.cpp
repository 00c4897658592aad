// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "toxprompt/prompt.hpp"

#include <Eigen/Dense>

#include "toxprompt/errors.hpp"

namespace toxprompt {

std::string to_string(PromptMethod method) {
    switch (method) {
        case PromptMethod::none: return "none";
        case PromptMethod::soft: return "soft";
        case PromptMethod::prefix: return "prefix";
    }
    return "none";
}

PromptMethod prompt_method_from_string(std::string_view name) {
    if (name == "soft") return PromptMethod::soft;
    if (name == "prefix") return PromptMethod::prefix;
    if (name == "none") return PromptMethod::none;
    throw ConfigError("unknown prompt method '" + std::string(name) + "' (expected soft|prefix)");
}

std::vector<std::size_t> PromptParams::shape() const {
    switch (method) {
        case PromptMethod::soft: return {length, d_model};
        case PromptMethod::prefix: return {num_layers, 2, length, d_model};
        case PromptMethod::none: break;
    }
    return {0};
}

std::size_t PromptParams::value_count() const {
    std::size_t n = 1;
    for (auto s : shape()) n *= s;
    return n;
}

std::vector<ParamBlock> trainable_blocks(PromptParams& prompt) {
    std::vector<ParamBlock> blocks;
    const std::size_t d = prompt.d_model;
    switch (prompt.method) {
        case PromptMethod::none:
            break;
        case PromptMethod::soft:
            blocks.push_back({"soft", prompt.length, d, prompt.values});
            break;
        case PromptMethod::prefix:
            if (prompt.reparam) {
                auto& r = *prompt.reparam;
                const std::size_t out = prompt.num_layers * 2 * d;
                blocks.push_back({"reparam.seed", prompt.length, d, r.seed});
                blocks.push_back({"reparam.w1", d, r.hidden, r.w1});
                blocks.push_back({"reparam.b1", 1, r.hidden, r.b1});
                blocks.push_back({"reparam.w2", r.hidden, out, r.w2});
                blocks.push_back({"reparam.b2", 1, out, r.b2});
            } else {
                blocks.push_back({"prefix", prompt.num_layers * 2 * prompt.length, d, prompt.values});
            }
            break;
    }
    return blocks;
}

std::vector<std::size_t> trainable_block_sizes(const PromptParams& prompt) {
    auto copy = prompt;
    std::vector<std::size_t> sizes;
    for (const auto& b : trainable_blocks(copy)) sizes.push_back(b.rows * b.cols);
    return sizes;
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMat to_mat(const std::vector<float>& v, std::size_t rows, std::size_t cols) {
    RowMat m(rows, cols);
    for (std::size_t i = 0; i < rows * cols; ++i) m.data()[i] = v[i];
    return m;
}

}  // namespace

PromptParams materialize_prefix(const PromptParams& prompt) {
    if (prompt.method != PromptMethod::prefix || !prompt.reparam) return prompt;
    const auto& r = *prompt.reparam;
    const std::size_t d = prompt.d_model;
    const std::size_t layers = prompt.num_layers;
    const std::size_t out_width = layers * 2 * d;
    const RowMat seed = to_mat(r.seed, prompt.length, d);
    const RowMat w1 = to_mat(r.w1, d, r.hidden);
    const RowMat b1 = to_mat(r.b1, 1, r.hidden);
    const RowMat w2 = to_mat(r.w2, r.hidden, out_width);
    const RowMat b2 = to_mat(r.b2, 1, out_width);

    RowMat hidden = seed * w1;
    hidden.rowwise() += b1.row(0);
    hidden = hidden.array().tanh().matrix();
    RowMat out = hidden * w2;
    out.rowwise() += b2.row(0);

    PromptParams flat = prompt;
    flat.reparam.reset();
    flat.values.assign(layers * 2 * prompt.length * d, 0.0f);
    for (std::size_t l = 0; l < layers; ++l) {
        for (std::size_t kv = 0; kv < 2; ++kv) {
            for (std::size_t p = 0; p < prompt.length; ++p) {
                for (std::size_t c = 0; c < d; ++c) {
                    flat.values[((l * 2 + kv) * prompt.length + p) * d + c] =
                        static_cast<float>(out(p, (l * 2 + kv) * d + c));
                }
            }
        }
    }
    return flat;
}

}  // namespace toxprompt
