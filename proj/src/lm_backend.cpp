// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "toxprompt/lm_backend.hpp"

#include <string>

#include "toxprompt/errors.hpp"
#include "toxprompt/stub_lm.hpp"

namespace toxprompt {

std::string to_string(ModelFamily family) {
    return family == ModelFamily::encoder_decoder ? "encoder-decoder" : "decoder-only";
}

ModelFamily model_family_from_string(std::string_view name) {
    if (name == "encoder-decoder") return ModelFamily::encoder_decoder;
    if (name == "decoder-only") return ModelFamily::decoder_only;
    throw ConfigError("unknown model family '" + std::string(name) + "'");
}

void check_prompt_shape(const PromptParams& prompt, const BackendDescriptor& desc) {
    auto fail = [&](const std::string& what) {
        throw ShapeMismatch(what + " (backend " + desc.name + ": d_model=" +
                            std::to_string(desc.d_model) +
                            ", num_layers=" + std::to_string(desc.num_layers) + ")");
    };
    switch (prompt.method) {
        case PromptMethod::none:
            return;
        case PromptMethod::soft:
            if (prompt.d_model != desc.d_model) {
                fail("soft prompt width " + std::to_string(prompt.d_model));
            }
            if (prompt.length == 0) fail("soft prompt length 0");
            if (prompt.values.size() != prompt.length * prompt.d_model) {
                fail("soft prompt holds " + std::to_string(prompt.values.size()) + " values");
            }
            return;
        case PromptMethod::prefix:
            if (prompt.d_model != desc.d_model) fail("prefix width " + std::to_string(prompt.d_model));
            if (prompt.num_layers != desc.num_layers) {
                fail("prefix layer count " + std::to_string(prompt.num_layers));
            }
            if (prompt.length == 0) fail("prefix length 0");
            if (prompt.reparam) {
                const auto& r = *prompt.reparam;
                const std::size_t out = prompt.num_layers * 2 * prompt.d_model;
                if (r.seed.size() != prompt.length * prompt.d_model ||
                    r.w1.size() != prompt.d_model * r.hidden || r.b1.size() != r.hidden ||
                    r.w2.size() != r.hidden * out || r.b2.size() != out) {
                    fail("inconsistent reparameterization shapes");
                }
            } else if (prompt.values.size() != prompt.value_count()) {
                fail("prefix holds " + std::to_string(prompt.values.size()) + " values");
            }
            return;
    }
}

std::size_t prompt_span(const PromptParams& prompt) {
    return prompt.method == PromptMethod::none ? 0 : prompt.length;
}

TokenSeq with_eos(TokenSeq seq, int eos_id) {
    const std::size_t end = seq.offsets.empty() ? 0 : seq.offsets.back().second;
    seq.ids.push_back(eos_id);
    seq.offsets.emplace_back(end, end);
    return seq;
}

namespace {

std::size_t get_size(const std::map<std::string, std::string>& cfg, const std::string& key,
                     std::size_t fallback) {
    auto it = cfg.find(key);
    if (it == cfg.end() || it->second.empty()) return fallback;
    try {
        return static_cast<std::size_t>(std::stoull(it->second));
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " expects an integer, got '" + it->second + "'");
    }
}

}  // namespace

std::shared_ptr<const LanguageModel> make_backend(const std::map<std::string, std::string>& config,
                                                  std::vector<std::string> vocabulary) {
    const auto name_it = config.find("backend.name");
    const std::string name = name_it == config.end() ? "stub" : name_it->second;
    const auto path_it = config.find("backend.path");
    if (path_it != config.end() && !path_it->second.empty()) {
        if (name != "stub" && name != "stub-decoder") {
            throw ConfigError("backend.path is only supported for stub backends, got " + name);
        }
        return TableLM::load(path_it->second);
    }

    if (name == "stub" || name == "stub-decoder") {
        TableLMConfig cfg;
        cfg.family = name == "stub" ? ModelFamily::encoder_decoder : ModelFamily::decoder_only;
        cfg.d_model = get_size(config, "backend.d_model", cfg.d_model);
        cfg.layers = get_size(config, "backend.layers", cfg.layers);
        cfg.heads = get_size(config, "backend.heads", cfg.heads);
        cfg.ffn = get_size(config, "backend.ffn", cfg.ffn);
        cfg.max_context = get_size(config, "backend.max_context", cfg.max_context);
        cfg.seed = get_size(config, "backend.seed", cfg.seed);
        if (cfg.d_model == 0 || cfg.heads == 0 || cfg.d_model % cfg.heads != 0) {
            throw ConfigError("backend.d_model must be a positive multiple of backend.heads");
        }
        return std::make_shared<TableLM>(cfg, WordByteTokenizer(std::move(vocabulary)));
    }
    if (name == "uniform") return ScriptedLM::uniform(WordByteTokenizer(std::move(vocabulary)));
    if (name == "echo") return ScriptedLM::echo(WordByteTokenizer(std::move(vocabulary)));
    throw ConfigError("unknown backend.name '" + name +
                      "' (available: stub, stub-decoder, uniform, echo)");
}

}  // namespace toxprompt
