// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "toxprompt/task_pipelines.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "toxprompt/errors.hpp"
#include "toxprompt/util.hpp"

namespace toxprompt {

namespace {

constexpr std::string_view kInputSlot = "[INPUT]";
constexpr std::string_view kMaskSlot = "[MASK]";

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
    return n;
}

double word_logp(const PromptParams& prompt, const LanguageModel& backend, const TokenSeq& input,
                 const std::string& word) {
    return -backend.forward_with_prompt(prompt, input, backend.encode(word)).loss;
}

Prediction score_words(const PromptParams& prompt, const LanguageModel& backend, const Verbalizer& verbalizer,
                       const TokenSeq& input) {
    Prediction p;
    p.toxic_logp = word_logp(prompt, backend, input, verbalizer.toxic);
    p.nontoxic_logp = word_logp(prompt, backend, input, verbalizer.nontoxic);
    p.label = p.toxic_logp > p.nontoxic_logp ? 1 : 0;
    p.score = 1.0 / (1.0 + std::exp(p.nontoxic_logp - p.toxic_logp));
    return p;
}

}  // namespace

void Verbalizer::validate(const LanguageModel& backend) const {
    if (toxic.empty() || nontoxic.empty()) throw ConfigError("verbalizer words must be non-empty");
    if (toxic == nontoxic) throw ConfigError("verbalizer words must differ: '" + toxic + "'");
    if (backend.encode(toxic) == backend.encode(nontoxic))
        throw ConfigError("verbalizer words '" + toxic + "' and '" + nontoxic + "' tokenize identically");
}

Prediction classify(const PromptParams& prompt, const LanguageModel& backend, const Verbalizer& verbalizer,
                    std::string_view text) {
    return score_words(prompt, backend, verbalizer, backend.encode(text));
}

ManualTemplate::ManualTemplate(std::string text) : text_(std::move(text)) {
    if (count_occurrences(text_, kInputSlot) != 1)
        throw ConfigError("manual template needs exactly one [INPUT] slot");
    if (count_occurrences(text_, kMaskSlot) != 1)
        throw ConfigError("manual template needs exactly one [MASK] slot");
}

std::string ManualTemplate::fill(std::string_view input) const {
    std::string out = text_;
    out.replace(out.find(kInputSlot), kInputSlot.size(), input);
    return out;
}

std::pair<std::string, std::string> ManualTemplate::split_at_mask(std::string_view input) const {
    // Split before substituting so a literal "[MASK]" inside the input is left alone.
    const auto mask = text_.find(kMaskSlot);
    std::string before = text_.substr(0, mask);
    std::string after = text_.substr(mask + kMaskSlot.size());
    if (auto p = before.find(kInputSlot); p != std::string::npos)
        before.replace(p, kInputSlot.size(), input);
    else
        after.replace(after.find(kInputSlot), kInputSlot.size(), input);
    return {std::move(before), std::move(after)};
}

Prediction manual_classify(const ManualTemplate& tmpl, const LanguageModel& backend, const Verbalizer& verbalizer,
                           std::string_view text) {
    auto [before, after] = tmpl.split_at_mask(text);
    TokenSeq input = backend.encode(before);
    if (backend.descriptor().family == ModelFamily::encoder_decoder && !after.empty()) {
        // Offsets of the tail index into before + after.
        const std::size_t shift = before.size();
        input.ids.push_back(WordByteTokenizer::kSep);
        input.offsets.emplace_back(shift, shift);
        const TokenSeq rest = backend.encode(after);
        input.ids.insert(input.ids.end(), rest.ids.begin(), rest.ids.end());
        for (auto [b, e] : rest.offsets) input.offsets.emplace_back(b + shift, e + shift);
    }
    return score_words(PromptParams::none(), backend, verbalizer, input);
}

SpanSet detect_spans(const PromptParams& prompt, const LanguageModel& backend, std::string_view text,
                     const DecodeConfig& decode) {
    const std::string generated = backend.generate(prompt, backend.encode(text), decode);
    return subtract_spans(text, generated);
}

std::string detoxify(const PromptParams& prompt, const LanguageModel& backend, std::string_view text,
                     const DecodeConfig& decode) {
    return backend.generate(prompt, backend.encode(text), decode);
}

std::vector<EncodedPair> encode_training_pairs(const Dataset& ds, const LanguageModel& backend,
                                               const Verbalizer& verbalizer) {
    std::vector<EncodedPair> out;
    switch (ds.task) {
        case 1: {
            verbalizer.validate(backend);
            const TokenSeq yes = backend.encode(verbalizer.toxic);
            const TokenSeq no = backend.encode(verbalizer.nontoxic);
            out.reserve(ds.clf.size());
            for (const auto& ex : ds.clf) out.push_back({backend.encode(ex.text), ex.label ? yes : no});
            break;
        }
        case 2:
            out.reserve(ds.spans.size());
            for (const auto& ex : ds.spans)
                out.push_back({backend.encode(ex.text), with_eos(backend.encode(ex.nontoxic))});
            break;
        case 3:
            out.reserve(ds.pairs.size());
            for (const auto& ex : ds.pairs)
                out.push_back({backend.encode(ex.toxic), with_eos(backend.encode(ex.detox))});
            break;
        default:
            throw ConfigError("unknown task " + std::to_string(ds.task));
    }
    return out;
}

std::string PredictionRow::to_json_line() const {
    nlohmann::ordered_json j;
    j["text"] = text;
    if (pred_label) j["pred_label"] = *pred_label;
    if (offsets) {
        j["offsets"] = *offsets;
        j["intervals"] = span_offsets_to_intervals(*offsets);
    }
    if (detox) j["detox"] = *detox;
    if (score) j["score"] = *score;
    return j.dump();
}

std::vector<PredictionRow> predict_labels(const PromptParams& prompt, const LanguageModel& backend,
                                          const Verbalizer& verbalizer, std::span<const std::string> texts,
                                          std::size_t workers) {
    verbalizer.validate(backend);
    std::vector<PredictionRow> rows(texts.size());
    parallel_for(texts.size(), workers, [&](std::size_t i) {
        const Prediction p = classify(prompt, backend, verbalizer, texts[i]);
        rows[i].text = texts[i];
        rows[i].pred_label = p.label;
        rows[i].score = p.score;
    });
    return rows;
}

std::vector<PredictionRow> predict_spans(const PromptParams& prompt, const LanguageModel& backend,
                                         std::span<const std::string> texts, const DecodeConfig& decode,
                                         std::size_t workers) {
    std::vector<PredictionRow> rows(texts.size());
    parallel_for(texts.size(), workers, [&](std::size_t i) {
        rows[i].text = texts[i];
        rows[i].offsets = detect_spans(prompt, backend, texts[i], decode);
    });
    return rows;
}

std::vector<PredictionRow> predict_detox(const PromptParams& prompt, const LanguageModel& backend,
                                         std::span<const std::string> texts, const DecodeConfig& decode,
                                         std::size_t workers) {
    std::vector<PredictionRow> rows(texts.size());
    parallel_for(texts.size(), workers, [&](std::size_t i) {
        rows[i].text = texts[i];
        rows[i].detox = detoxify(prompt, backend, texts[i], decode);
    });
    return rows;
}

std::string predictions_jsonl(std::span<const PredictionRow> rows) {
    std::string out;
    for (const auto& r : rows) {
        out += r.to_json_line();
        out += '\n';
    }
    return out;
}

}  // namespace toxprompt
