// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "toxprompt/span_align.hpp"

namespace toxprompt {

// ---------------------------------------------------------------------------
// Examples

/// Label 1 is toxic, 0 nontoxic. `split` is "train", "test" or empty.
struct ClfExample {
    std::string text;
    int label = 0;
    std::string split;
    bool operator==(const ClfExample&) const = default;
};

struct SpanExample {
    std::string text;
    SpanSet offsets;
    /// text with the toxic spans removed; the generation target.
    std::string nontoxic;
    std::string split;
    bool operator==(const SpanExample&) const = default;
};

struct DetoxPair {
    std::string toxic;
    std::string detox;
    std::string split;
    bool operator==(const DetoxPair&) const = default;
};

enum class Adapter { canonical, label_map, score_threshold, majority_vote, paraphrase_first, spans };

std::string to_string(Adapter adapter);
Adapter adapter_from_string(std::string_view name);

/// One dataset entry of the registry.
struct DatasetSpec {
    std::string name;
    int task = 1;
    std::filesystem::path path;
    Adapter adapter = Adapter::canonical;
    /// Human-readable labelling rule, e.g. "hate speech score >= 0 -> toxic".
    std::string label_rule;
    bool has_official_split = false;
    /// Train + test size of the public release; a mismatch only warns.
    std::optional<std::size_t> expected_size;

    // Field names used by the adapters.
    std::string text_field = "text";
    std::string label_field = "label";
    std::string score_field = "hate_speech_score";
    std::string votes_field = "annotations";
    std::string spans_field = "spans";
    std::string toxic_field = "toxic";
    std::string paraphrases_field = "paraphrases";
    std::string split_field = "split";
    double threshold = 0.0;
    /// Raw label (as string) to 0/1, used by label_map and majority_vote.
    std::map<std::string, int> label_map;

    nlohmann::json to_json() const;
    static DatasetSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    bool operator==(const DatasetSpec&) const = default;
};

struct Dataset {
    std::string name;
    int task = 1;
    std::vector<ClfExample> clf;
    std::vector<SpanExample> spans;
    std::vector<DetoxPair> pairs;
    /// Rows whose primary text repeats an earlier row (kept).
    std::size_t duplicates = 0;
    /// majority_vote rows with tied votes (dropped).
    std::size_t dropped_ties = 0;
    std::vector<std::string> warnings;

    std::size_t size() const;
    bool operator==(const Dataset&) const = default;
};

/// Reads a JSONL file through the spec's adapter. Throws MissingFile or SchemaError
/// (with the 1-based line number).
Dataset load(const DatasetSpec& spec);

/// Registry file: {"datasets": [DatasetSpec, ...]}; relative paths resolve against
/// the registry's directory.
std::vector<DatasetSpec> load_registry(const std::filesystem::path& path);
/// The eight public datasets with their release sizes, rooted at `data_root`.
std::vector<DatasetSpec> builtin_registry(const std::filesystem::path& data_root);
const DatasetSpec& find_spec(std::span<const DatasetSpec> registry, std::string_view name);

// ---------------------------------------------------------------------------
// Canonical JSONL writers (the loaders' inverse under the canonical adapter)

std::string to_jsonl(std::span<const ClfExample> rows);
std::string to_jsonl(std::span<const SpanExample> rows);
std::string to_jsonl(std::span<const DetoxPair> rows);

// ---------------------------------------------------------------------------
// Splits

struct SplitResult {
    Dataset train;
    Dataset test;
};

/// Task 1: downsample the larger class to the smaller, then a seeded 80/20 split
/// stratified by class (|train| = round(0.8 n)). Tasks 2 and 3: seeded 80/20 split.
/// Datasets marked with an official split are partitioned by their `split` field
/// without balancing or resampling.
SplitResult balance_and_split(const Dataset& ds, std::uint64_t seed, bool has_official_split = false);

/// Seeded class-stratified sample of n task-1 examples without replacement.
/// Class quotas are proportional to class frequency (largest remainder, at least one each).
Dataset subsample_train(const Dataset& train, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Perturbation

enum class PerturbMode { repeat_char, inner_spaces, leet };

std::string to_string(PerturbMode mode);
PerturbMode perturb_mode_from_string(std::string_view name);

/// Rewrites every whitespace-delimited occurrence of each target word with one
/// mode drawn per word from `modes`. repeat_char adds 2-5 extra copies of one
/// letter; inner_spaces puts a space between all letters; leet swaps letters for
/// look-alike digits. Other characters are untouched. Throws WordNotFound.
std::string perturb(std::string_view text, std::span<const std::string> target_words, std::uint64_t seed,
                    std::span<const PerturbMode> modes);

// ---------------------------------------------------------------------------
// Synthetic corpora for tests and smoke runs

/// Balanced short texts; toxic rows contain a word from a small insult list.
Dataset synthetic_classification(std::size_t n, std::uint64_t seed);
Dataset synthetic_spans(std::size_t n, std::uint64_t seed);
Dataset synthetic_detox(std::size_t n, std::uint64_t seed);
/// The insult words used by the synthetic corpora.
const std::vector<std::string>& synthetic_insults();

}  // namespace toxprompt
