// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "toxprompt/data_kit.hpp"
#include "toxprompt/prompt_engine.hpp"
#include "toxprompt/task_pipelines.hpp"

namespace toxprompt {

// ---------------------------------------------------------------------------
// Layered key=value configuration

using ConfigMap = std::map<std::string, std::string>;

/// Parses "key = value" lines; '#' starts a comment, blank lines are skipped.
/// Values may use \n and \\ escapes. Throws ConfigError with the line number.
ConfigMap parse_config_text(std::string_view text, std::string_view source = "<config>");
ConfigMap load_config_file(const std::filesystem::path& path);
/// "key=value" as given to --set.
void apply_override(ConfigMap& config, std::string_view assignment);
/// Later layers win.
ConfigMap merge_layers(std::span<const ConfigMap> layers);

struct ExperimentConfig {
    int task = 1;
    /// Registry name, or "synthetic" / "synthetic-<k>" for the built-in corpora.
    std::string dataset = "synthetic";
    /// Registry file; empty means the built-in registry rooted at data_root.
    std::filesystem::path registry;
    std::filesystem::path data_root = "data";
    std::size_t synthetic_size = 64;
    /// Evaluate on the test split of another dataset (transfer).
    std::string eval_target;
    /// "test" or "train".
    std::string eval_split = "test";
    /// Task 1: "fixed" (0.5) or "dynamic" (chosen on the training split).
    std::string threshold_mode = "fixed";
    bool perturb = false;
    std::vector<PerturbMode> perturb_modes = {PerturbMode::repeat_char, PerturbMode::inner_spaces};
    /// Words to perturb; empty means the synthetic insult list.
    std::vector<std::string> perturb_words;
    /// "tuned", or "manual" for the hand-written prompt baseline (task 1).
    std::string prompt = "tuned";
    std::string manual_template = std::string(ManualTemplate::kDefault);
    std::string verbalizer_toxic = "Yes";
    std::string verbalizer_nontoxic = "No";
    /// 0 keeps the whole training split.
    std::size_t train_samples = 0;
    /// backend.* keys, forwarded to make_backend.
    ConfigMap backend = {{"backend.name", "stub"}};
    std::size_t vocab_words = 2000;
    TuneConfig tune = TuneConfig::task_defaults(1);
    std::size_t max_gen_len = 64;
    /// "none", "lexicon" or "perspective".
    std::string scorer = "lexicon";
    double scorer_qps = 1.0;
    std::filesystem::path scorer_cache;
    /// Evaluate a saved checkpoint instead of training.
    std::filesystem::path checkpoint;
    std::filesystem::path output_dir = "runs/default";
    std::uint64_t seed = 42;
    std::size_t workers = 1;

    /// Applies a layered map over the task defaults; unknown keys are a ConfigError.
    static ExperimentConfig from_map(const ConfigMap& map);
    /// Every key with its resolved value.
    ConfigMap to_map() const;
    /// Sorted "key=value" lines of to_map().
    std::string canonical() const;
    std::string digest() const;
    void validate() const;
};

// ---------------------------------------------------------------------------
// Reports

struct MetricsReport {
    int task = 1;
    std::string dataset;
    std::string model;
    std::string config_digest;
    nlohmann::json metrics = nlohmann::json::object();
    std::size_t n = 0;
    std::string timestamp;
    std::string backend_fingerprint;
    ConfigMap config;

    nlohmann::json to_json() const;
    /// Throws SchemaError when a required field is missing or mistyped.
    static MetricsReport from_json(const nlohmann::json& j);
};

/// Field-level check of a report document; returns the problems found.
std::vector<std::string> validate_report(const nlohmann::json& j);

struct RunResult {
    std::filesystem::path dir;
    MetricsReport report;
    /// True when an existing checkpoint with the same config digest was reused.
    bool resumed = false;
    /// True when the whole run was skipped because report.json already matched.
    bool skipped = false;
    /// Loss of the last history entry, when the run has a training history.
    std::optional<double> final_loss;
};

/// Loads data (MissingFile before any training), tunes or restores the prompt,
/// evaluates and writes config.txt, checkpoint.bin, history.jsonl,
/// predictions.jsonl and report.json into output_dir.
RunResult run(const ExperimentConfig& config);

/// Evaluation only: uses `checkpoint` (or the manual prompt) and writes
/// predictions.jsonl and report.json.
RunResult evaluate(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Grids

struct TransferCell {
    std::string train;
    std::string eval;
    std::optional<double> f1;
    std::string error;
};

struct TransferTable {
    std::vector<std::string> train;
    std::vector<std::string> eval;
    /// Off-diagonal cells in row-major order.
    std::vector<TransferCell> cells;

    const TransferCell* find(std::string_view train_name, std::string_view eval_name) const;
    std::string to_csv() const;
    nlohmann::json to_json() const;
};

/// Tunes on each training dataset and scores F1 on every other evaluation
/// dataset. Cells run on `base.workers` threads under base.output_dir/transfer;
/// a failing cell is recorded and the grid continues.
TransferTable transfer_matrix(std::span<const std::string> train_datasets, std::span<const std::string> eval_datasets,
                              const ExperimentConfig& base);

enum class AblationAxis { steps, samples, epochs };

std::string to_string(AblationAxis axis);
AblationAxis ablation_axis_from_string(std::string_view name);

struct CurvePoint {
    std::size_t value = 0;
    std::optional<double> metric;
    std::optional<double> final_loss;
    std::string error;
};

struct AblationCurve {
    AblationAxis axis = AblationAxis::steps;
    std::string metric_name;
    std::vector<CurvePoint> points;
    /// Final training loss never rises along the grid (points with a loss only).
    bool loss_non_increasing = true;

    std::string to_csv() const;
    nlohmann::json to_json() const;
};

/// One run per grid value (ascending, else ConfigError) under base.output_dir/ablate;
/// writes curve.json and curve.csv there.
AblationCurve ablation_curve(const ExperimentConfig& base, AblationAxis axis, std::span<const std::size_t> grid);

/// Scores the evaluation split of a task-1 dataset with the configured external
/// scorer under every attribute and records the best one (F1 at 0.5). Writes
/// sweep.json into output_dir.
nlohmann::json score_sweep(const ExperimentConfig& config);

/// The metric a run reports for its task: F1 (task 1), span F1 (task 2), BLEU (task 3).
std::optional<double> headline_metric(const MetricsReport& report);

}  // namespace toxprompt
