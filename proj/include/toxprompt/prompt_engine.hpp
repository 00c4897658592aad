// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "toxprompt/lm_backend.hpp"
#include "toxprompt/prompt.hpp"

namespace toxprompt {

enum class OptimizerKind { adafactor, adamw };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(std::string_view name);

/// Prompt-tuning hyperparameters.
///
/// Exactly one of `steps` / `epochs` drives the run length; when `epochs` is set the
/// step count is epochs * ceil(examples / effective batch).
struct TuneConfig {
    PromptMethod method = PromptMethod::soft;
    OptimizerKind optimizer = OptimizerKind::adafactor;
    double lr = 0.3;
    std::optional<std::size_t> steps = 2000;
    std::optional<std::size_t> epochs;
    std::size_t warmup_steps = 100;
    std::string schedule = "linear";
    std::size_t batch_size = 8;
    std::size_t grad_accum = 4;
    std::uint64_t seed = 42;

    std::size_t prompt_length = 20;
    /// "class-labels" (verbalizer words, then sampled vocabulary rows) or "random".
    std::string init = "class-labels";
    double init_range = 0.5;
    /// Prefix only: train through an MLP (hidden width 0 = d_model) and store the flat result.
    bool reparam = true;
    std::size_t reparam_hidden = 0;

    double clip_norm = 1.0;
    double weight_decay = 0.0;
    std::size_t log_every = 10;
    std::size_t eval_every = 200;

    /// Task 1: soft prompt, Adafactor, lr 0.3, 2000 steps, 100 warm-up, batch 8 x accum 4.
    /// Tasks 2/3: prefix, AdamW, lr 5e-5, 5 epochs, linear schedule.
    static TuneConfig task_defaults(int task);

    std::size_t effective_batch() const { return batch_size * grad_accum; }
    std::size_t total_steps(std::size_t examples) const;
    void validate() const;

    nlohmann::json to_json() const;
    static TuneConfig from_json(const nlohmann::json& j);

    bool operator==(const TuneConfig&) const = default;
};

/// Multiplier on the base learning rate at optimizer step `step` (0-based):
/// linear warm-up to 1, then linear decay to 0 at `total`.
double linear_schedule(std::size_t step, std::size_t total, std::size_t warmup);

/// Builds the initial prompt. Soft prompts initialised from class labels copy the
/// (token-averaged) input embedding of each verbalizer word into the leading rows
/// and fill the rest with embeddings of seeded random vocabulary tokens.
PromptParams init_prompt(const TuneConfig& cfg, const LanguageModel& backend,
                         std::span<const std::string> verbalizer_words = {});

class Optimizer {
public:
    virtual ~Optimizer() = default;
    /// Applies one update; `grads` follows the block order of trainable_blocks.
    virtual void step(std::span<ParamBlock> blocks, const std::vector<std::vector<double>>& grads,
                      double lr) = 0;
};

/// Adafactor without momentum: factored second moments for matrices, decay
/// 1 - t^-0.8, update RMS clipped at 1, absolute learning rate.
std::unique_ptr<Optimizer> make_adafactor(std::span<const ParamBlock> blocks, double weight_decay = 0.0);
/// AdamW with beta1 0.9, beta2 0.999, eps 1e-8 and decoupled weight decay.
std::unique_ptr<Optimizer> make_adamw(std::span<const ParamBlock> blocks, double weight_decay = 0.0);

/// One training pair, already tokenized. For classification the target is the
/// verbalizer word; for generation tasks it ends with <eos>.
struct EncodedPair {
    TokenSeq input;
    TokenSeq target;
};

struct HistoryEntry {
    std::size_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::optional<double> metric;
};

struct History {
    std::vector<HistoryEntry> entries;
    /// One JSON object per line: {"step", "loss", "lr", "metric"?}.
    std::string to_jsonl() const;
};

struct Checkpoint {
    PromptParams prompt;
    TuneConfig config;
    std::string backend_fingerprint;

    bool operator==(const Checkpoint&) const = default;
};

struct TuneHooks {
    /// Called on logging steps that are multiples of eval_every (and the last step).
    std::function<double(const PromptParams&)> eval;
    /// Called after every optimizer step with the current (possibly reparameterized) prompt.
    std::function<void(std::size_t step, const PromptParams&)> on_step;
    /// Threads for the per-example passes of a step (0 = all cores). Results do not
    /// depend on this value: per-example gradients are summed in a fixed order.
    std::size_t workers = 0;
};

struct TuneResult {
    Checkpoint checkpoint;
    History history;
};

/// Optimizes only the prompt against the frozen backend. Throws EmptyDataset,
/// DivergenceError on a non-finite loss, FrozenBaseViolation if the backend digest moved.
TuneResult tune(PromptParams prompt, std::span<const EncodedPair> data, const LanguageModel& backend,
                const TuneConfig& cfg, const TuneHooks& hooks = {});

// ---------------------------------------------------------------------------
// Checkpoint files: one canonical JSON header line
//   {format_version, method, shape, dtype:"float32", backend_fingerprint,
//    tune_config, payload_digest, header_digest}
// followed by the row-major little-endian float32 payload.

void persist(const Checkpoint& ckpt, const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);

/// Throws CorruptCheckpoint on any header/payload damage. When `expected` is given the
/// prompt shape is checked against it (ShapeMismatch); `strict` also requires the
/// backend fingerprint to match (FingerprintMismatch).
Checkpoint restore(const std::filesystem::path& path, const BackendDescriptor* expected = nullptr,
                   bool strict = false);
Checkpoint deserialize_checkpoint(std::string_view blob, const BackendDescriptor* expected = nullptr,
                                  bool strict = false);

}  // namespace toxprompt
