// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "toxprompt/prompt_engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "toxprompt/errors.hpp"
#include "toxprompt/util.hpp"

namespace toxprompt {

using nlohmann::json;

std::string to_string(OptimizerKind kind) {
    return kind == OptimizerKind::adafactor ? "adafactor" : "adamw";
}

OptimizerKind optimizer_from_string(std::string_view name) {
    if (name == "adafactor") return OptimizerKind::adafactor;
    if (name == "adamw") return OptimizerKind::adamw;
    throw ConfigError("unknown optimizer '" + std::string(name) + "' (adafactor, adamw)");
}

// ---------------------------------------------------------------------------
// TuneConfig

TuneConfig TuneConfig::task_defaults(int task) {
    TuneConfig c;
    switch (task) {
        case 1:
            return c;
        case 2:
        case 3:
            c.method = PromptMethod::prefix;
            c.optimizer = OptimizerKind::adamw;
            c.lr = 5e-5;
            c.steps.reset();
            c.epochs = 5;
            c.warmup_steps = 0;
            c.batch_size = 8;
            c.grad_accum = 1;
            c.init = "random";
            return c;
        default:
            throw ConfigError("task must be 1, 2 or 3, got " + std::to_string(task));
    }
}

std::size_t TuneConfig::total_steps(std::size_t examples) const {
    if (steps) return *steps;
    const std::size_t eff = effective_batch();
    return epochs.value_or(0) * ((examples + eff - 1) / eff);
}

void TuneConfig::validate() const {
    if (method == PromptMethod::none) throw ConfigError("tuning requires method soft or prefix");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive and finite");
    if (steps.has_value() == epochs.has_value()) {
        throw ConfigError("exactly one of steps / epochs must be set");
    }
    if (batch_size == 0 || grad_accum == 0) throw ConfigError("batch_size and grad_accum must be >= 1");
    if (prompt_length == 0) throw ConfigError("prompt_length must be >= 1");
    if (schedule != "linear" && schedule != "constant") {
        throw ConfigError("schedule must be linear or constant, got '" + schedule + "'");
    }
    if (init != "class-labels" && init != "random") {
        throw ConfigError("init must be class-labels or random, got '" + init + "'");
    }
    if (!(init_range >= 0.0)) throw ConfigError("init_range must be >= 0");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0 (0 disables clipping)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (log_every == 0 || eval_every == 0) throw ConfigError("log_every and eval_every must be >= 1");
}

json TuneConfig::to_json() const {
    json j;
    j["method"] = to_string(method);
    j["optimizer"] = to_string(optimizer);
    j["lr"] = lr;
    j["steps"] = steps ? json(*steps) : json(nullptr);
    j["epochs"] = epochs ? json(*epochs) : json(nullptr);
    j["warmup_steps"] = warmup_steps;
    j["schedule"] = schedule;
    j["batch_size"] = batch_size;
    j["grad_accum"] = grad_accum;
    j["seed"] = seed;
    j["prompt_length"] = prompt_length;
    j["init"] = init;
    j["init_range"] = init_range;
    j["reparam"] = reparam;
    j["reparam_hidden"] = reparam_hidden;
    j["clip_norm"] = clip_norm;
    j["weight_decay"] = weight_decay;
    j["log_every"] = log_every;
    j["eval_every"] = eval_every;
    return j;
}

TuneConfig TuneConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("tune config must be a JSON object");
    TuneConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "method") c.method = prompt_method_from_string(v.get<std::string>());
            else if (key == "optimizer") c.optimizer = optimizer_from_string(v.get<std::string>());
            else if (key == "lr") c.lr = v.get<double>();
            else if (key == "steps") c.steps = v.is_null() ? std::nullopt : std::optional(v.get<std::size_t>());
            else if (key == "epochs") c.epochs = v.is_null() ? std::nullopt : std::optional(v.get<std::size_t>());
            else if (key == "warmup_steps") c.warmup_steps = v.get<std::size_t>();
            else if (key == "schedule") c.schedule = v.get<std::string>();
            else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
            else if (key == "grad_accum") c.grad_accum = v.get<std::size_t>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "prompt_length") c.prompt_length = v.get<std::size_t>();
            else if (key == "init") c.init = v.get<std::string>();
            else if (key == "init_range") c.init_range = v.get<double>();
            else if (key == "reparam") c.reparam = v.get<bool>();
            else if (key == "reparam_hidden") c.reparam_hidden = v.get<std::size_t>();
            else if (key == "clip_norm") c.clip_norm = v.get<double>();
            else if (key == "weight_decay") c.weight_decay = v.get<double>();
            else if (key == "log_every") c.log_every = v.get<std::size_t>();
            else if (key == "eval_every") c.eval_every = v.get<std::size_t>();
            else throw ConfigError("unknown tune config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad tune config value: ") + e.what());
    }
    return c;
}

double linear_schedule(std::size_t step, std::size_t total, std::size_t warmup) {
    if (step < warmup) return static_cast<double>(step) / static_cast<double>(std::max<std::size_t>(1, warmup));
    if (step >= total) return 0.0;
    return static_cast<double>(total - step) / static_cast<double>(std::max<std::size_t>(1, total - warmup));
}

namespace {

double schedule_factor(const TuneConfig& cfg, std::size_t step, std::size_t total) {
    if (cfg.schedule == "constant") {
        return step < cfg.warmup_steps
                   ? static_cast<double>(step) / static_cast<double>(cfg.warmup_steps)
                   : 1.0;
    }
    return linear_schedule(step, total, cfg.warmup_steps);
}

}  // namespace

// ---------------------------------------------------------------------------
// Initialisation

PromptParams init_prompt(const TuneConfig& cfg, const LanguageModel& backend,
                         std::span<const std::string> verbalizer_words) {
    cfg.validate();
    const BackendDescriptor& desc = backend.descriptor();
    const std::size_t d = desc.d_model;
    const std::size_t len = cfg.prompt_length;
    Rng rng(cfg.seed);

    PromptParams p;
    p.method = cfg.method;
    p.length = len;
    p.d_model = d;

    if (cfg.method == PromptMethod::soft) {
        p.values.assign(len * d, 0.0f);
        if (cfg.init == "random") {
            for (float& v : p.values) v = static_cast<float>(rng.uniform(-cfg.init_range, cfg.init_range));
            return p;
        }
        if (verbalizer_words.size() > len) {
            throw ConfigError("prompt_length " + std::to_string(len) + " is shorter than the " +
                              std::to_string(verbalizer_words.size()) + " verbalizer words");
        }
        std::size_t row = 0;
        for (const std::string& word : verbalizer_words) {
            const TokenSeq toks = backend.encode(word);
            if (toks.empty()) throw UnknownVerbalizerWord("verbalizer word '" + word + "' has no tokens");
            std::vector<double> acc(d, 0.0);
            for (int id : toks.ids) {
                const std::vector<float> e = backend.token_embedding(id);
                for (std::size_t c = 0; c < d; ++c) acc[c] += e[c];
            }
            for (std::size_t c = 0; c < d; ++c) {
                p.values[row * d + c] = static_cast<float>(acc[c] / static_cast<double>(toks.size()));
            }
            ++row;
        }
        const std::size_t vocab = desc.vocab_size;
        const std::size_t words = backend.tokenizer().words().size();
        const std::size_t lo = words > 0 ? WordByteTokenizer::kWordBase : WordByteTokenizer::kStartByteBase;
        const std::size_t span = vocab - lo;
        for (; row < len; ++row) {
            const int id = static_cast<int>(lo + rng.index(span));
            const std::vector<float> e = backend.token_embedding(id);
            std::copy(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(d),
                      p.values.begin() + static_cast<std::ptrdiff_t>(row * d));
        }
        return p;
    }

    p.num_layers = desc.num_layers;
    if (!cfg.reparam) {
        p.values.resize(p.value_count());
        for (float& v : p.values) v = static_cast<float>(rng.uniform(-cfg.init_range, cfg.init_range));
        return p;
    }
    PrefixReparam r;
    r.hidden = cfg.reparam_hidden == 0 ? d : cfg.reparam_hidden;
    const std::size_t out = p.num_layers * 2 * d;
    auto fill = [&](std::vector<float>& v, std::size_t n, double range) {
        v.resize(n);
        for (float& x : v) x = static_cast<float>(rng.uniform(-range, range));
    };
    fill(r.seed, len * d, cfg.init_range);
    fill(r.w1, d * r.hidden, 1.0 / std::sqrt(static_cast<double>(d)));
    r.b1.assign(r.hidden, 0.0f);
    fill(r.w2, r.hidden * out, 1.0 / std::sqrt(static_cast<double>(r.hidden)));
    r.b2.assign(out, 0.0f);
    p.reparam = std::move(r);
    return p;
}

// ---------------------------------------------------------------------------
// Optimizers

namespace {

class Adafactor final : public Optimizer {
public:
    Adafactor(std::span<const ParamBlock> blocks, double weight_decay) : weight_decay_(weight_decay) {
        for (const ParamBlock& b : blocks) {
            State s;
            s.factored = b.rows >= 2 && b.cols >= 2;
            if (s.factored) {
                s.row.assign(b.rows, 0.0);
                s.col.assign(b.cols, 0.0);
            } else {
                s.full.assign(b.rows * b.cols, 0.0);
            }
            states_.push_back(std::move(s));
        }
    }

    void step(std::span<ParamBlock> blocks, const std::vector<std::vector<double>>& grads,
              double lr) override {
        ++t_;
        const double beta2t = 1.0 - std::pow(static_cast<double>(t_), -0.8);
        for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
            ParamBlock& b = blocks[bi];
            const std::vector<double>& g = grads[bi];
            State& s = states_[bi];
            const std::size_t n = b.rows * b.cols;
            std::vector<double> upd(n);
            if (s.factored) {
                std::vector<double> rmean(b.rows, 0.0), cmean(b.cols, 0.0);
                for (std::size_t r = 0; r < b.rows; ++r) {
                    for (std::size_t c = 0; c < b.cols; ++c) {
                        const double sq = g[r * b.cols + c] * g[r * b.cols + c] + kEps1;
                        rmean[r] += sq / static_cast<double>(b.cols);
                        cmean[c] += sq / static_cast<double>(b.rows);
                    }
                }
                double row_avg = 0.0;
                for (std::size_t r = 0; r < b.rows; ++r) {
                    s.row[r] = beta2t * s.row[r] + (1.0 - beta2t) * rmean[r];
                    row_avg += s.row[r] / static_cast<double>(b.rows);
                }
                for (std::size_t c = 0; c < b.cols; ++c) s.col[c] = beta2t * s.col[c] + (1.0 - beta2t) * cmean[c];
                for (std::size_t r = 0; r < b.rows; ++r) {
                    const double rf = 1.0 / std::sqrt(s.row[r] / row_avg);
                    for (std::size_t c = 0; c < b.cols; ++c) {
                        upd[r * b.cols + c] = g[r * b.cols + c] * rf / std::sqrt(s.col[c]);
                    }
                }
            } else {
                for (std::size_t i = 0; i < n; ++i) {
                    s.full[i] = beta2t * s.full[i] + (1.0 - beta2t) * (g[i] * g[i] + kEps1);
                    upd[i] = g[i] / std::sqrt(s.full[i]);
                }
            }
            double ss = 0.0;
            for (double u : upd) ss += u * u;
            const double rms = std::sqrt(ss / static_cast<double>(n));
            const double denom = std::max(1.0, rms / kClipThreshold);
            for (std::size_t i = 0; i < n; ++i) {
                double p = b.data[i];
                if (weight_decay_ > 0.0) p -= p * weight_decay_ * lr;
                b.data[i] = static_cast<float>(p - lr * upd[i] / denom);
            }
        }
    }

private:
    static constexpr double kEps1 = 1e-30;
    static constexpr double kClipThreshold = 1.0;
    struct State {
        bool factored = false;
        std::vector<double> row, col, full;
    };
    std::vector<State> states_;
    double weight_decay_;
    std::size_t t_ = 0;
};

class AdamW final : public Optimizer {
public:
    AdamW(std::span<const ParamBlock> blocks, double weight_decay) : weight_decay_(weight_decay) {
        for (const ParamBlock& b : blocks) {
            m_.emplace_back(b.rows * b.cols, 0.0);
            v_.emplace_back(b.rows * b.cols, 0.0);
        }
    }

    void step(std::span<ParamBlock> blocks, const std::vector<std::vector<double>>& grads,
              double lr) override {
        ++t_;
        const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
            ParamBlock& b = blocks[bi];
            const std::vector<double>& g = grads[bi];
            for (std::size_t i = 0; i < g.size(); ++i) {
                m_[bi][i] = kBeta1 * m_[bi][i] + (1.0 - kBeta1) * g[i];
                v_[bi][i] = kBeta2 * v_[bi][i] + (1.0 - kBeta2) * g[i] * g[i];
                double p = b.data[i];
                p *= 1.0 - lr * weight_decay_;
                p -= lr * (m_[bi][i] / bc1) / (std::sqrt(v_[bi][i] / bc2) + kEps);
                b.data[i] = static_cast<float>(p);
            }
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
    std::vector<std::vector<double>> m_, v_;
    double weight_decay_;
    std::size_t t_ = 0;
};

}  // namespace

std::unique_ptr<Optimizer> make_adafactor(std::span<const ParamBlock> blocks, double weight_decay) {
    return std::make_unique<Adafactor>(blocks, weight_decay);
}

std::unique_ptr<Optimizer> make_adamw(std::span<const ParamBlock> blocks, double weight_decay) {
    return std::make_unique<AdamW>(blocks, weight_decay);
}

// ---------------------------------------------------------------------------
// Training

std::string History::to_jsonl() const {
    std::string out;
    for (const HistoryEntry& e : entries) {
        json j{{"step", e.step}, {"loss", e.loss}, {"lr", e.lr}};
        if (e.metric) j["metric"] = *e.metric;
        out += j.dump();
        out += '\n';
    }
    return out;
}

namespace {

/// Cycles through the examples in a seeded order, reshuffling at every pass.
class Sampler {
public:
    Sampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
        for (std::size_t i = 0; i < n; ++i) order_[i] = i;
        rng_.shuffle(order_);
    }
    std::size_t next() {
        if (pos_ == order_.size()) {
            rng_.shuffle(order_);
            pos_ = 0;
        }
        return order_[pos_++];
    }

private:
    std::vector<std::size_t> order_;
    Rng rng_;
    std::size_t pos_ = 0;
};

}  // namespace

TuneResult tune(PromptParams prompt, std::span<const EncodedPair> data, const LanguageModel& backend,
                const TuneConfig& cfg, const TuneHooks& hooks) {
    cfg.validate();
    if (data.empty()) throw EmptyDataset("no training examples");
    if (prompt.method != cfg.method) {
        throw ConfigError("prompt method " + to_string(prompt.method) + " differs from config method " +
                          to_string(cfg.method));
    }
    const BackendDescriptor& desc = backend.descriptor();
    check_prompt_shape(prompt, desc);
    const std::string fingerprint = backend.compute_fingerprint();

    TuneResult result;
    result.checkpoint.config = cfg;
    result.checkpoint.backend_fingerprint = desc.frozen_fingerprint;
    const std::size_t total = cfg.total_steps(data.size());

    std::vector<ParamBlock> blocks = trainable_blocks(prompt);
    std::unique_ptr<Optimizer> opt = cfg.optimizer == OptimizerKind::adafactor
                                         ? make_adafactor(blocks, cfg.weight_decay)
                                         : make_adamw(blocks, cfg.weight_decay);
    Sampler sampler(data.size(), cfg.seed);
    const std::size_t eff = cfg.effective_batch();

    for (std::size_t step = 0; step < total; ++step) {
        std::vector<std::vector<double>> grads;
        for (const ParamBlock& b : blocks) grads.emplace_back(b.rows * b.cols, 0.0);
        std::vector<std::size_t> batch(eff);
        for (std::size_t& i : batch) i = sampler.next();
        std::vector<ForwardOutput> outs(eff);
        parallel_for(eff, hooks.workers, [&](std::size_t k) {
            const EncodedPair& ex = data[batch[k]];
            outs[k] = backend.forward_with_prompt(prompt, ex.input, ex.target, GradMode::prompt);
        });
        double loss = 0.0;
        for (const ForwardOutput& out : outs) {
            if (!std::isfinite(out.loss)) {
                throw DivergenceError("non-finite loss at step " + std::to_string(step + 1));
            }
            loss += out.loss;
            for (std::size_t bi = 0; bi < grads.size(); ++bi) {
                for (std::size_t i = 0; i < grads[bi].size(); ++i) grads[bi][i] += out.prompt_grad[bi][i];
            }
        }
        loss /= static_cast<double>(eff);
        double norm2 = 0.0;
        for (auto& g : grads) {
            for (double& x : g) {
                x /= static_cast<double>(eff);
                norm2 += x * x;
            }
        }
        if (!std::isfinite(norm2)) {
            throw DivergenceError("non-finite gradient at step " + std::to_string(step + 1));
        }
        const double norm = std::sqrt(norm2);
        if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) {
            const double s = cfg.clip_norm / norm;
            for (auto& g : grads) {
                for (double& x : g) x *= s;
            }
        }
        const double lr = cfg.lr * schedule_factor(cfg, step, total);
        opt->step(blocks, grads, lr);

        const std::size_t done = step + 1;
        if (hooks.on_step) hooks.on_step(done, prompt);
        if (done % cfg.log_every == 0 || done == total) {
            HistoryEntry e{done, loss, lr, std::nullopt};
            if (hooks.eval && (done % cfg.eval_every == 0 || done == total)) {
                e.metric = hooks.eval(materialize_prefix(prompt));
            }
            result.history.entries.push_back(e);
        }
    }

    if (backend.compute_fingerprint() != fingerprint) {
        throw FrozenBaseViolation("backend parameters changed during tuning of " + desc.name);
    }
    result.checkpoint.prompt = materialize_prefix(prompt);
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoint files

namespace {

constexpr int kFormatVersion = 1;

std::string encode_f32_le(std::span<const float> values) {
    std::string out(values.size() * 4, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(values[i]);
        for (int k = 0; k < 4; ++k) out[i * 4 + k] = static_cast<char>((bits >> (8 * k)) & 0xFFu);
    }
    return out;
}

std::vector<float> decode_f32_le(std::string_view bytes) {
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) {
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + k])) << (8 * k);
        }
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

std::string header_digest_of(json header) {
    header["header_digest"] = "";
    return sha256_hex(header.dump());
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    const PromptParams& p = ckpt.prompt;
    if (p.method == PromptMethod::none) throw ConfigError("a checkpoint needs a soft or prefix prompt");
    if (p.reparam) throw ConfigError("materialize the prefix before writing a checkpoint");
    if (p.values.size() != p.value_count()) {
        throw ShapeMismatch("prompt holds " + std::to_string(p.values.size()) + " values, shape needs " +
                            std::to_string(p.value_count()));
    }
    const std::string payload = encode_f32_le(p.values);
    json h;
    h["format_version"] = kFormatVersion;
    h["method"] = to_string(p.method);
    h["shape"] = p.shape();
    h["dtype"] = "float32";
    h["backend_fingerprint"] = ckpt.backend_fingerprint;
    h["tune_config"] = ckpt.config.to_json();
    h["payload_digest"] = sha256_hex(payload);
    h["header_digest"] = header_digest_of(h);
    std::string out = h.dump();
    out += '\n';
    out += payload;
    return out;
}

void persist(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint deserialize_checkpoint(std::string_view blob, const BackendDescriptor* expected, bool strict) {
    const std::size_t nl = blob.find('\n');
    if (nl == std::string_view::npos) throw CorruptCheckpoint("missing header line");
    const std::string_view line = blob.substr(0, nl);
    const std::string_view payload = blob.substr(nl + 1);

    json h;
    bool canonical = false;
    try {
        h = json::parse(line);
        canonical = h.is_object() && h.dump() == line;
    } catch (const json::exception& e) {
        throw CorruptCheckpoint(std::string("unreadable header: ") + e.what());
    }
    if (!canonical) throw CorruptCheckpoint("header is not in canonical form");

    Checkpoint c;
    std::vector<std::size_t> shape;
    try {
        if (h.at("format_version").get<int>() != kFormatVersion) {
            throw CorruptCheckpoint("unsupported format_version " + h.at("format_version").dump());
        }
        if (h.at("header_digest").get<std::string>() != header_digest_of(h)) {
            throw CorruptCheckpoint("header digest mismatch");
        }
        if (h.at("dtype").get<std::string>() != "float32") throw CorruptCheckpoint("dtype must be float32");
        if (h.at("payload_digest").get<std::string>() != sha256_hex(payload)) {
            throw CorruptCheckpoint("payload digest mismatch");
        }
        c.prompt.method = prompt_method_from_string(h.at("method").get<std::string>());
        shape = h.at("shape").get<std::vector<std::size_t>>();
        c.backend_fingerprint = h.at("backend_fingerprint").get<std::string>();
        c.config = TuneConfig::from_json(h.at("tune_config"));
    } catch (const json::exception& e) {
        throw CorruptCheckpoint(std::string("bad header field: ") + e.what());
    } catch (const ConfigError& e) {
        throw CorruptCheckpoint(e.what());
    }

    if (c.prompt.method == PromptMethod::soft && shape.size() == 2) {
        c.prompt.length = shape[0];
        c.prompt.d_model = shape[1];
    } else if (c.prompt.method == PromptMethod::prefix && shape.size() == 4 && shape[1] == 2) {
        c.prompt.num_layers = shape[0];
        c.prompt.length = shape[2];
        c.prompt.d_model = shape[3];
    } else {
        throw CorruptCheckpoint("shape does not match method " + to_string(c.prompt.method));
    }
    if (payload.size() != c.prompt.value_count() * 4) {
        throw CorruptCheckpoint("payload has " + std::to_string(payload.size()) + " bytes, shape needs " +
                                std::to_string(c.prompt.value_count() * 4));
    }
    c.prompt.values = decode_f32_le(payload);

    if (expected) {
        check_prompt_shape(c.prompt, *expected);
        if (strict && c.backend_fingerprint != expected->frozen_fingerprint) {
            throw FingerprintMismatch("checkpoint was tuned on backend " + c.backend_fingerprint.substr(0, 12) +
                                      ", loading into " + expected->frozen_fingerprint.substr(0, 12));
        }
    }
    return c;
}

Checkpoint restore(const std::filesystem::path& path, const BackendDescriptor* expected, bool strict) {
    return deserialize_checkpoint(read_file(path), expected, strict);
}

}  // namespace toxprompt
