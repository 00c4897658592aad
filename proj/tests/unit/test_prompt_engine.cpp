// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "test_support.hpp"
#include "toxprompt/errors.hpp"
#include "toxprompt/prompt_engine.hpp"

using namespace toxprompt;
using toxprompt::testing::make_stub;
using toxprompt::testing::small_vocab;
using toxprompt::testing::TempDir;

namespace {

std::vector<EncodedPair> encode_pairs(const LanguageModel& lm,
                                      const std::vector<std::pair<std::string, std::string>>& pairs,
                                      bool eos) {
    std::vector<EncodedPair> out;
    for (const auto& [in, tgt] : pairs) {
        TokenSeq t = lm.encode(tgt);
        out.push_back({lm.encode(in), eos ? with_eos(t) : t});
    }
    return out;
}

TuneConfig short_soft(std::size_t steps) {
    TuneConfig cfg;
    cfg.steps = steps;
    cfg.warmup_steps = 0;
    cfg.batch_size = 2;
    cfg.grad_accum = 1;
    cfg.prompt_length = 3;
    cfg.log_every = 1;
    return cfg;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST(TuneConfig, TaskDefaults) {
    const TuneConfig t1 = TuneConfig::task_defaults(1);
    EXPECT_EQ(t1.method, PromptMethod::soft);
    EXPECT_EQ(t1.optimizer, OptimizerKind::adafactor);
    EXPECT_DOUBLE_EQ(t1.lr, 0.3);
    EXPECT_EQ(t1.steps, 2000u);
    EXPECT_EQ(t1.warmup_steps, 100u);
    EXPECT_EQ(t1.effective_batch(), 32u);
    EXPECT_EQ(t1.prompt_length, 20u);

    const TuneConfig t2 = TuneConfig::task_defaults(2);
    EXPECT_EQ(t2.method, PromptMethod::prefix);
    EXPECT_EQ(t2.optimizer, OptimizerKind::adamw);
    EXPECT_DOUBLE_EQ(t2.lr, 5e-5);
    EXPECT_EQ(t2.epochs, 5u);
    EXPECT_FALSE(t2.steps.has_value());
    EXPECT_EQ(t2.total_steps(17), 5u * 3u);
    EXPECT_THROW(TuneConfig::task_defaults(4), ConfigError);
}

TEST(TuneConfig, JsonRoundTripAndValidation) {
    TuneConfig c = TuneConfig::task_defaults(3);
    c.lr = 0.1 + 0.2;
    c.seed = std::numeric_limits<std::uint64_t>::max();
    EXPECT_EQ(TuneConfig::from_json(nlohmann::json::parse(c.to_json().dump())), c);
    EXPECT_THROW(TuneConfig::from_json({{"learning_rate", 1.0}}), ConfigError);
    EXPECT_THROW(TuneConfig::from_json({{"lr", "fast"}}), ConfigError);

    TuneConfig bad;
    bad.epochs = 2;  // steps also set
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = TuneConfig{};
    bad.lr = -1;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = TuneConfig{};
    bad.method = PromptMethod::none;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Schedule, LinearWarmupThenDecay) {
    EXPECT_DOUBLE_EQ(linear_schedule(0, 2000, 100), 0.0);
    EXPECT_DOUBLE_EQ(linear_schedule(50, 2000, 100), 0.5);
    EXPECT_DOUBLE_EQ(linear_schedule(100, 2000, 100), 1.0);
    EXPECT_DOUBLE_EQ(linear_schedule(1050, 2000, 100), 0.5);
    EXPECT_DOUBLE_EQ(linear_schedule(2000, 2000, 100), 0.0);
    EXPECT_DOUBLE_EQ(linear_schedule(0, 10, 0), 1.0);
    EXPECT_DOUBLE_EQ(linear_schedule(5, 10, 0), 0.5);
}

TEST(InitPrompt, SoftShapeAndClassLabelRows) {
    auto lm = make_stub();
    TuneConfig cfg;
    const std::vector<std::string> words{"Yes", "No"};
    const PromptParams p = init_prompt(cfg, *lm, words);
    EXPECT_EQ(p.shape(), (std::vector<std::size_t>{20, 16}));
    const auto yes = lm->token_embedding(lm->tokenizer().word_id("Yes"));
    const auto no = lm->token_embedding(lm->tokenizer().word_id("No"));
    for (std::size_t c = 0; c < 16; ++c) {
        EXPECT_EQ(p.values[c], yes[c]);
        EXPECT_EQ(p.values[16 + c], no[c]);
    }
    EXPECT_EQ(p, init_prompt(cfg, *lm, words));
    cfg.seed = 7;
    EXPECT_NE(p, init_prompt(cfg, *lm, words));
}

TEST(InitPrompt, MultiTokenWordIsAveraged) {
    auto lm = make_stub();
    TuneConfig cfg;
    cfg.prompt_length = 2;
    const std::vector<std::string> words{"zq"};  // spelled as two byte tokens
    const PromptParams p = init_prompt(cfg, *lm, words);
    const TokenSeq toks = lm->encode("zq");
    ASSERT_EQ(toks.size(), 2u);
    const auto a = lm->token_embedding(toks.ids[0]);
    const auto b = lm->token_embedding(toks.ids[1]);
    for (std::size_t c = 0; c < 16; ++c) {
        EXPECT_FLOAT_EQ(p.values[c], static_cast<float>((double(a[c]) + double(b[c])) / 2.0));
    }
}

TEST(InitPrompt, Errors) {
    auto lm = make_stub();
    TuneConfig cfg;
    const std::vector<std::string> empty_word{""};
    EXPECT_THROW(init_prompt(cfg, *lm, empty_word), UnknownVerbalizerWord);
    cfg.prompt_length = 1;
    const std::vector<std::string> two{"Yes", "No"};
    EXPECT_THROW(init_prompt(cfg, *lm, two), ConfigError);
}

TEST(InitPrompt, PrefixShapeOnLargeBackend) {
    ScriptedLM big("big", WordByteTokenizer({"x"}),
                   [](std::span<const int>, std::span<const int>) { return std::vector<double>{}; },
                   ModelFamily::encoder_decoder, 768, 12);
    TuneConfig cfg = TuneConfig::task_defaults(2);
    cfg.reparam = false;
    const PromptParams p = init_prompt(cfg, big);
    EXPECT_EQ(p.shape(), (std::vector<std::size_t>{12, 2, 20, 768}));
    EXPECT_EQ(p.values.size(), 12u * 2 * 20 * 768);

    cfg.reparam = true;
    cfg.reparam_hidden = 16;
    const PromptParams r = init_prompt(cfg, big);
    ASSERT_TRUE(r.reparam.has_value());
    const PromptParams flat = materialize_prefix(r);
    EXPECT_FALSE(flat.reparam.has_value());
    EXPECT_EQ(flat.shape(), (std::vector<std::size_t>{12, 2, 20, 768}));
}

TEST(Optimizer, AdafactorFirstStepIsSignForRankOneGradients) {
    std::vector<float> m{1, 2, 3, 4, 5, 6};
    std::vector<float> s{0.5f};
    std::vector<ParamBlock> blocks{{"m", 2, 3, m}, {"s", 1, 1, s}};
    auto opt = make_adafactor(blocks);
    // rank one: g = u v^T with u = (1, -2), v = (0.5, 1, -3)
    std::vector<std::vector<double>> g{{0.5, 1, -3, -1, -2, 6}, {-0.25}};
    opt->step(blocks, g, 0.1);
    const std::vector<float> expect{1 - 0.1f, 2 - 0.1f, 3 + 0.1f, 4 + 0.1f, 5 + 0.1f, 6 - 0.1f};
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(m[i], expect[i], 1e-6);
    EXPECT_NEAR(s[0], 0.6f, 1e-6);
}

TEST(Optimizer, AdafactorSecondMomentDecay) {
    std::vector<float> v{0, 0};
    std::vector<ParamBlock> blocks{{"v", 1, 2, v}};
    auto opt = make_adafactor(blocks);
    opt->step(blocks, {{1.0, 1.0}}, 1.0);
    opt->step(blocks, {{1e-3, 1e-3}}, 1.0);
    // t=2: beta2 = 1 - 2^-0.8
    const double b = 1.0 - std::pow(2.0, -0.8);
    const double vhat = b * 1.0 + (1 - b) * 1e-6;
    EXPECT_NEAR(v[0], -1.0 - 1e-3 / std::sqrt(vhat), 1e-6);
}

TEST(Optimizer, AdamWMatchesHandComputation) {
    std::vector<float> x{1.0f};
    std::vector<ParamBlock> blocks{{"x", 1, 1, x}};
    auto opt = make_adamw(blocks, 0.01);
    double ref = 1.0, m = 0, v = 0;
    const double grads[] = {0.5, -0.2, 0.3};
    for (int t = 1; t <= 3; ++t) {
        const double g = grads[t - 1];
        opt->step(blocks, {{g}}, 0.01);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        ref *= 1 - 0.01 * 0.01;
        ref -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
        EXPECT_NEAR(x[0], ref, 1e-6);
    }
}

TEST(Tune, ZeroStepsReturnsInitialPromptBitwise) {
    auto lm = make_stub();
    TuneConfig cfg = short_soft(0);
    const PromptParams init = init_prompt(cfg, *lm);
    const auto data = encode_pairs(*lm, {{"a cat", "No"}}, false);
    const TuneResult r = tune(init, data, *lm, cfg);
    EXPECT_TRUE(bitwise_equal(r.checkpoint.prompt.values, init.values));
    EXPECT_TRUE(r.history.entries.empty());
}

TEST(Tune, HistoryCadenceAndLossDecrease) {
    auto lm = make_stub();
    TuneConfig cfg = short_soft(25);
    cfg.log_every = 4;
    const auto data = encode_pairs(*lm, {{"you are stupid", "Yes"}, {"a nice day", "No"}}, false);
    const TuneResult r = tune(init_prompt(cfg, *lm), data, *lm, cfg);
    ASSERT_EQ(r.history.entries.size(), 7u);  // ceil(25 / 4)
    EXPECT_EQ(r.history.entries.back().step, 25u);
    EXPECT_EQ(r.history.entries.front().step, 4u);
    EXPECT_LT(r.history.entries.back().loss, r.history.entries.front().loss);
    EXPECT_EQ(r.checkpoint.backend_fingerprint, lm->descriptor().frozen_fingerprint);
    const std::string jsonl = r.history.to_jsonl();
    EXPECT_EQ(std::count(jsonl.begin(), jsonl.end(), '\n'), 7);
}

TEST(Tune, DeterministicForSeed) {
    auto lm = make_stub(ModelFamily::decoder_only);
    TuneConfig cfg = short_soft(5);
    const auto data = encode_pairs(*lm, {{"you idiot", "Yes"}, {"hello", "No"}, {"bad", "Yes"}}, false);
    const auto a = tune(init_prompt(cfg, *lm), data, *lm, cfg);
    const auto b = tune(init_prompt(cfg, *lm), data, *lm, cfg);
    EXPECT_TRUE(bitwise_equal(a.checkpoint.prompt.values, b.checkpoint.prompt.values));
}

TEST(Tune, PrefixWithReparamReturnsFlatPrefix) {
    auto lm = make_stub();
    TuneConfig cfg = TuneConfig::task_defaults(3);
    cfg.prompt_length = 2;
    cfg.reparam_hidden = 8;
    cfg.epochs = 1;
    cfg.lr = 1e-2;
    cfg.log_every = 1;
    const auto data = encode_pairs(*lm, {{"you are stupid", "you are"}, {"idiot people", "people"}}, true);
    std::size_t calls = 0;
    TuneHooks hooks;
    hooks.eval = [&](const PromptParams& p) {
        EXPECT_FALSE(p.reparam.has_value());
        ++calls;
        return 0.5;
    };
    const auto r = tune(init_prompt(cfg, *lm), data, *lm, cfg, hooks);
    EXPECT_FALSE(r.checkpoint.prompt.reparam.has_value());
    EXPECT_EQ(r.checkpoint.prompt.shape(), (std::vector<std::size_t>{4, 2, 2, 16}));
    EXPECT_EQ(r.history.entries.size(), 1u);
    EXPECT_EQ(calls, 1u);
    EXPECT_EQ(r.history.entries[0].metric, 0.5);
}

TEST(Tune, Errors) {
    auto lm = make_stub();
    TuneConfig cfg = short_soft(3);
    EXPECT_THROW(tune(init_prompt(cfg, *lm), {}, *lm, cfg), EmptyDataset);

    auto nan_lm = std::make_shared<ScriptedLM>(
        "nan", WordByteTokenizer(small_vocab()), [](std::span<const int>, std::span<const int>) {
            return std::vector<double>(WordByteTokenizer(small_vocab()).vocab_size(),
                                       std::numeric_limits<double>::quiet_NaN());
        });
    TuneConfig c2 = short_soft(3);
    const auto data = encode_pairs(*nan_lm, {{"a", "Yes"}}, false);
    EXPECT_THROW(tune(init_prompt(c2, *nan_lm), data, *nan_lm, c2), DivergenceError);

    TuneConfig prefix_cfg = TuneConfig::task_defaults(2);
    EXPECT_THROW(tune(init_prompt(cfg, *lm), data, *lm, prefix_cfg), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
    TempDir dir;
    auto lm = make_stub();
    TuneConfig cfg = short_soft(2);
    Checkpoint c{init_prompt(cfg, *lm), cfg, lm->descriptor().frozen_fingerprint};
    c.prompt.values[0] = -0.0f;
    c.prompt.values[1] = std::numeric_limits<float>::denorm_min();
    persist(c, dir / "c.bin");
    const Checkpoint back = restore(dir / "c.bin", &lm->descriptor(), true);
    EXPECT_EQ(back, c);
    EXPECT_TRUE(bitwise_equal(back.prompt.values, c.prompt.values));
    EXPECT_EQ(serialize_checkpoint(back), read_file(dir / "c.bin"));
}

TEST(Checkpoint, PrefixRoundTrip) {
    auto lm = make_stub();
    TuneConfig cfg = TuneConfig::task_defaults(2);
    cfg.prompt_length = 3;
    const Checkpoint c{materialize_prefix(init_prompt(cfg, *lm)), cfg, "abc"};
    EXPECT_EQ(deserialize_checkpoint(serialize_checkpoint(c)), c);
    EXPECT_THROW(deserialize_checkpoint(serialize_checkpoint(c), &lm->descriptor(), true), FingerprintMismatch);
    EXPECT_NO_THROW(deserialize_checkpoint(serialize_checkpoint(c), &lm->descriptor(), false));
    Checkpoint with_reparam{init_prompt(cfg, *lm), cfg, "abc"};
    EXPECT_THROW(serialize_checkpoint(with_reparam), ConfigError);
}

TEST(Checkpoint, EverySingleByteCorruptionDetected) {
    auto lm = make_stub();
    TuneConfig cfg = short_soft(1);
    cfg.prompt_length = 2;
    const Checkpoint c{init_prompt(cfg, *lm), cfg, lm->descriptor().frozen_fingerprint};
    const std::string blob = serialize_checkpoint(c);
    for (std::size_t i = 0; i < blob.size(); ++i) {
        for (unsigned char mask : {0x01, 0x80, 0xFF}) {
            std::string bad = blob;
            bad[i] = static_cast<char>(bad[i] ^ mask);
            EXPECT_THROW(deserialize_checkpoint(bad), CorruptCheckpoint) << "byte " << i;
        }
    }
    EXPECT_THROW(deserialize_checkpoint(blob.substr(0, blob.size() - 1)), CorruptCheckpoint);
    EXPECT_THROW(deserialize_checkpoint(blob + "x"), CorruptCheckpoint);
    EXPECT_THROW(deserialize_checkpoint(""), CorruptCheckpoint);
}

TEST(Checkpoint, ShapeMismatchAgainstOtherBackend) {
    auto lm = make_stub();
    auto wide = make_stub(ModelFamily::encoder_decoder, 32);
    TuneConfig cfg = short_soft(1);
    const Checkpoint c{init_prompt(cfg, *lm), cfg, lm->descriptor().frozen_fingerprint};
    EXPECT_THROW(deserialize_checkpoint(serialize_checkpoint(c), &wide->descriptor()), ShapeMismatch);
}

TEST(Checkpoint, MissingFile) {
    EXPECT_THROW(restore("/nonexistent/dir/ckpt.bin"), MissingFile);
}
