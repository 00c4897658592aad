// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Criterion 11 needs pretrained weights and a network
// connection and is reported as SKIP.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "test_support.hpp"
#include "toxprompt/data_kit.hpp"
#include "toxprompt/errors.hpp"
#include "toxprompt/metrics.hpp"
#include "toxprompt/prompt_engine.hpp"
#include "toxprompt/scorer_client.hpp"
#include "toxprompt/span_align.hpp"
#include "toxprompt/stats.hpp"
#include "toxprompt/stub_lm.hpp"

using namespace toxprompt;
using toxprompt::testing::make_stub;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. Frozen base

Outcome frozen_base() {
    const auto t0 = Clock::now();
    testing::TempDir tmp;
    const auto task = testing::separable_task();
    std::vector<std::string> bad;
    std::size_t runs = 0;
    for (auto family : {ModelFamily::encoder_decoder, ModelFamily::decoder_only}) {
        for (auto method : {PromptMethod::soft, PromptMethod::prefix}) {
            auto lm = make_stub(family);
            lm->save(tmp / "before.bin");
            const std::string fp = lm->compute_fingerprint();
            std::vector<EncodedPair> data;
            for (std::size_t i = 0; i < task.texts.size(); ++i)
                data.push_back({lm->encode(task.texts[i]), lm->encode(task.labels[i] ? "Yes" : "No")});
            TuneConfig cfg = TuneConfig::task_defaults(method == PromptMethod::soft ? 1 : 2);
            cfg.steps = 100;
            cfg.epochs.reset();
            cfg.prompt_length = 4;
            cfg.reparam_hidden = 8;
            cfg.log_every = 50;
            if (method == PromptMethod::prefix) cfg.lr = 1e-2;
            const std::vector<std::string> words = {"No", "Yes"};
            const PromptParams init = init_prompt(cfg, *lm, method == PromptMethod::soft ? words : std::vector<std::string>{});
            std::size_t moved_checks = 0;
            TuneHooks hooks;
            hooks.on_step = [&](std::size_t step, const PromptParams&) {
                if (step % 10 == 0 && lm->compute_fingerprint() != fp) ++moved_checks;
            };
            const TuneResult r = tune(init, data, *lm, cfg, hooks);
            ++runs;
            const std::string tag = to_string(family) + "/" + to_string(method);
            lm->save(tmp / "after.bin");
            if (lm->compute_fingerprint() != fp || moved_checks) bad.push_back(tag + ": fingerprint moved");
            if (read_file(tmp / "before.bin") != read_file(tmp / "after.bin")) bad.push_back(tag + ": weights file changed");
            if (r.checkpoint.backend_fingerprint != fp) bad.push_back(tag + ": checkpoint fingerprint differs");
            // gradients exist and flow only into the prompt blocks
            PromptParams p = r.checkpoint.prompt;
            const auto out = lm->forward_with_prompt(p, data[1].input, data[1].target, GradMode::prompt);
            const auto sizes = trainable_block_sizes(p);
            double norm = 0.0;
            bool shaped = out.prompt_grad.size() == sizes.size();
            for (std::size_t b = 0; shaped && b < sizes.size(); ++b) {
                shaped = out.prompt_grad[b].size() == sizes[b];
                for (double g : out.prompt_grad[b]) norm += g * g;
            }
            if (!shaped) bad.push_back(tag + ": gradient blocks do not match prompt blocks");
            if (!(norm > 0.0)) bad.push_back(tag + ": zero prompt gradient");
            const auto a = trainable_blocks(p);
            PromptParams q = init;
            const auto b0 = trainable_blocks(q);
            bool changed = false;
            for (std::size_t b = 0; b < std::min(a.size(), b0.size()); ++b)
                changed |= !std::equal(a[b].data.begin(), a[b].data.end(), b0[b].data.begin());
            if (!changed) bad.push_back(tag + ": prompt did not move");
        }
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = bad.empty() && secs < 10.0;
    o.detail = std::to_string(runs) + " runs x 100 steps, " + fmt("%.2f s", secs);
    for (const auto& b : bad) o.detail += "; " + b;
    if (secs >= 10.0) o.detail += "; over the 10 s budget";
    return o;
}

// ---------------------------------------------------------------------------
// 2. Finite differences

Outcome gradients() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::size_t coords = 0, nonzero = 0;
    for (auto family : {ModelFamily::encoder_decoder, ModelFamily::decoder_only}) {
        auto lm = make_stub(family);
        TuneConfig soft;
        soft.prompt_length = 3;
        soft.init = "random";
        soft.seed = 7;
        TuneConfig prefix = TuneConfig::task_defaults(2);
        prefix.prompt_length = 2;
        prefix.reparam_hidden = 8;
        prefix.seed = 5;
        TuneConfig flat = prefix;
        flat.reparam = false;
        for (const TuneConfig* cfg : {&soft, &prefix, &flat}) {
            const PromptParams p = init_prompt(*cfg, *lm);
            std::size_t nz = 0;
            worst = std::max(worst, testing::finite_difference_check(*lm, p, lm->encode("you are stupid"),
                                                                     with_eos(lm->encode("the cat")), 60, 17, &nz));
            coords += 60;
            nonzero += nz;
        }
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = worst <= 1e-3 && coords >= 50 && nonzero > 0 && secs < 30.0;
    o.detail = std::to_string(coords) + " coordinates, worst relative error " + fmt("%.2e", worst) + ", " +
               fmt("%.2f s", secs);
    return o;
}

// ---------------------------------------------------------------------------
// 3. Span F1 against set arithmetic

double set_f1(const std::vector<std::size_t>& g, const std::vector<std::size_t>& p) {
    if (g.empty() && p.empty()) return 1.0;
    if (g.empty() || p.empty()) return 0.0;
    std::vector<std::size_t> both;
    std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(both));
    if (both.empty()) return 0.0;
    const double prec = static_cast<double>(both.size()) / static_cast<double>(p.size());
    const double rec = static_cast<double>(both.size()) / static_cast<double>(g.size());
    return 2 * prec * rec / (prec + rec);
}

Outcome span_oracle() {
    Rng rng(3);
    std::size_t mismatches = 0, both_empty = 0, one_empty = 0;
    for (int k = 0; k < 10000; ++k) {
        const std::size_t universe = rng.index(13);
        std::vector<std::size_t> g, p;
        for (std::size_t i = 0; i < universe; ++i) {
            if (rng.index(2)) g.push_back(i);
            if (rng.index(2)) p.push_back(i);
        }
        // force the edge rules to show up often
        if (k % 50 == 0) g.clear();
        if (k % 70 == 0) p.clear();
        both_empty += g.empty() && p.empty();
        one_empty += g.empty() != p.empty();
        if (span_f1(g, p).f1 != set_f1(g, p)) ++mismatches;
    }
    Outcome o;
    o.pass = mismatches == 0 && both_empty > 0 && one_empty > 0 && span_f1({}, {}).f1 == 1.0 &&
             span_f1(std::vector<std::size_t>{1}, {}).f1 == 0.0;
    o.detail = "10000 pairs, " + std::to_string(mismatches) + " mismatches (" + std::to_string(both_empty) +
               " both-empty, " + std::to_string(one_empty) + " one-empty)";
    return o;
}

// ---------------------------------------------------------------------------
// 4. Alignment round trip

Outcome alignment() {
    Rng rng(2024);
    std::size_t fails = 0;
    std::string first_fail;
    for (int k = 0; k < 1000; ++k) {
        const auto c = testing::random_removal_case(rng);
        const SpanSet got = subtract_spans(c.text, remove_spans(c.text, c.offsets));
        if (got != trim_spans(c.text, c.offsets)) {
            if (!fails) first_fail = c.text;
            ++fails;
        }
    }
    Outcome o;
    o.pass = fails == 0;
    o.detail = "1000 texts, " + std::to_string(fails) + " failures" + (fails ? " (first: '" + first_fail + "')" : "");
    return o;
}

// ---------------------------------------------------------------------------
// 5. Overfit

Outcome overfit() {
    const auto t0 = Clock::now();
    const auto task = testing::separable_task();
    auto lm = make_stub();
    std::vector<EncodedPair> data;
    for (std::size_t i = 0; i < task.texts.size(); ++i)
        data.push_back({lm->encode(task.texts[i]), lm->encode(task.labels[i] ? "Yes" : "No")});
    const int yes = lm->tokenizer().word_id("Yes"), no = lm->tokenizer().word_id("No");
    auto accuracy = [&](const PromptParams& p) {
        int ok = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto out = lm->forward_with_prompt(p, data[i].input, data[i].target);
            ok += (out.log_probs(0, yes) > out.log_probs(0, no) ? 1 : 0) == task.labels[i];
        }
        return ok / static_cast<double>(data.size());
    };
    TuneConfig cfg = TuneConfig::task_defaults(1);
    cfg.eval_every = 100;
    cfg.log_every = 100;
    const std::vector<std::string> words = {"No", "Yes"};
    TuneHooks hooks;
    hooks.eval = accuracy;
    const TuneResult r = tune(init_prompt(cfg, *lm, words), data, *lm, cfg, hooks);
    const double final_acc = accuracy(r.checkpoint.prompt);
    std::size_t first = 0;
    for (const auto& e : r.history.entries)
        if (e.metric && *e.metric >= 0.95) {
            first = e.step;
            break;
        }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = final_acc >= 0.95 && secs < 120.0;
    o.detail = "16 examples, 2000 steps, final training accuracy " + fmt("%.4f", final_acc) +
               (first ? ", first >= 0.95 at step " + std::to_string(first) : std::string()) + ", " +
               fmt("%.1f s", secs);
    return o;
}

// ---------------------------------------------------------------------------
// 6. Metric identities

Outcome identities() {
    Rng rng(6);
    const std::vector<std::string> words = {"the", "cat", "sat", "on", "mat", "you", "are", "nice", "a", "day"};
    std::vector<std::string> texts;
    for (int i = 0; i < 200; ++i) {
        std::string s;
        const std::size_t n = 1 + rng.index(12);
        for (std::size_t k = 0; k < n; ++k) s += (k ? " " : "") + words[rng.index(words.size())];
        texts.push_back(s);
    }
    std::vector<std::string> bad;
    if (corpus_bleu(texts, texts) != 1.0) bad.push_back("corpus BLEU(x,x) != 1");
    for (int i = 0; i < 200 && bad.empty(); ++i) {
        const std::vector<std::string> one = {texts[i]};
        if (corpus_bleu(one, one) != 1.0) bad.push_back("sentence BLEU(x,x) != 1 for '" + texts[i] + "'");
    }

    // identity generation with a stub scorer: the no-rewrite row of the detox table
    FunctionScorer scorer("stub", [](std::string_view t, Attribute) { return t.size() % 3 == 0 ? 0.95 : 0.2; });
    auto lm = make_stub();
    DetoxProviders providers;
    providers.scorer = &scorer;
    providers.fluency = lm.get();
    const std::vector<std::string> sample(texts.begin(), texts.begin() + 40);
    const DetoxReport rep = detox_report({sample, sample, sample}, providers);
    if (rep.bleu != 1.0) bad.push_back("detox bleu " + std::to_string(rep.bleu));
    if (!rep.bleu_ref || *rep.bleu_ref != 1.0) bad.push_back("detox bleu_ref != 1");
    if (std::fabs(rep.sim_w - 1.0) > 1e-12 || std::fabs(rep.sim_f - 1.0) > 1e-12)
        bad.push_back("detox similarity " + std::to_string(rep.sim_w) + "/" + std::to_string(rep.sim_f));
    if (!rep.t_avg || !rep.t_07 || !rep.t_09) bad.push_back("toxicity fields missing");

    std::size_t order_violations = 0;
    for (int k = 0; k < 1000; ++k) {
        std::vector<double> scores(1 + rng.index(50));
        for (auto& s : scores) s = rng.index(4) == 0 ? (rng.index(2) ? 0.7 : 0.9) : rng.uniform01();
        DetoxReport r;
        toxicity_aggregates(scores, r);
        if (!(*r.t_09 <= *r.t_07)) ++order_violations;
    }
    if (order_violations) bad.push_back(std::to_string(order_violations) + " cases with t_09 > t_07");
    Outcome o;
    o.pass = bad.empty();
    o.detail = "BLEU identity on 200 texts, detox identity row (bleu " + fmt("%.3f", rep.bleu) + ", sim " +
               fmt("%.3f", rep.sim_w) + "), 1000 aggregate orderings";
    for (const auto& b : bad) o.detail += "; " + b;
    return o;
}

// ---------------------------------------------------------------------------
// 7. Dynamic threshold

// Best F1 over every threshold in [0, 1] for the rule "score > t".
double sweep_f1(const std::vector<double>& scores, const std::vector<int>& gold) {
    std::vector<double> cuts = {0.0};
    cuts.insert(cuts.end(), scores.begin(), scores.end());
    double best = 0.0;
    for (double t : cuts) {
        int tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const bool pred = scores[i] > t;
            tp += pred && gold[i];
            fp += pred && !gold[i];
            fn += !pred && gold[i];
        }
        if (tp == 0) continue;
        const double p = static_cast<double>(tp) / (tp + fp);
        const double r = static_cast<double>(tp) / (tp + fn);
        best = std::max(best, 2 * p * r / (p + r));
    }
    return best;
}

Outcome dynamic_threshold() {
    Rng rng(77);
    std::size_t worse = 0, sweep_mismatch = 0, small_sets = 0;
    for (int k = 0; k < 1000; ++k) {
        const std::size_t n = 2 + rng.index(60);
        std::vector<double> scores(n);
        std::vector<int> gold(n);
        for (std::size_t i = 0; i < n; ++i) {
            gold[i] = static_cast<int>(rng.index(2));
            scores[i] = rng.index(5) == 0 ? std::round(rng.uniform01() * 10) / 10 : rng.uniform01();
        }
        const ThresholdResult best = best_threshold(scores, gold);
        const double fixed = clf_metrics(apply_threshold(scores, 0.5), gold).f1;
        if (best.f1 < fixed) ++worse;
    }
    // every label pattern for n <= 8, scores on a coarse grid so ties and the 0/1 ends occur
    const std::vector<double> grid = {0.0, 0.1, 0.25, 0.5, 0.5, 0.75, 0.9, 1.0};
    for (std::size_t n = 1; n <= 8; ++n) {
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            for (int draw = 0; draw < 4; ++draw) {
                std::vector<double> scores(n);
                std::vector<int> gold(n);
                for (std::size_t i = 0; i < n; ++i) {
                    gold[i] = (mask >> i) & 1u;
                    scores[i] = grid[rng.index(grid.size())];
                }
                ++small_sets;
                const ThresholdResult best = best_threshold(scores, gold);
                const double oracle = sweep_f1(scores, gold);
                const double realized = clf_metrics(apply_threshold(scores, best.threshold), gold).f1;
                if (best.f1 != oracle || realized != oracle) ++sweep_mismatch;
            }
        }
    }
    Outcome o;
    o.pass = worse == 0 && sweep_mismatch == 0;
    o.detail = "1000 random sets (" + std::to_string(worse) + " below fixed 0.5), " + std::to_string(small_sets) +
               " sets with n <= 8 (" + std::to_string(sweep_mismatch) + " differ from the sweep)";
    return o;
}

// ---------------------------------------------------------------------------
// 8. Paired t-test

Outcome t_test() {
    Rng rng(8);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const std::size_t n = 3 + rng.index(60);
        std::vector<double> a(n), b(n);
        const double shift = rng.uniform(-0.5, 0.5);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = rng.uniform01();
            b[i] = a[i] + shift + rng.uniform(-0.6, 0.6);
        }
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
        const boost::math::students_t dist(static_cast<double>(n - 1));
        const double oracle = 2 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
        const TestResult r = paired_t_test(a, b);
        worst = std::max(worst, std::fabs(r.p_value - oracle));
    }
    const std::vector<int> preds = {1, 0, 1, 1, 0, 0, 1, 0};
    const std::vector<int> gold = {1, 1, 0, 1, 0, 1, 1, 0};
    const TestResult same = significance_test(preds, preds, gold, TestKind::paired_t);
    Outcome o;
    o.pass = worst <= 1e-6 && same.degenerate && same.p_value == 1.0;
    o.detail = "100 cases, max |p - oracle| " + fmt("%.2e", worst) + "; identical predictions: degenerate=" +
               (same.degenerate ? "yes" : "no") + " p=" + fmt("%.1f", same.p_value);
    return o;
}

// ---------------------------------------------------------------------------
// 9. Data pipeline

Outcome data_pipeline() {
    std::vector<std::string> bad;
    Rng rng(9);
    for (int k = 0; k < 200; ++k) {
        Dataset ds;
        ds.task = 1;
        const std::size_t pos = 1 + rng.index(80), neg = 1 + rng.index(80);
        for (std::size_t i = 0; i < pos + neg; ++i)
            ds.clf.push_back({"text " + std::to_string(i), i < pos ? 1 : 0, ""});
        const SplitResult s = balance_and_split(ds, 100 + k);
        const std::size_t m = std::min(pos, neg);
        std::size_t c1 = 0, c0 = 0;
        for (const auto* part : {&s.train, &s.test})
            for (const auto& e : part->clf) (e.label ? c1 : c0)++;
        const std::size_t train_expected = (8 * 2 * m + 5) / 10;
        if (c1 != m || c0 != m) bad.push_back("class counts " + std::to_string(c0) + "/" + std::to_string(c1));
        if (s.train.clf.size() != train_expected || s.test.clf.size() != 2 * m - train_expected)
            bad.push_back("split sizes for n=" + std::to_string(2 * m));
    }
    Dataset pairs = synthetic_detox(50, 4);
    const SplitResult ps = balance_and_split(pairs, 1);
    if (ps.train.pairs.size() != 40 || ps.test.pairs.size() != 10) bad.push_back("task-3 80/20 sizes");

    const std::vector<PerturbMode> sp{PerturbMode::inner_spaces}, rep{PerturbMode::repeat_char};
    const std::string spaced = perturb("a whore b", std::vector<std::string>{"whore"}, 1, sp);
    if (spaced != "a w h o r e b") bad.push_back("inner spaces gave '" + spaced + "'");
    const std::string repeated = perturb("you sluts", std::vector<std::string>{"sluts"}, 5, rep);
    if (!std::regex_match(repeated, std::regex("you s+l+u+t+s+")) || repeated.size() < 11 || repeated.size() > 14)
        bad.push_back("repeat char gave '" + repeated + "'");
    if (perturb("you sluts", std::vector<std::string>{"sluts"}, 5, rep) != repeated) bad.push_back("perturb not seeded");
    Outcome o;
    o.pass = bad.empty();
    o.detail = "200 balanced splits, task-3 80/20, '" + spaced + "', '" + repeated + "'";
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 3); ++i) o.detail += "; " + bad[i];
    return o;
}

// ---------------------------------------------------------------------------
// 10. Checkpoints

Outcome checkpoints() {
    testing::TempDir tmp;
    Rng rng(10);
    std::size_t mismatch = 0, undetected = 0, corruptions = 0;
    auto enc = make_stub(ModelFamily::encoder_decoder);
    auto dec = make_stub(ModelFamily::decoder_only);
    for (int k = 0; k < 100; ++k) {
        const LanguageModel& lm = k % 2 ? *dec : *enc;
        TuneConfig cfg = TuneConfig::task_defaults(k % 3 == 0 ? 2 : 1);
        cfg.prompt_length = 1 + rng.index(6);
        cfg.seed = rng.next();
        cfg.reparam = k % 6 == 0;
        cfg.reparam_hidden = 4;
        cfg.init = "random";
        PromptParams p = init_prompt(cfg, lm);
        for (auto& b : trainable_blocks(p))
            for (float& x : b.data) x = static_cast<float>(rng.uniform(-3, 3));
        p = materialize_prefix(p);
        const Checkpoint c{p, cfg, lm.descriptor().frozen_fingerprint};
        const auto path = tmp / ("c" + std::to_string(k) + ".bin");
        persist(c, path);
        const std::string blob = read_file(path);
        const Checkpoint back = restore(path, &lm.descriptor(), true);
        if (!(back == c) || serialize_checkpoint(back) != blob) ++mismatch;

        // random single-byte corruptions, plus every byte for a few files
        std::vector<std::size_t> positions;
        if (k < 3) {
            for (std::size_t i = 0; i < blob.size(); ++i) positions.push_back(i);
        } else {
            for (int j = 0; j < 20; ++j) positions.push_back(rng.index(blob.size()));
        }
        for (std::size_t pos : positions) {
            std::string broken = blob;
            broken[pos] = static_cast<char>(broken[pos] ^ static_cast<char>(1 + rng.index(255)));
            ++corruptions;
            try {
                deserialize_checkpoint(broken);
                ++undetected;
            } catch (const CorruptCheckpoint&) {
            }
        }
    }
    Outcome o;
    o.pass = mismatch == 0 && undetected == 0;
    o.detail = "100 round trips (" + std::to_string(mismatch) + " not bit-identical), " + std::to_string(corruptions) +
               " single-byte corruptions (" + std::to_string(undetected) + " undetected)";
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria = {
        {1, "frozen base during tuning", frozen_base},
        {2, "prompt gradients vs finite differences", gradients},
        {3, "span F1 vs set arithmetic", span_oracle},
        {4, "span alignment round trip", alignment},
        {5, "overfit separable task", overfit},
        {6, "metric identities", identities},
        {7, "dynamic threshold", dynamic_threshold},
        {8, "paired t-test vs t distribution", t_test},
        {9, "data pipeline", data_pipeline},
        {10, "checkpoint integrity", checkpoints},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failed += !o.pass;
        std::printf("criterion %d: %s - %s (%s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("criterion 11: SKIP - optional scaled reproduction (needs pretrained weights and network access)\n");
    return failed ? 1 : 0;
}
