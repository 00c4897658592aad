// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "toxprompt/errors.hpp"
#include "toxprompt/experiments.hpp"

namespace toxprompt {
namespace {

using json = nlohmann::json;
using testing::TempDir;

// Small enough to train in a second or two on the stub backend.
ConfigMap quick_task1(const std::filesystem::path& out) {
    return {{"task", "1"},
            {"dataset", "synthetic"},
            {"data.synthetic_size", "40"},
            {"tune.steps", "120"},
            {"tune.warmup_steps", "10"},
            {"tune.batch_size", "8"},
            {"tune.grad_accum", "1"},
            {"tune.prompt_length", "4"},
            {"tune.eval_every", "60"},
            {"output.dir", out.string()}};
}

json read_json(const std::filesystem::path& p) { return json::parse(read_file(p)); }

TEST(Config, ParsesCommentsEscapesAndErrors) {
    const ConfigMap m = parse_config_text("# header\n task = 2 \n\nprompt.template = a\\nb \\# c # note\nseed=7\n");
    EXPECT_EQ(m.at("task"), "2");
    EXPECT_EQ(m.at("prompt.template"), "a\nb # c");
    EXPECT_EQ(m.at("seed"), "7");
    try {
        parse_config_text("task = 1\nno equals here\n", "f.cfg");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("f.cfg:2"), std::string::npos);
    }
    EXPECT_THROW(parse_config_text("k = bad\\q"), ConfigError);
}

TEST(Config, LayersAndOverrides) {
    ConfigMap file = {{"task", "1"}, {"seed", "1"}};
    ConfigMap local = {{"seed", "2"}, {"dataset", "hatexplain"}};
    std::vector<ConfigMap> layers = {file, local};
    ConfigMap merged = merge_layers(layers);
    apply_override(merged, "seed=3");
    apply_override(merged, " tune.lr = 0.1 ");
    EXPECT_EQ(merged.at("seed"), "3");
    EXPECT_EQ(merged.at("dataset"), "hatexplain");
    EXPECT_EQ(merged.at("tune.lr"), "0.1");
    EXPECT_THROW(apply_override(merged, "novalue"), ConfigError);
    EXPECT_THROW(apply_override(merged, "=x"), ConfigError);
}

TEST(Config, TaskDefaultsSelectMethod) {
    auto c1 = ExperimentConfig::from_map({{"task", "1"}});
    EXPECT_EQ(c1.tune.method, PromptMethod::soft);
    EXPECT_EQ(c1.tune.steps, 2000u);
    auto c2 = ExperimentConfig::from_map({{"task", "2"}});
    EXPECT_EQ(c2.tune.method, PromptMethod::prefix);
    EXPECT_EQ(c2.tune.epochs, 5u);
    auto c3 = ExperimentConfig::from_map({{"task", "3"}, {"tune.steps", "10"}});
    EXPECT_EQ(c3.tune.method, PromptMethod::prefix);
    EXPECT_EQ(c3.tune.steps, 10u);
    EXPECT_FALSE(c3.tune.epochs.has_value());
    auto c4 = ExperimentConfig::from_map({{"task", "1"}, {"tune.epochs", "2"}});
    EXPECT_FALSE(c4.tune.steps.has_value());
    EXPECT_EQ(c4.tune.seed, 42u);
    EXPECT_EQ(ExperimentConfig::from_map({{"seed", "9"}}).tune.seed, 9u);
}

TEST(Config, RejectsBadValues) {
    EXPECT_THROW(ExperimentConfig::from_map({{"task", "4"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_map({{"bogus", "1"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_map({{"tune.bogus", "1"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_map({{"tune.lr", "fast"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_map({{"eval.threshold", "median"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_map({{"task", "2"}, {"prompt.kind", "manual"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_map({{"prompt.kind", "manual"}, {"prompt.template", "no slots"}}),
                 ConfigError);
    EXPECT_THROW(ExperimentConfig::from_map({{"eval.perturb_modes", "shout"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_map({{"verbalizer.toxic", "No"}}), ConfigError);
}

TEST(Config, CanonicalRoundTripAndDigest) {
    auto c = ExperimentConfig::from_map({{"task", "3"}, {"tune.lr", "0.001"}, {"backend.d_model", "8"}});
    const std::string text = c.canonical();
    auto back = ExperimentConfig::from_map(parse_config_text(text));
    EXPECT_EQ(back.canonical(), text);
    EXPECT_EQ(back.digest(), c.digest());
    EXPECT_EQ(c.digest().size(), 64u);
    // manual template with newlines survives the line format
    EXPECT_NE(text.find("prompt.template=[INPUT]\\nQuestion:"), std::string::npos);
    auto d = c;
    d.seed = 43;
    EXPECT_NE(d.digest(), c.digest());
    auto e = c;
    e.output_dir = "elsewhere";
    e.workers = 4;
    EXPECT_EQ(e.digest(), c.digest());
}

TEST(Run, Task1WritesArtifactsAndFitsSeparableData) {
    TempDir tmp;
    auto m = quick_task1(tmp / "a");
    m["tune.steps"] = "300";
    m["eval.split"] = "train";
    auto c = ExperimentConfig::from_map(m);
    const RunResult r = run(c);
    EXPECT_FALSE(r.resumed);
    EXPECT_FALSE(r.skipped);
    for (const char* f : {"config.txt", "checkpoint.bin", "history.jsonl", "predictions.jsonl", "report.json"})
        EXPECT_TRUE(std::filesystem::exists(r.dir / f)) << f;
    const json report = read_json(r.dir / "report.json");
    EXPECT_TRUE(validate_report(report).empty());
    EXPECT_EQ(report["config_digest"], c.digest());
    EXPECT_EQ(report["backend_fingerprint"], r.report.backend_fingerprint);
    EXPECT_EQ(report["config"]["tune.steps"], "300");
    EXPECT_GE(*headline_metric(r.report), 0.95);
    EXPECT_TRUE(r.final_loss.has_value());

    // one prediction line per evaluated row
    std::ifstream in(r.dir / "predictions.jsonl");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        auto j = json::parse(line);
        EXPECT_TRUE(j.contains("pred_label") && j.contains("score") && j.contains("text"));
        ++lines;
    }
    EXPECT_EQ(lines, r.report.n);
}

TEST(Run, SameSeedReproducesMetricsAndReusesOutputs) {
    TempDir tmp;
    auto a = ExperimentConfig::from_map(quick_task1(tmp / "a"));
    auto b = ExperimentConfig::from_map(quick_task1(tmp / "b"));
    const RunResult ra = run(a);
    const RunResult rb = run(b);
    EXPECT_EQ(ra.report.metrics, rb.report.metrics);
    EXPECT_EQ(read_file(ra.dir / "checkpoint.bin"), read_file(rb.dir / "checkpoint.bin"));

    const RunResult again = run(a);
    EXPECT_TRUE(again.skipped);
    EXPECT_EQ(again.report.metrics, ra.report.metrics);

    std::filesystem::remove(a.output_dir / "report.json");
    const RunResult resumed = run(a);
    EXPECT_TRUE(resumed.resumed);
    EXPECT_EQ(resumed.report.metrics, ra.report.metrics);

    auto other = a;
    other.seed = 5;
    EXPECT_THROW(run(other), ConfigError);
}

TEST(Run, MissingDatasetFailsBeforeTraining) {
    TempDir tmp;
    std::ofstream(tmp / "registry.json")
        << R"({"datasets": [{"name": "gone", "task": 1, "path": "nowhere.jsonl", "adapter": "canonical"}]})";
    auto m = quick_task1(tmp / "out");
    m["dataset"] = "gone";
    m["data.registry"] = (tmp / "registry.json").string();
    auto c = ExperimentConfig::from_map(m);
    EXPECT_THROW(run(c), MissingFile);
    EXPECT_FALSE(std::filesystem::exists(tmp / "out" / "checkpoint.bin"));

    m["dataset"] = "synthetic";
    m["eval.target"] = "gone";
    EXPECT_THROW(run(ExperimentConfig::from_map(m)), MissingFile);
    EXPECT_FALSE(std::filesystem::exists(tmp / "out" / "checkpoint.bin"));
}

TEST(Run, RegistryDatasetAndTaskMismatch) {
    TempDir tmp;
    const Dataset ds = synthetic_classification(30, 3);
    std::ofstream(tmp / "clf.jsonl") << to_jsonl(ds.clf);
    std::ofstream(tmp / "registry.json")
        << R"({"datasets": [{"name": "clf", "task": 1, "path": "clf.jsonl", "adapter": "canonical"}]})";
    auto m = quick_task1(tmp / "out");
    m["dataset"] = "clf";
    m["data.registry"] = (tmp / "registry.json").string();
    const RunResult r = run(ExperimentConfig::from_map(m));
    EXPECT_EQ(r.report.dataset, "clf");
    EXPECT_EQ(r.report.n, 6u);  // 15/15 balanced, 20% held out

    m["task"] = "2";
    m["output.dir"] = (tmp / "out2").string();
    EXPECT_THROW(run(ExperimentConfig::from_map(m)), ConfigError);
}

TEST(Run, ManualPromptAndDynamicThreshold) {
    TempDir tmp;
    auto m = quick_task1(tmp / "manual");
    m["prompt.kind"] = "manual";
    m["backend.max_context"] = "128";
    const RunResult r = run(ExperimentConfig::from_map(m));
    EXPECT_FALSE(std::filesystem::exists(r.dir / "checkpoint.bin"));
    EXPECT_TRUE(validate_report(r.report.to_json()).empty());

    auto d = quick_task1(tmp / "dyn");
    d["eval.threshold"] = "dynamic";
    const RunResult rd = run(ExperimentConfig::from_map(d));
    EXPECT_EQ(rd.report.metrics["threshold_mode"], "dynamic");
    const double t = rd.report.metrics["threshold"].get<double>();
    EXPECT_GT(t, 0.0);
    EXPECT_LT(t, 1.0);
}

TEST(Run, PerturbationReportsSecondMetricSet) {
    TempDir tmp;
    auto m = quick_task1(tmp / "p");
    m["eval.perturb"] = "true";
    m["eval.perturb_modes"] = "inner-spaces";
    const RunResult r = run(ExperimentConfig::from_map(m));
    ASSERT_TRUE(r.report.metrics.contains("perturbed"));
    const auto& p = r.report.metrics["perturbed"];
    EXPECT_EQ(p["perturbed_rows"].get<std::size_t>(), r.report.metrics["tp"].get<std::size_t>() +
                                                           r.report.metrics["fn"].get<std::size_t>());
    EXPECT_EQ(p["tp"].get<std::size_t>() + p["fn"].get<std::size_t>() + p["fp"].get<std::size_t>() +
                  p["tn"].get<std::size_t>(),
              r.report.n);
}

TEST(Run, SpanAndDetoxTasks) {
    TempDir tmp;
    ConfigMap m = {{"task", "2"},         {"data.synthetic_size", "10"}, {"tune.steps", "3"},
                   {"tune.prompt_length", "2"}, {"gen.max_len", "12"},  {"output.dir", (tmp / "t2").string()}};
    const RunResult r2 = run(ExperimentConfig::from_map(m));
    ASSERT_TRUE(headline_metric(r2.report).has_value());
    EXPECT_GE(*headline_metric(r2.report), 0.0);
    EXPECT_LE(*headline_metric(r2.report), 1.0);
    auto first = json::parse(read_file(r2.dir / "predictions.jsonl").substr(0, read_file(r2.dir / "predictions.jsonl").find('\n')));
    EXPECT_TRUE(first.contains("offsets") && first.contains("intervals"));

    m["task"] = "3";
    m["output.dir"] = (tmp / "t3").string();
    const RunResult r3 = run(ExperimentConfig::from_map(m));
    EXPECT_TRUE(r3.report.metrics.contains("bleu"));
    EXPECT_TRUE(r3.report.metrics.contains("t_avg"));
    EXPECT_TRUE(validate_report(r3.report.to_json()).empty());
}

TEST(ScoreSweep, LexiconPicksAnAttribute) {
    TempDir tmp;
    auto c = ExperimentConfig::from_map(quick_task1(tmp / "sw"));
    const json j = score_sweep(c);
    EXPECT_EQ(j["f1"].size(), 6u);
    // the lexicon scores every attribute alike, so the first one wins the tie
    EXPECT_EQ(j["best"], "toxicity");
    EXPECT_TRUE(std::filesystem::exists(tmp / "sw" / "sweep.json"));
    c.scorer = "none";
    EXPECT_THROW(score_sweep(c), ConfigError);
}

TEST(Report, ValidationFindsProblems) {
    MetricsReport r;
    r.dataset = "d";
    r.model = "m";
    r.config_digest = std::string(64, 'a');
    r.timestamp = "2026-01-01T00:00:00Z";
    r.backend_fingerprint = "f";
    EXPECT_TRUE(validate_report(r.to_json()).empty());
    EXPECT_EQ(MetricsReport::from_json(r.to_json()).to_json(), r.to_json());
    json bad = r.to_json();
    bad.erase("metrics");
    bad["task"] = 9;
    bad["config_digest"] = "xyz";
    EXPECT_EQ(validate_report(bad).size(), 3u);
    EXPECT_THROW(MetricsReport::from_json(bad), SchemaError);
}

TEST(Transfer, TwoByTwoGridAndFailedCell) {
    TempDir tmp;
    auto c = ExperimentConfig::from_map(quick_task1(tmp / "grid"));
    c.workers = 2;
    const std::vector<std::string> names = {"synthetic-1", "synthetic-2"};
    const TransferTable t = transfer_matrix(names, names, c);
    ASSERT_EQ(t.cells.size(), 2u);
    EXPECT_EQ(t.find("synthetic-1", "synthetic-1"), nullptr);
    ASSERT_NE(t.find("synthetic-1", "synthetic-2"), nullptr);
    EXPECT_TRUE(t.find("synthetic-2", "synthetic-1")->f1.has_value());
    EXPECT_TRUE(std::filesystem::exists(tmp / "grid" / "transfer" / "transfer.csv"));
    const std::string csv = t.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "train,synthetic-1,synthetic-2");
    EXPECT_NE(csv.find("synthetic-1,-,"), std::string::npos);

    std::ofstream(tmp / "registry.json")
        << R"({"datasets": [{"name": "gone", "task": 1, "path": "nowhere.jsonl", "adapter": "canonical"}]})";
    c.registry = tmp / "registry.json";
    c.output_dir = tmp / "grid2";
    const std::vector<std::string> train = {"synthetic-1"};
    const std::vector<std::string> eval = {"synthetic-2", "gone"};
    const TransferTable f = transfer_matrix(train, eval, c);
    ASSERT_EQ(f.cells.size(), 2u);
    EXPECT_TRUE(f.find("synthetic-1", "synthetic-2")->f1.has_value());
    EXPECT_FALSE(f.find("synthetic-1", "gone")->f1.has_value());
    EXPECT_NE(f.find("synthetic-1", "gone")->error.find("MissingFile"), std::string::npos);
    EXPECT_NE(f.to_csv().find("failed"), std::string::npos);
    EXPECT_EQ(f.to_json()["cells"][1]["status"], "failed");
}

TEST(Ablation, StepsAndEpochsGrids) {
    TempDir tmp;
    auto c = ExperimentConfig::from_map(quick_task1(tmp / "abl"));
    const std::vector<std::size_t> steps = {5, 20, 60};
    const AblationCurve curve = ablation_curve(c, AblationAxis::steps, steps);
    ASSERT_EQ(curve.points.size(), 3u);
    for (const auto& p : curve.points) {
        EXPECT_TRUE(p.error.empty()) << p.error;
        EXPECT_TRUE(p.metric.has_value());
    }
    EXPECT_TRUE(std::filesystem::exists(tmp / "abl" / "ablate" / "curve.csv"));
    EXPECT_EQ(read_json(tmp / "abl" / "ablate" / "curve.json")["points"].size(), 3u);

    const std::vector<std::size_t> unsorted = {20, 5};
    EXPECT_THROW(ablation_curve(c, AblationAxis::steps, unsorted), ConfigError);

    auto t2 = ExperimentConfig::from_map({{"task", "2"},
                                          {"data.synthetic_size", "5"},
                                          {"tune.prompt_length", "2"},
                                          {"gen.max_len", "8"},
                                          {"output.dir", (tmp / "ep").string()}});
    const std::vector<std::size_t> epochs = {1, 2};
    const AblationCurve ep = ablation_curve(t2, AblationAxis::epochs, epochs);
    ASSERT_EQ(ep.points.size(), 2u);
    EXPECT_EQ(ep.metric_name, "span_f1");
    for (const auto& p : ep.points) EXPECT_TRUE(p.error.empty()) << p.error;

    const std::vector<std::size_t> samples = {4, 8};
    const AblationCurve sm = ablation_curve(c, AblationAxis::samples, samples);
    for (const auto& p : sm.points) EXPECT_TRUE(p.error.empty()) << p.error;
    EXPECT_THROW(ablation_axis_from_string("layers"), ConfigError);
}

}  // namespace
}  // namespace toxprompt
