// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "toxprompt/data_kit.hpp"
#include "toxprompt/errors.hpp"
#include "toxprompt/experiments.hpp"
#include "toxprompt/metrics.hpp"
#include "toxprompt/span_align.hpp"
#include "toxprompt/stats.hpp"

namespace py = pybind11;
using namespace toxprompt;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::dict test_dict(const TestResult& r) {
    py::dict d;
    d["kind"] = to_string(r.kind);
    d["statistic"] = r.statistic;
    d["df"] = r.df;
    d["p_value"] = r.p_value;
    d["n"] = r.n;
    d["degenerate"] = r.degenerate;
    return d;
}

ExperimentConfig config_from(const ConfigMap& overrides) { return ExperimentConfig::from_map(overrides); }

py::dict run_dict(const RunResult& r) {
    py::dict d;
    d["dir"] = r.dir.string();
    d["report"] = to_py(r.report.to_json());
    d["resumed"] = r.resumed;
    d["skipped"] = r.skipped;
    d["final_loss"] = r.final_loss ? py::object(py::float_(*r.final_loss)) : py::object(py::none());
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "toxprompt native core";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<ScorerError>(m, "ScorerError", base.ptr());
    py::register_exception<ModelError>(m, "ModelError", base.ptr());

    // spans
    m.def("remove_spans", [](const std::string& text, const SpanSet& offsets) { return remove_spans(text, offsets); },
          py::arg("text"), py::arg("offsets"));
    m.def("subtract_spans", [](const std::string& a, const std::string& b) { return subtract_spans(a, b); },
          py::arg("original"), py::arg("generated"));
    m.def("trim_spans", [](const std::string& text, const SpanSet& offsets) { return trim_spans(text, offsets); },
          py::arg("text"), py::arg("offsets"));
    m.def("span_offsets_to_intervals", [](const SpanSet& offsets) { return span_offsets_to_intervals(offsets); });
    m.def("intervals_to_offsets", [](const std::vector<Interval>& iv) { return intervals_to_offsets(iv); });

    // metrics
    m.def("clf_metrics",
          [](const std::vector<int>& preds, const std::vector<int>& gold) { return to_py(clf_metrics(preds, gold).to_json()); },
          py::arg("preds"), py::arg("gold"));
    m.def(
        "span_f1",
        [](const SpanSet& gold, const SpanSet& pred) {
            const SpanScore s = span_f1(gold, pred);
            return py::make_tuple(s.precision, s.recall, s.f1);
        },
        py::arg("gold"), py::arg("pred"), "(precision, recall, f1) over character offsets");
    m.def("corpus_bleu",
          [](const std::vector<std::string>& hyp, const std::vector<std::string>& ref) { return corpus_bleu(hyp, ref); },
          py::arg("hypotheses"), py::arg("references"));
    m.def(
        "best_threshold",
        [](const std::vector<double>& scores, const std::vector<int>& gold) {
            const ThresholdResult r = best_threshold(scores, gold);
            return py::make_tuple(r.threshold, r.f1);
        },
        py::arg("scores"), py::arg("gold"));
    m.def("apply_threshold", [](const std::vector<double>& s, double t) { return apply_threshold(s, t); });

    // statistics
    m.def("paired_t_test",
          [](const std::vector<double>& a, const std::vector<double>& b) { return test_dict(paired_t_test(a, b)); });
    m.def("mann_whitney_u",
          [](const std::vector<double>& a, const std::vector<double>& b) { return test_dict(mann_whitney_u(a, b)); });
    m.def(
        "significance_test",
        [](const std::vector<int>& a, const std::vector<int>& b, const std::vector<int>& gold, const std::string& kind) {
            return test_dict(significance_test(a, b, gold, test_kind_from_string(kind)));
        },
        py::arg("preds_a"), py::arg("preds_b"), py::arg("gold"), py::arg("kind") = "paired_t");

    // data
    m.def(
        "perturb",
        [](const std::string& text, const std::vector<std::string>& words, std::uint64_t seed,
           const std::vector<std::string>& modes) {
            std::vector<PerturbMode> parsed;
            for (const auto& s : modes) parsed.push_back(perturb_mode_from_string(s));
            return perturb(text, words, seed, parsed);
        },
        py::arg("text"), py::arg("words"), py::arg("seed") = 0,
        py::arg("modes") = std::vector<std::string>{"repeat-char", "inner-spaces", "leet"});
    m.def("synthetic_insults", &synthetic_insults);

    // experiments
    m.def("validate_report", [](const std::string& text) { return validate_report(nlohmann::json::parse(text)); });
    m.def("resolve_config", [](const ConfigMap& c) { return config_from(c).to_map(); }, py::arg("config"));
    m.def("config_digest", [](const ConfigMap& c) { return config_from(c).digest(); }, py::arg("config"));
    m.def(
        "run",
        [](const ConfigMap& c) {
            const ExperimentConfig cfg = config_from(c);
            RunResult r;
            {
                py::gil_scoped_release release;
                r = run(cfg);
            }
            return run_dict(r);
        },
        py::arg("config"), "tune (or reuse) and evaluate; returns the run summary");
    m.def(
        "evaluate",
        [](const ConfigMap& c) {
            const ExperimentConfig cfg = config_from(c);
            RunResult r;
            {
                py::gil_scoped_release release;
                r = evaluate(cfg);
            }
            return run_dict(r);
        },
        py::arg("config"));
}
