// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

// toxprompt: command-line driver for tuning runs and experiment grids.
//
//   toxprompt tune --config base.cfg --set dataset=sbic --set task=1
//   toxprompt eval --config base.cfg --set checkpoint=runs/a/checkpoint.bin
//   toxprompt transfer --config base.cfg --train mhs,sbic --eval mhs,sbic,hatexplain
//   toxprompt ablate --config base.cfg --axis steps --grid 200,800,2000
//   toxprompt report runs/a runs/b
//
// Exit codes: 0 ok, 1 model/other error, 2 config error, 3 data error, 4 scorer error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "toxprompt/errors.hpp"
#include "toxprompt/experiments.hpp"
#include "toxprompt/util.hpp"

namespace fs = std::filesystem;
using namespace toxprompt;

namespace {

struct ConfigArgs {
    std::vector<std::string> files;
    std::vector<std::string> sets;
    bool print_config = false;
};

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("-c,--config", args.files, "key=value config file; later files override earlier ones");
    cmd->add_option("-s,--set", args.sets, "override one key (key=value)");
    cmd->add_flag("--print-config", args.print_config, "print the resolved config and exit");
}

ExperimentConfig resolve(const ConfigArgs& args, const std::vector<std::string>& forced = {}) {
    std::vector<ConfigMap> layers;
    for (const auto& f : args.files) layers.push_back(load_config_file(f));
    ConfigMap merged = merge_layers(layers);
    for (const auto& s : args.sets) apply_override(merged, s);
    for (const auto& s : forced) apply_override(merged, s);
    return ExperimentConfig::from_map(merged);
}

void print_run(const RunResult& r) {
    const auto metric = headline_metric(r.report);
    std::printf("%s task=%d dataset=%s model=%s n=%zu metric=%s digest=%s%s\n", r.dir.string().c_str(), r.report.task,
                r.report.dataset.c_str(), r.report.model.c_str(), r.report.n,
                metric ? std::to_string(*metric).c_str() : "null", r.report.config_digest.substr(0, 12).c_str(),
                r.skipped ? " (cached)" : r.resumed ? " (resumed)" : "");
}

std::vector<std::string> split_names(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = std::min(s.find(',', start), s.size());
        if (comma > start) out.push_back(s.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

int exit_code(const Error& e) {
    switch (e.category()) {
        case ErrorCategory::config: return 2;
        case ErrorCategory::data: return 3;
        case ErrorCategory::scorer: return 4;
        case ErrorCategory::model: return 1;
    }
    return 1;
}

int report_command(const std::vector<std::string>& paths, bool as_json) {
    nlohmann::json all = nlohmann::json::array();
    int status = 0;
    for (const auto& p : paths) {
        fs::path file = fs::is_directory(p) ? fs::path(p) / "report.json" : fs::path(p);
        if (!fs::exists(file)) throw MissingFile(file.string());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(file));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(file.string(), 0, e.what());
        }
        const auto problems = validate_report(j);
        if (!problems.empty()) {
            for (const auto& msg : problems) std::cerr << file.string() << ": " << msg << "\n";
            status = 3;
            continue;
        }
        const MetricsReport r = MetricsReport::from_json(j);
        if (as_json) {
            all.push_back(j);
            continue;
        }
        const auto metric = headline_metric(r);
        std::printf("%-40s task=%d dataset=%-16s model=%-12s n=%-6zu metric=%s\n", file.parent_path().string().c_str(),
                    r.task, r.dataset.c_str(), r.model.c_str(), r.n,
                    metric ? std::to_string(*metric).c_str() : "null");
    }
    if (as_json) std::cout << all.dump(2) << "\n";
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prompt tuning for toxicity classification, span detection and detoxification"};
    app.require_subcommand(1);

    ConfigArgs tune_args, eval_args, perturb_args, sweep_args, transfer_args, ablate_args;
    auto* tune_cmd = app.add_subcommand("tune", "train a prompt, evaluate it and write the run directory");
    add_config_args(tune_cmd, tune_args);
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or the manual prompt");
    add_config_args(eval_cmd, eval_args);
    auto* perturb_cmd = app.add_subcommand("perturb-eval", "evaluate on clean and perturbed test texts");
    add_config_args(perturb_cmd, perturb_args);
    auto* sweep_cmd = app.add_subcommand("score-sweep", "pick the external scorer attribute with the best F1");
    add_config_args(sweep_cmd, sweep_args);

    auto* transfer_cmd = app.add_subcommand("transfer", "train on each dataset, evaluate on the others");
    add_config_args(transfer_cmd, transfer_args);
    std::string train_names, eval_names;
    transfer_cmd->add_option("--train", train_names, "comma-separated training datasets")->required();
    transfer_cmd->add_option("--eval", eval_names, "comma-separated evaluation datasets (default: --train)");

    auto* ablate_cmd = app.add_subcommand("ablate", "one run per grid value");
    add_config_args(ablate_cmd, ablate_args);
    std::string axis_name = "steps";
    std::vector<std::size_t> grid;
    ablate_cmd->add_option("--axis", axis_name, "steps, samples or epochs")->capture_default_str();
    ablate_cmd->add_option("--grid", grid, "ascending grid values")->required()->delimiter(',');

    auto* report_cmd = app.add_subcommand("report", "validate and summarize report.json files");
    std::vector<std::string> report_paths;
    bool report_json = false;
    report_cmd->add_option("paths", report_paths, "run directories or report files")->required();
    report_cmd->add_flag("--json", report_json, "print the reports as one JSON array");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    auto maybe_print = [](const ConfigArgs& args, const ExperimentConfig& c) {
        if (!args.print_config) return false;
        std::cout << c.canonical() << "# digest " << c.digest() << "\n";
        return true;
    };

    try {
        if (*tune_cmd) {
            const auto c = resolve(tune_args);
            if (maybe_print(tune_args, c)) return 0;
            print_run(run(c));
        } else if (*eval_cmd) {
            const auto c = resolve(eval_args);
            if (maybe_print(eval_args, c)) return 0;
            print_run(evaluate(c));
        } else if (*perturb_cmd) {
            const auto c = resolve(perturb_args, {"eval.perturb=true"});
            if (maybe_print(perturb_args, c)) return 0;
            const RunResult r = run(c);
            print_run(r);
            if (r.report.metrics.contains("perturbed"))
                std::printf("perturbed f1=%.6f rows=%zu\n", r.report.metrics["perturbed"]["f1"].get<double>(),
                            r.report.metrics["perturbed"]["perturbed_rows"].get<std::size_t>());
        } else if (*sweep_cmd) {
            const auto c = resolve(sweep_args);
            if (maybe_print(sweep_args, c)) return 0;
            std::cout << score_sweep(c).dump(2) << "\n";
        } else if (*transfer_cmd) {
            const auto c = resolve(transfer_args);
            if (maybe_print(transfer_args, c)) return 0;
            const auto train = split_names(train_names);
            const auto eval = eval_names.empty() ? train : split_names(eval_names);
            std::cout << transfer_matrix(train, eval, c).to_csv();
        } else if (*ablate_cmd) {
            const auto c = resolve(ablate_args);
            if (maybe_print(ablate_args, c)) return 0;
            const AblationCurve curve = ablation_curve(c, ablation_axis_from_string(axis_name), grid);
            std::cout << curve.to_csv();
            int failed = 0;
            for (const auto& p : curve.points)
                if (!p.error.empty()) {
                    std::cerr << to_string(curve.axis) << "=" << p.value << ": " << p.error << "\n";
                    ++failed;
                }
            return failed ? 1 : 0;
        } else if (*report_cmd) {
            return report_command(report_paths, report_json);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
