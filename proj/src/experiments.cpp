// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "toxprompt/experiments.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <memory>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include "toxprompt/errors.hpp"
#include "toxprompt/lm_backend.hpp"
#include "toxprompt/metrics.hpp"
#include "toxprompt/scorer_client.hpp"
#include "toxprompt/task_pipelines.hpp"
#include "toxprompt/util.hpp"

namespace toxprompt {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Key=value files

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string unescape(std::string_view v, std::string_view source, std::size_t line) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] != '\\') {
            out.push_back(v[i]);
            continue;
        }
        if (i + 1 == v.size()) throw SchemaError(std::string(source), line, "dangling backslash");
        const char c = v[++i];
        if (c == 'n') out.push_back('\n');
        else if (c == 't') out.push_back('\t');
        else if (c == '\\') out.push_back('\\');
        else if (c == '#') out.push_back('#');
        else throw SchemaError(std::string(source), line, std::string("unknown escape \\") + c);
    }
    return out;
}

std::string escape(std::string_view v) {
    std::string out;
    for (char c : v) {
        if (c == '\n') out += "\\n";
        else if (c == '\t') out += "\\t";
        else if (c == '\\') out += "\\\\";
        else if (c == '#') out += "\\#";
        else out.push_back(c);
    }
    return out;
}

// Config syntax problems are configuration errors, not data errors.
ConfigMap parse_lines(std::string_view text, std::string_view source) {
    ConfigMap out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = std::min(text.find('\n', pos), text.size());
        std::string_view raw = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        // strip an unescaped comment
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] == '\\') {
                ++i;
            } else if (raw[i] == '#') {
                raw = raw.substr(0, i);
                break;
            }
        }
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = std::string(source) + ":" + std::to_string(line_no);
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        if (key.empty()) throw ConfigError(where + ": empty key");
        try {
            out[key] = unescape(trim(std::string_view(line).substr(eq + 1)), source, line_no);
        } catch (const SchemaError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || v.empty())
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "off" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        const std::size_t comma = std::min(v.find(',', start), v.size());
        std::string item = trim(std::string_view(v).substr(start, comma - start));
        if (!item.empty()) out.push_back(std::move(item));
        start = comma + 1;
    }
    return out;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

ConfigMap parse_config_text(std::string_view text, std::string_view source) { return parse_lines(text, source); }

ConfigMap load_config_file(const fs::path& path) {
    if (!fs::exists(path)) throw MissingFile(path.string());
    return parse_lines(read_file(path), path.string());
}

void apply_override(ConfigMap& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("--set expects key=value, got '" + std::string(assignment) + "'");
    const std::string key = trim(assignment.substr(0, eq));
    if (key.empty()) throw ConfigError("--set with an empty key");
    try {
        config[key] = unescape(trim(assignment.substr(eq + 1)), "--set", 0);
    } catch (const SchemaError& e) {
        throw ConfigError(std::string("--set ") + key + ": " + e.what());
    }
}

ConfigMap merge_layers(std::span<const ConfigMap> layers) {
    ConfigMap out;
    for (const auto& layer : layers)
        for (const auto& [k, v] : layer) out[k] = v;
    return out;
}

// ---------------------------------------------------------------------------
// ExperimentConfig

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& map) {
    ExperimentConfig c;
    if (auto it = map.find("task"); it != map.end()) {
        const std::size_t t = parse_size("task", it->second);
        if (t < 1 || t > 3) throw ConfigError("task must be 1, 2 or 3, got " + it->second);
        c.task = static_cast<int>(t);
    }
    c.tune = TuneConfig::task_defaults(c.task);

    json tune_json = c.tune.to_json();
    bool tune_seed_set = false;
    bool steps_set = false, epochs_set = false;
    for (const auto& [key, v] : map) {
        if (key == "task") continue;
        if (key == "dataset") c.dataset = v;
        else if (key == "data.registry") c.registry = v;
        else if (key == "data.root") c.data_root = v;
        else if (key == "data.synthetic_size") c.synthetic_size = parse_size(key, v);
        else if (key == "eval.target") c.eval_target = v;
        else if (key == "eval.split") c.eval_split = v;
        else if (key == "eval.threshold") c.threshold_mode = v;
        else if (key == "eval.perturb") c.perturb = parse_bool(key, v);
        else if (key == "eval.perturb_modes") {
            c.perturb_modes.clear();
            try {
                for (const auto& m : split_list(v)) c.perturb_modes.push_back(perturb_mode_from_string(m));
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception& e) {
                throw ConfigError(key + ": " + e.what());
            }
        } else if (key == "eval.perturb_words") c.perturb_words = split_list(v);
        else if (key == "prompt.kind") c.prompt = v;
        else if (key == "prompt.template") c.manual_template = v;
        else if (key == "verbalizer.toxic") c.verbalizer_toxic = v;
        else if (key == "verbalizer.nontoxic") c.verbalizer_nontoxic = v;
        else if (key == "train.samples") c.train_samples = parse_size(key, v);
        else if (key.rfind("backend.", 0) == 0) c.backend[key] = v;
        else if (key == "vocab.words") c.vocab_words = parse_size(key, v);
        else if (key == "gen.max_len") c.max_gen_len = parse_size(key, v);
        else if (key == "scorer.kind") c.scorer = v;
        else if (key == "scorer.qps") c.scorer_qps = parse_double(key, v);
        else if (key == "scorer.cache") c.scorer_cache = v;
        else if (key == "checkpoint") c.checkpoint = v;
        else if (key == "output.dir") c.output_dir = v;
        else if (key == "seed") c.seed = parse_size(key, v);
        else if (key == "workers") c.workers = parse_size(key, v);
        else if (key.rfind("tune.", 0) == 0) {
            const std::string field = key.substr(5);
            if (!tune_json.contains(field)) throw ConfigError("unknown key '" + key + "'");
            json& slot = tune_json[field];
            if (field == "steps" || field == "epochs") {
                slot = v == "none" ? json(nullptr) : json(parse_size(key, v));
                (field == "steps" ? steps_set : epochs_set) = true;
            } else if (slot.is_boolean()) {
                slot = parse_bool(key, v);
            } else if (slot.is_number_float()) {
                slot = parse_double(key, v);
            } else if (slot.is_number()) {
                slot = parse_size(key, v);
            } else {
                slot = v;
            }
            if (field == "seed") tune_seed_set = true;
        } else {
            throw ConfigError("unknown key '" + key + "'");
        }
    }
    // Setting one run-length key clears the other unless both were given.
    if (steps_set && !epochs_set && !tune_json["steps"].is_null()) tune_json["epochs"] = nullptr;
    if (epochs_set && !steps_set && !tune_json["epochs"].is_null()) tune_json["steps"] = nullptr;
    if (!tune_seed_set) tune_json["seed"] = c.seed;
    c.tune = TuneConfig::from_json(tune_json);
    c.validate();
    return c;
}

ConfigMap ExperimentConfig::to_map() const {
    ConfigMap m = backend;
    m["task"] = std::to_string(task);
    m["dataset"] = dataset;
    m["data.registry"] = registry.string();
    m["data.root"] = data_root.string();
    m["data.synthetic_size"] = std::to_string(synthetic_size);
    m["eval.target"] = eval_target;
    m["eval.split"] = eval_split;
    m["eval.threshold"] = threshold_mode;
    m["eval.perturb"] = perturb ? "true" : "false";
    std::vector<std::string> modes;
    for (auto mode : perturb_modes) modes.push_back(to_string(mode));
    m["eval.perturb_modes"] = join(modes);
    m["eval.perturb_words"] = join(perturb_words);
    m["prompt.kind"] = prompt;
    m["prompt.template"] = manual_template;
    m["verbalizer.toxic"] = verbalizer_toxic;
    m["verbalizer.nontoxic"] = verbalizer_nontoxic;
    m["train.samples"] = std::to_string(train_samples);
    m["vocab.words"] = std::to_string(vocab_words);
    m["gen.max_len"] = std::to_string(max_gen_len);
    m["scorer.kind"] = scorer;
    m["scorer.qps"] = format_double(scorer_qps);
    m["scorer.cache"] = scorer_cache.string();
    m["checkpoint"] = checkpoint.string();
    m["output.dir"] = output_dir.string();
    m["seed"] = std::to_string(seed);
    m["workers"] = std::to_string(workers);
    const json tune_json = tune.to_json();
    for (const auto& [k, v] : tune_json.items()) {
        if (v.is_null()) m["tune." + k] = "none";
        else if (v.is_string()) m["tune." + k] = v.get<std::string>();
        else if (v.is_boolean()) m["tune." + k] = v.get<bool>() ? "true" : "false";
        else if (v.is_number_float()) m["tune." + k] = format_double(v.get<double>());
        else m["tune." + k] = v.dump();
    }
    return m;
}

std::string ExperimentConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : to_map()) {
        // output.dir and workers do not change results
        if (k == "output.dir" || k == "workers") continue;
        out += k + "=" + escape(v) + "\n";
    }
    return out;
}

std::string ExperimentConfig::digest() const { return sha256_hex(canonical()); }

void ExperimentConfig::validate() const {
    if (task < 1 || task > 3) throw ConfigError("task must be 1, 2 or 3");
    if (dataset.empty()) throw ConfigError("dataset is required");
    if (eval_split != "test" && eval_split != "train")
        throw ConfigError("eval.split must be test or train, got '" + eval_split + "'");
    if (threshold_mode != "fixed" && threshold_mode != "dynamic")
        throw ConfigError("eval.threshold must be fixed or dynamic, got '" + threshold_mode + "'");
    if (prompt != "tuned" && prompt != "manual")
        throw ConfigError("prompt.kind must be tuned or manual, got '" + prompt + "'");
    if (prompt == "manual" && task != 1) throw ConfigError("the manual prompt baseline is defined for task 1 only");
    if (prompt == "manual" && !checkpoint.empty()) throw ConfigError("prompt.kind=manual does not use a checkpoint");
    if (prompt == "manual") (void)ManualTemplate{manual_template};
    if (threshold_mode == "dynamic" && task != 1) throw ConfigError("eval.threshold=dynamic applies to task 1 only");
    if (perturb && task != 1) throw ConfigError("eval.perturb applies to task 1 only");
    if (perturb && perturb_modes.empty()) throw ConfigError("eval.perturb_modes is empty");
    if (scorer != "none" && scorer != "lexicon" && scorer != "perspective")
        throw ConfigError("scorer.kind must be none, lexicon or perspective, got '" + scorer + "'");
    if (!(scorer_qps > 0.0)) throw ConfigError("scorer.qps must be > 0");
    if (synthetic_size < 4) throw ConfigError("data.synthetic_size must be >= 4");
    if (vocab_words == 0) throw ConfigError("vocab.words must be >= 1");
    if (verbalizer_toxic.empty() || verbalizer_nontoxic.empty() || verbalizer_toxic == verbalizer_nontoxic)
        throw ConfigError("verbalizer words must be non-empty and distinct");
    if (output_dir.empty()) throw ConfigError("output.dir is required");
    tune.validate();
}

// ---------------------------------------------------------------------------
// Reports

json MetricsReport::to_json() const {
    json j;
    j["task"] = task;
    j["dataset"] = dataset;
    j["model"] = model;
    j["config_digest"] = config_digest;
    j["metrics"] = metrics;
    j["n"] = n;
    j["timestamp"] = timestamp;
    j["backend_fingerprint"] = backend_fingerprint;
    j["config"] = config;
    return j;
}

std::vector<std::string> validate_report(const json& j) {
    std::vector<std::string> problems;
    if (!j.is_object()) return {"report is not a JSON object"};
    auto need = [&](const char* key, auto pred, const char* what) {
        if (!j.contains(key)) problems.push_back(std::string("missing ") + key);
        else if (!pred(j.at(key))) problems.push_back(std::string(key) + " must be " + what);
    };
    need("task", [](const json& v) { return v.is_number_integer() && v.get<int>() >= 1 && v.get<int>() <= 3; },
         "1, 2 or 3");
    need("dataset", [](const json& v) { return v.is_string() && !v.get<std::string>().empty(); }, "a non-empty string");
    need("model", [](const json& v) { return v.is_string() && !v.get<std::string>().empty(); }, "a non-empty string");
    need("config_digest", [](const json& v) {
        if (!v.is_string()) return false;
        const auto s = v.get<std::string>();
        return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
                   return std::isdigit(static_cast<unsigned char>(c)) || (c >= 'a' && c <= 'f');
               });
    }, "a 64-character hex digest");
    need("metrics", [](const json& v) { return v.is_object(); }, "an object");
    need("n", [](const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0); },
         "a non-negative integer");
    need("timestamp", [](const json& v) { return v.is_string() && !v.get<std::string>().empty(); }, "a timestamp");
    need("backend_fingerprint", [](const json& v) { return v.is_string() && !v.get<std::string>().empty(); },
         "a non-empty string");
    if (j.contains("config") && !j.at("config").is_object()) problems.push_back("config must be an object");
    return problems;
}

MetricsReport MetricsReport::from_json(const json& j) {
    const auto problems = validate_report(j);
    if (!problems.empty()) throw SchemaError("report", 0, problems.front());
    MetricsReport r;
    r.task = j.at("task").get<int>();
    r.dataset = j.at("dataset").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.config_digest = j.at("config_digest").get<std::string>();
    r.metrics = j.at("metrics");
    r.n = j.at("n").get<std::size_t>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.backend_fingerprint = j.at("backend_fingerprint").get<std::string>();
    if (j.contains("config"))
        for (const auto& [k, v] : j.at("config").items()) r.config[k] = v.is_string() ? v.get<std::string>() : v.dump();
    return r;
}

std::optional<double> headline_metric(const MetricsReport& report) {
    const char* key = report.task == 1 ? "f1" : report.task == 2 ? "span_f1" : "bleu";
    if (!report.metrics.contains(key) || !report.metrics.at(key).is_number()) return std::nullopt;
    return report.metrics.at(key).get<double>();
}

// ---------------------------------------------------------------------------
// Runs

namespace {

struct Splits {
    std::string name;
    Dataset train;
    Dataset eval;
};

Dataset load_dataset(const ExperimentConfig& c, const std::string& name, bool& official) {
    official = false;
    if (name == "synthetic" || name.rfind("synthetic-", 0) == 0) {
        std::uint64_t k = 0;
        if (name.size() > 9) k = parse_size("dataset", name.substr(10));
        const std::uint64_t seed = c.seed + 7919 * k;
        Dataset ds = c.task == 1   ? synthetic_classification(c.synthetic_size, seed)
                     : c.task == 2 ? synthetic_spans(c.synthetic_size, seed)
                                   : synthetic_detox(c.synthetic_size, seed);
        ds.name = name;
        return ds;
    }
    const std::vector<DatasetSpec> registry =
        c.registry.empty() ? builtin_registry(c.data_root) : load_registry(c.registry);
    const DatasetSpec& spec = find_spec(registry, name);
    if (spec.task != c.task)
        throw ConfigError("dataset '" + name + "' is a task-" + std::to_string(spec.task) + " dataset, config has task " +
                          std::to_string(c.task));
    official = spec.has_official_split;
    return load(spec);
}

Splits load_splits(const ExperimentConfig& c) {
    bool official = false;
    Dataset ds = load_dataset(c, c.dataset, official);
    std::optional<Dataset> target;
    bool target_official = false;
    // Load every input before any training so a missing file fails fast.
    if (!c.eval_target.empty()) target = load_dataset(c, c.eval_target, target_official);

    SplitResult split = balance_and_split(ds, c.seed, official);
    if (c.train_samples) split.train = subsample_train(split.train, c.train_samples, c.seed);
    Splits s;
    s.name = c.dataset;
    s.train = std::move(split.train);
    if (target) {
        SplitResult t = balance_and_split(*target, c.seed, target_official);
        s.eval = c.eval_split == "train" ? std::move(t.train) : std::move(t.test);
    } else {
        s.eval = c.eval_split == "train" ? s.train : std::move(split.test);
    }
    if (s.train.size() == 0) throw EmptyDataset("training split of '" + c.dataset + "' is empty");
    if (s.eval.size() == 0) throw EmptyDataset("evaluation split is empty");
    return s;
}

void add_words(std::unordered_map<std::string, std::size_t>& counts, std::string_view text) {
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) ++counts[std::string(text.substr(i, j - i))];
        i = j;
    }
}

// Most frequent training words (ties alphabetical) after the verbalizer words.
std::vector<std::string> build_vocabulary(const ExperimentConfig& c, const Dataset& train) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& e : train.clf) add_words(counts, e.text);
    for (const auto& e : train.spans) {
        add_words(counts, e.text);
        add_words(counts, e.nontoxic);
    }
    for (const auto& e : train.pairs) {
        add_words(counts, e.toxic);
        add_words(counts, e.detox);
    }
    if (c.prompt == "manual") add_words(counts, c.manual_template);
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> vocab = {c.verbalizer_toxic, c.verbalizer_nontoxic};
    for (const auto& [w, n] : ranked) {
        if (vocab.size() >= c.vocab_words + 2) break;
        if (w != c.verbalizer_toxic && w != c.verbalizer_nontoxic) vocab.push_back(w);
    }
    return vocab;
}

std::vector<std::string> texts_of(const Dataset& ds) {
    std::vector<std::string> out;
    for (const auto& e : ds.clf) out.push_back(e.text);
    for (const auto& e : ds.spans) out.push_back(e.text);
    for (const auto& e : ds.pairs) out.push_back(e.toxic);
    return out;
}

std::vector<int> labels_of(const Dataset& ds) {
    std::vector<int> out;
    for (const auto& e : ds.clf) out.push_back(e.label);
    return out;
}

std::string word_core(std::string_view token) {
    std::size_t b = 0, e = token.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(token[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(token[e - 1]))) --e;
    std::string out(token.substr(b, e - b));
    for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

std::vector<std::string> targets_in(std::string_view text, const std::vector<std::string>& words) {
    std::unordered_map<std::string, std::size_t> seen;
    add_words(seen, text);
    std::vector<std::string> out;
    for (const auto& w : words) {
        const std::string lw = word_core(w);
        for (const auto& [tok, n] : seen) {
            if (word_core(tok) == lw) {
                out.push_back(w);
                break;
            }
        }
    }
    return out;
}

class ClassifierView {
public:
    ClassifierView(const ExperimentConfig& c, const LanguageModel& lm, const PromptParams& prompt)
        : lm_(lm), prompt_(prompt), verbalizer_{c.verbalizer_toxic, c.verbalizer_nontoxic} {
        if (c.prompt == "manual") manual_.emplace(c.manual_template);
    }
    std::vector<double> scores(std::span<const std::string> texts, std::size_t workers) const {
        std::vector<double> out(texts.size());
        parallel_for(texts.size(), workers, [&](std::size_t i) {
            out[i] = manual_ ? manual_classify(*manual_, lm_, verbalizer_, texts[i]).score
                             : classify(prompt_, lm_, verbalizer_, texts[i]).score;
        });
        return out;
    }

private:
    const LanguageModel& lm_;
    const PromptParams& prompt_;
    Verbalizer verbalizer_;
    std::optional<ManualTemplate> manual_;
};

std::shared_ptr<ToxicityScorer> make_scorer(const ExperimentConfig& c) {
    if (c.scorer == "none") return nullptr;
    if (c.scorer == "lexicon") return LexiconScorer::default_lexicon();
    PerspectiveConfig pc;
    pc.qps = c.scorer_qps;
    auto cache = c.scorer_cache.empty() ? std::make_shared<ScoreCache>() : std::make_shared<ScoreCache>(c.scorer_cache);
    return std::make_shared<PerspectiveClient>(pc, cache);
}

std::optional<double> last_loss(const fs::path& history) {
    if (!fs::exists(history)) return std::nullopt;
    std::istringstream in(read_file(history));
    std::string line, last;
    while (std::getline(in, line))
        if (!line.empty()) last = line;
    if (last.empty()) return std::nullopt;
    try {
        return json::parse(last).at("loss").get<double>();
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

struct Evaluation {
    json metrics;
    std::vector<PredictionRow> rows;
};

Evaluation evaluate_split(const ExperimentConfig& c, const LanguageModel& lm, const PromptParams& prompt,
                          const Splits& s) {
    Evaluation ev;
    const std::vector<std::string> texts = texts_of(s.eval);
    const DecodeConfig decode{.max_len = c.max_gen_len, .beam_width = 1, .seed = c.seed};
    if (c.task == 1) {
        const ClassifierView view(c, lm, prompt);
        const std::vector<int> gold = labels_of(s.eval);
        const std::vector<double> scores = view.scores(texts, c.workers);
        double threshold = 0.5;
        if (c.threshold_mode == "dynamic") {
            const std::vector<std::string> train_texts = texts_of(s.train);
            threshold = best_threshold(view.scores(train_texts, c.workers), labels_of(s.train)).threshold;
        }
        const std::vector<int> preds = apply_threshold(scores, threshold);
        ev.metrics = clf_metrics(preds, gold).to_json();
        ev.metrics["threshold"] = threshold;
        ev.metrics["threshold_mode"] = c.threshold_mode;
        for (std::size_t i = 0; i < texts.size(); ++i)
            ev.rows.push_back({texts[i], preds[i], std::nullopt, std::nullopt, scores[i]});
        if (c.perturb) {
            const std::vector<std::string>& words = c.perturb_words.empty() ? synthetic_insults() : c.perturb_words;
            std::vector<std::string> perturbed = texts;
            std::size_t changed = 0;
            for (std::size_t i = 0; i < texts.size(); ++i) {
                const auto targets = targets_in(texts[i], words);
                if (targets.empty()) continue;
                perturbed[i] = perturb(texts[i], targets, c.seed + i, c.perturb_modes);
                ++changed;
            }
            const std::vector<int> ppreds = apply_threshold(view.scores(perturbed, c.workers), threshold);
            json p = clf_metrics(ppreds, gold).to_json();
            p["perturbed_rows"] = changed;
            ev.metrics["perturbed"] = p;
        }
    } else if (c.task == 2) {
        ev.rows = predict_spans(prompt, lm, texts, decode, c.workers);
        std::vector<SpanPair> pairs;
        for (std::size_t i = 0; i < texts.size(); ++i) pairs.push_back({s.eval.spans[i].offsets, *ev.rows[i].offsets});
        ev.metrics["span_f1"] = corpus_span_f1(pairs);
    } else {
        ev.rows = predict_detox(prompt, lm, texts, decode, c.workers);
        std::vector<std::string> generated, references;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            generated.push_back(*ev.rows[i].detox);
            references.push_back(s.eval.pairs[i].detox);
        }
        const auto scorer = make_scorer(c);
        DetoxProviders providers;
        providers.scorer = scorer.get();
        providers.fluency = &lm;
        providers.workers = c.workers;
        ev.metrics = detox_report({texts, generated, references}, providers).to_json();
    }
    ev.metrics["eval_dataset"] = c.eval_target.empty() ? c.dataset : c.eval_target;
    ev.metrics["eval_split"] = c.eval_split;
    return ev;
}

void claim_output_dir(const ExperimentConfig& c) {
    fs::create_directories(c.output_dir);
    const fs::path cfg_path = c.output_dir / "config.txt";
    const std::string canonical = c.canonical();
    if (fs::exists(cfg_path)) {
        const std::string existing = read_file(cfg_path);
        if (existing != canonical)
            throw ConfigError("output dir " + c.output_dir.string() + " holds a run with config digest " +
                              sha256_hex(existing) + ", this config is " + c.digest() +
                              "; choose another output.dir");
        return;
    }
    write_file_atomic(cfg_path, canonical);
}

std::optional<MetricsReport> existing_report(const ExperimentConfig& c) {
    const fs::path path = c.output_dir / "report.json";
    if (!fs::exists(path)) return std::nullopt;
    try {
        MetricsReport r = MetricsReport::from_json(json::parse(read_file(path)));
        if (r.config_digest == c.digest()) return r;
    } catch (const std::exception&) {
    }
    return std::nullopt;
}

RunResult finish(const ExperimentConfig& c, const LanguageModel& lm, const PromptParams& prompt, const Splits& s,
                 RunResult result) {
    Evaluation ev = evaluate_split(c, lm, prompt, s);
    result.final_loss = last_loss(c.output_dir / "history.jsonl");
    if (result.final_loss) ev.metrics["train_loss"] = *result.final_loss;
    MetricsReport& r = result.report;
    r.task = c.task;
    r.dataset = c.dataset;
    r.model = lm.descriptor().name;
    r.config_digest = c.digest();
    r.metrics = std::move(ev.metrics);
    r.n = ev.rows.size();
    r.timestamp = utc_timestamp();
    r.backend_fingerprint = lm.descriptor().frozen_fingerprint;
    r.config = c.to_map();
    write_file_atomic(c.output_dir / "predictions.jsonl", predictions_jsonl(ev.rows));
    write_file_atomic(c.output_dir / "report.json", r.to_json().dump(2) + "\n");
    result.dir = c.output_dir;
    return result;
}

}  // namespace

RunResult evaluate(const ExperimentConfig& c) {
    c.validate();
    if (c.prompt != "manual" && c.checkpoint.empty())
        throw ConfigError("evaluation needs checkpoint=<path> or prompt.kind=manual");
    if (!c.checkpoint.empty() && !fs::exists(c.checkpoint)) throw MissingFile(c.checkpoint.string());
    Splits s = load_splits(c);
    claim_output_dir(c);
    if (auto r = existing_report(c)) return {c.output_dir, *r, false, true, last_loss(c.output_dir / "history.jsonl")};
    const auto lm = make_backend(c.backend, build_vocabulary(c, s.train));
    PromptParams prompt = PromptParams::none();
    if (!c.checkpoint.empty()) prompt = restore(c.checkpoint, &lm->descriptor(), true).prompt;
    return finish(c, *lm, prompt, s, {});
}

RunResult run(const ExperimentConfig& c) {
    if (!c.checkpoint.empty() || c.prompt == "manual") return evaluate(c);
    c.validate();
    Splits s = load_splits(c);
    claim_output_dir(c);
    if (auto r = existing_report(c)) return {c.output_dir, *r, false, true, last_loss(c.output_dir / "history.jsonl")};

    const auto lm = make_backend(c.backend, build_vocabulary(c, s.train));
    const Verbalizer verbalizer{c.verbalizer_toxic, c.verbalizer_nontoxic};
    const fs::path ckpt_path = c.output_dir / "checkpoint.bin";
    RunResult result;
    PromptParams prompt;
    if (fs::exists(ckpt_path) && fs::exists(c.output_dir / "history.jsonl")) {
        prompt = restore(ckpt_path, &lm->descriptor(), true).prompt;
        result.resumed = true;
    } else {
        const std::vector<EncodedPair> pairs = encode_training_pairs(s.train, *lm, verbalizer);
        const std::vector<std::string> words = verbalizer.words();
        PromptParams init = init_prompt(c.tune, *lm, c.task == 1 ? std::span<const std::string>(words)
                                                                 : std::span<const std::string>());
        TuneHooks hooks;
        hooks.workers = c.workers;
        const std::vector<std::string> eval_texts = texts_of(s.eval);
        const std::vector<int> gold = labels_of(s.eval);
        if (c.task == 1) {
            hooks.eval = [&](const PromptParams& p) {
                const ClassifierView view(c, *lm, p);
                return clf_metrics(apply_threshold(view.scores(eval_texts, 1), 0.5), gold).f1;
            };
        }
        TuneResult tuned = tune(std::move(init), pairs, *lm, c.tune, hooks);
        prompt = tuned.checkpoint.prompt;
        persist(tuned.checkpoint, ckpt_path);
        write_file_atomic(c.output_dir / "history.jsonl", tuned.history.to_jsonl());
    }
    return finish(c, *lm, prompt, s, std::move(result));
}

json score_sweep(const ExperimentConfig& c) {
    c.validate();
    if (c.task != 1) throw ConfigError("score-sweep needs a task-1 dataset");
    if (c.scorer == "none") throw ConfigError("score-sweep needs scorer.kind lexicon or perspective");
    const Splits s = load_splits(c);
    const auto scorer = make_scorer(c);
    const std::vector<std::string> texts = texts_of(s.eval);
    const AttributeSweep sweep = attribute_sweep(*scorer, texts, labels_of(s.eval));
    json j;
    j["dataset"] = c.eval_target.empty() ? c.dataset : c.eval_target;
    j["scorer"] = scorer->name();
    j["n"] = texts.size();
    j["best"] = to_string(sweep.best);
    j["best_f1"] = sweep.best_f1;
    j["f1"] = json::object();
    for (const auto& [attr, f1] : sweep.f1) j["f1"][to_string(attr)] = f1;
    fs::create_directories(c.output_dir);
    write_file_atomic(c.output_dir / "sweep.json", j.dump(2) + "\n");
    return j;
}

// ---------------------------------------------------------------------------
// Transfer

const TransferCell* TransferTable::find(std::string_view train_name, std::string_view eval_name) const {
    for (const auto& cell : cells)
        if (cell.train == train_name && cell.eval == eval_name) return &cell;
    return nullptr;
}

std::string TransferTable::to_csv() const {
    std::string out = "train";
    for (const auto& e : eval) out += "," + e;
    out += "\n";
    for (const auto& t : train) {
        out += t;
        for (const auto& e : eval) {
            const TransferCell* cell = find(t, e);
            if (!cell) out += ",-";
            else if (cell->f1) {
                char buf[32];
                std::snprintf(buf, sizeof buf, ",%.4f", *cell->f1);
                out += buf;
            } else {
                out += ",failed";
            }
        }
        out += "\n";
    }
    return out;
}

json TransferTable::to_json() const {
    json j;
    j["train"] = train;
    j["eval"] = eval;
    j["cells"] = json::array();
    for (const auto& c : cells) {
        json cell{{"train", c.train}, {"eval", c.eval}};
        if (c.f1) {
            cell["f1"] = *c.f1;
            cell["status"] = "ok";
        } else {
            cell["f1"] = nullptr;
            cell["status"] = "failed";
            cell["error"] = c.error;
        }
        j["cells"].push_back(cell);
    }
    return j;
}

namespace {

ExperimentConfig with_cell(const ExperimentConfig& base, const fs::path& dir) {
    ExperimentConfig c = base;
    c.output_dir = dir;
    c.workers = 1;
    return c;
}

std::string cell_dir_name(std::string_view name) {
    std::string out(name);
    for (char& ch : out)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
    return out;
}

}  // namespace

TransferTable transfer_matrix(std::span<const std::string> train_datasets, std::span<const std::string> eval_datasets,
                              const ExperimentConfig& base) {
    if (train_datasets.empty() || eval_datasets.empty()) throw ConfigError("transfer needs training and evaluation datasets");
    std::vector<std::string> all(train_datasets.begin(), train_datasets.end());
    all.insert(all.end(), eval_datasets.begin(), eval_datasets.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    if (all.size() < 2) throw ConfigError("transfer needs at least two distinct datasets");
    if (base.task != 1) throw ConfigError("transfer matrices are defined for task 1");

    TransferTable table;
    table.train.assign(train_datasets.begin(), train_datasets.end());
    table.eval.assign(eval_datasets.begin(), eval_datasets.end());
    const fs::path root = base.output_dir / "transfer";

    // Phase 1: one tuning run per training dataset.
    std::vector<std::optional<fs::path>> checkpoints(train_datasets.size());
    std::vector<std::string> train_errors(train_datasets.size());
    parallel_for(train_datasets.size(), base.workers, [&](std::size_t i) {
        ExperimentConfig c = with_cell(base, root / ("train-" + cell_dir_name(train_datasets[i])));
        c.dataset = train_datasets[i];
        c.eval_target.clear();
        c.checkpoint.clear();
        try {
            run(c);
            checkpoints[i] = c.output_dir / "checkpoint.bin";
        } catch (const std::exception& e) {
            train_errors[i] = e.what();
        }
    });

    // Phase 2: evaluate each checkpoint on the other datasets.
    for (std::size_t i = 0; i < train_datasets.size(); ++i)
        for (const auto& e : eval_datasets)
            if (e != train_datasets[i]) table.cells.push_back({train_datasets[i], e, std::nullopt, train_errors[i]});
    parallel_for(table.cells.size(), base.workers, [&](std::size_t k) {
        TransferCell& cell = table.cells[k];
        const std::size_t i = static_cast<std::size_t>(
            std::find(train_datasets.begin(), train_datasets.end(), cell.train) - train_datasets.begin());
        if (!checkpoints[i]) return;
        ExperimentConfig c = with_cell(base, root / (cell_dir_name(cell.train) + "__" + cell_dir_name(cell.eval)));
        c.dataset = cell.train;
        c.eval_target = cell.eval;
        c.checkpoint = *checkpoints[i];
        try {
            cell.f1 = headline_metric(evaluate(c).report);
            if (!cell.f1) cell.error = "report has no f1";
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    });

    fs::create_directories(root);
    write_file_atomic(root / "transfer.csv", table.to_csv());
    write_file_atomic(root / "transfer.json", table.to_json().dump(2) + "\n");
    return table;
}

// ---------------------------------------------------------------------------
// Ablation

std::string to_string(AblationAxis axis) {
    switch (axis) {
        case AblationAxis::steps: return "steps";
        case AblationAxis::samples: return "samples";
        case AblationAxis::epochs: return "epochs";
    }
    return "?";
}

AblationAxis ablation_axis_from_string(std::string_view name) {
    if (name == "steps") return AblationAxis::steps;
    if (name == "samples") return AblationAxis::samples;
    if (name == "epochs") return AblationAxis::epochs;
    throw ConfigError("unknown ablation axis '" + std::string(name) + "' (steps, samples, epochs)");
}

std::string AblationCurve::to_csv() const {
    std::string out = to_string(axis) + "," + metric_name + ",final_loss,status\n";
    for (const auto& p : points) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%zu,", p.value);
        out += buf;
        if (p.metric) {
            std::snprintf(buf, sizeof buf, "%.6f", *p.metric);
            out += buf;
        }
        out += ",";
        if (p.final_loss) {
            std::snprintf(buf, sizeof buf, "%.6f", *p.final_loss);
            out += buf;
        }
        out += p.error.empty() ? ",ok\n" : ",failed\n";
    }
    return out;
}

json AblationCurve::to_json() const {
    json j;
    j["axis"] = to_string(axis);
    j["metric"] = metric_name;
    j["loss_non_increasing"] = loss_non_increasing;
    j["points"] = json::array();
    for (const auto& p : points) {
        json q{{"value", p.value}};
        q["metric"] = p.metric ? json(*p.metric) : json(nullptr);
        q["final_loss"] = p.final_loss ? json(*p.final_loss) : json(nullptr);
        if (!p.error.empty()) q["error"] = p.error;
        j["points"].push_back(q);
    }
    return j;
}

AblationCurve ablation_curve(const ExperimentConfig& base, AblationAxis axis, std::span<const std::size_t> grid) {
    if (grid.empty()) throw ConfigError("ablation grid is empty");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1]) throw ConfigError("ablation grid must be strictly ascending");
    if (axis == AblationAxis::epochs && grid.front() == 0) throw ConfigError("epochs grid values must be >= 1");

    AblationCurve curve;
    curve.axis = axis;
    curve.metric_name = base.task == 1 ? "f1" : base.task == 2 ? "span_f1" : "bleu";
    curve.points.resize(grid.size());
    const fs::path root = base.output_dir / "ablate";
    parallel_for(grid.size(), base.workers, [&](std::size_t i) {
        CurvePoint& p = curve.points[i];
        p.value = grid[i];
        ExperimentConfig c = with_cell(base, root / (to_string(axis) + "-" + std::to_string(grid[i])));
        switch (axis) {
            case AblationAxis::steps:
                c.tune.steps = grid[i];
                c.tune.epochs.reset();
                break;
            case AblationAxis::epochs:
                c.tune.epochs = grid[i];
                c.tune.steps.reset();
                break;
            case AblationAxis::samples:
                c.train_samples = grid[i];
                break;
        }
        try {
            const RunResult r = run(c);
            p.metric = headline_metric(r.report);
            p.final_loss = r.final_loss;
        } catch (const std::exception& e) {
            p.error = e.what();
        }
    });
    std::optional<double> prev;
    for (const auto& p : curve.points) {
        if (!p.final_loss) continue;
        if (prev && *p.final_loss > *prev) curve.loss_non_increasing = false;
        prev = p.final_loss;
    }
    fs::create_directories(root);
    write_file_atomic(root / "curve.json", curve.to_json().dump(2) + "\n");
    write_file_atomic(root / "curve.csv", curve.to_csv());
    return curve;
}

}  // namespace toxprompt
