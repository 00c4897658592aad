// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "toxprompt/data_kit.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_set>

#include "toxprompt/errors.hpp"
#include "toxprompt/util.hpp"

namespace toxprompt {

namespace {

using json = nlohmann::json;

struct AdapterName {
    Adapter adapter;
    const char* name;
};

constexpr AdapterName kAdapters[] = {
    {Adapter::canonical, "canonical"},
    {Adapter::label_map, "label-map"},
    {Adapter::score_threshold, "score-threshold"},
    {Adapter::majority_vote, "majority-vote"},
    {Adapter::paraphrase_first, "paraphrase-first"},
    {Adapter::spans, "spans"},
};

// Field accessors that turn any shape problem into a SchemaError at `line`.
class Row {
public:
    Row(const json& j, const std::string& source, std::size_t line) : j_(j), source_(source), line_(line) {}

    [[noreturn]] void fail(const std::string& what) const { throw SchemaError(source_, line_, what); }

    const json& field(const std::string& key) const {
        auto it = j_.find(key);
        if (it == j_.end()) fail("missing field '" + key + "'");
        return *it;
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    std::string text(const std::string& key) const {
        const json& v = field(key);
        if (!v.is_string()) fail("field '" + key + "' must be a string");
        return v.get<std::string>();
    }

    std::string split(const std::string& key) const {
        if (!has(key)) return {};
        const json& v = field(key);
        if (!v.is_string()) fail("field '" + key + "' must be a string");
        std::string s = v.get<std::string>();
        if (s == "dev" || s == "validation" || s == "val") s = "train";
        if (s != "train" && s != "test") fail("unknown split '" + s + "'");
        return s;
    }

    int binary_label(const json& v) const {
        if (v.is_boolean()) return v.get<bool>() ? 1 : 0;
        if (v.is_number_integer() || v.is_number_unsigned()) {
            const auto x = v.get<std::int64_t>();
            if (x == 0 || x == 1) return static_cast<int>(x);
        }
        if (v.is_string()) {
            const std::string s = v.get<std::string>();
            if (s == "1" || s == "toxic") return 1;
            if (s == "0" || s == "nontoxic" || s == "non-toxic") return 0;
        }
        fail("label must be 0/1, true/false or toxic/nontoxic, got " + v.dump());
    }

    int mapped_label(const json& v, const std::map<std::string, int>& map) const {
        if (map.empty()) return binary_label(v);
        std::string key;
        if (v.is_string()) key = v.get<std::string>();
        else if (v.is_number_integer() || v.is_number_unsigned() || v.is_boolean()) key = v.dump();
        else fail("label must be a string or integer, got " + v.dump());
        auto it = map.find(key);
        if (it == map.end()) fail("label '" + key + "' has no mapping");
        return it->second;
    }

    double number(const std::string& key) const {
        const json& v = field(key);
        if (!v.is_number()) fail("field '" + key + "' must be a number");
        return v.get<double>();
    }

    SpanSet offsets(const std::string& key, const std::string& text) const {
        json v = field(key);
        if (v.is_string()) {
            try {
                v = json::parse(v.get<std::string>());
            } catch (const json::exception&) {
                fail("field '" + key + "' is not a list of offsets");
            }
        }
        if (!v.is_array()) fail("field '" + key + "' must be a list of offsets");
        const std::size_t len = utf8_decode_lossy(text).size();
        std::vector<std::size_t> out;
        for (const json& o : v) {
            if (!(o.is_number_integer() || o.is_number_unsigned()) || o.get<std::int64_t>() < 0) {
                fail("offset " + o.dump() + " is not a non-negative integer");
            }
            const auto off = o.get<std::size_t>();
            if (off >= len) {
                fail("offset " + std::to_string(off) + " beyond text length " + std::to_string(len));
            }
            out.push_back(off);
        }
        return normalize_offsets(std::move(out));
    }

private:
    const json& j_;
    const std::string& source_;
    std::size_t line_;
};

void require_task(const DatasetSpec& spec, int task) {
    if (spec.task != task) {
        throw ConfigError("dataset '" + spec.name + "': adapter " + to_string(spec.adapter) + " needs task " +
                          std::to_string(task));
    }
}

Dataset empty_like(const Dataset& ds) {
    Dataset out;
    out.name = ds.name;
    out.task = ds.task;
    return out;
}

// Appends the selected rows of `ds` (in the given order) to `out`.
void take(const Dataset& ds, std::span<const std::size_t> idx, Dataset& out) {
    for (std::size_t i : idx) {
        switch (ds.task) {
            case 1: out.clf.push_back(ds.clf[i]); break;
            case 2: out.spans.push_back(ds.spans[i]); break;
            default: out.pairs.push_back(ds.pairs[i]); break;
        }
    }
}

const std::string& split_of(const Dataset& ds, std::size_t i) {
    switch (ds.task) {
        case 1: return ds.clf[i].split;
        case 2: return ds.spans[i].split;
        default: return ds.pairs[i].split;
    }
}

std::size_t round_80(std::size_t n) { return (8 * n + 5) / 10; }

bool ascii_alpha(char32_t c) { return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z'); }

char32_t ascii_lower(char32_t c) { return (c >= U'A' && c <= U'Z') ? c + 32 : c; }

bool same_word(std::u32string_view a, std::u32string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (ascii_lower(a[i]) != ascii_lower(b[i])) return false;
    }
    return true;
}

std::u32string apply_mode(std::u32string word, PerturbMode mode, Rng& rng) {
    if (mode == PerturbMode::leet) {
        static const std::map<char32_t, char32_t> kLeet = {
            {U'a', U'4'}, {U'e', U'3'}, {U'i', U'1'}, {U'o', U'0'}, {U's', U'5'}, {U't', U'7'}};
        std::vector<std::size_t> spots;
        for (std::size_t i = 0; i < word.size(); ++i) {
            if (kLeet.count(ascii_lower(word[i]))) spots.push_back(i);
        }
        if (!spots.empty()) {
            const std::size_t i = spots[rng.index(spots.size())];
            word[i] = kLeet.at(ascii_lower(word[i]));
            return word;
        }
        mode = PerturbMode::repeat_char;  // nothing to swap
    }
    if (mode == PerturbMode::inner_spaces) {
        std::u32string out;
        for (std::size_t i = 0; i < word.size(); ++i) {
            if (i) out.push_back(U' ');
            out.push_back(word[i]);
        }
        return out;
    }
    std::vector<std::size_t> letters;
    for (std::size_t i = 0; i < word.size(); ++i) {
        if (ascii_alpha(word[i])) letters.push_back(i);
    }
    const std::size_t pos = letters.empty() ? rng.index(word.size()) : letters[rng.index(letters.size())];
    const auto extra = static_cast<std::size_t>(rng.integer(2, 5));
    word.insert(pos, extra, word[pos]);
    return word;
}

const std::vector<std::string>& neutral_words() {
    static const std::vector<std::string> w{"the",  "weather", "is",    "nice",  "today", "we",    "went",
                                            "to",   "park",    "and",   "saw",   "a",     "dog",   "my",
                                            "team", "played",  "well",  "this",  "movie", "was",   "long",
                                            "you",  "are",     "late",  "again", "that",  "idea",  "sounds",
                                            "fun",  "people",  "here",  "like",  "music", "good",  "day"};
    return w;
}

std::string random_sentence(Rng& rng, std::size_t lo, std::size_t hi) {
    const auto& w = neutral_words();
    const auto len = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
    std::string s;
    for (std::size_t i = 0; i < len; ++i) {
        if (i) s += ' ';
        s += w[rng.index(w.size())];
    }
    return s;
}

// Inserts `count` insults at random word positions; returns the text and their offsets.
std::pair<std::string, SpanSet> insult_sentence(Rng& rng, std::size_t count) {
    std::vector<std::string> words;
    const std::string base = random_sentence(rng, 3, 7);
    std::size_t start = 0;
    while (start <= base.size()) {
        const std::size_t sp = std::min(base.find(' ', start), base.size());
        words.push_back(base.substr(start, sp - start));
        start = sp + 1;
    }
    std::vector<bool> toxic(words.size(), false);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t at = rng.index(words.size() + 1);
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(at),
                     synthetic_insults()[rng.index(synthetic_insults().size())]);
        toxic.insert(toxic.begin() + static_cast<std::ptrdiff_t>(at), true);
    }
    std::string text;
    SpanSet offsets;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) text += ' ';
        if (toxic[i]) {
            for (std::size_t c = 0; c < words[i].size(); ++c) offsets.push_back(text.size() + c);
        }
        text += words[i];
    }
    return {text, offsets};
}

}  // namespace

std::string to_string(Adapter adapter) {
    for (const auto& a : kAdapters) {
        if (a.adapter == adapter) return a.name;
    }
    throw ConfigError("unknown adapter");
}

Adapter adapter_from_string(std::string_view name) {
    for (const auto& a : kAdapters) {
        if (name == a.name) return a.adapter;
    }
    throw ConfigError("unknown dataset adapter '" + std::string(name) + "'");
}

std::string to_string(PerturbMode mode) {
    switch (mode) {
        case PerturbMode::repeat_char: return "repeat-char";
        case PerturbMode::inner_spaces: return "inner-spaces";
        case PerturbMode::leet: return "leet";
    }
    return "?";
}

PerturbMode perturb_mode_from_string(std::string_view name) {
    if (name == "repeat-char") return PerturbMode::repeat_char;
    if (name == "inner-spaces") return PerturbMode::inner_spaces;
    if (name == "leet") return PerturbMode::leet;
    throw ConfigError("unknown perturbation mode '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

nlohmann::json DatasetSpec::to_json() const {
    json j = {{"name", name},
              {"task", task},
              {"path", path.string()},
              {"adapter", to_string(adapter)},
              {"label_rule", label_rule},
              {"has_official_split", has_official_split},
              {"text_field", text_field},
              {"label_field", label_field},
              {"score_field", score_field},
              {"votes_field", votes_field},
              {"spans_field", spans_field},
              {"toxic_field", toxic_field},
              {"paraphrases_field", paraphrases_field},
              {"split_field", split_field},
              {"threshold", threshold},
              {"label_map", label_map}};
    j["expected_size"] = expected_size ? json(*expected_size) : json(nullptr);
    return j;
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ConfigError("dataset spec must be an object");
    DatasetSpec s;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "name") s.name = v.get<std::string>();
            else if (key == "task") s.task = v.get<int>();
            else if (key == "path") s.path = v.get<std::string>();
            else if (key == "adapter") s.adapter = adapter_from_string(v.get<std::string>());
            else if (key == "label_rule") s.label_rule = v.get<std::string>();
            else if (key == "has_official_split") s.has_official_split = v.get<bool>();
            else if (key == "expected_size") s.expected_size = v.is_null() ? std::nullopt : std::optional(v.get<std::size_t>());
            else if (key == "text_field") s.text_field = v.get<std::string>();
            else if (key == "label_field") s.label_field = v.get<std::string>();
            else if (key == "score_field") s.score_field = v.get<std::string>();
            else if (key == "votes_field") s.votes_field = v.get<std::string>();
            else if (key == "spans_field") s.spans_field = v.get<std::string>();
            else if (key == "toxic_field") s.toxic_field = v.get<std::string>();
            else if (key == "paraphrases_field") s.paraphrases_field = v.get<std::string>();
            else if (key == "split_field") s.split_field = v.get<std::string>();
            else if (key == "threshold") s.threshold = v.get<double>();
            else if (key == "label_map") s.label_map = v.get<std::map<std::string, int>>();
            else throw ConfigError("unknown dataset spec key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad dataset spec: ") + e.what());
    }
    if (s.name.empty()) throw ConfigError("dataset spec needs a name");
    if (s.task < 1 || s.task > 3) throw ConfigError("dataset '" + s.name + "': task must be 1, 2 or 3");
    if (s.path.empty()) throw ConfigError("dataset '" + s.name + "' needs a path");
    if (s.path.is_relative() && !base_dir.empty()) s.path = base_dir / s.path;
    return s;
}

std::size_t Dataset::size() const {
    switch (task) {
        case 1: return clf.size();
        case 2: return spans.size();
        default: return pairs.size();
    }
}

Dataset load(const DatasetSpec& spec) {
    if (!std::filesystem::is_regular_file(spec.path)) {
        throw MissingFile("dataset '" + spec.name + "': " + spec.path.string());
    }
    switch (spec.adapter) {
        case Adapter::label_map:
        case Adapter::score_threshold:
        case Adapter::majority_vote: require_task(spec, 1); break;
        case Adapter::spans: require_task(spec, 2); break;
        case Adapter::paraphrase_first: require_task(spec, 3); break;
        case Adapter::canonical: break;
    }
    std::ifstream in(spec.path, std::ios::binary);
    if (!in) throw MissingFile("cannot open " + spec.path.string());

    Dataset ds;
    ds.name = spec.name;
    ds.task = spec.task;
    const std::string source = spec.path.string();
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaError(source, lineno, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw SchemaError(source, lineno, "row must be a JSON object");
        const Row row(j, source, lineno);
        const std::string split = row.split(spec.split_field);
        std::string key;

        if (spec.task == 1) {
            ClfExample ex;
            ex.text = row.text(spec.text_field);
            ex.split = split;
            switch (spec.adapter) {
                case Adapter::canonical: ex.label = row.binary_label(row.field(spec.label_field)); break;
                case Adapter::label_map: ex.label = row.mapped_label(row.field(spec.label_field), spec.label_map); break;
                case Adapter::score_threshold: ex.label = row.number(spec.score_field) >= spec.threshold ? 1 : 0; break;
                case Adapter::majority_vote: {
                    const json& votes = row.field(spec.votes_field);
                    if (!votes.is_array() || votes.empty()) row.fail("field '" + spec.votes_field + "' must be a non-empty list");
                    std::size_t toxic = 0;
                    for (const json& v : votes) toxic += static_cast<std::size_t>(row.mapped_label(v, spec.label_map));
                    if (2 * toxic == votes.size()) {
                        ++ds.dropped_ties;
                        continue;
                    }
                    ex.label = 2 * toxic > votes.size() ? 1 : 0;
                    break;
                }
                default: break;
            }
            key = ex.text;
            ds.clf.push_back(std::move(ex));
        } else if (spec.task == 2) {
            SpanExample ex;
            ex.text = row.text(spec.text_field);
            ex.split = split;
            const std::string& field = spec.adapter == Adapter::canonical ? std::string("offsets") : spec.spans_field;
            ex.offsets = row.offsets(field, ex.text);
            ex.nontoxic = remove_spans(ex.text, ex.offsets);
            key = ex.text;
            ds.spans.push_back(std::move(ex));
        } else {
            DetoxPair p;
            p.toxic = row.text(spec.toxic_field);
            p.split = split;
            if (spec.adapter == Adapter::paraphrase_first) {
                const json& paras = row.field(spec.paraphrases_field);
                if (paras.is_string()) {
                    p.detox = paras.get<std::string>();
                } else if (paras.is_array()) {
                    for (const json& v : paras) {
                        if (v.is_string() && !v.get<std::string>().empty()) {
                            p.detox = v.get<std::string>();
                            break;
                        }
                    }
                } else {
                    row.fail("field '" + spec.paraphrases_field + "' must be a string or list");
                }
                if (p.detox.empty()) row.fail("no non-empty paraphrase");
            } else {
                p.detox = row.text("detox");
            }
            key = p.toxic;
            ds.pairs.push_back(std::move(p));
        }
        if (!seen.insert(key).second) ++ds.duplicates;
    }
    if (spec.expected_size && *spec.expected_size != ds.size()) {
        ds.warnings.push_back("dataset '" + spec.name + "' has " + std::to_string(ds.size()) +
                              " rows, release size is " + std::to_string(*spec.expected_size));
    }
    return ds;
}

std::vector<DatasetSpec> load_registry(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw MissingFile("registry " + path.string());
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("registry " + path.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("datasets") || !j["datasets"].is_array()) {
        throw ConfigError("registry " + path.string() + " needs a \"datasets\" list");
    }
    std::vector<DatasetSpec> out;
    std::set<std::string> names;
    for (const auto& e : j["datasets"]) {
        out.push_back(DatasetSpec::from_json(e, path.parent_path()));
        if (!names.insert(out.back().name).second) throw ConfigError("duplicate dataset name '" + out.back().name + "'");
    }
    return out;
}

std::vector<DatasetSpec> builtin_registry(const std::filesystem::path& data_root) {
    auto make = [&](std::string name, int task, Adapter adapter, std::string rule, bool official, std::size_t size) {
        DatasetSpec s;
        s.path = data_root / (name + ".jsonl");
        s.name = std::move(name);
        s.task = task;
        s.adapter = adapter;
        s.label_rule = std::move(rule);
        s.has_official_split = official;
        s.expected_size = size;
        return s;
    };
    std::vector<DatasetSpec> r;
    r.push_back(make("hatexplain", 1, Adapter::majority_vote, "majority of annotators say hate or offensive -> toxic",
                     false, 12578 + 3050));
    r.back().label_map = {{"hatespeech", 1}, {"offensive", 1}, {"normal", 0}};
    r.push_back(make("uselectionhate20", 1, Adapter::canonical, "hateful -> toxic", true, 586 + 118));
    r.push_back(make("hatecheck", 1, Adapter::majority_vote, "majority of annotators say hateful -> toxic", false,
                     1998 + 484));
    r.back().label_map = {{"hateful", 1}, {"non-hateful", 0}};
    r.push_back(make("sbic", 1, Adapter::score_threshold, "offensiveYN >= 0.5 -> toxic", true, 93346 + 11000));
    r.back().score_field = "offensiveYN";
    r.back().threshold = 0.5;
    r.push_back(make("mhs", 1, Adapter::score_threshold, "hate speech score >= 0 -> toxic", false, 22700 + 5762));
    r.push_back(make("toxicspan", 2, Adapter::spans, "annotated character offsets", true, 7888 + 1991));
    r.push_back(make("parallel", 3, Adapter::canonical, "toxic sentence with its rewrite", false, 886 + 222));
    r.push_back(make("paradetox", 3, Adapter::paraphrase_first, "first of the collected paraphrases", false,
                     9551 + 2388));
    return r;
}

const DatasetSpec& find_spec(std::span<const DatasetSpec> registry, std::string_view name) {
    for (const auto& s : registry) {
        if (s.name == name) return s;
    }
    throw ConfigError("no dataset named '" + std::string(name) + "' in the registry");
}

// ---------------------------------------------------------------------------

std::string to_jsonl(std::span<const ClfExample> rows) {
    std::string out;
    for (const auto& r : rows) {
        json j = {{"text", r.text}, {"label", r.label}};
        if (!r.split.empty()) j["split"] = r.split;
        out += j.dump() + "\n";
    }
    return out;
}

std::string to_jsonl(std::span<const SpanExample> rows) {
    std::string out;
    for (const auto& r : rows) {
        json j = {{"text", r.text}, {"offsets", r.offsets}};
        if (!r.split.empty()) j["split"] = r.split;
        out += j.dump() + "\n";
    }
    return out;
}

std::string to_jsonl(std::span<const DetoxPair> rows) {
    std::string out;
    for (const auto& r : rows) {
        json j = {{"toxic", r.toxic}, {"detox", r.detox}};
        if (!r.split.empty()) j["split"] = r.split;
        out += j.dump() + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------

SplitResult balance_and_split(const Dataset& ds, std::uint64_t seed, bool has_official_split) {
    SplitResult out{empty_like(ds), empty_like(ds)};
    const std::size_t n = ds.size();
    if (n == 0) throw EmptyDataset("dataset '" + ds.name + "' has no rows");

    if (has_official_split) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < n; ++i) {
            const std::string& s = split_of(ds, i);
            if (s == "train") train.push_back(i);
            else if (s == "test") test.push_back(i);
            else throw DataError("dataset '" + ds.name + "' row " + std::to_string(i) + " has no official split");
        }
        take(ds, train, out.train);
        take(ds, test, out.test);
        return out;
    }

    Rng rng(seed);
    if (ds.task != 1) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        const std::size_t cut = round_80(n);
        take(ds, std::span(idx).first(cut), out.train);
        take(ds, std::span(idx).subspan(cut), out.test);
        return out;
    }

    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class.at(static_cast<std::size_t>(ds.clf[i].label)).push_back(i);
    if (by_class[0].empty() || by_class[1].empty()) {
        throw SingleClassDataset("dataset '" + ds.name + "' has only one class");
    }
    const std::size_t m = std::min(by_class[0].size(), by_class[1].size());
    for (auto& c : by_class) {
        rng.shuffle(c);
        c.resize(m);
    }
    const std::size_t cut = round_80(2 * m);
    const std::array<std::size_t, 2> quota{cut / 2, cut - cut / 2};  // the odd one goes to the toxic class
    std::vector<std::size_t> train, test;
    for (std::size_t k = 0; k < 2; ++k) {
        train.insert(train.end(), by_class[k].begin(), by_class[k].begin() + static_cast<std::ptrdiff_t>(quota[k]));
        test.insert(test.end(), by_class[k].begin() + static_cast<std::ptrdiff_t>(quota[k]), by_class[k].end());
    }
    rng.shuffle(train);
    rng.shuffle(test);
    take(ds, train, out.train);
    take(ds, test, out.test);
    return out;
}

Dataset subsample_train(const Dataset& train, std::size_t n, std::uint64_t seed) {
    const std::size_t total = train.size();
    if (n < 2) throw NotEnoughSamples("need at least 2 samples (one per class), asked for " + std::to_string(n));
    if (n > total) {
        throw NotEnoughSamples("asked for " + std::to_string(n) + " samples from " + std::to_string(total));
    }
    Rng rng(seed);
    std::vector<std::size_t> chosen;
    if (train.task != 1) {
        std::vector<std::size_t> idx(total);
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        chosen.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
    } else {
        std::array<std::vector<std::size_t>, 2> by_class;
        for (std::size_t i = 0; i < total; ++i) by_class.at(static_cast<std::size_t>(train.clf[i].label)).push_back(i);
        if (by_class[0].empty() || by_class[1].empty()) throw SingleClassDataset("training set has only one class");
        // largest remainder; an exact tie favours the toxic class
        std::array<std::size_t, 2> quota{};
        std::array<std::size_t, 2> rem{};
        for (std::size_t k = 0; k < 2; ++k) {
            quota[k] = n * by_class[k].size() / total;
            rem[k] = n * by_class[k].size() % total;
        }
        if (quota[0] + quota[1] < n) ++quota[rem[0] > rem[1] ? 0 : 1];
        for (std::size_t k = 0; k < 2; ++k) {
            if (quota[k] == 0) {
                quota[k] = 1;
                --quota[1 - k];
            }
        }
        for (std::size_t k = 0; k < 2; ++k) {
            rng.shuffle(by_class[k]);
            chosen.insert(chosen.end(), by_class[k].begin(), by_class[k].begin() + static_cast<std::ptrdiff_t>(quota[k]));
        }
    }
    std::sort(chosen.begin(), chosen.end());
    Dataset out = empty_like(train);
    take(train, chosen, out);
    return out;
}

// ---------------------------------------------------------------------------

std::string perturb(std::string_view text, std::span<const std::string> target_words, std::uint64_t seed,
                    std::span<const PerturbMode> modes) {
    if (target_words.empty()) return std::string(text);
    if (modes.empty()) throw ConfigError("perturb needs at least one mode");
    std::vector<std::u32string> targets;
    for (const auto& w : target_words) targets.push_back(utf8_decode(w));

    const std::u32string cps = utf8_decode(text);
    std::vector<bool> found(targets.size(), false);
    Rng rng(seed);
    std::u32string out;
    std::size_t i = 0;
    while (i < cps.size()) {
        if (is_space(cps[i])) {
            out.push_back(cps[i++]);
            continue;
        }
        std::size_t j = i;
        while (j < cps.size() && !is_space(cps[j])) ++j;
        // Surrounding punctuation stays where it is.
        std::size_t a = i, b = j;
        while (a < b && !ascii_alpha(cps[a]) && !(cps[a] >= U'0' && cps[a] <= U'9') && cps[a] < 0x80) ++a;
        while (b > a && !ascii_alpha(cps[b - 1]) && !(cps[b - 1] >= U'0' && cps[b - 1] <= U'9') && cps[b - 1] < 0x80) --b;
        const std::u32string_view core(cps.data() + a, b - a);
        std::optional<std::size_t> hit;
        for (std::size_t t = 0; t < targets.size() && !hit; ++t) {
            if (!targets[t].empty() && same_word(core, targets[t])) hit = t;
        }
        if (hit) {
            found[*hit] = true;
            const PerturbMode mode = modes[rng.index(modes.size())];
            out.append(cps.data() + i, a - i);
            out += apply_mode(std::u32string(core), mode, rng);
            out.append(cps.data() + b, j - b);
        } else {
            out.append(cps.data() + i, j - i);
        }
        i = j;
    }
    for (std::size_t t = 0; t < targets.size(); ++t) {
        if (!found[t]) throw WordNotFound("'" + target_words[t] + "' does not occur in the text");
    }
    return utf8_encode(out);
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& synthetic_insults() {
    static const std::vector<std::string> w{"idiot", "stupid", "moron", "jerk", "loser", "dumb"};
    return w;
}

Dataset synthetic_classification(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.name = "synthetic-clf";
    ds.task = 1;
    for (std::size_t i = 0; i < n; ++i) {
        ClfExample ex;
        ex.label = static_cast<int>(i % 2);
        ex.text = ex.label ? insult_sentence(rng, 1).first : random_sentence(rng, 3, 8);
        ds.clf.push_back(std::move(ex));
    }
    return ds;
}

Dataset synthetic_spans(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.name = "synthetic-spans";
    ds.task = 2;
    for (std::size_t i = 0; i < n; ++i) {
        SpanExample ex;
        if (i % 5 == 4) {
            ex.text = random_sentence(rng, 3, 8);
        } else {
            std::tie(ex.text, ex.offsets) = insult_sentence(rng, 1 + rng.index(2));
        }
        ex.nontoxic = remove_spans(ex.text, ex.offsets);
        ds.spans.push_back(std::move(ex));
    }
    return ds;
}

Dataset synthetic_detox(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.name = "synthetic-detox";
    ds.task = 3;
    for (std::size_t i = 0; i < n; ++i) {
        const auto [text, offsets] = insult_sentence(rng, 1);
        ds.pairs.push_back({text, remove_spans(text, offsets), ""});
    }
    return ds;
}

}  // namespace toxprompt
