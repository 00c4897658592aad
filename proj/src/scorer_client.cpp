// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "toxprompt/scorer_client.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "toxprompt/errors.hpp"
#include "toxprompt/metrics.hpp"
#include "toxprompt/util.hpp"

namespace toxprompt {

namespace {

struct AttributeName {
    Attribute attribute;
    const char* name;
    const char* wire;
};

constexpr AttributeName kAttributes[] = {
    {Attribute::toxicity, "toxicity", "TOXICITY"},
    {Attribute::severe_toxicity, "severe_toxicity", "SEVERE_TOXICITY"},
    {Attribute::insult, "insult", "INSULT"},
    {Attribute::profanity, "profanity", "PROFANITY"},
    {Attribute::threat, "threat", "THREAT"},
    {Attribute::identity_attack, "identity_attack", "IDENTITY_ATTACK"},
};

const AttributeName& lookup(Attribute a) {
    for (const auto& e : kAttributes) {
        if (e.attribute == a) return e;
    }
    throw ConfigError("unknown attribute");
}

std::string normalize_word(std::string_view w) {
    std::string out;
    for (unsigned char c : w) {
        if (std::isalnum(c) || c >= 0x80) out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

double checked_score(double s, const std::string& who) {
    if (!(s >= 0.0 && s <= 1.0)) throw ServiceError(who + " returned score outside [0, 1]");
    return s;
}

}  // namespace

std::string to_string(Attribute attribute) { return lookup(attribute).name; }

std::string wire_name(Attribute attribute) { return lookup(attribute).wire; }

Attribute attribute_from_string(std::string_view name) {
    for (const auto& e : kAttributes) {
        if (name == e.name || name == e.wire) return e.attribute;
    }
    throw ConfigError("unknown attribute '" + std::string(name) + "'");
}

const std::vector<Attribute>& all_attributes() {
    static const std::vector<Attribute> all = [] {
        std::vector<Attribute> v;
        for (const auto& e : kAttributes) v.push_back(e.attribute);
        return v;
    }();
    return all;
}

// ---------------------------------------------------------------------------

LexiconScorer::LexiconScorer(std::vector<std::string> lexicon) {
    for (const auto& w : lexicon) {
        const std::string n = normalize_word(w);
        if (!n.empty()) lexicon_.insert(n);
    }
}

std::shared_ptr<LexiconScorer> LexiconScorer::default_lexicon() {
    return std::make_shared<LexiconScorer>(std::vector<std::string>{
        "idiot", "idiots", "stupid", "moron", "morons", "imbecile", "imbeciles", "jerk", "jerks", "dumb",
        "loser", "losers", "fool", "fools", "trash", "garbage", "pathetic", "disgusting", "hate", "ugly",
        "shut", "damn", "crap", "scum", "toxmark"});
}

ScoreResult LexiconScorer::score(const ScoreRequest& request) {
    std::size_t words = 0, hits = 0;
    std::size_t i = 0;
    const std::string& t = request.text;
    while (i < t.size()) {
        while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i]))) ++i;
        std::size_t j = i;
        while (j < t.size() && !std::isspace(static_cast<unsigned char>(t[j]))) ++j;
        if (j > i) {
            ++words;
            if (lexicon_.count(normalize_word(std::string_view(t).substr(i, j - i)))) ++hits;
        }
        i = j;
    }
    return {request.text, request.attribute, static_cast<double>(hits) / static_cast<double>(std::max<std::size_t>(1, words)),
            false};
}

ScoreResult FunctionScorer::score(const ScoreRequest& request) {
    return {request.text, request.attribute, checked_score(fn_(request.text, request.attribute), name_), false};
}

// ---------------------------------------------------------------------------

std::chrono::nanoseconds SystemClock::now() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
        std::chrono::steady_clock::now().time_since_epoch());
}

void SystemClock::sleep_for(std::chrono::nanoseconds d) {
    if (d.count() > 0) std::this_thread::sleep_for(d);
}

std::chrono::nanoseconds VirtualClock::now() {
    std::lock_guard lock(mu_);
    return now_;
}

void VirtualClock::sleep_for(std::chrono::nanoseconds d) {
    if (d.count() <= 0) return;
    std::lock_guard lock(mu_);
    now_ += d;
    slept_ += d;
}

std::chrono::nanoseconds VirtualClock::total_slept() {
    std::lock_guard lock(mu_);
    return slept_;
}

RateLimiter::RateLimiter(double qps, std::shared_ptr<Clock> clock) : qps_(qps), clock_(std::move(clock)) {
    if (!(qps > 0.0) || !std::isfinite(qps)) throw ConfigError("qps must be positive and finite");
    if (!clock_) clock_ = std::make_shared<SystemClock>();
    interval_ = std::chrono::nanoseconds(static_cast<std::int64_t>(std::ceil(1e9 / qps)));
    window_cap_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(qps)));
}

std::chrono::nanoseconds RateLimiter::acquire() {
    using namespace std::chrono;
    nanoseconds slot;
    {
        // Reserve the next admissible slot, then sleep outside the lock.
        std::lock_guard lock(mu_);
        slot = clock_->now();
        if (last_) slot = std::max(slot, *last_ + interval_);
        if (window_.size() >= window_cap_) {
            slot = std::max(slot, window_[window_.size() - window_cap_] + seconds(1));
        }
        last_ = slot;
        window_.push_back(slot);
        while (window_.size() > window_cap_) window_.pop_front();
    }
    const nanoseconds wait = slot - clock_->now();
    clock_->sleep_for(wait);
    return slot;
}

// ---------------------------------------------------------------------------

ScoreCache::ScoreCache(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(*path_);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const Attribute a = attribute_from_string(j.at("attribute").get<std::string>());
            entries_[key(a, j.at("digest").get<std::string>())] = j.at("score").get<double>();
        } catch (const std::exception&) {
            ++skipped_;  // e.g. a line cut short by a crash
        }
    }
}

std::string ScoreCache::key(Attribute attribute, const std::string& digest) {
    return to_string(attribute) + ":" + digest;
}

std::optional<double> ScoreCache::get(Attribute attribute, std::string_view text) {
    const std::string k = key(attribute, sha256_hex(text));
    std::lock_guard lock(mu_);
    auto it = entries_.find(k);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ScoreCache::put(Attribute attribute, std::string_view text, double score) {
    const std::string digest = sha256_hex(text);
    std::lock_guard lock(mu_);
    auto [it, inserted] = entries_.emplace(key(attribute, digest), score);
    if (!inserted) return;
    if (path_) {
        std::ofstream out(*path_, std::ios::app | std::ios::binary);
        if (!out) throw DataError("cannot append to score cache " + path_->string());
        const nlohmann::json j = {{"digest", digest}, {"attribute", to_string(attribute)}, {"score", score}};
        out << j.dump() << '\n';
        out.flush();
    }
}

std::size_t ScoreCache::size() {
    std::lock_guard lock(mu_);
    return entries_.size();
}

// ---------------------------------------------------------------------------

namespace {

class HttplibTransport final : public HttpTransport {
public:
    HttplibTransport(const std::string& base_url, std::chrono::seconds timeout) : client_(base_url) {
        if (!client_.is_valid()) throw ConfigError("invalid scorer base URL '" + base_url + "'");
        client_.set_connection_timeout(timeout);
        client_.set_read_timeout(timeout);
        client_.set_write_timeout(timeout);
    }

    HttpResponse post_json(const std::string& path_and_query, const std::string& body) override {
        std::lock_guard lock(mu_);
        auto res = client_.Post(path_and_query, body, "application/json");
        if (!res) return {0, httplib::to_string(res.error())};
        return {res->status, res->body};
    }

private:
    std::mutex mu_;
    httplib::Client client_;
};

std::string api_key_from_env() {
    for (const char* name : {"TOXPROMPT_PERSPECTIVE_KEY", "PERSPECTIVE_API_KEY"}) {
        if (const char* v = std::getenv(name); v != nullptr && *v != '\0') return v;
    }
    return {};
}

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url, std::chrono::seconds timeout) {
    return std::make_unique<HttplibTransport>(base_url, timeout);
}

PerspectiveClient::PerspectiveClient(PerspectiveConfig config, std::shared_ptr<ScoreCache> cache,
                                     std::unique_ptr<HttpTransport> transport, std::shared_ptr<Clock> clock)
    : config_(std::move(config)),
      cache_(std::move(cache)),
      transport_(std::move(transport)),
      clock_(clock ? std::move(clock) : std::make_shared<SystemClock>()),
      limiter_(config_.qps, clock_) {
    if (config_.max_attempts == 0) throw ConfigError("max_attempts must be at least 1");
    if (config_.api_key.empty()) config_.api_key = api_key_from_env();
    if (!transport_) transport_ = make_http_transport(config_.base_url);
}

std::size_t PerspectiveClient::network_calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

std::string PerspectiveClient::request_body(const ScoreRequest& request, std::span<const std::string> languages) {
    nlohmann::json j;
    j["comment"] = {{"text", request.text}};
    j["languages"] = std::vector<std::string>(languages.begin(), languages.end());
    j["requestedAttributes"] = {{wire_name(request.attribute), nlohmann::json::object()}};
    j["doNotStore"] = true;
    return j.dump();
}

double PerspectiveClient::parse_score(std::string_view body, Attribute attribute) {
    try {
        const auto j = nlohmann::json::parse(body);
        const double v =
            j.at("attributeScores").at(wire_name(attribute)).at("summaryScore").at("value").get<double>();
        return checked_score(v, "scorer");
    } catch (const nlohmann::json::exception& e) {
        throw ServiceError(std::string("malformed scorer response: ") + e.what());
    }
}

ScoreResult PerspectiveClient::score(const ScoreRequest& request) {
    if (cache_) {
        if (auto hit = cache_->get(request.attribute, request.text)) {
            return {request.text, request.attribute, *hit, true};
        }
    }
    if (config_.api_key.empty()) throw ScorerUnavailable("no API key configured for the scorer");
    const std::string path = config_.endpoint + "?key=" + config_.api_key;
    const std::string body = request_body(request, config_.languages);

    HttpResponse last;
    for (std::size_t attempt = 0; attempt < config_.max_attempts; ++attempt) {
        limiter_.acquire();
        {
            std::lock_guard lock(mu_);
            ++calls_;
        }
        last = transport_->post_json(path, body);
        if (last.status == 200) {
            const double s = parse_score(last.body, request.attribute);
            if (cache_) cache_->put(request.attribute, request.text, s);
            return {request.text, request.attribute, s, false};
        }
        if (last.status == 401 || last.status == 403) {
            throw AuthError("scorer rejected credentials (HTTP " + std::to_string(last.status) + ")");
        }
        const bool retryable = last.status == 0 || last.status == 429 || last.status >= 500;
        if (!retryable) {
            throw ServiceError("HTTP " + std::to_string(last.status) + ": " + last.body.substr(0, 200));
        }
        if (attempt + 1 < config_.max_attempts) {
            auto wait = config_.backoff_base * (std::int64_t{1} << std::min<std::size_t>(attempt, 20));
            clock_->sleep_for(std::min(wait, config_.backoff_max));
        }
    }
    const std::string tail = " after " + std::to_string(config_.max_attempts) + " attempts";
    if (last.status == 429) throw RateLimited("HTTP 429" + tail);
    if (last.status == 0) throw ServiceError("connection failed" + tail + ": " + last.body);
    throw ServiceError("HTTP " + std::to_string(last.status) + tail);
}

// ---------------------------------------------------------------------------

BatchScores score_batch(ToxicityScorer& scorer, std::span<const std::string> texts, Attribute attribute,
                        std::size_t workers) {
    BatchScores out;
    out.results.resize(texts.size());
    std::vector<std::string> errors(texts.size());
    parallel_for(texts.size(), std::max<std::size_t>(1, workers), [&](std::size_t i) {
        try {
            out.results[i] = scorer.score({texts[i], attribute});
        } catch (const std::exception& e) {
            errors[i] = e.what();
            if (errors[i].empty()) errors[i] = "unknown error";
        }
    });
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (!out.results[i]) out.failures.push_back({i, errors[i]});
    }
    return out;
}

std::vector<int> classify_with_threshold(ToxicityScorer& scorer, std::span<const std::string> texts,
                                         Attribute attribute, double threshold) {
    std::vector<int> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(scorer.score({t, attribute}).score > threshold ? 1 : 0);
    return out;
}

AttributeSweep attribute_sweep(ToxicityScorer& scorer, std::span<const std::string> texts,
                               std::span<const int> gold, double threshold, std::span<const Attribute> attributes) {
    const std::span<const Attribute> list = attributes.empty() ? std::span<const Attribute>(all_attributes()) : attributes;
    AttributeSweep sweep;
    bool first = true;
    for (Attribute a : list) {
        const double f1 = clf_metrics(classify_with_threshold(scorer, texts, a, threshold), gold).f1;
        sweep.f1[a] = f1;
        if (first || f1 > sweep.best_f1) {
            sweep.best = a;
            sweep.best_f1 = f1;
            first = false;
        }
    }
    return sweep;
}

}  // namespace toxprompt
