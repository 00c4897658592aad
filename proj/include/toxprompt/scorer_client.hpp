// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace toxprompt {

enum class Attribute { toxicity, severe_toxicity, insult, profanity, threat, identity_attack };

std::string to_string(Attribute attribute);
Attribute attribute_from_string(std::string_view name);
/// Upper-case name used on the wire, e.g. "SEVERE_TOXICITY".
std::string wire_name(Attribute attribute);
const std::vector<Attribute>& all_attributes();

struct ScoreRequest {
    std::string text;
    Attribute attribute = Attribute::toxicity;
};

struct ScoreResult {
    std::string text;
    Attribute attribute = Attribute::toxicity;
    double score = 0.0;
    bool cached = false;
};

/// Maps text to a toxicity probability in [0, 1]. Implementations must be
/// safe to call from several threads.
class ToxicityScorer {
public:
    virtual ~ToxicityScorer() = default;
    virtual ScoreResult score(const ScoreRequest& request) = 0;
    virtual std::string name() const = 0;
};

/// Offline stub: hits / max(1, words), where a hit is a whitespace token whose
/// lower-cased, punctuation-stripped form is in the lexicon. Same score for every attribute.
class LexiconScorer final : public ToxicityScorer {
public:
    explicit LexiconScorer(std::vector<std::string> lexicon);
    ScoreResult score(const ScoreRequest& request) override;
    std::string name() const override { return "lexicon"; }
    static std::shared_ptr<LexiconScorer> default_lexicon();

private:
    std::unordered_set<std::string> lexicon_;
};

/// Wraps a plain function; handy for constant or scripted scorers.
class FunctionScorer final : public ToxicityScorer {
public:
    using Fn = std::function<double(std::string_view text, Attribute attribute)>;
    FunctionScorer(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}
    ScoreResult score(const ScoreRequest& request) override;
    std::string name() const override { return name_; }

private:
    std::string name_;
    Fn fn_;
};

// ---------------------------------------------------------------------------
// Time and rate limiting

class Clock {
public:
    virtual ~Clock() = default;
    virtual std::chrono::nanoseconds now() = 0;
    virtual void sleep_for(std::chrono::nanoseconds d) = 0;
};

class SystemClock final : public Clock {
public:
    std::chrono::nanoseconds now() override;
    void sleep_for(std::chrono::nanoseconds d) override;
};

/// Time only moves when someone sleeps.
class VirtualClock final : public Clock {
public:
    std::chrono::nanoseconds now() override;
    void sleep_for(std::chrono::nanoseconds d) override;
    std::chrono::nanoseconds total_slept();

private:
    std::mutex mu_;
    std::chrono::nanoseconds now_{0};
    std::chrono::nanoseconds slept_{0};
};

/// Spaces calls at least 1/qps apart and never admits more than floor(qps)
/// (at least one) calls in any one-second window.
class RateLimiter {
public:
    RateLimiter(double qps, std::shared_ptr<Clock> clock);
    /// Blocks until a call may proceed; returns the admission time.
    std::chrono::nanoseconds acquire();
    double qps() const { return qps_; }

private:
    double qps_;
    std::chrono::nanoseconds interval_;
    std::size_t window_cap_;
    std::shared_ptr<Clock> clock_;
    std::mutex mu_;
    std::optional<std::chrono::nanoseconds> last_;
    std::deque<std::chrono::nanoseconds> window_;
};

// ---------------------------------------------------------------------------
// Cache

/// Scores keyed by (attribute, sha256(text)). With a path, existing entries are
/// loaded and new ones appended as JSON lines {digest, attribute, score}.
class ScoreCache {
public:
    ScoreCache() = default;
    explicit ScoreCache(std::filesystem::path path);

    std::optional<double> get(Attribute attribute, std::string_view text);
    void put(Attribute attribute, std::string_view text, double score);
    std::size_t size();
    /// Lines of the cache file that could not be parsed (skipped on load).
    std::size_t skipped_lines() const { return skipped_; }

private:
    static std::string key(Attribute attribute, const std::string& digest);
    std::mutex mu_;
    std::optional<std::filesystem::path> path_;
    std::unordered_map<std::string, double> entries_;
    std::size_t skipped_ = 0;
};

// ---------------------------------------------------------------------------
// HTTP scorer

struct HttpResponse {
    int status = 0;
    std::string body;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    /// POST `body` (JSON) to `path_and_query` on the configured host. A status of
    /// 0 means the request never completed (connection error).
    virtual HttpResponse post_json(const std::string& path_and_query, const std::string& body) = 0;
};

/// cpp-httplib transport for "http://host:port" or "https://host" base URLs.
std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout = std::chrono::seconds(30));

struct PerspectiveConfig {
    std::string base_url = "https://commentanalyzer.googleapis.com";
    std::string endpoint = "/v1alpha1/comments:analyze";
    /// Empty: read TOXPROMPT_PERSPECTIVE_KEY, then PERSPECTIVE_API_KEY.
    std::string api_key;
    double qps = 1.0;
    std::size_t max_attempts = 5;
    std::chrono::milliseconds backoff_base{1000};
    std::chrono::milliseconds backoff_max{32000};
    std::vector<std::string> languages{"en"};
};

/// Client for the Perspective-style analyze endpoint.
///
/// Cached scores skip the network and the rate limiter. 429 and 5xx answers and
/// connection failures are retried with exponential backoff; 401/403 raise AuthError.
class PerspectiveClient final : public ToxicityScorer {
public:
    PerspectiveClient(PerspectiveConfig config, std::shared_ptr<ScoreCache> cache = nullptr,
                      std::unique_ptr<HttpTransport> transport = nullptr,
                      std::shared_ptr<Clock> clock = nullptr);

    ScoreResult score(const ScoreRequest& request) override;
    std::string name() const override { return "perspective"; }
    /// Requests that reached the transport, including retries.
    std::size_t network_calls() const;

    static std::string request_body(const ScoreRequest& request, std::span<const std::string> languages);
    /// Extracts attributeScores.<WIRE>.summaryScore.value; throws ServiceError.
    static double parse_score(std::string_view body, Attribute attribute);

private:
    PerspectiveConfig config_;
    std::shared_ptr<ScoreCache> cache_;
    std::unique_ptr<HttpTransport> transport_;
    std::shared_ptr<Clock> clock_;
    RateLimiter limiter_;
    mutable std::mutex mu_;
    std::size_t calls_ = 0;
};

// ---------------------------------------------------------------------------
// Batch helpers

struct BatchFailure {
    std::size_t index = 0;
    std::string error;
};

struct BatchScores {
    /// One slot per input text; empty where scoring failed.
    std::vector<std::optional<ScoreResult>> results;
    std::vector<BatchFailure> failures;
};

/// Scores every text in order; failures are collected instead of thrown.
BatchScores score_batch(ToxicityScorer& scorer, std::span<const std::string> texts, Attribute attribute,
                        std::size_t workers = 1);

/// 1 (toxic) iff score > threshold. Scorer errors propagate.
std::vector<int> classify_with_threshold(ToxicityScorer& scorer, std::span<const std::string> texts,
                                         Attribute attribute, double threshold = 0.5);

struct AttributeSweep {
    Attribute best = Attribute::toxicity;
    double best_f1 = 0.0;
    std::map<Attribute, double> f1;
};

/// Classifies with every attribute at `threshold` and records which maximizes F1
/// (ties: earlier attribute in all_attributes order).
AttributeSweep attribute_sweep(ToxicityScorer& scorer, std::span<const std::string> texts,
                               std::span<const int> gold, double threshold = 0.5,
                               std::span<const Attribute> attributes = {});

}  // namespace toxprompt
