// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace toxprompt {

// ---------------------------------------------------------------------------
// SHA-256

class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::span<const std::byte> bytes);
    Sha256& update(std::string_view text);

    template <typename T>
    Sha256& update_pod(std::span<const T> values) {
        return update(std::as_bytes(values));
    }

    /// Lowercase hex digest. The hasher cannot be reused afterwards.
    std::string hex_digest();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view text);
std::string sha256_hex(std::span<const std::byte> bytes);

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// std::mt19937_64 output is fully specified, but the standard distributions and
// std::shuffle are not, so the mappings below are done by hand to keep seeded
// runs identical across standard libraries.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t index(std::size_t n);

    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t integer(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(index(static_cast<std::size_t>(hi - lo + 1)));
    }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        shuffle(std::span<T>(items));
    }

private:
    std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// UTF-8 helpers. All character offsets in the library are code-point indices.

/// Strict decode; throws TokenizationError on malformed input.
std::u32string utf8_decode(std::string_view text);
/// Decode replacing malformed sequences with U+FFFD.
std::u32string utf8_decode_lossy(std::string_view text);
std::string utf8_encode(std::u32string_view text);
bool utf8_valid(std::string_view text);

/// Unicode White_Space property.
bool is_space(char32_t c);

// ---------------------------------------------------------------------------
// Files

std::string read_file(const std::filesystem::path& path);
/// Write-to-temp-then-rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// ISO-8601 UTC timestamp, second precision.
std::string utc_timestamp();

// ---------------------------------------------------------------------------
// Threads

/// Runs fn(0..n-1) on up to `workers` threads (0 = hardware concurrency).
/// If any call throws, the exception from the lowest index is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace toxprompt
