// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <regex>
#include <set>
#include <stdexcept>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "toxprompt/errors.hpp"
#include "toxprompt/util.hpp"

namespace toxprompt {
namespace {

TEST(Sha256, KnownVectors) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    Sha256 h;
    h.update("a").update("bc");
    EXPECT_EQ(h.hex_digest(), sha256_hex("abc"));
}

TEST(Rng, DeterministicAndInRange) {
    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
    Rng r(1);
    std::set<std::size_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const std::size_t k = r.index(7);
        ASSERT_LT(k, 7u);
        seen.insert(k);
        const double u = r.uniform01();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        const auto z = r.integer(-2, 2);
        ASSERT_GE(z, -2);
        ASSERT_LE(z, 2);
    }
    EXPECT_EQ(seen.size(), 7u);
    std::vector<int> v = {1, 2, 3, 4, 5, 6};
    r.shuffle(v);
    std::sort(v.begin(), v.end());
    EXPECT_EQ(v, (std::vector<int>{1, 2, 3, 4, 5, 6}));
}

TEST(Utf8, RoundTripAndLossy) {
    const std::string s = "aé€😀";
    const std::u32string cps = utf8_decode(s);
    EXPECT_EQ(cps.size(), 4u);
    EXPECT_EQ(utf8_encode(cps), s);
    EXPECT_TRUE(utf8_valid(s));
    EXPECT_FALSE(utf8_valid("\xed\xa0\x80"));  // surrogate
    EXPECT_FALSE(utf8_valid("\xc0\xaf"));      // overlong
    EXPECT_THROW(utf8_decode("\xe2\x82"), TokenizationError);
    EXPECT_EQ(utf8_decode_lossy("a\xffz"), (std::u32string{U'a', 0xFFFD, U'z'}));
    EXPECT_TRUE(is_space(U' '));
    EXPECT_TRUE(is_space(U'　'));
    EXPECT_FALSE(is_space(U'x'));
}

TEST(Files, AtomicWriteAndRead) {
    testing::TempDir tmp;
    const auto p = tmp / "sub" / "f.txt";
    std::filesystem::create_directories(p.parent_path());
    write_file_atomic(p, "one");
    write_file_atomic(p, std::string("two\0three", 9));
    EXPECT_EQ(read_file(p), std::string("two\0three", 9));
    for (const auto& e : std::filesystem::directory_iterator(p.parent_path()))
        EXPECT_EQ(e.path().filename(), "f.txt");
    EXPECT_THROW(read_file(tmp / "absent"), MissingFile);
}

TEST(Time, TimestampFormat) {
    EXPECT_TRUE(std::regex_match(utc_timestamp(), std::regex(R"(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z)")));
}

TEST(ParallelFor, CoversEveryIndexOnce) {
    for (std::size_t workers : {0u, 1u, 3u, 16u}) {
        std::vector<std::atomic<int>> hits(257);
        parallel_for(hits.size(), workers, [&](std::size_t i) { ++hits[i]; });
        for (const auto& h : hits) ASSERT_EQ(h.load(), 1);
    }
    parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

TEST(ParallelFor, RethrowsLowestIndexError) {
    try {
        parallel_for(50, 4, [](std::size_t i) {
            if (i == 7 || i == 31) throw std::runtime_error("bad " + std::to_string(i));
        });
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_STREQ(e.what(), "bad 7");
    }
}

}  // namespace
}  // namespace toxprompt
