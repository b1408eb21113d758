// Copyright 2026 The knnd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "knnd/datastore.hpp"
#include "knnd/toy_model.hpp"
#include "test_support.hpp"

using namespace knnd;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::Io;
}

Datastore small_store(std::size_t n, std::uint32_t dim = 4) {
    Datastore s(dim, 10);
    for (std::size_t i = 0; i < n; ++i) {
        Vector k(dim, static_cast<float>(i));
        s.append(k, static_cast<TokenId>(i % 10));
    }
    return s;
}

} // namespace

TEST(BuildDatastore, ThreeTokenTargetGivesFourEntries) {
    const auto m = make_toy_model(7, 8, 16);
    const std::vector<CorpusPair> corpus{{{1, 2}, {3, 4, 5}}};
    const auto store = build_datastore(m, corpus);
    ASSERT_EQ(store.size(), 4u);
    EXPECT_EQ(store.value(0), 3u);
    EXPECT_EQ(store.value(1), 4u);
    EXPECT_EQ(store.value(2), 5u);
    EXPECT_EQ(store.value(3), m.eos());
}

TEST(BuildDatastore, CorpusOrderThenPositionOrder) {
    const auto m = make_toy_model(7, 8, 16);
    const std::vector<CorpusPair> corpus{{{0}, {1, 2}}, {{3}, {4, 5, 6}}};
    const auto store = build_datastore(m, corpus);
    ASSERT_EQ(store.size(), 7u);
    const std::vector<TokenId> want{1, 2, m.eos(), 4, 5, 6, m.eos()};
    EXPECT_EQ(std::vector<TokenId>(store.values().begin(), store.values().end()), want);
}

TEST(BuildDatastore, KeysEqualTeacherForcedHiddenStates) {
    const auto m = make_toy_model(7, 8, 16);
    const CorpusPair pair{{2, 0, 5, 5}, {1, 6, 3, 0, 2}};
    const auto store = build_datastore(m, std::span<const CorpusPair>(&pair, 1));
    ASSERT_EQ(store.size(), pair.target.size() + 1);
    for (std::size_t t = 0; t <= pair.target.size(); ++t) {
        TokenSequence prefix(pair.target.begin(), pair.target.begin() + static_cast<std::ptrdiff_t>(t));
        const auto hidden = m.step(pair.source, prefix).hidden;
        const auto key = store.key(t);
        EXPECT_EQ(Vector(key.begin(), key.end()), hidden) << "position " << t;
    }
}

TEST(BuildDatastore, SizeLawOnSyntheticCorpus) {
    const auto m = make_toy_model(3, 8, 16);
    const auto corpus = make_synthetic_corpus(m, 9, 120, {3, 8});
    std::size_t want = 0;
    for (const auto& p : corpus.pairs) want += p.target.size() + 1;
    EXPECT_EQ(build_datastore(m, corpus.pairs).size(), want);
}

TEST(BuildDatastore, Deterministic) {
    const auto m = make_toy_model(3, 8, 16);
    const auto corpus = make_synthetic_corpus(m, 2, 30, {3, 8});
    EXPECT_EQ(serialize_datastore(build_datastore(m, corpus.pairs)),
              serialize_datastore(build_datastore(make_toy_model(3, 8, 16), corpus.pairs)));
}

TEST(BuildDatastore, SelfQueryReturnsOwnIdAtZero) {
    const auto m = make_toy_model(5, 8, 16);
    const auto corpus = make_synthetic_corpus(m, 4, 60, {3, 8});
    const auto store = build_datastore(m, corpus.pairs);
    const auto index = store.build_flat_index();
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto hit = index.search(store.key(i), 1).front();
        EXPECT_EQ(hit.distance, 0.0);
        // Duplicate keys resolve to the lowest id holding the same key.
        const auto found = store.key(static_cast<std::size_t>(hit.id));
        EXPECT_EQ(Vector(found.begin(), found.end()), Vector(store.key(i).begin(), store.key(i).end()));
        EXPECT_LE(hit.id, i);
    }
}

TEST(BuildDatastore, Errors) {
    const auto m = make_toy_model(5, 8, 16);
    const std::vector<CorpusPair> bad{{{9}, {1}}};
    EXPECT_EQ(code_of([&] { (void)build_datastore(m, bad); }), ErrorCode::TokenOutOfVocab);
    const std::vector<CorpusPair> none;
    EXPECT_THROW((void)build_datastore(m, none), Error);
}

TEST(Datastore, AppendValidates) {
    Datastore s(3, 4);
    EXPECT_EQ(code_of([&] { s.append(Vector{1.0f, 2.0f}, 0); }), ErrorCode::DimensionMismatch);
    EXPECT_EQ(code_of([&] { s.append(Vector{1.0f, 2.0f, 3.0f}, 4); }), ErrorCode::TokenOutOfVocab);
    EXPECT_EQ(s.size(), 0u);
}

TEST(Merge, EmptyIsIdentity) {
    const auto x = small_store(3);
    EXPECT_EQ(merge(x, Datastore(4, 10)), x);
}

TEST(Merge, ConcatenatesInOrder) {
    const auto a = small_store(2);
    Datastore b(4, 10);
    for (int i = 0; i < 3; ++i) b.append(Vector(4, 100.0f + static_cast<float>(i)), 9);
    const auto m = merge(a, b);
    ASSERT_EQ(m.size(), 5u);
    EXPECT_EQ(m.key(1)[0], 1.0f);
    EXPECT_EQ(m.key(2)[0], 100.0f);
    EXPECT_EQ(m.value(4), 9u);
}

TEST(Merge, Mismatches) {
    EXPECT_EQ(code_of([] { (void)merge(Datastore(4, 10), Datastore(8, 10)); }), ErrorCode::DimensionMismatch);
    EXPECT_EQ(code_of([] { (void)merge(Datastore(4, 10), Datastore(4, 11)); }), ErrorCode::VocabMismatch);
}

TEST(DatastoreFormat, EmptyRoundTrip) {
    const Datastore s(5, 7, "empty");
    EXPECT_EQ(deserialize_datastore(serialize_datastore(s)), s);
}

TEST(DatastoreFormat, LayoutIsLittleEndian) {
    Datastore s(1, 3, "p");
    s.append(Vector{1.0f}, 2);
    const auto b = serialize_datastore(s);
    const Bytes want{'K', 'N', 'N', 'D', 'S', 'T', '0', '1', 1, 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0,
                     0x00, 0x00, 0x80, 0x3f, 2, 0, 0, 0, 1, 0, 'p'};
    EXPECT_EQ(b, want);
}

TEST(DatastoreFormat, LargeSeededRoundTripIsBitExact) {
    const auto s = fixtures::random_datastore(42, 10000);
    const auto bytes = serialize_datastore(s);
    const auto back = deserialize_datastore(bytes);
    EXPECT_EQ(back, s);
    EXPECT_EQ(serialize_datastore(back), bytes);
}

TEST(DatastoreFormat, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "knnd_test_store.bin";
    const auto s = fixtures::random_datastore(3, 50);
    save_datastore(s, path);
    EXPECT_EQ(load_datastore(path), s);
    std::filesystem::remove(path);
    EXPECT_EQ(code_of([&] { (void)load_datastore(path); }), ErrorCode::Io);
}

TEST(DatastoreFormat, CorruptionDetected) {
    const auto bytes = serialize_datastore(fixtures::random_datastore(5, 20));
    auto flipped = bytes;
    flipped[0] ^= 0x20;
    EXPECT_EQ(code_of([&] { (void)deserialize_datastore(flipped); }), ErrorCode::CorruptFormat);
    for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
        const std::span<const std::uint8_t> head(bytes.data(), cut);
        ASSERT_EQ(code_of([&] { (void)deserialize_datastore(head); }), ErrorCode::CorruptFormat) << cut;
    }
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_EQ(code_of([&] { (void)deserialize_datastore(trailing); }), ErrorCode::CorruptFormat);
    auto huge = bytes;
    for (int i = 16; i < 24; ++i) huge[static_cast<std::size_t>(i)] = 0xff;
    EXPECT_EQ(code_of([&] { (void)deserialize_datastore(huge); }), ErrorCode::CorruptFormat);
}

TEST(DatastoreFormat, OutOfVocabValueIsCorrupt) {
    Datastore s(1, 3);
    s.append(Vector{0.5f}, 1);
    auto b = serialize_datastore(s);
    b[28] = 7;
    EXPECT_EQ(code_of([&] { (void)deserialize_datastore(b); }), ErrorCode::CorruptFormat);
}
