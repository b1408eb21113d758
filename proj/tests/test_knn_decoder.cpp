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

#include <cmath>
#include <numeric>

#include "knnd/knn_decoder.hpp"
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

double sum(const TokenDistribution& p) { return std::accumulate(p.probs.begin(), p.probs.end(), 0.0); }

struct Memory {
    Datastore store;
    AnyIndex index;
};

Memory memory_for(const TabularToyModel& m, const std::vector<CorpusPair>& corpus) {
    auto store = build_datastore(m, corpus);
    AnyIndex index(store.build_flat_index());
    return {std::move(store), std::move(index)};
}

TokenSequence random_source(detail::SplitMix& rng, std::uint32_t vocab) {
    TokenSequence s(1 + rng.below(6));
    for (auto& t : s) t = static_cast<TokenId>(rng.below(vocab - 1));
    return s;
}

} // namespace

TEST(KnnDistribution, EqualDistancesSplitEvenly) {
    const std::vector<RetrievedToken> n{{2, 0.0}, {5, 0.0}};
    const auto p = knn_distribution(n, 1.0, 8);
    EXPECT_EQ(p[2], 0.5);
    EXPECT_EQ(p[5], 0.5);
    EXPECT_EQ(sum(p), 1.0);
}

TEST(KnnDistribution, HandEvaluatedWeights) {
    const std::vector<RetrievedToken> n{{2, 0.0}, {5, std::log(4.0)}};
    const auto p = knn_distribution(n, 1.0, 8);
    // Weights 1 and 1/4, normalized.
    EXPECT_NEAR(p[2], 0.8, 1e-15);
    EXPECT_NEAR(p[5], 0.2, 1e-15);
    for (TokenId v : {0u, 1u, 3u, 4u, 6u, 7u}) EXPECT_EQ(p[v], 0.0);
}

TEST(KnnDistribution, UnanimousNeighbors) {
    const std::vector<RetrievedToken> n{{3, 0.5}, {3, 1.0}, {3, 9.0}};
    const auto p = knn_distribution(n, 0.7, 4);
    EXPECT_EQ(p[3], 1.0);
}

TEST(KnnDistribution, MatchesDirectFormula) {
    detail::SplitMix rng(4);
    for (int t = 0; t < 200; ++t) {
        std::vector<RetrievedToken> n(1 + rng.below(10));
        for (auto& x : n) x = {static_cast<TokenId>(rng.below(6)), 3.0 * rng.uniform()};
        const double tau = 0.1 + rng.uniform();
        std::vector<double> want(6, 0.0);
        double z = 0.0;
        for (const auto& x : n) {
            want[x.token] += std::exp(-x.distance / tau);
            z += std::exp(-x.distance / tau);
        }
        const auto p = knn_distribution(n, tau, 6);
        for (std::size_t v = 0; v < 6; ++v) EXPECT_NEAR(p[v], want[v] / z, 1e-12);
    }
}

TEST(KnnDistribution, LowTemperatureIsOneHot) {
    const std::vector<RetrievedToken> n{{4, 0.31}, {1, 0.30}, {2, 0.35}};
    const auto p = knn_distribution(n, 1e-6, 5);
    EXPECT_EQ(p[1], 1.0);
    EXPECT_EQ(sum(p), 1.0);
}

TEST(KnnDistribution, Errors) {
    EXPECT_EQ(code_of([] { (void)knn_distribution({}, 1.0, 4); }), ErrorCode::EmptyNeighborSet);
    const std::vector<RetrievedToken> bad{{9, 0.0}};
    EXPECT_EQ(code_of([&] { (void)knn_distribution(bad, 1.0, 4); }), ErrorCode::TokenOutOfVocab);
}

TEST(Interpolate, Endpoints) {
    const TokenDistribution p(std::vector<double>{0.1, 0.2, 0.7});
    const TokenDistribution q(std::vector<double>{0.5, 0.5, 0.0});
    EXPECT_EQ(interpolate(p, q, 0.0).probs, p.probs);
    EXPECT_EQ(interpolate(p, q, 1.0).probs, q.probs);
}

TEST(Interpolate, Midpoint) {
    const TokenDistribution p(std::vector<double>{1.0, 0.0});
    const TokenDistribution q(std::vector<double>{0.0, 1.0});
    EXPECT_EQ(interpolate(p, q, 0.5).probs, (std::vector<double>{0.5, 0.5}));
}

TEST(Interpolate, VocabMismatch) {
    const TokenDistribution p(std::vector<double>{1.0, 0.0});
    const TokenDistribution q(std::vector<double>{0.0, 0.0, 1.0});
    EXPECT_EQ(code_of([&] { (void)interpolate(p, q, 0.5); }), ErrorCode::VocabMismatch);
}

TEST(Interpolate, NormalizedAndBetweenInputs) {
    detail::SplitMix rng(8);
    for (int t = 0; t < 500; ++t) {
        std::vector<double> a(5), b(5);
        for (auto& x : a) x = rng.uniform();
        for (auto& x : b) x = rng.uniform();
        const double sa = std::accumulate(a.begin(), a.end(), 0.0);
        const double sb = std::accumulate(b.begin(), b.end(), 0.0);
        for (auto& x : a) x /= sa;
        for (auto& x : b) x /= sb;
        const double l = rng.uniform();
        const auto r = interpolate(TokenDistribution(a), TokenDistribution(b), l);
        EXPECT_NEAR(sum(r), 1.0, 1e-9);
        for (std::size_t v = 0; v < 5; ++v) {
            EXPECT_GE(r[v], std::min(a[v], b[v]));
            EXPECT_LE(r[v], std::max(a[v], b[v]));
        }
    }
}

TEST(DecodeConfig, ValidationNamesField) {
    DecodeConfig c;
    c.lambda = 1.5;
    try {
        c.validate();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
        EXPECT_NE(std::string(e.what()).find("lambda"), std::string::npos);
    }
    c = {};
    c.k = 0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.temperature = 0.0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.beam_width = 0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.max_len = 0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.length_penalty = -1.0;
    EXPECT_THROW(c.validate(), Error);
}

TEST(Decode, LambdaZeroIgnoresDatastore) {
    const auto m = make_toy_model(7, 8, 16);
    const auto corpus = make_synthetic_corpus(m, 1, 100, {3, 8});
    const auto mem = memory_for(m, corpus.pairs);
    const KnnRetriever r(mem.store, mem.index);
    DecodeConfig cfg;
    cfg.lambda = 0.0;
    cfg.max_len = 10;
    detail::SplitMix rng(3);
    for (int t = 0; t < 50; ++t) {
        const auto src = random_source(rng, 8);
        EXPECT_EQ(decode(m, src, cfg, &r), decode(m, src, cfg));
    }
}

TEST(Decode, MatchesExhaustiveSearch) {
    detail::SplitMix rng(10);
    for (int t = 0; t < 12; ++t) {
        const auto m = make_toy_model(rng.next(), 4, 6);
        const auto corpus = make_synthetic_corpus(m, rng.next(), 20, {2, 5});
        const auto mem = memory_for(m, corpus.pairs);
        const KnnRetriever r(mem.store, mem.index);
        const auto src = random_source(rng, 4);
        for (double lambda : {0.0, 0.5, 1.0}) {
            DecodeConfig cfg;
            cfg.lambda = lambda;
            cfg.k = 3;
            cfg.max_len = 5;
            cfg.beam_width = 1024;
            cfg.length_penalty = t % 2 == 0 ? 0.0 : 1.0;
            const auto got = decode(m, src, cfg, &r);
            const auto want = fixtures::exhaustive_decode(m, src, cfg, &r);
            EXPECT_EQ(got.tokens, want.tokens) << "case " << t << " lambda " << lambda;
            EXPECT_EQ(got.log_prob, want.log_prob);
        }
    }
}

TEST(Decode, RetrievalFlipsCorrectableChoice) {
    const auto m = make_toy_model(7, 8, 16);
    const TokenSequence src{0, 2, 4};
    const auto p = m.step(src, TokenSequence{}).p_model;
    std::vector<TokenId> order(8);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return p[a] > p[b]; });
    TokenId y = order[0];
    TokenId x = order[1];
    if (x == m.eos()) x = order[2];
    ASSERT_NE(x, m.eos());
    // Four gold examples at the same context put all kNN mass on x.
    std::vector<CorpusPair> corpus(4, CorpusPair{src, {x}});
    const auto mem = memory_for(m, corpus);
    const KnnRetriever r(mem.store, mem.index);
    DecodeConfig cfg;
    cfg.k = 4;
    cfg.lambda = 0.5;
    cfg.max_len = 1;
    const auto p_final = next_distribution(m, src, TokenSequence{}, cfg, &r);
    EXPECT_GT(p[y], p[x]);
    EXPECT_GT(p_final[x], p_final[y]);
    EXPECT_NEAR(p_final[x], 0.5 * p[x] + 0.5, 1e-12);
    EXPECT_EQ(decode(m, src, cfg, &r).tokens, TokenSequence{x});
    cfg.lambda = 0.0;
    EXPECT_EQ(decode(m, src, cfg, &r).tokens, TokenSequence{y});
}

TEST(Decode, GreedyIsBeamOneAndArgmaxChain) {
    const auto m = make_toy_model(21, 8, 16);
    detail::SplitMix rng(6);
    DecodeConfig cfg;
    cfg.lambda = 0.0;
    cfg.max_len = 12;
    for (int t = 0; t < 100; ++t) {
        const auto src = random_source(rng, 8);
        const auto g = greedy_decode(m, src, cfg);
        DecodeConfig one = cfg;
        one.beam_width = 1;
        EXPECT_EQ(g, decode(m, src, one));
        TokenSequence chain;
        while (chain.size() < cfg.max_len) {
            const auto p = m.step(src, chain).p_model;
            const auto v = static_cast<TokenId>(std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin());
            chain.push_back(v);
            if (v == m.eos()) break;
        }
        EXPECT_EQ(g.tokens, chain);
    }
}

TEST(Decode, PureLookupReplaysStoredContinuation) {
    const auto m = make_toy_model(7, 8, 16);
    const CorpusPair pair{{1, 3, 5}, {6, 2, 2, 0, 4, 1}};
    const auto mem = memory_for(m, {pair});
    const KnnRetriever r(mem.store, mem.index);
    DecodeConfig cfg;
    cfg.lambda = 1.0;
    cfg.k = 1;
    cfg.max_len = 20;
    TokenSequence want = pair.target;
    want.push_back(m.eos());
    EXPECT_EQ(greedy_decode(m, pair.source, cfg, &r).tokens, want);
    EXPECT_EQ(decode(m, pair.source, cfg, &r).tokens, want);
}

TEST(Decode, HypothesisInvariants) {
    const auto m = make_toy_model(2, 6, 8);
    const auto corpus = make_synthetic_corpus(m, 5, 50, {3, 6});
    const auto mem = memory_for(m, corpus.pairs);
    const KnnRetriever r(mem.store, mem.index);
    detail::SplitMix rng(1);
    DecodeConfig cfg;
    cfg.max_len = 7;
    for (int t = 0; t < 40; ++t) {
        const auto h = decode(m, random_source(rng, 6), cfg, &r);
        EXPECT_LE(h.log_prob, 0.0);
        EXPECT_TRUE(h.finished);
        EXPECT_FALSE(h.tokens.empty());
        EXPECT_LE(h.tokens.size(), cfg.max_len);
        EXPECT_TRUE(h.tokens.back() == m.eos() || h.tokens.size() == cfg.max_len);
        for (std::size_t i = 0; i + 1 < h.tokens.size(); ++i) EXPECT_NE(h.tokens[i], m.eos());
    }
}

TEST(Decode, InputValidation) {
    const auto m = make_toy_model(2, 6, 8);
    DecodeConfig cfg;
    const TokenSequence src{1};
    EXPECT_EQ(code_of([&] { (void)decode(m, src, cfg); }), ErrorCode::InvalidArgument);

    const Datastore empty(8, 6);
    const AnyIndex empty_index(FlatIndex(8));
    const KnnRetriever none(empty, empty_index);
    EXPECT_EQ(code_of([&] { (void)decode(m, src, cfg, &none); }), ErrorCode::EmptyDatastore);

    const auto other = make_toy_model(2, 6, 4);
    const auto mem = memory_for(other, {CorpusPair{{1}, {2}}});
    const KnnRetriever wrong_dim(mem.store, mem.index);
    EXPECT_EQ(code_of([&] { (void)decode(m, src, cfg, &wrong_dim); }), ErrorCode::DimensionMismatch);

    const auto wide = make_toy_model(2, 7, 8);
    const auto mem2 = memory_for(wide, {CorpusPair{{1}, {2}}});
    const KnnRetriever wrong_vocab(mem2.store, mem2.index);
    EXPECT_EQ(code_of([&] { (void)decode(m, src, cfg, &wrong_vocab); }), ErrorCode::VocabMismatch);
}

TEST(Decode, IvfRetrieverRuns) {
    const auto m = make_toy_model(7, 8, 16);
    const auto corpus = make_synthetic_corpus(m, 1, 200, {3, 8});
    const auto store = build_datastore(m, corpus.pairs);
    const auto entries = store.index_entries();
    const AnyIndex ivf(train_ivf(entries, 16, 5, 1));
    const AnyIndex flat(store.build_flat_index());
    const KnnRetriever full(store, ivf, 16);
    const KnnRetriever exact(store, flat);
    DecodeConfig cfg;
    cfg.max_len = 8;
    for (const auto& p : std::span(corpus.pairs).first(20)) {
        EXPECT_EQ(decode(m, p.source, cfg, &full), decode(m, p.source, cfg, &exact));
    }
}

TEST(StripEos, RemovesOnlyTrailingEos) {
    Hypothesis h;
    h.tokens = {1, 2, 7};
    EXPECT_EQ(strip_eos(h, 7), (TokenSequence{1, 2}));
    h.tokens = {1, 2};
    EXPECT_EQ(strip_eos(h, 7), (TokenSequence{1, 2}));
}
