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

#pragma once

// Beam search with per-step nearest-neighbor retrieval.
//
// At every step the decoder's hidden state queries the datastore; the k hits
// become a distribution over their stored tokens,
//
//   p_knn(v) = sum_{i : token_i = v} exp(-d_i / tau) / sum_j exp(-d_j / tau),
//
// which is mixed with the model's own distribution in probability space:
//
//   p_final = (1 - lambda) * p_model + lambda * p_knn.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "knnd/datastore.hpp"
#include "knnd/error.hpp"
#include "knnd/index_io.hpp"
#include "knnd/types.hpp"

namespace knnd {

struct DecodeConfig {
    double lambda = 0.5;
    std::size_t k = 8;
    double temperature = 1.0;
    std::size_t beam_width = 5;
    std::size_t max_len = 32;
    double length_penalty = 0.0;

    /// Throws InvalidArgument naming the first out-of-range field.
    void validate() const {
        auto bad = [](const char* field, const std::string& why) {
            fail(ErrorCode::InvalidArgument, std::string(field) + " " + why);
        };
        if (!(lambda >= 0.0 && lambda <= 1.0)) bad("lambda", "must lie in [0, 1]");
        if (k == 0) bad("k", "must be at least 1");
        if (!(temperature > 0.0) || !std::isfinite(temperature)) bad("temperature", "must be positive");
        if (beam_width == 0) bad("beam_width", "must be at least 1");
        if (max_len == 0) bad("max_len", "must be at least 1");
        if (!(length_penalty >= 0.0) || !std::isfinite(length_penalty)) bad("length_penalty", "must be >= 0");
    }

    friend bool operator==(const DecodeConfig&, const DecodeConfig&) = default;
};

inline constexpr double kProbFloor = 1e-12;

struct Hypothesis {
    TokenSequence tokens;
    double log_prob = 0.0;
    bool finished = false;

    /// log_prob / |tokens|^length_penalty
    double score(double length_penalty) const noexcept {
        if (length_penalty == 0.0 || tokens.empty()) return log_prob;
        return log_prob / std::pow(static_cast<double>(tokens.size()), length_penalty);
    }

    friend bool operator==(const Hypothesis&, const Hypothesis&) = default;
};

/// A datastore value together with its distance to the query.
struct RetrievedToken {
    TokenId token = 0;
    double distance = 0.0;
};

inline TokenDistribution knn_distribution(std::span<const RetrievedToken> neighbors, double temperature,
                                          std::uint32_t vocab_size) {
    if (neighbors.empty()) fail(ErrorCode::EmptyNeighborSet, "no neighbors to form a distribution");
    if (!(temperature > 0.0)) fail(ErrorCode::InvalidArgument, "temperature must be positive");
    // Shifting by the smallest distance leaves the normalized weights unchanged
    // and keeps the nearest weight at exactly 1.
    double nearest = neighbors.front().distance;
    for (const auto& n : neighbors) {
        if (!(n.distance >= 0.0)) fail(ErrorCode::InvalidArgument, "negative neighbor distance");
        if (n.token >= vocab_size) fail(ErrorCode::TokenOutOfVocab, "neighbor token " + std::to_string(n.token));
        nearest = std::min(nearest, n.distance);
    }
    TokenDistribution p(vocab_size);
    double total = 0.0;
    for (const auto& n : neighbors) {
        const double w = std::exp(-(n.distance - nearest) / temperature);
        p[n.token] += w;
        total += w;
    }
    for (auto& x : p.probs) x /= total;
    return p;
}

inline TokenDistribution interpolate(const TokenDistribution& p_model, const TokenDistribution& p_knn,
                                     double lambda) {
    if (p_model.size() != p_knn.size()) {
        fail(ErrorCode::VocabMismatch, std::to_string(p_model.size()) + " vs " + std::to_string(p_knn.size()));
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorCode::InvalidArgument, "lambda must lie in [0, 1]");
    if (lambda == 0.0) return p_model;
    if (lambda == 1.0) return p_knn;
    TokenDistribution out(p_model.size());
    for (std::size_t v = 0; v < out.size(); ++v) out[v] = (1.0 - lambda) * p_model[v] + lambda * p_knn[v];
    return out;
}

/// Read-only view pairing a datastore with an index over its keys (index ids
/// are datastore positions). Safe to share across concurrent decodes.
class KnnRetriever {
public:
    KnnRetriever(const Datastore& store, const AnyIndex& index, std::size_t n_probe = 0)
        : store_(&store), index_(&index), n_probe_(n_probe) {
        if (index_dim(index) != store.dim()) {
            fail(ErrorCode::DimensionMismatch, "index dim " + std::to_string(index_dim(index)) +
                                                   " vs datastore dim " + std::to_string(store.dim()));
        }
        if (index_size(index) != store.size()) {
            fail(ErrorCode::InvalidArgument, "index does not cover the datastore");
        }
    }

    const Datastore& datastore() const noexcept { return *store_; }

    std::vector<RetrievedToken> neighbors(std::span<const float> hidden, std::size_t k) const {
        const auto hits = search(*index_, hidden, k, n_probe_);
        std::vector<RetrievedToken> out;
        out.reserve(hits.size());
        for (const auto& h : hits) {
            if (h.id >= store_->size()) fail(ErrorCode::InvalidArgument, "index id outside datastore");
            out.push_back({store_->value(static_cast<std::size_t>(h.id)), h.distance});
        }
        return out;
    }

private:
    const Datastore* store_;
    const AnyIndex* index_;
    std::size_t n_probe_;
};

namespace detail {

template <DecoderModel Model>
void check_decode_inputs(const Model& model, const DecodeConfig& cfg, const KnnRetriever* retriever) {
    cfg.validate();
    if (cfg.lambda == 0.0) return;
    if (retriever == nullptr) fail(ErrorCode::InvalidArgument, "lambda > 0 requires a datastore");
    const auto& store = retriever->datastore();
    if (store.empty()) fail(ErrorCode::EmptyDatastore, "lambda > 0 with an empty datastore");
    if (store.dim() != model.state_dim()) {
        fail(ErrorCode::DimensionMismatch, "datastore dim " + std::to_string(store.dim()) +
                                               " vs model state_dim " + std::to_string(model.state_dim()));
    }
    if (store.vocab_size() != model.vocab_size()) {
        fail(ErrorCode::VocabMismatch, "datastore vocab " + std::to_string(store.vocab_size()) +
                                           " vs model vocab " + std::to_string(model.vocab_size()));
    }
}

} // namespace detail

/// The per-step scoring distribution used by `decode`. Retrieval is skipped
/// entirely when lambda is 0, so that case is the bare model.
template <DecoderModel Model>
TokenDistribution next_distribution(const Model& model, std::span<const TokenId> source,
                                    std::span<const TokenId> prefix, const DecodeConfig& cfg,
                                    const KnnRetriever* retriever) {
    auto out = model.step(source, prefix);
    if (cfg.lambda == 0.0 || retriever == nullptr) return std::move(out.p_model);
    const auto hits = retriever->neighbors(out.hidden, cfg.k);
    if (hits.empty()) return std::move(out.p_model);
    const auto p_knn = knn_distribution(hits, cfg.temperature, model.vocab_size());
    return interpolate(out.p_model, p_knn, cfg.lambda);
}

namespace detail {

struct ScoreOrder {
    double length_penalty;
    bool operator()(const Hypothesis& a, const Hypothesis& b) const {
        const double sa = a.score(length_penalty);
        const double sb = b.score(length_penalty);
        if (sa != sb) return sa > sb;
        return a.tokens < b.tokens;
    }
};

} // namespace detail

/// Width-`beam_width` beam search. Each live hypothesis proposes its
/// `beam_width` most probable continuations (ties to the lower token id); the
/// pooled candidates are cut to the best `beam_width` by length-normalized
/// score (ties to the lexicographically smaller sequence). A candidate
/// finishes on EOS or on reaching `max_len` tokens and is never extended again.
template <DecoderModel Model>
Hypothesis decode(const Model& model, std::span<const TokenId> source, const DecodeConfig& cfg,
                  const KnnRetriever* retriever = nullptr) {
    detail::check_decode_inputs(model, cfg, retriever);
    const TokenId eos = model.eos();
    const detail::ScoreOrder order{cfg.length_penalty};

    std::vector<Hypothesis> live{Hypothesis{}};
    std::vector<Hypothesis> finished;
    std::vector<Hypothesis> candidates;
    std::vector<TokenId> ranked(model.vocab_size());

    for (std::size_t len = 1; len <= cfg.max_len && !live.empty(); ++len) {
        candidates.clear();
        for (const auto& h : live) {
            const auto p = next_distribution(model, source, h.tokens, cfg, retriever);
            for (TokenId v = 0; v < ranked.size(); ++v) ranked[v] = v;
            const std::size_t take = std::min(cfg.beam_width, ranked.size());
            std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end(),
                              [&p](TokenId a, TokenId b) { return p[a] != p[b] ? p[a] > p[b] : a < b; });
            for (std::size_t i = 0; i < take; ++i) {
                const TokenId v = ranked[i];
                Hypothesis child;
                child.tokens.reserve(h.tokens.size() + 1);
                child.tokens = h.tokens;
                child.tokens.push_back(v);
                child.log_prob = h.log_prob + std::log(std::max(p[v], kProbFloor));
                child.finished = v == eos || len == cfg.max_len;
                candidates.push_back(std::move(child));
            }
        }
        const std::size_t keep = std::min(cfg.beam_width, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                          candidates.end(), order);
        live.clear();
        for (std::size_t i = 0; i < keep; ++i) {
            (candidates[i].finished ? finished : live).push_back(std::move(candidates[i]));
        }
    }

    const auto& pool = finished.empty() ? live : finished;
    return *std::min_element(pool.begin(), pool.end(), order);
}

template <DecoderModel Model>
Hypothesis greedy_decode(const Model& model, std::span<const TokenId> source, DecodeConfig cfg,
                         const KnnRetriever* retriever = nullptr) {
    cfg.beam_width = 1;
    return decode(model, source, cfg, retriever);
}

/// Decoded tokens with a trailing EOS removed.
inline TokenSequence strip_eos(const Hypothesis& h, TokenId eos) {
    TokenSequence out = h.tokens;
    if (!out.empty() && out.back() == eos) out.pop_back();
    return out;
}

} // namespace knnd
