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

// Deterministic encoder-decoder stand-in small enough for exhaustive checks.
//
// Vocabulary: tokens 0 .. V-2 are content tokens, V-1 is EOS. The decoder
// sees its context through a fixed featurization of length V + 2(V+1):
//
//   [0, V)              relative frequency of each token in the source
//   [V, 2V+1)           one-hot of the last prefix token (slot V = padding)
//   [2V+1, 3V+2)        one-hot of the second-to-last prefix token
//
// with the two one-hot blocks scaled by `prefix_weight`. The hidden state is
// `projection * features` (state_dim x feature_dim, seeded standard normals,
// accumulated in double, stored as float).
//
// Logits for the context (a, b) = (second-to-last, last) are
//
//   z[v] = context_scale * C[a,b][v] + source_scale * count(v in source)
//          + (v == EOS ? eos_bias : 0)
//
// where the row C[a,b] is V standard normals drawn from a stream seeded by
// hashing (seed, a, b). p_model = softmax(z). The source term makes tokens
// heard in the input likely in the output, so targets vary with the source.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "knnd/detail/random.hpp"
#include "knnd/error.hpp"
#include "knnd/types.hpp"

namespace knnd {

struct ToyModelOptions {
    double context_scale = 3.0;
    double source_scale = 3.0;
    double eos_bias = 0.0;
    float prefix_weight = 2.0f;
};

class TabularToyModel {
public:
    TabularToyModel(std::uint64_t seed, std::uint32_t vocab_size, std::uint32_t state_dim,
                    ToyModelOptions options = {})
        : seed_(seed), vocab_(vocab_size), state_dim_(state_dim), options_(options) {
        if (vocab_size < 3) fail(ErrorCode::InvalidSize, "vocab_size must be at least 3");
        if (state_dim < 2) fail(ErrorCode::InvalidSize, "state_dim must be at least 2");
        const std::size_t fdim = feature_dim();
        projection_.resize(static_cast<std::size_t>(state_dim_) * fdim);
        detail::SplitMix proj_rng(detail::fnv1a_u64(seed_, detail::fnv1a("projection")));
        for (auto& w : projection_) w = static_cast<float>(proj_rng.gaussian());

        const std::size_t slots = vocab_ + 1;
        tables_.resize(slots * slots * vocab_);
        for (std::size_t a = 0; a < slots; ++a) {
            for (std::size_t b = 0; b < slots; ++b) {
                detail::SplitMix rng(context_hash(a, b));
                double* t = tables_.data() + (a * slots + b) * vocab_;
                for (std::size_t v = 0; v < vocab_; ++v) t[v] = rng.gaussian();
            }
        }
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint32_t vocab_size() const noexcept { return vocab_; }
    std::uint32_t state_dim() const noexcept { return state_dim_; }
    TokenId eos() const noexcept { return vocab_ - 1; }
    const ToyModelOptions& options() const noexcept { return options_; }

    std::size_t feature_dim() const noexcept { return vocab_ + 2 * (static_cast<std::size_t>(vocab_) + 1); }

    /// Padding slot used in the prefix one-hots before the sequence start.
    std::uint32_t pad_slot() const noexcept { return vocab_; }

    std::span<const float> projection() const noexcept { return projection_; }

    std::vector<double> features(std::span<const TokenId> source, std::span<const TokenId> prefix) const {
        check_tokens(source, "source");
        check_tokens(prefix, "prefix");
        std::vector<double> f(feature_dim(), 0.0);
        if (!source.empty()) {
            const double inv = 1.0 / static_cast<double>(source.size());
            for (TokenId t : source) f[t] += inv;
        }
        const auto [a, b] = last_two(prefix);
        f[vocab_ + b] = options_.prefix_weight;
        f[2 * vocab_ + 1 + a] = options_.prefix_weight;
        return f;
    }

    std::vector<double> logits(std::span<const TokenId> source, std::span<const TokenId> prefix) const {
        check_tokens(source, "source");
        check_tokens(prefix, "prefix");
        const auto [a, b] = last_two(prefix);
        const double* t = tables_.data() + (a * (vocab_ + 1) + b) * vocab_;
        std::vector<double> z(vocab_);
        for (std::size_t v = 0; v < vocab_; ++v) z[v] = options_.context_scale * t[v];
        for (TokenId s : source) z[s] += options_.source_scale;
        z[eos()] += options_.eos_bias;
        return z;
    }

    StepOutput step(std::span<const TokenId> source, std::span<const TokenId> prefix) const {
        const auto f = features(source, prefix);
        StepOutput out;
        out.hidden.resize(state_dim_);
        const std::size_t fdim = f.size();
        for (std::size_t d = 0; d < state_dim_; ++d) {
            double acc = 0.0;
            const float* w = projection_.data() + d * fdim;
            for (std::size_t j = 0; j < fdim; ++j) {
                if (f[j] != 0.0) acc += static_cast<double>(w[j]) * f[j];
            }
            out.hidden[d] = static_cast<float>(acc);
        }
        out.p_model = softmax(logits(source, prefix));
        return out;
    }

    static TokenDistribution softmax(std::span<const double> z) {
        const double hi = *std::max_element(z.begin(), z.end());
        std::vector<double> p(z.size());
        double total = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            p[i] = std::exp(z[i] - hi);
            total += p[i];
        }
        for (auto& x : p) x /= total;
        return TokenDistribution(std::move(p));
    }

    /// (second-to-last, last) prefix tokens, padded with pad_slot().
    std::pair<std::uint32_t, std::uint32_t> last_two(std::span<const TokenId> prefix) const noexcept {
        const std::size_t n = prefix.size();
        const std::uint32_t b = n >= 1 ? prefix[n - 1] : pad_slot();
        const std::uint32_t a = n >= 2 ? prefix[n - 2] : pad_slot();
        return {a, b};
    }

private:
    std::uint64_t context_hash(std::size_t a, std::size_t b) const noexcept {
        std::uint64_t h = detail::fnv1a_u64(seed_, detail::fnv1a("context"));
        h = detail::fnv1a_u32(static_cast<std::uint32_t>(a), h);
        return detail::fnv1a_u32(static_cast<std::uint32_t>(b), h);
    }

    void check_tokens(std::span<const TokenId> tokens, const char* what) const {
        for (TokenId t : tokens) {
            if (t >= vocab_) {
                fail(ErrorCode::TokenOutOfVocab, std::string(what) + " token " + std::to_string(t) +
                                                     " >= vocab_size " + std::to_string(vocab_));
            }
        }
    }

    std::uint64_t seed_;
    std::uint32_t vocab_;
    std::uint32_t state_dim_;
    ToyModelOptions options_;
    std::vector<float> projection_;
    std::vector<double> tables_;
};

static_assert(DecoderModel<TabularToyModel>);

inline TabularToyModel make_toy_model(std::uint64_t seed, std::uint32_t vocab_size,
                                      std::uint32_t state_dim, ToyModelOptions options = {}) {
    return TabularToyModel(seed, vocab_size, state_dim, options);
}

struct LengthRange {
    std::size_t min = 3;
    std::size_t max = 8;
};

struct CorpusOptions {
    /// Probability that a (previous token, model argmax) pair is rewritten by the domain.
    double rare_rate = 0.2;
    /// Source lengths; defaults to the target range when unset (min == 0).
    LengthRange source_len{0, 0};
};

struct SyntheticCorpus {
    std::vector<CorpusPair> pairs;
    std::size_t rare_positions = 0;
    std::size_t total_positions = 0;

    double rare_fraction() const noexcept {
        return total_positions == 0 ? 0.0
                                    : static_cast<double>(rare_positions) / static_cast<double>(total_positions);
    }
};

/// Domain rule shared by every corpus drawn for one model: after the prefix
/// tokens (a, b), when the model's favourite content token is `best`, the
/// domain says `rewrite` instead. Each (a, b, best) triple is selected
/// independently with probability `rate`, so the rule is fixed per model and
/// identical across corpus seeds. The rewrite is a content token other than `best`.
struct DomainRule {
    std::uint64_t model_seed;
    std::uint32_t vocab_size;
    double rate;

    std::uint64_t key(std::uint32_t a, std::uint32_t b, TokenId best) const noexcept {
        std::uint64_t h = detail::fnv1a_u64(model_seed, detail::fnv1a("domain"));
        h = detail::fnv1a_u32(a, h);
        h = detail::fnv1a_u32(b, h);
        return detail::splitmix64(detail::fnv1a_u32(best, h));
    }

    bool fires(std::uint32_t a, std::uint32_t b, TokenId best) const noexcept {
        return static_cast<double>(key(a, b, best) >> 11) * 0x1.0p-53 < rate;
    }

    TokenId rewrite(std::uint32_t a, std::uint32_t b, TokenId best) const noexcept {
        const std::uint32_t content = vocab_size - 1;
        detail::SplitMix rng(key(a, b, best) ^ 0x5bd1e995ULL);
        const auto r = static_cast<TokenId>(rng.below(content - 1));
        return r >= best ? r + 1 : r;
    }
};

/// Seeded synthetic corpus. Sources are uniform content tokens. Each target
/// follows the model's greedy choice: it stops where the model prefers EOS
/// (never before `len.min` tokens, always at `len.max`), and otherwise takes
/// the best content token unless the domain rule rewrites it. The rewrites are
/// the rare patterns a datastore can learn and the bare model cannot.
inline SyntheticCorpus make_synthetic_corpus(const TabularToyModel& model, std::uint64_t seed,
                                             std::size_t n_pairs, LengthRange len,
                                             CorpusOptions options = {}) {
    if (n_pairs == 0) fail(ErrorCode::InvalidArgument, "n_pairs must be at least 1");
    if (len.min == 0 || len.min > len.max) fail(ErrorCode::InvalidArgument, "invalid length range");
    LengthRange src_len = options.source_len.min == 0 ? len : options.source_len;
    if (src_len.min > src_len.max) fail(ErrorCode::InvalidArgument, "invalid source length range");

    const std::uint32_t content = model.vocab_size() - 1;
    const DomainRule rule{model.seed(), model.vocab_size(), options.rare_rate};
    detail::SplitMix rng(detail::fnv1a_u64(seed, detail::fnv1a("corpus")));

    SyntheticCorpus corpus;
    corpus.pairs.reserve(n_pairs);
    for (std::size_t p = 0; p < n_pairs; ++p) {
        CorpusPair pair;
        const std::size_t slen = src_len.min + rng.below(src_len.max - src_len.min + 1);
        for (std::size_t i = 0; i < slen; ++i) pair.source.push_back(static_cast<TokenId>(rng.below(content)));
        while (pair.target.size() < len.max) {
            const auto z = model.logits(pair.source, pair.target);
            TokenId best = 0;
            for (TokenId v = 1; v < content; ++v) {
                if (z[v] > z[best]) best = v;
            }
            if (pair.target.size() >= len.min && z[model.eos()] > z[best]) break;
            const auto [a, b] = model.last_two(pair.target);
            if (rule.fires(a, b, best)) {
                pair.target.push_back(rule.rewrite(a, b, best));
                ++corpus.rare_positions;
            } else {
                pair.target.push_back(best);
            }
            ++corpus.total_positions;
        }
        corpus.pairs.push_back(std::move(pair));
    }
    return corpus;
}

} // namespace knnd
