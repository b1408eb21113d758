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

#include <concepts>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "knnd/ann_index.hpp"

namespace knnd {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

/// Probability vector over a vocabulary.
struct TokenDistribution {
    std::vector<double> probs;

    TokenDistribution() = default;
    explicit TokenDistribution(std::size_t vocab_size) : probs(vocab_size, 0.0) {}
    explicit TokenDistribution(std::vector<double> p) : probs(std::move(p)) {}

    std::size_t size() const noexcept { return probs.size(); }
    double operator[](std::size_t i) const noexcept { return probs[i]; }
    double& operator[](std::size_t i) noexcept { return probs[i]; }

    double sum() const noexcept { return std::accumulate(probs.begin(), probs.end(), 0.0); }

    friend bool operator==(const TokenDistribution&, const TokenDistribution&) = default;
};

/// What a decoder hands back for one (source, prefix) context: the pre-logits
/// hidden state and the model's next-token distribution.
struct StepOutput {
    Vector hidden;
    TokenDistribution p_model;
};

/// One training or test utterance: encoder input and reference transcript.
/// Neither sequence carries a trailing EOS; teacher forcing appends it.
struct CorpusPair {
    TokenSequence source;
    TokenSequence target;

    friend bool operator==(const CorpusPair&, const CorpusPair&) = default;
};

/// Anything that can drive teacher forcing and beam search. step() must be a
/// pure function of its arguments.
template <class M>
concept DecoderModel = requires(const M& m, std::span<const TokenId> tokens) {
    { m.vocab_size() } -> std::convertible_to<std::uint32_t>;
    { m.state_dim() } -> std::convertible_to<std::uint32_t>;
    { m.eos() } -> std::convertible_to<TokenId>;
    { m.step(tokens, tokens) } -> std::same_as<StepOutput>;
};

} // namespace knnd
