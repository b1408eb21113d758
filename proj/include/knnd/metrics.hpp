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

// Edit-distance scoring (CER/TER) with a substitution/deletion/insertion
// breakdown, and cosine similarity.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "knnd/error.hpp"

namespace knnd {

struct EditStats {
    std::size_t substitutions = 0;
    std::size_t deletions = 0;
    std::size_t insertions = 0;
    std::size_t ref_len = 0;

    std::size_t errors() const noexcept { return substitutions + deletions + insertions; }

    /// (S + D + I) / ref_len; may exceed 1 when insertions dominate.
    double cer() const noexcept {
        return ref_len == 0 ? 0.0 : static_cast<double>(errors()) / static_cast<double>(ref_len);
    }
    double rate(std::size_t count) const noexcept {
        return ref_len == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(ref_len);
    }

    EditStats& operator+=(const EditStats& o) noexcept {
        substitutions += o.substitutions;
        deletions += o.deletions;
        insertions += o.insertions;
        ref_len += o.ref_len;
        return *this;
    }

    friend bool operator==(const EditStats&, const EditStats&) = default;
};

namespace detail {

// Alignment cost ordered lexicographically: total edits, then insertions,
// then deletions. The order is translation-invariant, so the DP below yields
// the lexicographically smallest alignment.
struct AlignCost {
    std::size_t total = 0;
    std::size_t ins = 0;
    std::size_t del = 0;

    auto operator<=>(const AlignCost&) const = default;
};

template <class T>
EditStats align(std::span<const T> ref, std::span<const T> hyp) {
    const std::size_t n = ref.size();
    const std::size_t m = hyp.size();
    std::vector<AlignCost> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = {j, j, 0};
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = {i, 0, i};
        for (std::size_t j = 1; j <= m; ++j) {
            const bool same = ref[i - 1] == hyp[j - 1];
            AlignCost diag = prev[j - 1];
            if (!same) ++diag.total;
            AlignCost del = prev[j];
            ++del.total;
            ++del.del;
            AlignCost ins = cur[j - 1];
            ++ins.total;
            ++ins.ins;
            cur[j] = std::min({diag, del, ins});
        }
        std::swap(prev, cur);
    }
    const AlignCost& best = prev[m];
    EditStats s;
    s.insertions = best.ins;
    s.deletions = best.del;
    s.substitutions = best.total - best.ins - best.del;
    s.ref_len = n;
    return s;
}

} // namespace detail

/// Unit-cost Levenshtein alignment. Among minimal alignments the one with the
/// fewest insertions, then fewest deletions, is reported.
template <class T>
EditStats edit_stats(std::span<const T> reference, std::span<const T> hypothesis) {
    if (reference.empty()) fail(ErrorCode::EmptyReference, "CER is undefined for an empty reference");
    return detail::align(reference, hypothesis);
}

template <class T>
EditStats edit_stats(const std::vector<T>& reference, const std::vector<T>& hypothesis) {
    return edit_stats(std::span<const T>(reference), std::span<const T>(hypothesis));
}

inline EditStats edit_stats(std::string_view reference, std::string_view hypothesis) {
    return edit_stats(std::span<const char>(reference.data(), reference.size()),
                      std::span<const char>(hypothesis.data(), hypothesis.size()));
}

/// Micro-averaged statistics: counts are pooled over all pairs before dividing.
/// Pairs with an empty reference contribute their insertions.
template <class T>
EditStats corpus_cer(std::span<const std::pair<std::vector<T>, std::vector<T>>> pairs) {
    EditStats total;
    for (const auto& [ref, hyp] : pairs) {
        total += detail::align(std::span<const T>(ref), std::span<const T>(hyp));
    }
    if (total.ref_len == 0) fail(ErrorCode::EmptyCorpus, "no reference symbols in corpus");
    return total;
}

template <class T>
EditStats corpus_cer(const std::vector<std::pair<std::vector<T>, std::vector<T>>>& pairs) {
    return corpus_cer(std::span<const std::pair<std::vector<T>, std::vector<T>>>(pairs));
}

inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        fail(ErrorCode::DimensionMismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        const double y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) fail(ErrorCode::ZeroVector, "cosine similarity of a zero vector");
    const double c = dot / std::sqrt(na * nb);
    return std::clamp(c, -1.0, 1.0);
}

} // namespace knnd
