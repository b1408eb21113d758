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

// Exact (flat) and inverted-file (IVF) nearest-neighbor search over
// fixed-dimension float vectors.
//
// Vectors are stored as 32-bit floats; distances are accumulated in double.
// Results are always totally ordered: closest first (smallest squared L2, or
// largest inner product), ties broken by increasing id.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "knnd/detail/random.hpp"
#include "knnd/error.hpp"

namespace knnd {

using Vector = std::vector<float>;

enum class Metric : std::uint32_t { SquaredL2 = 0, InnerProduct = 1 };

/// One search hit. `distance` holds the squared L2 distance, or the inner
/// product score when the index uses Metric::InnerProduct.
struct Neighbor {
    std::uint64_t id = 0;
    double distance = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct IndexEntry {
    std::uint64_t id = 0;
    Vector vector;
};

namespace detail {

inline double squared_l2(std::span<const float> a, std::span<const float> b) noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

inline double inner_product(std::span<const float> a, std::span<const float> b) noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

inline double measure(Metric metric, std::span<const float> a, std::span<const float> b) noexcept {
    return metric == Metric::SquaredL2 ? squared_l2(a, b) : inner_product(a, b);
}

/// True when a hit with value `a` ranks strictly ahead of one with value `b`.
constexpr bool closer(Metric metric, double a, double b) noexcept {
    return metric == Metric::SquaredL2 ? a < b : a > b;
}

struct NeighborOrder {
    Metric metric;
    bool operator()(const Neighbor& x, const Neighbor& y) const noexcept {
        if (x.distance != y.distance) return closer(metric, x.distance, y.distance);
        return x.id < y.id;
    }
};

/// Keeps the best `k` of `hits` in rank order.
inline void keep_top_k(Metric metric, std::vector<Neighbor>& hits, std::size_t k) {
    const std::size_t n = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(),
                      NeighborOrder{metric});
    hits.resize(n);
}

inline void check_vector(std::span<const float> v, std::uint32_t dim, const char* what) {
    if (v.size() != dim) {
        fail(ErrorCode::DimensionMismatch, std::string(what) + " has length " +
                                               std::to_string(v.size()) + ", expected " +
                                               std::to_string(dim));
    }
    for (float x : v) {
        if (!std::isfinite(x)) fail(ErrorCode::InvalidArgument, std::string(what) + " is not finite");
    }
}

inline void check_k(std::size_t k) {
    if (k == 0) fail(ErrorCode::InvalidArgument, "k must be at least 1");
}

} // namespace detail

/// Exhaustive index. Immutable once built except through `add`, which the
/// caller must not run concurrently with searches.
class FlatIndex {
public:
    explicit FlatIndex(std::uint32_t dim, Metric metric = Metric::SquaredL2)
        : dim_(dim), metric_(metric) {
        if (dim == 0) fail(ErrorCode::InvalidSize, "index dimension must be positive");
    }

    void add(std::uint64_t id, std::span<const float> v) {
        detail::check_vector(v, dim_, "vector");
        if (!seen_.insert(id).second) fail(ErrorCode::DuplicateId, "id " + std::to_string(id));
        ids_.push_back(id);
        data_.insert(data_.end(), v.begin(), v.end());
    }

    std::vector<Neighbor> search(std::span<const float> query, std::size_t k) const {
        detail::check_vector(query, dim_, "query");
        detail::check_k(k);
        std::vector<Neighbor> hits;
        hits.reserve(ids_.size());
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            hits.push_back({ids_[i], detail::measure(metric_, query, vector(i))});
        }
        detail::keep_top_k(metric_, hits, k);
        return hits;
    }

    std::uint32_t dim() const noexcept { return dim_; }
    Metric metric() const noexcept { return metric_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    bool contains(std::uint64_t id) const { return seen_.contains(id); }

    std::span<const std::uint64_t> ids() const noexcept { return ids_; }
    /// Row-major payload: entry i occupies [i*dim, (i+1)*dim).
    std::span<const float> data() const noexcept { return data_; }
    std::span<const float> vector(std::size_t i) const noexcept {
        return std::span<const float>(data_).subspan(i * dim_, dim_);
    }

    friend bool operator==(const FlatIndex& a, const FlatIndex& b) {
        return a.dim_ == b.dim_ && a.metric_ == b.metric_ && a.ids_ == b.ids_ && a.data_ == b.data_;
    }

private:
    std::uint32_t dim_;
    Metric metric_;
    std::vector<std::uint64_t> ids_;
    std::vector<float> data_;
    std::unordered_set<std::uint64_t> seen_;
};

inline FlatIndex build_flat(std::uint32_t dim, std::span<const IndexEntry> entries,
                            Metric metric = Metric::SquaredL2) {
    FlatIndex index(dim, metric);
    for (const auto& e : entries) index.add(e.id, e.vector);
    return index;
}

struct InvertedList {
    std::vector<std::uint64_t> ids;
    std::vector<float> data;

    std::size_t size() const noexcept { return ids.size(); }
    friend bool operator==(const InvertedList&, const InvertedList&) = default;
};

/// Inverted-file index: a k-means coarse quantizer plus one list per centroid.
/// Every entry lives in the list of its nearest centroid (lowest cluster id on ties).
class IvfIndex {
public:
    IvfIndex(std::uint32_t dim, Metric metric, std::uint64_t seed, std::vector<float> centroids,
             std::vector<InvertedList> lists)
        : dim_(dim), metric_(metric), seed_(seed), centroids_(std::move(centroids)),
          lists_(std::move(lists)) {
        if (dim_ == 0) fail(ErrorCode::InvalidSize, "index dimension must be positive");
        if (lists_.empty() || centroids_.size() != lists_.size() * dim_) {
            fail(ErrorCode::InvalidSize, "centroid table does not match list count");
        }
        for (const auto& l : lists_) {
            if (l.data.size() != l.ids.size() * dim_) {
                fail(ErrorCode::InvalidSize, "inverted list payload does not match its ids");
            }
        }
    }

    std::uint32_t dim() const noexcept { return dim_; }
    Metric metric() const noexcept { return metric_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t n_clusters() const noexcept { return lists_.size(); }
    std::span<const float> centroids() const noexcept { return centroids_; }
    std::span<const float> centroid(std::size_t c) const noexcept {
        return std::span<const float>(centroids_).subspan(c * dim_, dim_);
    }
    const InvertedList& list(std::size_t c) const noexcept { return lists_[c]; }
    const std::vector<InvertedList>& lists() const noexcept { return lists_; }

    std::size_t size() const noexcept {
        std::size_t n = 0;
        for (const auto& l : lists_) n += l.size();
        return n;
    }

    /// Clusters ordered by centroid proximity to `v`; ties by lower cluster id.
    std::vector<std::size_t> rank_clusters(std::span<const float> v) const {
        std::vector<Neighbor> scored;
        scored.reserve(lists_.size());
        for (std::size_t c = 0; c < lists_.size(); ++c) {
            scored.push_back({c, detail::measure(metric_, v, centroid(c))});
        }
        std::sort(scored.begin(), scored.end(), detail::NeighborOrder{metric_});
        std::vector<std::size_t> order;
        order.reserve(scored.size());
        for (const auto& s : scored) order.push_back(static_cast<std::size_t>(s.id));
        return order;
    }

    std::vector<Neighbor> search(std::span<const float> query, std::size_t k,
                                 std::size_t n_probe) const {
        detail::check_vector(query, dim_, "query");
        detail::check_k(k);
        if (n_probe == 0 || n_probe > lists_.size()) {
            fail(ErrorCode::InvalidProbeCount, "n_probe " + std::to_string(n_probe) + " not in [1, " +
                                                   std::to_string(lists_.size()) + "]");
        }
        const auto order = rank_clusters(query);
        std::vector<Neighbor> hits;
        for (std::size_t p = 0; p < n_probe; ++p) {
            const auto& l = lists_[order[p]];
            for (std::size_t i = 0; i < l.ids.size(); ++i) {
                const std::span<const float> v(l.data.data() + i * dim_, dim_);
                hits.push_back({l.ids[i], detail::measure(metric_, query, v)});
            }
        }
        detail::keep_top_k(metric_, hits, k);
        return hits;
    }

    friend bool operator==(const IvfIndex&, const IvfIndex&) = default;

private:
    std::uint32_t dim_;
    Metric metric_;
    std::uint64_t seed_;
    std::vector<float> centroids_;
    std::vector<InvertedList> lists_;
};

namespace detail {

inline std::size_t nearest_centroid(Metric metric, std::span<const float> v,
                                    std::span<const float> centroids, std::uint32_t dim,
                                    double* value = nullptr) {
    const std::size_t n = centroids.size() / dim;
    std::size_t best = 0;
    double best_value = measure(metric, v, centroids.subspan(0, dim));
    for (std::size_t c = 1; c < n; ++c) {
        const double d = measure(metric, v, centroids.subspan(c * dim, dim));
        if (closer(metric, d, best_value)) {
            best = c;
            best_value = d;
        }
    }
    if (value != nullptr) *value = best_value;
    return best;
}

} // namespace detail

/// Lloyd's k-means over the input vectors, then assignment into inverted lists.
///
/// Centroids start from `n_clusters` input vectors sampled without replacement
/// (seeded partial Fisher-Yates). When an update step leaves a cluster empty it
/// takes over the point that is farthest from its own centroid, drawn from a
/// cluster that still has more than one member.
inline IvfIndex train_ivf(std::span<const IndexEntry> entries, std::size_t n_clusters,
                          std::size_t n_iters, std::uint64_t seed,
                          Metric metric = Metric::SquaredL2) {
    if (n_clusters == 0) fail(ErrorCode::InvalidSize, "n_clusters must be positive");
    if (n_iters == 0) fail(ErrorCode::InvalidSize, "n_iters must be positive");
    if (entries.size() < n_clusters) {
        fail(ErrorCode::TooFewVectors, std::to_string(entries.size()) + " vectors for " +
                                           std::to_string(n_clusters) + " clusters");
    }
    const auto dim = static_cast<std::uint32_t>(entries.front().vector.size());
    if (dim == 0) fail(ErrorCode::InvalidSize, "vectors must be non-empty");
    {
        std::unordered_set<std::uint64_t> ids;
        for (const auto& e : entries) {
            detail::check_vector(e.vector, dim, "vector");
            if (!ids.insert(e.id).second) fail(ErrorCode::DuplicateId, "id " + std::to_string(e.id));
        }
    }

    const std::size_t n = entries.size();
    std::vector<float> centroids(n_clusters * dim);
    {
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        detail::SplitMix rng(seed);
        for (std::size_t c = 0; c < n_clusters; ++c) {
            const std::size_t j = c + static_cast<std::size_t>(rng.below(n - c));
            std::swap(pool[c], pool[j]);
            std::copy(entries[pool[c]].vector.begin(), entries[pool[c]].vector.end(),
                      centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
        }
    }

    // Badness of a point relative to its centroid: larger is farther.
    auto badness = [metric](double v) { return metric == Metric::SquaredL2 ? v : -v; };

    std::vector<std::size_t> assign(n);
    std::vector<double> value(n);
    std::vector<std::size_t> counts(n_clusters);
    std::vector<double> sums(n_clusters * dim);
    for (std::size_t it = 0; it < n_iters; ++it) {
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            assign[i] = detail::nearest_centroid(metric, entries[i].vector, centroids, dim, &value[i]);
            ++counts[assign[i]];
        }
        for (std::size_t c = 0; c < n_clusters; ++c) {
            if (counts[c] != 0) continue;
            std::size_t victim = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[assign[i]] <= 1) continue;
                if (victim == n || badness(value[i]) > badness(value[victim])) victim = i;
            }
            if (victim == n) continue; // unreachable while n >= n_clusters
            --counts[assign[victim]];
            assign[victim] = c;
            counts[c] = 1;
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* s = sums.data() + assign[i] * dim;
            for (std::uint32_t d = 0; d < dim; ++d) s[d] += entries[i].vector[d];
        }
        for (std::size_t c = 0; c < n_clusters; ++c) {
            for (std::uint32_t d = 0; d < dim; ++d) {
                centroids[c * dim + d] =
                    static_cast<float>(sums[c * dim + d] / static_cast<double>(counts[c]));
            }
        }
    }

    std::vector<InvertedList> lists(n_clusters);
    for (const auto& e : entries) {
        const std::size_t c = detail::nearest_centroid(metric, e.vector, centroids, dim);
        lists[c].ids.push_back(e.id);
        lists[c].data.insert(lists[c].data.end(), e.vector.begin(), e.vector.end());
    }
    return IvfIndex(dim, metric, seed, std::move(centroids), std::move(lists));
}

} // namespace knnd
