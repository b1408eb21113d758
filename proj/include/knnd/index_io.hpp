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

// KNNIDX01 binary layout (all integers little-endian):
//
//   "KNNIDX01"
//   u32 kind (0 = flat, 1 = ivf), u32 dim, u32 metric, u32 n_entries
//   ivf only: u32 n_clusters, u64 seed
//   flat: u64 id[n_entries], f32 vectors[n_entries * dim]
//   ivf:  f32 centroids[n_clusters * dim], u32 list_size[n_clusters],
//         u64 id[n_entries], f32 vectors[n_entries * dim]
//
// IVF ids and vectors are the inverted lists concatenated in cluster order.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <unordered_set>
#include <variant>

#include "knnd/ann_index.hpp"
#include "knnd/binary_io.hpp"

namespace knnd {

using AnyIndex = std::variant<FlatIndex, IvfIndex>;

inline constexpr std::string_view kIndexMagic = "KNNIDX01";

/// Searches either index kind. `n_probe` is ignored by flat indexes; for IVF a
/// value of 0 probes every list.
inline std::vector<Neighbor> search(const AnyIndex& index, std::span<const float> query,
                                    std::size_t k, std::size_t n_probe = 0) {
    if (const auto* flat = std::get_if<FlatIndex>(&index)) return flat->search(query, k);
    const auto& ivf = std::get<IvfIndex>(index);
    return ivf.search(query, k, n_probe == 0 ? ivf.n_clusters() : n_probe);
}

inline std::uint32_t index_dim(const AnyIndex& index) {
    return std::visit([](const auto& i) { return i.dim(); }, index);
}

inline std::size_t index_size(const AnyIndex& index) {
    return std::visit([](const auto& i) { return i.size(); }, index);
}

namespace detail {

inline std::uint32_t checked_u32(std::size_t n, const char* what) {
    if (n > std::numeric_limits<std::uint32_t>::max()) {
        fail(ErrorCode::InvalidSize, std::string(what) + " does not fit the u32 header field");
    }
    return static_cast<std::uint32_t>(n);
}

} // namespace detail

inline Bytes serialize_index(const FlatIndex& index) {
    detail::ByteWriter w;
    w.magic(kIndexMagic);
    w.u32(0);
    w.u32(index.dim());
    w.u32(static_cast<std::uint32_t>(index.metric()));
    w.u32(detail::checked_u32(index.size(), "n_entries"));
    for (auto id : index.ids()) w.u64(id);
    w.f32s(index.data());
    return std::move(w).take();
}

inline Bytes serialize_index(const IvfIndex& index) {
    detail::ByteWriter w;
    w.magic(kIndexMagic);
    w.u32(1);
    w.u32(index.dim());
    w.u32(static_cast<std::uint32_t>(index.metric()));
    w.u32(detail::checked_u32(index.size(), "n_entries"));
    w.u32(detail::checked_u32(index.n_clusters(), "n_clusters"));
    w.u64(index.seed());
    w.f32s(index.centroids());
    for (const auto& l : index.lists()) w.u32(static_cast<std::uint32_t>(l.size()));
    for (const auto& l : index.lists()) {
        for (auto id : l.ids) w.u64(id);
    }
    for (const auto& l : index.lists()) w.f32s(l.data);
    return std::move(w).take();
}

inline Bytes serialize_index(const AnyIndex& index) {
    return std::visit([](const auto& i) { return serialize_index(i); }, index);
}

namespace detail {

inline void check_payload(std::span<const float> v) {
    for (float x : v) {
        if (!std::isfinite(x)) fail(ErrorCode::CorruptFormat, "non-finite value in payload");
    }
}

} // namespace detail

inline AnyIndex deserialize_index(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic(kIndexMagic);
    const std::uint32_t kind = r.u32();
    const std::uint32_t dim = r.u32();
    const std::uint32_t metric_raw = r.u32();
    const std::uint32_t n_entries = r.u32();
    if (kind > 1) fail(ErrorCode::CorruptFormat, "unknown index kind " + std::to_string(kind));
    if (dim == 0) fail(ErrorCode::CorruptFormat, "zero dimension");
    if (metric_raw > 1) fail(ErrorCode::CorruptFormat, "unknown metric " + std::to_string(metric_raw));
    const auto metric = static_cast<Metric>(metric_raw);

    if (kind == 0) {
        r.need_elems(n_entries, 8, "ids");
        std::vector<std::uint64_t> ids(n_entries);
        for (auto& id : ids) id = r.u64();
        r.need_elems(static_cast<std::uint64_t>(n_entries) * dim, 4, "vectors");
        std::vector<float> data(static_cast<std::size_t>(n_entries) * dim);
        r.f32s(data);
        r.expect_end();
        detail::check_payload(data);
        FlatIndex index(dim, metric);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (index.contains(ids[i])) fail(ErrorCode::CorruptFormat, "duplicate id in payload");
            index.add(ids[i], std::span<const float>(data).subspan(i * dim, dim));
        }
        return index;
    }

    const std::uint32_t n_clusters = r.u32();
    const std::uint64_t seed = r.u64();
    if (n_clusters == 0) fail(ErrorCode::CorruptFormat, "zero clusters");
    r.need_elems(static_cast<std::uint64_t>(n_clusters) * dim, 4, "centroids");
    std::vector<float> centroids(static_cast<std::size_t>(n_clusters) * dim);
    r.f32s(centroids);
    detail::check_payload(centroids);
    r.need_elems(n_clusters, 4, "list sizes");
    std::vector<InvertedList> lists(n_clusters);
    std::uint64_t total = 0;
    for (auto& l : lists) {
        const std::uint32_t sz = r.u32();
        total += sz;
        l.ids.resize(sz);
    }
    if (total != n_entries) fail(ErrorCode::CorruptFormat, "list sizes do not sum to n_entries");
    r.need_elems(n_entries, 8, "ids");
    std::unordered_set<std::uint64_t> seen;
    for (auto& l : lists) {
        for (auto& id : l.ids) {
            id = r.u64();
            if (!seen.insert(id).second) fail(ErrorCode::CorruptFormat, "duplicate id in payload");
        }
    }
    r.need_elems(static_cast<std::uint64_t>(n_entries) * dim, 4, "vectors");
    for (auto& l : lists) {
        l.data.resize(l.ids.size() * dim);
        r.f32s(l.data);
        detail::check_payload(l.data);
    }
    r.expect_end();
    return IvfIndex(dim, metric, seed, std::move(centroids), std::move(lists));
}

inline void save_index(const AnyIndex& index, const std::filesystem::path& path) {
    write_file(path, serialize_index(index));
}

inline AnyIndex load_index(const std::filesystem::path& path) {
    return deserialize_index(read_file(path));
}

} // namespace knnd
