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

// Key-value memory of decoder hidden states and the gold tokens they preceded.
//
// KNNDST01 layout (little-endian):
//   "KNNDST01", u32 dim, u32 vocab_size, u64 N,
//   f32 keys[N * dim], u32 values[N], u16 provenance_len, provenance bytes (UTF-8)

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "knnd/ann_index.hpp"
#include "knnd/binary_io.hpp"
#include "knnd/error.hpp"
#include "knnd/types.hpp"

namespace knnd {

inline constexpr std::string_view kDatastoreMagic = "KNNDST01";

class Datastore {
public:
    Datastore(std::uint32_t dim, std::uint32_t vocab_size, std::string provenance = {})
        : dim_(dim), vocab_(vocab_size), provenance_(std::move(provenance)) {
        if (dim == 0) fail(ErrorCode::InvalidSize, "datastore dimension must be positive");
        if (vocab_size == 0) fail(ErrorCode::InvalidSize, "vocab_size must be positive");
        if (provenance_.size() > std::numeric_limits<std::uint16_t>::max()) {
            fail(ErrorCode::InvalidArgument, "provenance longer than 65535 bytes");
        }
    }

    void append(std::span<const float> key, TokenId value) {
        detail::check_vector(key, dim_, "key");
        if (value >= vocab_) {
            fail(ErrorCode::TokenOutOfVocab, "value " + std::to_string(value) + " >= vocab_size " +
                                                 std::to_string(vocab_));
        }
        keys_.insert(keys_.end(), key.begin(), key.end());
        values_.push_back(value);
    }

    std::uint32_t dim() const noexcept { return dim_; }
    std::uint32_t vocab_size() const noexcept { return vocab_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    const std::string& provenance() const noexcept { return provenance_; }

    std::span<const float> keys() const noexcept { return keys_; }
    std::span<const TokenId> values() const noexcept { return values_; }
    std::span<const float> key(std::size_t i) const noexcept {
        return std::span<const float>(keys_).subspan(i * dim_, dim_);
    }
    TokenId value(std::size_t i) const noexcept { return values_[i]; }

    /// Index entry ids are datastore positions.
    std::vector<IndexEntry> index_entries() const {
        std::vector<IndexEntry> out;
        out.reserve(size());
        for (std::size_t i = 0; i < size(); ++i) {
            auto k = key(i);
            out.push_back({i, Vector(k.begin(), k.end())});
        }
        return out;
    }

    FlatIndex build_flat_index() const {
        FlatIndex index(dim_, Metric::SquaredL2);
        for (std::size_t i = 0; i < size(); ++i) index.add(i, key(i));
        return index;
    }

    friend bool operator==(const Datastore&, const Datastore&) = default;

private:
    std::uint32_t dim_;
    std::uint32_t vocab_;
    std::vector<float> keys_;
    std::vector<TokenId> values_;
    std::string provenance_;
};

/// Teacher-forced pass over `corpus`: for every pair and every target position
/// t in [0, T], stores the hidden state after the gold prefix target[0, t) as
/// key and target[t] (EOS at t = T) as value.
template <DecoderModel Model>
Datastore build_datastore(const Model& model, std::span<const CorpusPair> corpus,
                          std::string provenance = {}) {
    if (corpus.empty()) fail(ErrorCode::InvalidArgument, "corpus must be non-empty");
    Datastore store(model.state_dim(), model.vocab_size(), std::move(provenance));
    for (const auto& pair : corpus) {
        if (pair.target.empty()) fail(ErrorCode::InvalidArgument, "empty target in corpus");
        for (std::size_t t = 0; t <= pair.target.size(); ++t) {
            const std::span<const TokenId> prefix(pair.target.data(), t);
            const auto out = model.step(pair.source, prefix);
            if (out.hidden.size() != store.dim()) {
                fail(ErrorCode::DimensionMismatch, "model hidden state length changed");
            }
            const TokenId value = t < pair.target.size() ? pair.target[t] : model.eos();
            store.append(out.hidden, value);
        }
    }
    return store;
}

inline Datastore merge(const Datastore& a, const Datastore& b) {
    if (a.dim() != b.dim()) {
        fail(ErrorCode::DimensionMismatch,
             "dim " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    }
    if (a.vocab_size() != b.vocab_size()) {
        fail(ErrorCode::VocabMismatch,
             "vocab " + std::to_string(a.vocab_size()) + " vs " + std::to_string(b.vocab_size()));
    }
    Datastore out = a;
    for (std::size_t i = 0; i < b.size(); ++i) out.append(b.key(i), b.value(i));
    return out;
}

inline Bytes serialize_datastore(const Datastore& store) {
    detail::ByteWriter w;
    w.magic(kDatastoreMagic);
    w.u32(store.dim());
    w.u32(store.vocab_size());
    w.u64(store.size());
    w.f32s(store.keys());
    for (TokenId v : store.values()) w.u32(v);
    w.u16(static_cast<std::uint16_t>(store.provenance().size()));
    w.raw(store.provenance());
    return std::move(w).take();
}

inline Datastore deserialize_datastore(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic(kDatastoreMagic);
    const std::uint32_t dim = r.u32();
    const std::uint32_t vocab = r.u32();
    const std::uint64_t n = r.u64();
    if (dim == 0 || vocab == 0) fail(ErrorCode::CorruptFormat, "zero dimension or vocabulary");
    if (n > std::numeric_limits<std::uint64_t>::max() / dim) fail(ErrorCode::CorruptFormat, "dimension overflow");
    r.need_elems(n * dim, 4, "keys");
    std::vector<float> keys(static_cast<std::size_t>(n * dim));
    r.f32s(keys);
    r.need_elems(n, 4, "values");
    std::vector<TokenId> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = r.u32();
    const std::uint16_t plen = r.u16();
    std::string provenance = r.raw(plen);
    r.expect_end();

    Datastore store(dim, vocab, std::move(provenance));
    try {
        for (std::size_t i = 0; i < values.size(); ++i) {
            store.append(std::span<const float>(keys).subspan(i * dim, dim), values[i]);
        }
    } catch (const Error& e) {
        fail(ErrorCode::CorruptFormat, e.what());
    }
    return store;
}

inline void save_datastore(const Datastore& store, const std::filesystem::path& path) {
    write_file(path, serialize_datastore(store));
}

inline Datastore load_datastore(const std::filesystem::path& path) {
    return deserialize_datastore(read_file(path));
}

} // namespace knnd
