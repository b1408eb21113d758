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

// Persona card, vector memory and prompt assembly for a persona-consistent
// dialogue agent. The language model itself stays outside: distillation and
// response generation are plain callables (see Distiller / Responder).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "knnd/ann_index.hpp"
#include "knnd/detail/random.hpp"
#include "knnd/error.hpp"

namespace knnd {

/// UTC seconds.
using Timestamp = std::int64_t;

inline constexpr std::uint32_t kEmbeddingDim = 256;

namespace detail {

/// Decodes UTF-8 into code points. A byte that does not start a well-formed
/// sequence is kept as its own symbol (tagged above the Unicode range) so that
/// arbitrary input still embeds deterministically.
inline std::vector<std::uint32_t> code_points(std::string_view s) {
    std::vector<std::uint32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        std::size_t len = 0;
        std::uint32_t cp = 0;
        if (b0 < 0x80) {
            len = 1;
            cp = b0;
        } else if ((b0 & 0xe0) == 0xc0) {
            len = 2;
            cp = b0 & 0x1fU;
        } else if ((b0 & 0xf0) == 0xe0) {
            len = 3;
            cp = b0 & 0x0fU;
        } else if ((b0 & 0xf8) == 0xf0) {
            len = 4;
            cp = b0 & 0x07U;
        }
        bool ok = len != 0 && i + len <= s.size();
        for (std::size_t k = 1; ok && k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xc0) != 0x80) ok = false;
            cp = (cp << 6) | (b & 0x3fU);
        }
        if (ok) {
            out.push_back(cp);
            i += len;
        } else {
            out.push_back(0x80000000U | b0);
            ++i;
        }
    }
    return out;
}

} // namespace detail

/// Reference text embedding: counts of cyclic character trigrams hashed into
/// 256 buckets, L2-normalized.
///
/// For code points c_0 .. c_{n-1}, trigram i is (c_i, c_{(i+1) mod n},
/// c_{(i+2) mod n}) for i in [0, n), so every text of n >= 1 characters has
/// exactly n trigrams and repeating a text scales its counts. Each trigram is
/// hashed with 64-bit FNV-1a over the three code points as little-endian u32;
/// the bucket is hash mod 256.
inline Vector embed_text(std::string_view text) {
    if (text.empty()) fail(ErrorCode::EmptyText, "cannot embed empty text");
    const auto cps = detail::code_points(text);
    const std::size_t n = cps.size();
    std::vector<double> counts(kEmbeddingDim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t h = detail::kFnvOffset;
        h = detail::fnv1a_u32(cps[i], h);
        h = detail::fnv1a_u32(cps[(i + 1) % n], h);
        h = detail::fnv1a_u32(cps[(i + 2) % n], h);
        counts[h % kEmbeddingDim] += 1.0;
    }
    double norm = 0.0;
    for (double c : counts) norm += c * c;
    norm = std::sqrt(norm);
    Vector out(kEmbeddingDim);
    for (std::size_t d = 0; d < kEmbeddingDim; ++d) out[d] = static_cast<float>(counts[d] / norm);
    return out;
}

struct MemoryEntry {
    std::uint64_t id = 0;
    std::string text;
    Vector embedding;
    Timestamp created_at = 0;
    double salience = 0.0;

    friend bool operator==(const MemoryEntry&, const MemoryEntry&) = default;
};

struct ScoredMemory {
    MemoryEntry entry;
    double score = 0.0;
};

/// Append-only log of salient facts with similarity retrieval. Writers are
/// serialized and readers share a lock, so a retrieval never sees a partially
/// inserted entry.
class MemoryStore {
public:
    MemoryStore() : index_(kEmbeddingDim, Metric::InnerProduct) {}

    // Moves are not synchronized; only move a store nobody else is using.
    MemoryStore(MemoryStore&& other) noexcept
        : entries_(std::move(other.entries_)), position_(std::move(other.position_)),
          index_(std::move(other.index_)), next_id_(other.next_id_) {}
    MemoryStore& operator=(MemoryStore&&) = delete;
    MemoryStore(const MemoryStore&) = delete;
    MemoryStore& operator=(const MemoryStore&) = delete;

    /// Embeds and stores `text`; returns the new entry's id. Duplicate texts
    /// are kept as separate entries.
    std::uint64_t store_fact(std::string_view text, double salience, Timestamp now) {
        check_salience(salience);
        auto embedding = embed_text(text);
        std::unique_lock lock(mutex_);
        const std::uint64_t id = next_id_;
        insert_locked({id, std::string(text), std::move(embedding), now, salience});
        return id;
    }

    /// Re-inserts a persisted record under its original id; the embedding is
    /// recomputed from the text.
    void restore(std::uint64_t id, std::string_view text, double salience, Timestamp created_at) {
        check_salience(salience);
        auto embedding = embed_text(text);
        std::unique_lock lock(mutex_);
        if (position_.contains(id)) fail(ErrorCode::DuplicateId, "memory id " + std::to_string(id));
        insert_locked({id, std::string(text), std::move(embedding), created_at, salience});
    }

    /// Top `top_k` entries by cosine similarity to `query_text`, best first,
    /// ties to the lower id. An empty store or empty query yields nothing.
    std::vector<ScoredMemory> retrieve(std::string_view query_text, std::size_t top_k) const {
        if (top_k == 0) fail(ErrorCode::InvalidArgument, "top_k must be at least 1");
        if (query_text.empty()) return {};
        const auto query = embed_text(query_text);
        std::shared_lock lock(mutex_);
        std::vector<ScoredMemory> out;
        for (const auto& hit : index_.search(query, top_k)) {
            out.push_back({entries_[position_.at(hit.id)], hit.distance});
        }
        return out;
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return entries_.size();
    }

    /// Snapshot of all entries in insertion order.
    std::vector<MemoryEntry> entries() const {
        std::shared_lock lock(mutex_);
        return entries_;
    }

    std::optional<MemoryEntry> find(std::uint64_t id) const {
        std::shared_lock lock(mutex_);
        const auto it = position_.find(id);
        if (it == position_.end()) return std::nullopt;
        return entries_[it->second];
    }

private:
    static void check_salience(double salience) {
        if (!(salience >= 0.0 && salience <= 1.0)) fail(ErrorCode::InvalidArgument, "salience must lie in [0, 1]");
    }

    void insert_locked(MemoryEntry entry) {
        index_.add(entry.id, entry.embedding);
        position_.emplace(entry.id, entries_.size());
        next_id_ = std::max(next_id_, entry.id + 1);
        entries_.push_back(std::move(entry));
    }

    mutable std::shared_mutex mutex_;
    std::vector<MemoryEntry> entries_;
    std::unordered_map<std::uint64_t, std::size_t> position_;
    FlatIndex index_;
    std::uint64_t next_id_ = 0;
};

struct PersonaCard {
    std::string background;
    std::string linguistic_style;
    std::vector<std::string> key_memories;
    std::uint64_t version = 0;
    Timestamp updated_at = 0;

    friend bool operator==(const PersonaCard&, const PersonaCard&) = default;
};

/// A salient fact proposed for the memory store, with the distiller's salience.
struct DistilledFact {
    std::string text;
    double salience = 1.0;

    friend bool operator==(const DistilledFact&, const DistilledFact&) = default;
};

/// What the external distillation step returns after reading a conversation.
/// Unset fields leave the card untouched. `facts` go to the memory store and
/// are not part of the card.
struct DistillationResult {
    std::optional<std::string> background;
    std::optional<std::string> linguistic_style;
    std::vector<std::string> new_memories;
    std::vector<DistilledFact> facts;

    friend bool operator==(const DistillationResult&, const DistillationResult&) = default;
};

inline PersonaCard update_card(const PersonaCard& card, const DistillationResult& distilled, Timestamp now) {
    PersonaCard out = card;
    if (distilled.background) out.background = *distilled.background;
    if (distilled.linguistic_style) out.linguistic_style = *distilled.linguistic_style;
    for (const auto& m : distilled.new_memories) {
        if (std::find(out.key_memories.begin(), out.key_memories.end(), m) == out.key_memories.end()) {
            out.key_memories.push_back(m);
        }
    }
    ++out.version;
    out.updated_at = now;
    return out;
}

inline constexpr std::string_view kPromptInstructions =
    "Reply to [USER] as the person described in [PERSONA], in their linguistic style. "
    "Stay consistent with the key memories and with [MEMORIES]. Do not step out of character.";

/// Builds the model prompt. Every free-text field is preceded by its byte
/// length in parentheses, so the layout parses unambiguously whatever the
/// texts contain.
///
///   [PERSONA]
///   version: <n>
///   background (<bytes>) <text>
///   linguistic_style (<bytes>) <text>
///   key_memories: <count>
///   - (<bytes>) <text>
///   [MEMORIES]
///   count: <count>
///   - #<id> (<bytes>) <text>
///   [USER]
///   (<bytes>) <text>
///   [INSTRUCTIONS]
///   <fixed directive>
inline std::string assemble_prompt(const PersonaCard& card, std::span<const MemoryEntry> retrieved,
                                   std::string_view user_turn) {
    std::string out;
    auto field = [&out](std::string_view text) {
        out += '(';
        out += std::to_string(text.size());
        out += ") ";
        out += text;
        out += '\n';
    };
    out += "[PERSONA]\n";
    out += "version: " + std::to_string(card.version) + "\n";
    out += "background ";
    field(card.background);
    out += "linguistic_style ";
    field(card.linguistic_style);
    out += "key_memories: " + std::to_string(card.key_memories.size()) + "\n";
    for (const auto& m : card.key_memories) {
        out += "- ";
        field(m);
    }
    out += "[MEMORIES]\n";
    out += "count: " + std::to_string(retrieved.size()) + "\n";
    for (const auto& m : retrieved) {
        out += "- #" + std::to_string(m.id) + " ";
        field(m.text);
    }
    out += "[USER]\n";
    field(user_turn);
    out += "[INSTRUCTIONS]\n";
    out += kPromptInstructions;
    out += '\n';
    return out;
}

inline std::string assemble_prompt(const PersonaCard& card, std::span<const ScoredMemory> retrieved,
                                   std::string_view user_turn) {
    std::vector<MemoryEntry> entries;
    entries.reserve(retrieved.size());
    for (const auto& r : retrieved) entries.push_back(r.entry);
    return assemble_prompt(card, std::span<const MemoryEntry>(entries), user_turn);
}

/// External LLM contracts: conversation text -> distilled persona update, and
/// prompt -> response text.
using Distiller = std::function<DistillationResult(std::string_view conversation)>;
using Responder = std::function<std::string(std::string_view prompt)>;

struct AgentReply {
    std::string prompt;
    std::string response;
    std::vector<ScoredMemory> memories;
};

/// One dialogue turn: retrieve memories for the user's turn, assemble the
/// prompt and hand it to the responder.
inline AgentReply respond(const MemoryStore& store, const PersonaCard& card, std::string_view user_turn,
                          std::size_t top_k, const Responder& responder) {
    AgentReply reply;
    reply.memories = store.retrieve(user_turn, top_k);
    reply.prompt = assemble_prompt(card, std::span<const ScoredMemory>(reply.memories), user_turn);
    reply.response = responder(reply.prompt);
    return reply;
}

/// Runs the distiller over a conversation, stores the proposed facts and
/// returns the updated card.
inline PersonaCard distill(MemoryStore& store, const PersonaCard& card, std::string_view conversation,
                           const Distiller& distiller, Timestamp now) {
    const auto result = distiller(conversation);
    for (const auto& fact : result.facts) store.store_fact(fact.text, fact.salience, now);
    return update_card(card, result, now);
}

} // namespace knnd
