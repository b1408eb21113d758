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

// JSON persistence for the persona agent.
//
// Memory log: one JSON object per line, {"id", "text", "salience",
// "created_at"}. Embeddings are never written; they are recomputed on load.
// Persona card: a single object mirroring PersonaCard's fields.
// Replay transcript: {"distill": [{"input", "output"}], "respond": [{"prompt", "response"}]}
// where each "output" is a distillation object as read by parse_distillation.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "json.hpp"
#include "knnd/error.hpp"
#include "knnd/persona_memory.hpp"

namespace knnd {

namespace detail {

using ojson = nlohmann::ordered_json;

template <class T>
T json_get(const nlohmann::ordered_json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) fail(ErrorCode::CorruptFormat, where + ": missing \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::CorruptFormat, where + ": bad type for \"" + key + "\"");
    }
}

inline nlohmann::ordered_json parse_json(std::string_view text, const std::string& where) {
    try {
        return nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::CorruptFormat, where + ": " + e.what());
    }
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace detail

inline std::string memory_record(const MemoryEntry& e) {
    detail::ojson j;
    j["id"] = e.id;
    j["text"] = e.text;
    j["salience"] = e.salience;
    j["created_at"] = e.created_at;
    try {
        return j.dump();
    } catch (const nlohmann::json::type_error&) {
        fail(ErrorCode::InvalidArgument, "memory text is not valid UTF-8");
    }
}

/// Parses a newline-delimited memory log. Blank lines are skipped.
inline MemoryStore parse_memory_log(std::string_view text) {
    MemoryStore store;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t end = std::min(text.find('\n', start), text.size());
        ++line_no;
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") != std::string_view::npos) {
            const std::string where = "memory log line " + std::to_string(line_no);
            const auto j = detail::parse_json(line, where);
            const auto id = detail::json_get<std::uint64_t>(j, "id", where);
            const auto t = detail::json_get<std::string>(j, "text", where);
            const auto salience = detail::json_get<double>(j, "salience", where);
            const auto created = detail::json_get<Timestamp>(j, "created_at", where);
            try {
                store.restore(id, t, salience, created);
            } catch (const Error& e) {
                fail(ErrorCode::CorruptFormat, where + ": " + e.what());
            }
        }
        start = end + 1;
    }
    return store;
}

/// Loads a memory log; a missing file is an empty store.
inline MemoryStore load_memory_log(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return MemoryStore{};
    return parse_memory_log(detail::slurp(path));
}

inline void save_memory_log(const MemoryStore& store, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open for writing: " + path.string());
    for (const auto& e : store.entries()) out << memory_record(e) << '\n';
    if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

inline void append_memory_record(const MemoryEntry& entry, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) fail(ErrorCode::Io, "cannot open for appending: " + path.string());
    out << memory_record(entry) << '\n';
    if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

inline std::string card_to_json(const PersonaCard& card) {
    detail::ojson j;
    j["background"] = card.background;
    j["linguistic_style"] = card.linguistic_style;
    j["key_memories"] = card.key_memories;
    j["version"] = card.version;
    j["updated_at"] = card.updated_at;
    try {
        return j.dump(2);
    } catch (const nlohmann::json::type_error&) {
        fail(ErrorCode::InvalidArgument, "persona card text is not valid UTF-8");
    }
}

inline PersonaCard card_from_json(std::string_view text) {
    const std::string where = "persona card";
    const auto j = detail::parse_json(text, where);
    PersonaCard card;
    card.background = detail::json_get<std::string>(j, "background", where);
    card.linguistic_style = detail::json_get<std::string>(j, "linguistic_style", where);
    card.key_memories = detail::json_get<std::vector<std::string>>(j, "key_memories", where);
    card.version = detail::json_get<std::uint64_t>(j, "version", where);
    card.updated_at = detail::json_get<Timestamp>(j, "updated_at", where);
    return card;
}

/// A missing card file is a fresh, empty card at version 0.
inline PersonaCard load_card(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return PersonaCard{};
    return card_from_json(detail::slurp(path));
}

inline void save_card(const PersonaCard& card, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open for writing: " + path.string());
    out << card_to_json(card) << '\n';
    if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

/// {"background"?: str, "linguistic_style"?: str, "new_memories"?: [str],
///  "facts"?: [{"text": str, "salience"?: num}]}
inline DistillationResult distillation_from_json(const nlohmann::ordered_json& j, const std::string& where) {
    if (!j.is_object()) fail(ErrorCode::CorruptFormat, where + ": expected an object");
    DistillationResult r;
    if (j.contains("background")) r.background = detail::json_get<std::string>(j, "background", where);
    if (j.contains("linguistic_style")) {
        r.linguistic_style = detail::json_get<std::string>(j, "linguistic_style", where);
    }
    if (j.contains("new_memories")) {
        r.new_memories = detail::json_get<std::vector<std::string>>(j, "new_memories", where);
    }
    if (j.contains("facts")) {
        const auto& facts = j.at("facts");
        if (!facts.is_array()) fail(ErrorCode::CorruptFormat, where + ": \"facts\" must be an array");
        for (const auto& f : facts) {
            DistilledFact fact;
            fact.text = detail::json_get<std::string>(f, "text", where);
            if (f.contains("salience")) fact.salience = detail::json_get<double>(f, "salience", where);
            r.facts.push_back(std::move(fact));
        }
    }
    return r;
}

inline DistillationResult parse_distillation(std::string_view text) {
    return distillation_from_json(detail::parse_json(text, "distillation"), "distillation");
}

/// Recorded LLM exchanges, replayed by exact input match. Lets tests and the
/// CLI run the agent loop without a model. The returned callables refer to
/// the transcript, which must outlive them.
class ReplayTranscript {
public:
    static ReplayTranscript parse(std::string_view text) {
        const std::string where = "transcript";
        const auto j = detail::parse_json(text, where);
        if (!j.is_object()) fail(ErrorCode::CorruptFormat, where + ": expected an object");
        ReplayTranscript t;
        for (const char* key : {"distill", "respond"}) {
            if (j.contains(key) && !j.at(key).is_array()) {
                fail(ErrorCode::CorruptFormat, where + ": \"" + key + "\" must be an array");
            }
        }
        if (j.contains("distill")) {
            for (const auto& rec : j.at("distill")) {
                t.distill_[detail::json_get<std::string>(rec, "input", where)] =
                    distillation_from_json(rec.contains("output") ? rec.at("output") : nlohmann::ordered_json{},
                                           where);
            }
        }
        if (j.contains("respond")) {
            for (const auto& rec : j.at("respond")) {
                t.respond_[detail::json_get<std::string>(rec, "prompt", where)] =
                    detail::json_get<std::string>(rec, "response", where);
            }
        }
        return t;
    }

    static ReplayTranscript load(const std::filesystem::path& path) { return parse(detail::slurp(path)); }

    Distiller distiller() const {
        return [this](std::string_view conversation) {
            const auto it = distill_.find(std::string(conversation));
            if (it == distill_.end()) fail(ErrorCode::InvalidArgument, "no recorded distillation for input");
            return it->second;
        };
    }

    Responder responder() const {
        return [this](std::string_view prompt) {
            const auto it = respond_.find(std::string(prompt));
            if (it == respond_.end()) fail(ErrorCode::InvalidArgument, "no recorded response for prompt");
            return it->second;
        };
    }

private:
    std::map<std::string, DistillationResult> distill_;
    std::map<std::string, std::string> respond_;
};

} // namespace knnd
