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

#include <stdexcept>
#include <string>
#include <string_view>

namespace knnd {

enum class ErrorCode {
    DimensionMismatch,
    DuplicateId,
    TooFewVectors,
    InvalidProbeCount,
    CorruptFormat,
    TokenOutOfVocab,
    VocabMismatch,
    EmptyNeighborSet,
    EmptyDatastore,
    InvalidSize,
    InvalidArgument,
    EmptyReference,
    EmptyCorpus,
    ZeroVector,
    EmptyText,
    Io,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::TooFewVectors: return "TooFewVectors";
    case ErrorCode::InvalidProbeCount: return "InvalidProbeCount";
    case ErrorCode::CorruptFormat: return "CorruptFormat";
    case ErrorCode::TokenOutOfVocab: return "TokenOutOfVocab";
    case ErrorCode::VocabMismatch: return "VocabMismatch";
    case ErrorCode::EmptyNeighborSet: return "EmptyNeighborSet";
    case ErrorCode::EmptyDatastore: return "EmptyDatastore";
    case ErrorCode::InvalidSize: return "InvalidSize";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

/// Every failure in the library is reported through this exception; `code()`
/// identifies the failure class so callers can branch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

} // namespace knnd
