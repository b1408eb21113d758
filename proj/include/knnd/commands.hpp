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

// Command implementations behind the `knnd` tool. Each command takes a plain
// argument struct, writes to the given streams and returns the process exit
// code: 0 success, 1 usage or configuration error, 2 I/O failure, 3 failed
// experiment assertion.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "knnd/datastore.hpp"
#include "knnd/index_io.hpp"
#include "knnd/knn_decoder.hpp"
#include "knnd/metrics.hpp"
#include "knnd/persona_io.hpp"
#include "knnd/persona_memory.hpp"
#include "knnd/toy_model.hpp"

namespace knnd::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kAssertionFailed = 3 };

/// Maps library errors onto the exit-code contract.
inline int report(const Error& e, std::ostream& err) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::Io || e.code() == ErrorCode::CorruptFormat ? kIo : kUsage;
}

struct ModelArgs {
    std::uint64_t seed = 7;
    std::uint32_t vocab_size = 8;
    std::uint32_t state_dim = 16;
    double eos_bias = 0.0;

    TabularToyModel make() const {
        ToyModelOptions options;
        options.eos_bias = eos_bias;
        return make_toy_model(seed, vocab_size, state_dim, options);
    }
};

inline std::string format_tokens(std::span<const TokenId> tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i != 0) out += ' ';
        out += std::to_string(tokens[i]);
    }
    return out;
}

/// Whitespace-separated decimal token ids.
inline TokenSequence parse_tokens(std::string_view line) {
    TokenSequence out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size()) break;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        TokenId v = 0;
        const auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + j, v);
        if (ec != std::errc{} || ptr != line.data() + j) {
            fail(ErrorCode::InvalidArgument, "bad token id '" + std::string(line.substr(i, j - i)) + "'");
        }
        out.push_back(v);
        i = j;
    }
    return out;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    if (in.bad()) fail(ErrorCode::Io, "read failed: " + path.string());
    return lines;
}

/// Overlays the keys of a JSON object onto `cfg`. Keys match DecodeConfig's
/// field names; anything else is rejected.
inline void apply_config_json(DecodeConfig& cfg, std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
    }
    if (!j.is_object()) fail(ErrorCode::InvalidArgument, "config: expected a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "lambda") cfg.lambda = value.get<double>();
            else if (key == "k") cfg.k = value.get<std::size_t>();
            else if (key == "temperature") cfg.temperature = value.get<double>();
            else if (key == "beam_width") cfg.beam_width = value.get<std::size_t>();
            else if (key == "max_len") cfg.max_len = value.get<std::size_t>();
            else if (key == "length_penalty") cfg.length_penalty = value.get<double>();
            else fail(ErrorCode::InvalidArgument, "config: unknown key \"" + key + "\"");
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// build-datastore

struct BuildDatastoreArgs {
    ModelArgs model;
    std::uint64_t corpus_seed = 1;
    std::size_t n_pairs = 1000;
    LengthRange len{3, 8};
    double rare_rate = 0.2;
    std::filesystem::path output;
};

inline int build_datastore(const BuildDatastoreArgs& args, std::ostream& out, std::ostream& err) {
    try {
        const auto model = args.model.make();
        CorpusOptions options;
        options.rare_rate = args.rare_rate;
        const auto corpus = make_synthetic_corpus(model, args.corpus_seed, args.n_pairs, args.len, options);
        const auto store = knnd::build_datastore(model, corpus.pairs,
                                                 "synthetic corpus seed " + std::to_string(args.corpus_seed));
        save_datastore(store, args.output);
        out << "entries: " << store.size() << '\n';
        return kOk;
    } catch (const Error& e) {
        return report(e, err);
    }
}

// ---------------------------------------------------------------------------
// build-index

struct BuildIndexArgs {
    std::filesystem::path datastore;
    std::filesystem::path output;
    /// 0 builds a flat index.
    std::size_t n_clusters = 0;
    std::size_t n_iters = 10;
    std::uint64_t seed = 1;
};

inline int build_index(const BuildIndexArgs& args, std::ostream& out, std::ostream& err) {
    try {
        const auto store = load_datastore(args.datastore);
        if (args.n_clusters == 0) {
            save_index(AnyIndex(store.build_flat_index()), args.output);
            out << "flat index: " << store.size() << " entries\n";
        } else {
            const auto entries = store.index_entries();
            save_index(AnyIndex(train_ivf(entries, args.n_clusters, args.n_iters, args.seed)), args.output);
            out << "ivf index: " << store.size() << " entries in " << args.n_clusters << " lists\n";
        }
        return kOk;
    } catch (const Error& e) {
        return report(e, err);
    }
}

// ---------------------------------------------------------------------------
// decode

struct DecodeArgs {
    ModelArgs model;
    std::vector<TokenSequence> sources;
    std::optional<std::filesystem::path> datastore;
    /// Without an index file, an exact flat index is built over the datastore.
    std::optional<std::filesystem::path> index;
    std::size_t n_probe = 0;
    DecodeConfig cfg;
};

inline int decode(const DecodeArgs& args, std::ostream& out, std::ostream& err) {
    try {
        args.cfg.validate();
        const auto model = args.model.make();
        std::optional<Datastore> store;
        std::optional<AnyIndex> index;
        std::optional<KnnRetriever> retriever;
        if (args.datastore) {
            store = load_datastore(*args.datastore);
            index = args.index ? load_index(*args.index) : AnyIndex(store->build_flat_index());
            retriever.emplace(*store, *index, args.n_probe);
        } else if (args.index) {
            fail(ErrorCode::InvalidArgument, "--index requires --datastore");
        } else if (args.cfg.lambda > 0.0) {
            fail(ErrorCode::InvalidArgument, "--lambda > 0 requires --datastore");
        }
        const KnnRetriever* r = retriever ? &*retriever : nullptr;
        for (const auto& source : args.sources) {
            const auto h = knnd::decode(model, source, args.cfg, r);
            out << format_tokens(strip_eos(h, model.eos())) << '\n';
        }
        return kOk;
    } catch (const Error& e) {
        return report(e, err);
    }
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::filesystem::path reference;
    std::filesystem::path hypothesis;
    /// Score UTF-8 characters instead of whitespace-separated symbols.
    bool chars = false;
};

inline std::vector<std::string> split_symbols(std::string_view line, bool chars) {
    std::vector<std::string> out;
    if (chars) {
        for (std::uint32_t cp : detail::code_points(line)) out.push_back(std::to_string(cp));
        return out;
    }
    std::istringstream ss{std::string(line)};
    std::string sym;
    while (ss >> sym) out.push_back(sym);
    return out;
}

inline std::string format_percent(double x) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << 100.0 * x << '%';
    return ss.str();
}

inline std::string format_stats(const EditStats& s) {
    return "CER " + format_percent(s.cer()) + "  S " + format_percent(s.rate(s.substitutions)) + "  D " +
           format_percent(s.rate(s.deletions)) + "  I " + format_percent(s.rate(s.insertions)) + "  N " +
           std::to_string(s.ref_len);
}

inline int eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
    try {
        const auto refs = read_lines(args.reference);
        const auto hyps = read_lines(args.hypothesis);
        if (refs.size() != hyps.size()) {
            err << "error: line count mismatch: " << refs.size() << " reference vs " << hyps.size()
                << " hypothesis lines\n";
            return kUsage;
        }
        std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> pairs;
        for (std::size_t i = 0; i < refs.size(); ++i) {
            pairs.emplace_back(split_symbols(refs[i], args.chars), split_symbols(hyps[i], args.chars));
        }
        out << format_stats(corpus_cer(pairs)) << '\n';
        return kOk;
    } catch (const Error& e) {
        return report(e, err);
    }
}

// ---------------------------------------------------------------------------
// experiment

struct ExperimentArgs {
    ModelArgs model;
    std::uint64_t corpus_seed = 1;
    std::size_t n_train = 1000;
    std::size_t n_test = 150;
    LengthRange len{3, 8};
    double rare_rate = 0.2;
    std::vector<double> lambdas{0.25, 0.5, 0.75};
    DecodeConfig cfg = [] {
        DecodeConfig c;
        c.max_len = 8;
        return c;
    }();
};

struct ExperimentReport {
    EditStats base_cer;
    EditStats knn_cer;
    double best_lambda = 0.0;
    std::vector<std::pair<double, EditStats>> grid;
    DecodeConfig config;
    std::uint64_t corpus_seed = 0;
    std::size_t n_test_pairs = 0;

    bool knn_not_worse() const noexcept { return knn_cer.cer() <= base_cer.cer(); }
};

/// Seed of the held-out test corpus paired with a training corpus seed.
constexpr std::uint64_t test_corpus_seed(std::uint64_t corpus_seed) noexcept {
    return detail::splitmix64(corpus_seed);
}

/// Builds a training corpus and datastore, then decodes a held-out test corpus
/// at lambda = 0 and at every grid lambda over the identical test pairs.
inline ExperimentReport run_experiment(const ExperimentArgs& args) {
    if (args.n_train == 0) fail(ErrorCode::InvalidArgument, "--n-train must be at least 1");
    if (args.n_test == 0) fail(ErrorCode::InvalidArgument, "--n-test must be at least 1");
    if (args.lambdas.empty()) fail(ErrorCode::InvalidArgument, "--lambdas must not be empty");
    for (double l : args.lambdas) {
        if (!(l >= 0.0 && l <= 1.0)) fail(ErrorCode::InvalidArgument, "--lambdas values must lie in [0, 1]");
    }
    args.cfg.validate();
    const auto model = args.model.make();
    CorpusOptions options;
    options.rare_rate = args.rare_rate;
    const auto train = make_synthetic_corpus(model, args.corpus_seed, args.n_train, args.len, options);
    const auto test =
        make_synthetic_corpus(model, test_corpus_seed(args.corpus_seed), args.n_test, args.len, options);
    const auto store = knnd::build_datastore(model, train.pairs);
    const AnyIndex index(store.build_flat_index());
    const KnnRetriever retriever(store, index);

    auto score = [&](double lambda) {
        DecodeConfig cfg = args.cfg;
        cfg.lambda = lambda;
        std::vector<std::pair<TokenSequence, TokenSequence>> pairs;
        pairs.reserve(test.pairs.size());
        for (const auto& p : test.pairs) {
            pairs.emplace_back(p.target, strip_eos(knnd::decode(model, p.source, cfg, &retriever), model.eos()));
        }
        return corpus_cer(pairs);
    };

    ExperimentReport report;
    report.config = args.cfg;
    report.corpus_seed = args.corpus_seed;
    report.n_test_pairs = test.pairs.size();
    report.base_cer = score(0.0);
    for (double l : args.lambdas) {
        report.grid.emplace_back(l, score(l));
        const auto& s = report.grid.back().second;
        if (report.grid.size() == 1 || s.cer() < report.knn_cer.cer()) {
            report.knn_cer = s;
            report.best_lambda = l;
        }
    }
    report.config.lambda = report.best_lambda;
    return report;
}

inline void print_report(const ExperimentArgs& args, const ExperimentReport& r, std::ostream& out) {
    const auto& c = args.cfg;
    out << "model seed " << args.model.seed << ", vocab " << args.model.vocab_size << ", state dim "
        << args.model.state_dim << ", eos bias " << args.model.eos_bias << '\n';
    out << "corpus seed " << r.corpus_seed << ", train pairs " << args.n_train << ", test pairs "
        << r.n_test_pairs << '\n';
    out << "k " << c.k << ", temperature " << c.temperature << ", beam " << c.beam_width << ", max len "
        << c.max_len << ", length penalty " << c.length_penalty << '\n';
    out << "lambda  " << std::left << std::setw(9) << "CER" << std::setw(9) << "S" << std::setw(9) << "D"
        << "I\n";
    auto row = [&out](double lambda, const EditStats& s) {
        out << std::fixed << std::setprecision(2) << std::left << std::setw(8) << lambda << std::setw(9)
            << format_percent(s.cer()) << std::setw(9) << format_percent(s.rate(s.substitutions))
            << std::setw(9) << format_percent(s.rate(s.deletions))
            << format_percent(s.rate(s.insertions)) << '\n';
    };
    row(0.0, r.base_cer);
    for (const auto& [l, s] : r.grid) row(l, s);
    out << "best lambda " << std::fixed << std::setprecision(2) << r.best_lambda << ": CER "
        << format_percent(r.knn_cer.cer()) << " vs " << format_percent(r.base_cer.cer()) << " without retrieval\n";
    out.unsetf(std::ios::floatfield);
}

inline int experiment(const ExperimentArgs& args, std::ostream& out, std::ostream& err) {
    try {
        const auto r = run_experiment(args);
        print_report(args, r, out);
        if (!r.knn_not_worse()) {
            err << "assertion failed: retrieval did not match the baseline CER\n";
            return kAssertionFailed;
        }
        return kOk;
    } catch (const Error& e) {
        return report(e, err);
    }
}

// ---------------------------------------------------------------------------
// memory

struct MemoryAddArgs {
    std::filesystem::path store;
    std::string text;
    double salience = 1.0;
    Timestamp now = 0;
};

inline int memory_add(const MemoryAddArgs& args, std::ostream& out, std::ostream& err) {
    try {
        auto store = load_memory_log(args.store);
        const auto id = store.store_fact(args.text, args.salience, args.now);
        append_memory_record(*store.find(id), args.store);
        out << "stored #" << id << '\n';
        return kOk;
    } catch (const Error& e) {
        return report(e, err);
    }
}

struct MemoryQueryArgs {
    std::filesystem::path store;
    std::string text;
    std::size_t top_k = 5;
};

/// One line per hit: rank, score (2 decimals), #id and text, tab-separated.
inline int memory_query(const MemoryQueryArgs& args, std::ostream& out, std::ostream& err) {
    try {
        const auto store = load_memory_log(args.store);
        const auto hits = store.retrieve(args.text, args.top_k);
        for (std::size_t i = 0; i < hits.size(); ++i) {
            std::ostringstream score;
            score << std::fixed << std::setprecision(2) << hits[i].score;
            out << (i + 1) << '\t' << score.str() << "\t#" << hits[i].entry.id << '\t' << hits[i].entry.text << '\n';
        }
        return kOk;
    } catch (const Error& e) {
        return report(e, err);
    }
}

struct CardUpdateArgs {
    std::filesystem::path card;
    std::filesystem::path distilled;
    /// When set, the distillation's facts are appended to this memory log.
    std::optional<std::filesystem::path> store;
    Timestamp now = 0;
};

inline int card_update(const CardUpdateArgs& args, std::ostream& out, std::ostream& err) {
    try {
        const auto card = load_card(args.card);
        const auto result = parse_distillation(detail::slurp(args.distilled));
        if (args.store) {
            auto store = load_memory_log(*args.store);
            for (const auto& fact : result.facts) {
                const auto id = store.store_fact(fact.text, fact.salience, args.now);
                append_memory_record(*store.find(id), *args.store);
            }
        }
        const auto updated = update_card(card, result, args.now);
        save_card(updated, args.card);
        out << "version " << updated.version << '\n';
        return kOk;
    } catch (const Error& e) {
        return report(e, err);
    }
}

struct ShowPromptArgs {
    std::filesystem::path store;
    std::filesystem::path card;
    std::string user;
    std::size_t top_k = 3;
};

inline int show_prompt(const ShowPromptArgs& args, std::ostream& out, std::ostream& err) {
    try {
        const auto store = load_memory_log(args.store);
        const auto card = load_card(args.card);
        const auto hits = store.retrieve(args.user, args.top_k);
        out << assemble_prompt(card, std::span<const ScoredMemory>(hits), args.user);
        return kOk;
    } catch (const Error& e) {
        return report(e, err);
    }
}

} // namespace knnd::cli
