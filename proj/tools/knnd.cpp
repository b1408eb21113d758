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

// knnd: toy-scale kNN-augmented decoding pipeline and persona memory tool.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "knnd/commands.hpp"

namespace {

using namespace knnd;
using namespace knnd::cli;

std::optional<std::uint64_t> env_seed() {
    const char* raw = std::getenv("KNND_SEED");
    if (raw == nullptr || *raw == '\0') return std::nullopt;
    std::uint64_t v = 0;
    const std::string_view s(raw);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw CLI::ValidationError("KNND_SEED", "must be an unsigned integer, got '" + std::string(s) + "'");
    }
    return v;
}

void add_model_flags(CLI::App* app, ModelArgs& m) {
    app->add_option("--model-seed", m.seed, "toy model seed")->capture_default_str();
    app->add_option("--vocab", m.vocab_size, "vocabulary size including EOS")->capture_default_str();
    app->add_option("--state-dim", m.state_dim, "hidden state dimension")->capture_default_str();
    app->add_option("--eos-bias", m.eos_bias, "additive EOS logit bias")->capture_default_str();
}

void add_decode_flags(CLI::App* app, DecodeConfig& c, bool with_lambda) {
    if (with_lambda) {
        app->add_option("--lambda", c.lambda, "interpolation weight")
            ->check(CLI::Range(0.0, 1.0))
            ->capture_default_str();
    }
    app->add_option("--k", c.k, "neighbors per step")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--temperature,--tau", c.temperature, "kNN softmax temperature")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--beam", c.beam_width, "beam width")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--max-len", c.max_len, "maximum output length")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--length-penalty", c.length_penalty, "length normalization exponent")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
}

/// Loads --config, then re-applies flags given on the command line so they win.
void merge_config(CLI::App* app, const std::string& path, DecodeConfig& cfg) {
    if (path.empty()) return;
    DecodeConfig from_file = cfg;
    apply_config_json(from_file, detail::slurp(path));
    auto keep = [&](const char* flag, auto DecodeConfig::*field) {
        const auto* opt = app->get_option_no_throw(flag);
        if (opt == nullptr || opt->count() == 0) cfg.*field = from_file.*field;
    };
    keep("--lambda", &DecodeConfig::lambda);
    keep("--k", &DecodeConfig::k);
    keep("--temperature", &DecodeConfig::temperature);
    keep("--beam", &DecodeConfig::beam_width);
    keep("--max-len", &DecodeConfig::max_len);
    keep("--length-penalty", &DecodeConfig::length_penalty);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kNN-augmented decoding and persona memory at toy scale"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed_override;
    try {
        seed_override = env_seed();
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }

    ModelArgs model;
    std::uint64_t corpus_seed = 1;
    if (seed_override) {
        model.seed = *seed_override;
        corpus_seed = *seed_override;
    }
    std::string config_path;
    int code = kOk;

    BuildDatastoreArgs bd;
    bd.model = model;
    bd.corpus_seed = corpus_seed;
    std::string bd_out;
    auto* c_bd = app.add_subcommand("build-datastore", "build a datastore from a synthetic corpus");
    add_model_flags(c_bd, bd.model);
    c_bd->add_option("--corpus-seed", bd.corpus_seed)->capture_default_str();
    c_bd->add_option("--n-pairs", bd.n_pairs)->capture_default_str();
    c_bd->add_option("--min-len", bd.len.min)->capture_default_str();
    c_bd->add_option("--max-target-len", bd.len.max)->capture_default_str();
    c_bd->add_option("--rare-rate", bd.rare_rate)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    c_bd->add_option("-o,--output", bd_out, "output datastore path")->required();

    BuildIndexArgs bi;
    std::string bi_ds, bi_out;
    auto* c_bi = app.add_subcommand("build-index", "build a flat or IVF index over a datastore");
    c_bi->add_option("--datastore", bi_ds)->required();
    c_bi->add_option("-o,--output", bi_out)->required();
    c_bi->add_option("--clusters", bi.n_clusters, "0 builds a flat index")->capture_default_str();
    c_bi->add_option("--iters", bi.n_iters)->capture_default_str();
    c_bi->add_option("--seed", bi.seed)->capture_default_str();
    if (seed_override) bi.seed = *seed_override;

    DecodeArgs dec;
    dec.model = model;
    std::vector<std::string> dec_sources;
    std::string dec_source_file, dec_ds, dec_index;
    auto* c_dec = app.add_subcommand("decode", "decode source sequences");
    add_model_flags(c_dec, dec.model);
    add_decode_flags(c_dec, dec.cfg, true);
    c_dec->add_option("--source", dec_sources, "whitespace-separated token ids");
    c_dec->add_option("--source-file", dec_source_file, "one source per line");
    c_dec->add_option("--datastore", dec_ds);
    c_dec->add_option("--index", dec_index);
    c_dec->add_option("--n-probe", dec.n_probe, "IVF lists to probe, 0 for all")->capture_default_str();
    c_dec->add_option("--config", config_path, "JSON file with DecodeConfig keys");

    EvalArgs ev;
    std::string ev_ref, ev_hyp;
    auto* c_ev = app.add_subcommand("eval", "score hypotheses against references");
    c_ev->add_option("--ref", ev_ref)->required();
    c_ev->add_option("--hyp", ev_hyp)->required();
    c_ev->add_flag("--chars", ev.chars, "score UTF-8 characters instead of whitespace-separated symbols");

    ExperimentArgs ex;
    ex.model = model;
    ex.corpus_seed = corpus_seed;
    auto* c_ex = app.add_subcommand("experiment", "end-to-end synthetic comparison");
    add_model_flags(c_ex, ex.model);
    add_decode_flags(c_ex, ex.cfg, false);
    c_ex->add_option("--corpus-seed", ex.corpus_seed)->capture_default_str();
    c_ex->add_option("--n-train", ex.n_train)->capture_default_str();
    c_ex->add_option("--n-test", ex.n_test)->capture_default_str();
    c_ex->add_option("--min-len", ex.len.min)->capture_default_str();
    c_ex->add_option("--max-target-len", ex.len.max)->capture_default_str();
    c_ex->add_option("--rare-rate", ex.rare_rate)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    c_ex->add_option("--lambdas", ex.lambdas, "lambda grid")->delimiter(',');
    c_ex->add_option("--config", config_path, "JSON file with DecodeConfig keys");

    auto* c_mem = app.add_subcommand("memory", "persona memory store");
    c_mem->require_subcommand(1);
    MemoryAddArgs ma;
    std::string ma_store;
    auto* c_ma = c_mem->add_subcommand("add", "append a fact to the memory log");
    c_ma->add_option("--store", ma_store)->required();
    c_ma->add_option("--text", ma.text)->required();
    c_ma->add_option("--salience", ma.salience)->capture_default_str();
    c_ma->add_option("--now", ma.now, "timestamp")->capture_default_str();

    MemoryQueryArgs mq;
    std::string mq_store;
    auto* c_mq = c_mem->add_subcommand("query", "rank stored facts against a query");
    c_mq->add_option("--store", mq_store)->required();
    c_mq->add_option("--text", mq.text)->required();
    c_mq->add_option("--top-k", mq.top_k)->check(CLI::PositiveNumber)->capture_default_str();

    CardUpdateArgs cu;
    std::string cu_card, cu_dist, cu_store;
    auto* c_cu = c_mem->add_subcommand("card-update", "apply a distillation result to a persona card");
    c_cu->add_option("--card", cu_card)->required();
    c_cu->add_option("--distilled", cu_dist, "distillation JSON")->required();
    c_cu->add_option("--store", cu_store, "memory log receiving the distilled facts");
    c_cu->add_option("--now", cu.now, "timestamp")->capture_default_str();

    ShowPromptArgs sp;
    std::string sp_store, sp_card;
    auto* c_sp = c_mem->add_subcommand("show-prompt", "print the assembled responder prompt");
    c_sp->add_option("--store", sp_store)->required();
    c_sp->add_option("--card", sp_card)->required();
    c_sp->add_option("--user", sp.user, "user turn")->required();
    c_sp->add_option("--top-k", sp.top_k)->check(CLI::PositiveNumber)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (c_bd->parsed()) {
            bd.output = bd_out;
            code = build_datastore(bd, std::cout, std::cerr);
        } else if (c_bi->parsed()) {
            bi.datastore = bi_ds;
            bi.output = bi_out;
            code = build_index(bi, std::cout, std::cerr);
        } else if (c_dec->parsed()) {
            merge_config(c_dec, config_path, dec.cfg);
            for (const auto& s : dec_sources) dec.sources.push_back(parse_tokens(s));
            if (!dec_source_file.empty()) {
                for (const auto& line : read_lines(dec_source_file)) dec.sources.push_back(parse_tokens(line));
            }
            if (dec.sources.empty()) {
                std::cerr << "error: decode needs --source or --source-file\n";
                return kUsage;
            }
            if (!dec_ds.empty()) dec.datastore = dec_ds;
            if (!dec_index.empty()) dec.index = dec_index;
            code = decode(dec, std::cout, std::cerr);
        } else if (c_ev->parsed()) {
            ev.reference = ev_ref;
            ev.hypothesis = ev_hyp;
            code = eval(ev, std::cout, std::cerr);
        } else if (c_ex->parsed()) {
            merge_config(c_ex, config_path, ex.cfg);
            code = experiment(ex, std::cout, std::cerr);
        } else if (c_ma->parsed()) {
            ma.store = ma_store;
            code = memory_add(ma, std::cout, std::cerr);
        } else if (c_mq->parsed()) {
            mq.store = mq_store;
            code = memory_query(mq, std::cout, std::cerr);
        } else if (c_cu->parsed()) {
            cu.card = cu_card;
            cu.distilled = cu_dist;
            if (!cu_store.empty()) cu.store = cu_store;
            code = card_update(cu, std::cout, std::cerr);
        } else if (c_sp->parsed()) {
            sp.store = sp_store;
            sp.card = sp_card;
            code = show_prompt(sp, std::cout, std::cerr);
        }
    } catch (const Error& e) {
        return report(e, std::cerr);
    }
    std::cout.flush();
    if (!std::cout) {
        std::cerr << "error: failed writing to stdout\n";
        return kIo;
    }
    return code;
}
