#include "nmtlab/cli.hpp"

#include <fstream>
#include <iomanip>
#include <optional>
#include <iostream>

#include "CLI11.hpp"
#include "nmtlab/analysis.hpp"
#include "nmtlab/checkpoint.hpp"
#include "nmtlab/config.hpp"
#include "nmtlab/data.hpp"
#include "nmtlab/errors.hpp"
#include "nmtlab/inference.hpp"
#include "nmtlab/subword.hpp"
#include "nmtlab/training.hpp"

namespace nmtlab {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    return os;
}

ExperimentConfig config_or_default(const std::string& path) {
    if (path.empty()) {
        ExperimentConfig cfg;
        cfg.apply_preset("paper");
        return cfg;
    }
    return load_config(path);
}

// ---- command implementations ----

int run_learn_bpe(const std::vector<std::string>& inputs, int merges, const std::string& output,
                  const std::string& marker) {
    std::vector<std::string> corpus;
    for (const auto& path : inputs) {
        auto lines = read_lines(path);
        corpus.insert(corpus.end(), lines.begin(), lines.end());
    }
    BpeModel model = learn_bpe(corpus, merges, marker);
    save_bpe_file(model, output);
    std::cout << "learned " << model.num_merges << " merges\n";
    return 0;
}

int run_apply_bpe(const std::string& model_path, const std::string& input, const std::string& output) {
    BpeModel model = load_bpe_file(model_path);
    auto os = open_out(output);
    for (const auto& line : read_lines(input)) os << join_ws(apply_bpe(model, line)) << "\n";
    return 0;
}

int run_train(const std::string& config_path) {
    ExperimentConfig cfg = load_config(config_path);
    if (cfg.train_src.empty() || cfg.train_tgt.empty() || cfg.dev_src.empty() || cfg.dev_tgt.empty())
        throw ConfigError("train requires train_src, train_tgt, dev_src and dev_tgt");

    auto train_src = read_token_lines(cfg.train_src);
    auto train_tgt = read_token_lines(cfg.train_tgt);
    auto dev_src = read_token_lines(cfg.dev_src);
    auto dev_tgt = read_token_lines(cfg.dev_tgt);

    // joint vocabulary over both sides, as with joint BPE
    std::vector<std::vector<std::string>> joint = train_src;
    joint.insert(joint.end(), train_tgt.begin(), train_tgt.end());
    Vocabulary vocab = build_vocab(joint, cfg.min_count);

    ModelConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    std::optional<Checkpoint> init;
    if (!cfg.init_checkpoint.empty()) {
        init = Checkpoint::load(cfg.init_checkpoint);
        // a transplanted checkpoint may carry the freeze flag; honor it
        if (init->config.freeze_embeddings) mc.freeze_embeddings = true;
    }
    Rng init_rng = Rng(cfg.seed).split();
    auto model = build_model(mc, init_rng);
    if (init) restore_model(*model, *init);

    auto train_pairs = encode_corpus(vocab, train_src, train_tgt).pairs;
    auto dev_pairs = encode_corpus(vocab, dev_src, dev_tgt).pairs;

    auto metrics = open_out(cfg.metrics_path());
    TrainResult result = train(*model, train_pairs, dev_pairs, cfg.train, &metrics);
    result.best.save(cfg.model_out);
    vocab.save(cfg.vocab_path());
    std::cout << "best checkpoint: val_ppl=" << result.state.best_val_ppl << " after "
              << result.state.update_count << " updates"
              << (result.stopped_early ? " (early stop)" : "") << "\n";
    return 0;
}

int run_translate(const std::string& ckpt_path, const std::string& vocab_path, const std::string& input,
                  const std::string& output, const std::string& config_path, int beam_override,
                  int max_len_override, bool keep_subwords) {
    ExperimentConfig cfg = config_or_default(config_path);
    int beam = beam_override > 0 ? beam_override : cfg.beam_size;
    Checkpoint ckpt = Checkpoint::load(ckpt_path);
    auto model = model_from_checkpoint(ckpt);
    Vocabulary vocab = Vocabulary::load(vocab_path);
    if (vocab.size() != model->config().vocab_size)
        throw ConfigError("vocabulary size " + std::to_string(vocab.size()) + " does not match checkpoint vocab " +
                          std::to_string(model->config().vocab_size));
    auto os = open_out(output);
    for (const auto& tokens : read_token_lines(input)) {
        if (tokens.empty()) {
            os << "\n";
            continue;
        }
        std::vector<int> src = encode_source(vocab, tokens);
        int max_len = max_len_override > 0 ? max_len_override
                      : cfg.max_output_len > 0 ? cfg.max_output_len
                                               : 2 * static_cast<int>(src.size()) + 10;
        Hypothesis hyp = beam_search(*model, src, beam, max_len, cfg.length_norm);
        std::vector<std::string> out_tokens = decode_tokens(vocab, hyp.ids);
        if (!keep_subwords) out_tokens = restore_words(out_tokens, cfg.bpe_marker).words;
        os << join_ws(out_tokens) << "\n";
    }
    return 0;
}

int run_score_bleu(const std::string& hyp, const std::string& ref) {
    double bleu = corpus_bleu_lines(read_lines(hyp), read_lines(ref));
    std::cout << std::fixed << std::setprecision(2) << bleu << "\n";
    return 0;
}

int run_force_align(const std::string& ckpt_path, const std::string& vocab_path, const std::string& src_path,
                    const std::string& ref_path, const std::string& gold_path, const std::string& dump_path,
                    const std::string& align_prefix, const std::string& report_path,
                    const std::string& marker) {
    Checkpoint ckpt = Checkpoint::load(ckpt_path);
    auto model = model_from_checkpoint(ckpt);
    Vocabulary vocab = Vocabulary::load(vocab_path);
    auto src_lines = read_token_lines(src_path);
    auto ref_lines = read_token_lines(ref_path);
    if (src_lines.size() != ref_lines.size())
        throw DataError("force-align: source and reference line counts differ");

    std::ofstream dump;
    if (!dump_path.empty()) {
        dump.open(dump_path);
        if (!dump) throw DataError("cannot write " + dump_path);
    }

    int layers = 0;
    std::vector<std::vector<AlignmentLinks>> per_layer_links; // [layer][sentence]
    for (size_t i = 0; i < src_lines.size(); ++i) {
        if (src_lines[i].empty() || ref_lines[i].empty())
            throw DataError("force-align: empty sentence at line " + std::to_string(i + 1));
        std::vector<int> src = encode_source(vocab, src_lines[i]);
        std::vector<int> ref = encode_source(vocab, ref_lines[i]); // raw ids, no BOS/EOS
        ForcedDecodeResult fd = forced_decode(*model, src, ref);
        if (dump.is_open()) write_attention_dump(dump, static_cast<int>(i), fd.record);
        if (fd.record.empty()) throw DataError("force-align: model produced no attention (noAtt variant?)");
        if (layers == 0) {
            layers = fd.record.layers;
            per_layer_links.resize(static_cast<size_t>(layers));
        }
        auto src_spans = restore_words(src_lines[i], marker).spans;
        auto tgt_spans = restore_words(ref_lines[i], marker).spans;
        for (int l = 0; l < layers; ++l)
            per_layer_links[static_cast<size_t>(l)].push_back(
                extract_alignment(fd.record, src_spans, tgt_spans, l));
    }

    if (!align_prefix.empty()) {
        for (int l = 0; l < layers; ++l) {
            auto os = open_out(align_prefix + ".layer" + std::to_string(l));
            for (const auto& links : per_layer_links[static_cast<size_t>(l)])
                os << alignment_to_line(links) << "\n";
        }
    }

    if (!gold_path.empty()) {
        auto gold = read_gold_alignment_lines(read_lines(gold_path));
        if (gold.size() != src_lines.size())
            throw DataError("force-align: gold alignment line count differs from corpus");
        std::ostringstream report;
        report << "layer\taer\n";
        int best_layer = 0;
        double best = 2.0;
        for (int l = 0; l < layers; ++l) {
            double v = corpus_aer(per_layer_links[static_cast<size_t>(l)], gold);
            report << l << '\t' << std::fixed << std::setprecision(4) << v << "\n";
            if (v < best) {
                best = v;
                best_layer = l;
            }
        }
        report << "best\t" << best_layer << "\t" << std::fixed << std::setprecision(4) << best << "\n";
        std::cout << report.str();
        if (!report_path.empty()) open_out(report_path) << report.str();
    }
    return 0;
}

int run_aer(const std::string& pred_path, const std::string& gold_path) {
    auto pred = read_alignment_lines(read_lines(pred_path));
    auto gold = read_gold_alignment_lines(read_lines(gold_path));
    if (pred.size() != gold.size()) throw DataError("aer: line counts differ");
    std::cout << std::fixed << std::setprecision(4) << corpus_aer(pred, gold) << "\n";
    return 0;
}

int run_entropy(const std::string& dump_path, const std::string& out_path) {
    std::ifstream is(dump_path);
    if (!is) throw DataError("cannot read " + dump_path);
    auto records = read_attention_dump(is);
    if (records.empty()) throw DataError("entropy: no records in dump");
    EntropyAccumulator acc;
    for (const auto& r : records) acc.add(r.record);
    EntropyProfile p = acc.profile();
    std::ostringstream report;
    report << "layer\tentropy_nats\n";
    for (size_t l = 0; l < p.per_layer.size(); ++l)
        report << l << '\t' << std::setprecision(6) << std::fixed << p.per_layer[l] << "\n";
    report << "overall\t" << std::setprecision(6) << std::fixed << p.overall << "\n";
    std::cout << report.str();
    if (!out_path.empty()) open_out(out_path) << report.str();
    return 0;
}

int run_neighbors(const std::string& ckpt_path, const std::string& vocab_path,
                  const std::vector<std::string>& tokens, int k) {
    Checkpoint ckpt = Checkpoint::load(ckpt_path);
    Vocabulary vocab = Vocabulary::load(vocab_path);
    const std::string emb_name = ckpt.config.tie_embeddings ? "embedding" : "src_embedding";
    const NamedTensorData* emb = ckpt.find(emb_name);
    if (!emb) throw DataError("checkpoint has no tensor '" + emb_name + "'");
    Tensor table = Tensor::from_data(emb->shape, emb->values);
    for (const auto& tok : tokens) {
        int id = vocab.id_strict(tok);
        auto neighbors = nearest_neighbors(table, id, k);
        std::cout << tok;
        for (const auto& n : neighbors)
            std::cout << '\t' << vocab.token(n.id) << " (" << std::setprecision(4) << std::fixed << n.similarity
                      << ")";
        std::cout << "\n";
    }
    return 0;
}

int run_transplant(const std::string& target_path, const std::string& source_path, const std::string& out_path,
                   bool fixed) {
    Checkpoint target = Checkpoint::load(target_path);
    Checkpoint source = Checkpoint::load(source_path);
    Checkpoint out = transplant_embeddings(target, source, fixed);
    out.save(out_path);
    std::cout << "transplanted embeddings (" << (fixed ? "fixed" : "not fixed") << ")\n";
    return 0;
}

int run_params(const std::string& config_path) {
    ExperimentConfig cfg = config_or_default(config_path);
    std::cout << param_breakdown(cfg.model);
    std::cout << "encoder_layer_delta\t" << encoder_layer_param_delta(cfg.model) << "\n";
    return 0;
}

} // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"desk-scale NMT ablation toolkit"};
    app.require_subcommand(1);

    std::function<int()> run;

    {
        auto* c = app.add_subcommand("learn-bpe", "learn BPE merges from text");
        auto inputs = std::make_shared<std::vector<std::string>>();
        auto merges = std::make_shared<int>(500);
        auto output = std::make_shared<std::string>();
        auto marker = std::make_shared<std::string>("@@");
        c->add_option("--input", *inputs, "input text file(s)")->required()->check(CLI::ExistingFile);
        c->add_option("--merges", *merges, "number of merges");
        c->add_option("--output", *output, "merge file to write")->required();
        c->add_option("--marker", *marker, "continuation marker");
        c->callback([=, &run] { run = [=] { return run_learn_bpe(*inputs, *merges, *output, *marker); }; });
    }
    {
        auto* c = app.add_subcommand("apply-bpe", "segment text with a learned BPE model");
        auto model = std::make_shared<std::string>();
        auto input = std::make_shared<std::string>();
        auto output = std::make_shared<std::string>();
        c->add_option("--model", *model, "merge file")->required()->check(CLI::ExistingFile);
        c->add_option("--input", *input, "text to segment")->required()->check(CLI::ExistingFile);
        c->add_option("--output", *output, "segmented output")->required();
        c->callback([=, &run] { run = [=] { return run_apply_bpe(*model, *input, *output); }; });
    }
    {
        auto* c = app.add_subcommand("train", "train a model per the experiment config");
        auto config = std::make_shared<std::string>();
        c->add_option("--config", *config, "experiment config file")->required()->check(CLI::ExistingFile);
        c->callback([=, &run] { run = [=] { return run_train(*config); }; });
    }
    {
        auto* c = app.add_subcommand("translate", "beam-search translation of a source file");
        auto ckpt = std::make_shared<std::string>();
        auto vocab = std::make_shared<std::string>();
        auto input = std::make_shared<std::string>();
        auto output = std::make_shared<std::string>();
        auto config = std::make_shared<std::string>();
        auto beam = std::make_shared<int>(0);
        auto max_len = std::make_shared<int>(0);
        auto keep = std::make_shared<bool>(false);
        c->add_option("--checkpoint", *ckpt)->required()->check(CLI::ExistingFile);
        c->add_option("--vocab", *vocab)->required()->check(CLI::ExistingFile);
        c->add_option("--input", *input)->required()->check(CLI::ExistingFile);
        c->add_option("--output", *output)->required();
        c->add_option("--config", *config)->check(CLI::ExistingFile);
        c->add_option("--beam", *beam, "beam size override");
        c->add_option("--max-len", *max_len, "maximum output length override");
        c->add_flag("--keep-subwords", *keep, "emit raw subword tokens");
        c->callback([=, &run] {
            run = [=] { return run_translate(*ckpt, *vocab, *input, *output, *config, *beam, *max_len, *keep); };
        });
    }
    {
        auto* c = app.add_subcommand("score-bleu", "corpus BLEU of hypothesis vs reference file");
        auto hyp = std::make_shared<std::string>();
        auto ref = std::make_shared<std::string>();
        c->add_option("--hyp", *hyp)->required()->check(CLI::ExistingFile);
        c->add_option("--ref", *ref)->required()->check(CLI::ExistingFile);
        c->callback([=, &run] { run = [=] { return run_score_bleu(*hyp, *ref); }; });
    }
    {
        auto* c = app.add_subcommand("force-align",
                                     "forced decoding: attention dump, per-layer alignments, AER report");
        auto ckpt = std::make_shared<std::string>();
        auto vocab = std::make_shared<std::string>();
        auto src = std::make_shared<std::string>();
        auto ref = std::make_shared<std::string>();
        auto gold = std::make_shared<std::string>();
        auto dump = std::make_shared<std::string>();
        auto align = std::make_shared<std::string>();
        auto report = std::make_shared<std::string>();
        auto marker = std::make_shared<std::string>("@@");
        c->add_option("--checkpoint", *ckpt)->required()->check(CLI::ExistingFile);
        c->add_option("--vocab", *vocab)->required()->check(CLI::ExistingFile);
        c->add_option("--src", *src, "BPE-segmented source")->required()->check(CLI::ExistingFile);
        c->add_option("--ref", *ref, "BPE-segmented reference")->required()->check(CLI::ExistingFile);
        c->add_option("--gold", *gold, "gold alignment (Pharaoh)")->check(CLI::ExistingFile);
        c->add_option("--dump", *dump, "attention dump output");
        c->add_option("--align-prefix", *align, "per-layer Pharaoh output prefix");
        c->add_option("--report", *report, "AER report TSV output");
        c->add_option("--marker", *marker, "BPE continuation marker");
        c->callback([=, &run] {
            run = [=] {
                return run_force_align(*ckpt, *vocab, *src, *ref, *gold, *dump, *align, *report, *marker);
            };
        });
    }
    {
        auto* c = app.add_subcommand("aer", "alignment error rate of predicted vs gold links");
        auto pred = std::make_shared<std::string>();
        auto gold = std::make_shared<std::string>();
        c->add_option("--pred", *pred)->required()->check(CLI::ExistingFile);
        c->add_option("--gold", *gold)->required()->check(CLI::ExistingFile);
        c->callback([=, &run] { run = [=] { return run_aer(*pred, *gold); }; });
    }
    {
        auto* c = app.add_subcommand("entropy", "attention entropy per layer from a dump");
        auto dump = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        c->add_option("--dump", *dump)->required()->check(CLI::ExistingFile);
        c->add_option("--out", *out, "TSV report path");
        c->callback([=, &run] { run = [=] { return run_entropy(*dump, *out); }; });
    }
    {
        auto* c = app.add_subcommand("neighbors", "nearest embedding neighbors of tokens");
        auto ckpt = std::make_shared<std::string>();
        auto vocab = std::make_shared<std::string>();
        auto tokens = std::make_shared<std::vector<std::string>>();
        auto k = std::make_shared<int>(5);
        c->add_option("--checkpoint", *ckpt)->required()->check(CLI::ExistingFile);
        c->add_option("--vocab", *vocab)->required()->check(CLI::ExistingFile);
        c->add_option("--token", *tokens, "query token (repeatable)")->required();
        c->add_option("--k", *k, "neighbors per token");
        c->callback([=, &run] { run = [=] { return run_neighbors(*ckpt, *vocab, *tokens, *k); }; });
    }
    {
        auto* c = app.add_subcommand("transplant", "copy embeddings between checkpoints");
        auto target = std::make_shared<std::string>();
        auto source = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto fixed = std::make_shared<bool>(false);
        c->add_option("--target", *target)->required()->check(CLI::ExistingFile);
        c->add_option("--source", *source)->required()->check(CLI::ExistingFile);
        c->add_option("--out", *out)->required();
        c->add_flag("--fixed", *fixed, "freeze transplanted embeddings");
        c->callback([=, &run] { run = [=] { return run_transplant(*target, *source, *out, *fixed); }; });
    }
    {
        auto* c = app.add_subcommand("params", "analytic parameter accounting for a config");
        auto config = std::make_shared<std::string>();
        c->add_option("--config", *config)->check(CLI::ExistingFile);
        c->callback([=, &run] { run = [=] { return run_params(*config); }; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        return run ? run() : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int cli_main(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

} // namespace nmtlab
