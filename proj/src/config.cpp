#include "nmtlab/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>

#include "nmtlab/data.hpp"
#include "nmtlab/errors.hpp"

namespace nmtlab {

void ExperimentConfig::apply_preset(const std::string& name) {
    if (name == "paper") {
        // full-scale defaults are the struct defaults; restate the load-bearing ones
        preset = "paper";
        model = ModelConfig{};
        train = TrainConfig{};
        train.max_updates = -1; // run until early stopping
        bpe_merges = 32000;
        beam_size = 8;
    } else if (name == "toy") {
        preset = "toy";
        model = ModelConfig{};
        model.d_model = 64;
        model.ff_dim = 128;
        model.heads = 4;
        model.encoder_layers = 2;
        model.decoder_layers = 2;
        train = TrainConfig{};
        train.lr = 1e-3;
        train.token_budget = 320;
        train.checkpoint_interval = 50;
        train.plateau_patience = 4;
        train.stop_patience = 8;
        train.max_updates = 2000;
        bpe_merges = 500;
        beam_size = 8;
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected paper or toy)");
    }
}

namespace {

long long to_ll(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        long long out = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

int to_int(const std::string& key, const std::string& v) { return static_cast<int>(to_ll(key, v)); }

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

} // namespace

ExperimentConfig parse_config_lines(const std::vector<std::string>& lines, const std::string& origin,
                                    bool check_paths) {
    ExperimentConfig cfg;
    cfg.apply_preset("paper");
    std::set<std::string> seen;
    for (const auto& raw : lines) {
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
        size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        line = line.substr(start);
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(origin + ": line without '=': '" + raw + "'");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        if (seen.count(key))
            std::cerr << "warning: duplicate config key '" << key << "' in " << origin << "; last value wins\n";
        seen.insert(key);

        if (key == "preset")
            cfg.apply_preset(val);
        else if (key == "seed")
            cfg.seed = static_cast<std::uint64_t>(to_ll(key, val));
        else if (key == "family")
            cfg.model.family = family_from_name(val);
        else if (key == "encoder_layers")
            cfg.model.encoder_layers = to_int(key, val);
        else if (key == "decoder_layers")
            cfg.model.decoder_layers = to_int(key, val);
        else if (key == "use_attention")
            cfg.model.use_attention = to_bool(key, val);
        else if (key == "use_source_positions")
            cfg.model.use_source_positions = to_bool(key, val);
        else if (key == "d_model")
            cfg.model.d_model = to_int(key, val);
        else if (key == "ff_dim")
            cfg.model.ff_dim = to_int(key, val);
        else if (key == "heads")
            cfg.model.heads = to_int(key, val);
        else if (key == "tie_embeddings")
            cfg.model.tie_embeddings = to_bool(key, val);
        else if (key == "dropout_embed")
            cfg.model.dropout_embed = to_double(key, val);
        else if (key == "dropout_block")
            cfg.model.dropout_block = to_double(key, val);
        else if (key == "dropout_rnn")
            cfg.model.dropout_rnn = to_double(key, val);
        else if (key == "freeze_embeddings")
            cfg.model.freeze_embeddings = to_bool(key, val);
        else if (key == "lr")
            cfg.train.lr = to_double(key, val);
        else if (key == "adam_beta1")
            cfg.train.adam_beta1 = to_double(key, val);
        else if (key == "adam_beta2")
            cfg.train.adam_beta2 = to_double(key, val);
        else if (key == "adam_epsilon")
            cfg.train.adam_epsilon = to_double(key, val);
        else if (key == "label_smoothing")
            cfg.train.label_smoothing = to_double(key, val);
        else if (key == "clip_norm")
            cfg.train.clip_norm = to_double(key, val);
        else if (key == "token_budget")
            cfg.train.token_budget = to_ll(key, val);
        else if (key == "checkpoint_interval")
            cfg.train.checkpoint_interval = to_int(key, val);
        else if (key == "plateau_patience")
            cfg.train.plateau_patience = to_int(key, val);
        else if (key == "lr_decay_factor")
            cfg.train.lr_decay_factor = to_double(key, val);
        else if (key == "stop_patience")
            cfg.train.stop_patience = to_int(key, val);
        else if (key == "max_updates")
            cfg.train.max_updates = to_ll(key, val);
        else if (key == "min_count")
            cfg.min_count = to_int(key, val);
        else if (key == "bpe_merges")
            cfg.bpe_merges = to_int(key, val);
        else if (key == "bpe_marker")
            cfg.bpe_marker = val;
        else if (key == "beam_size")
            cfg.beam_size = to_int(key, val);
        else if (key == "max_output_len")
            cfg.max_output_len = to_int(key, val);
        else if (key == "length_norm")
            cfg.length_norm = to_double(key, val);
        else if (key == "train_src")
            cfg.train_src = val;
        else if (key == "train_tgt")
            cfg.train_tgt = val;
        else if (key == "dev_src")
            cfg.dev_src = val;
        else if (key == "dev_tgt")
            cfg.dev_tgt = val;
        else if (key == "test_src")
            cfg.test_src = val;
        else if (key == "test_tgt")
            cfg.test_tgt = val;
        else if (key == "gold_alignment")
            cfg.gold_alignment = val;
        else if (key == "init_checkpoint")
            cfg.init_checkpoint = val;
        else if (key == "model_out")
            cfg.model_out = val;
        else if (key == "vocab_out")
            cfg.vocab_out = val;
        else if (key == "metrics_out")
            cfg.metrics_out = val;
        else
            throw ConfigError(origin + ": unknown config key '" + key + "'");
    }

    if (const char* env = std::getenv("NMTLAB_SEED")) {
        cfg.seed = static_cast<std::uint64_t>(to_ll("NMTLAB_SEED", env));
    }
    cfg.train.seed = cfg.seed;

    if (check_paths) {
        for (const auto& [name, path] :
             std::vector<std::pair<std::string, std::string>>{{"train_src", cfg.train_src},
                                                              {"train_tgt", cfg.train_tgt},
                                                              {"dev_src", cfg.dev_src},
                                                              {"dev_tgt", cfg.dev_tgt},
                                                              {"test_src", cfg.test_src},
                                                              {"test_tgt", cfg.test_tgt},
                                                              {"gold_alignment", cfg.gold_alignment},
                                                              {"init_checkpoint", cfg.init_checkpoint}}) {
            if (!path.empty() && !std::filesystem::exists(path))
                throw ConfigError(origin + ": " + name + " refers to missing file '" + path + "'");
        }
    }
    cfg.model.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    return parse_config_lines(read_lines(path), path);
}

} // namespace nmtlab
