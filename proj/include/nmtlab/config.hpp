#pragma once

// Flat key=value experiment configuration with paper-default and toy
// presets. Unknown keys are rejected; duplicates warn and take the last
// value; the NMTLAB_SEED environment variable overrides the seed.

#include <string>
#include <vector>

#include "nmtlab/model.hpp"
#include "nmtlab/training.hpp"

namespace nmtlab {

struct ExperimentConfig {
    std::string preset = "paper";
    std::uint64_t seed = 1;

    ModelConfig model;
    TrainConfig train;

    int min_count = 1;
    int bpe_merges = 32000;
    std::string bpe_marker = "@@";

    int beam_size = 8;
    int max_output_len = 0; // 0 = adaptive (2 * source length + 10)
    double length_norm = 1.0;

    // input paths (existence checked at load when set)
    std::string train_src, train_tgt, dev_src, dev_tgt, test_src, test_tgt;
    std::string gold_alignment;
    std::string init_checkpoint;

    // output paths
    std::string model_out = "model.ckpt";
    std::string vocab_out;   // default: <model_out>.vocab
    std::string metrics_out; // default: <model_out>.metrics.tsv

    std::string vocab_path() const { return vocab_out.empty() ? model_out + ".vocab" : vocab_out; }
    std::string metrics_path() const { return metrics_out.empty() ? model_out + ".metrics.tsv" : metrics_out; }

    void apply_preset(const std::string& name);
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_lines(const std::vector<std::string>& lines, const std::string& origin,
                                    bool check_paths = true);

} // namespace nmtlab
