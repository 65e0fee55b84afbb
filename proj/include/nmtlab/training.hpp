#pragma once

// Optimization protocol: Adam, periodic validation checkpoints, plateau
// learning-rate decay, checkpoint-patience early stopping.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nmtlab/checkpoint.hpp"
#include "nmtlab/data.hpp"
#include "nmtlab/model.hpp"

namespace nmtlab {

struct TrainConfig {
    double lr = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double label_smoothing = 0.0;
    // <0 selects the family default: 1.0 for RNNs, off for transformers
    double clip_norm = -1.0;
    long long token_budget = 2048;
    int checkpoint_interval = 1000;
    int plateau_patience = 8;    // non-improving checkpoints before decay
    double lr_decay_factor = 0.7;
    int stop_patience = 32;      // non-improving checkpoints before stopping
    long long max_updates = 0;   // 0 = until early stopping
    std::uint64_t seed = 1;
};

struct TrainState {
    long long update_count = 0;
    int checkpoint_index = 0;
    double best_val_ppl = std::numeric_limits<double>::infinity();
    int checkpoints_since_best = 0;
    double lr = 1e-4;
    std::uint64_t seed = 1;
    int plateau_counter = 0;
};

struct ScheduleDecision {
    bool improved = false;
    bool decayed = false;
    bool stop = false;
};

// One call per checkpoint. Improvement resets both counters; the 8th (by
// default) consecutive non-improving checkpoint multiplies lr by the decay
// factor and resets the plateau counter; early stop fires at stop_patience
// checkpoints since the best one.
ScheduleDecision lr_schedule_step(TrainState& state, double new_val_ppl, const TrainConfig& cfg);

// exp(total token NLL / total target tokens); EOS counted, PAD excluded.
double perplexity(Model& model, const std::vector<SentencePair>& corpus);

// Mean per-token cross-entropy of one batch plus the token count.
struct LossStats {
    double loss_sum = 0.0; // summed over tokens
    long long tokens = 0;
    double mean() const { return tokens ? loss_sum / static_cast<double>(tokens) : 0.0; }
};

struct MetricsRow {
    int checkpoint_index;
    long long updates;
    double train_loss;
    double val_ppl;
    double lr;
};

struct TrainResult {
    Checkpoint best;
    TrainState state;
    std::vector<MetricsRow> log;
    bool stopped_early = false;
};

// Trains until the update budget or early stopping. Returns the checkpoint
// with the best validation perplexity; a zero budget returns the initial
// parameters untouched. Diverging loss (NaN) aborts with a diagnostic
// naming the update index.
TrainResult train(Model& model, const std::vector<SentencePair>& train_pairs,
                  const std::vector<SentencePair>& dev_pairs, const TrainConfig& cfg,
                  std::ostream* metrics_out = nullptr);

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const MetricsRow& row);

} // namespace nmtlab
