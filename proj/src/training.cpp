#include "nmtlab/training.hpp"

#include <cmath>
#include <iostream>
#include <limits>

#include "nmtlab/errors.hpp"

namespace nmtlab {

namespace {

// Teacher-forcing split: input BOS y1..yn, labels y1..yn EOS.
void split_target(const std::vector<int>& tgt, std::vector<int>& input, std::vector<int>& labels) {
    if (tgt.size() < 2) throw DataError("target sequence must contain BOS and EOS");
    input.assign(tgt.begin(), tgt.end() - 1);
    labels.assign(tgt.begin() + 1, tgt.end());
}

// Sentence NLL as a graph tensor plus its token count.
Tensor sentence_nll(Model& model, const SentencePair& pair, bool training, Rng& rng, double label_smoothing,
                    long long& tokens_out) {
    std::vector<int> input, labels;
    split_target(pair.tgt, input, labels);
    Tensor logits = model.forward(pair.src, input, nullptr, training, rng);
    Tensor picked = gather_log_softmax(logits, labels); // [T]
    tokens_out = static_cast<long long>(labels.size());
    Tensor nll = scale(sum_all(picked), -1.0);
    if (label_smoothing > 0.0) {
        const int v = logits.cols();
        Tensor lsm = log_softmax_rows(logits);
        Tensor mean_logp = matmul(lsm, Tensor::full({v, 1}, 1.0 / v)); // [T x 1]
        nll = add(scale(nll, 1.0 - label_smoothing), scale(sum_all(mean_logp), -label_smoothing));
    }
    return nll;
}

} // namespace

double perplexity(Model& model, const std::vector<SentencePair>& corpus) {
    if (corpus.empty()) throw DataError("perplexity: empty corpus");
    Rng rng(0); // inference path draws nothing
    double total_nll = 0.0;
    long long total_tokens = 0;
    for (const auto& pair : corpus) {
        long long tokens = 0;
        Tensor nll = sentence_nll(model, pair, false, rng, 0.0, tokens);
        total_nll += nll[0];
        total_tokens += tokens;
    }
    return std::exp(total_nll / static_cast<double>(total_tokens));
}

ScheduleDecision lr_schedule_step(TrainState& state, double new_val_ppl, const TrainConfig& cfg) {
    ScheduleDecision d;
    if (new_val_ppl < state.best_val_ppl) {
        state.best_val_ppl = new_val_ppl;
        state.checkpoints_since_best = 0;
        state.plateau_counter = 0;
        d.improved = true;
        return d;
    }
    state.checkpoints_since_best += 1;
    state.plateau_counter += 1;
    if (state.plateau_counter >= cfg.plateau_patience) {
        state.lr *= cfg.lr_decay_factor;
        state.plateau_counter = 0;
        d.decayed = true;
    }
    if (state.checkpoints_since_best >= cfg.stop_patience) d.stop = true;
    return d;
}

void write_metrics_header(std::ostream& os) { os << "checkpoint\tupdates\ttrain_loss\tval_ppl\tlr\n"; }

void write_metrics_row(std::ostream& os, const MetricsRow& row) {
    os << row.checkpoint_index << '\t' << row.updates << '\t' << row.train_loss << '\t' << row.val_ppl << '\t'
       << row.lr << "\n";
}

TrainResult train(Model& model, const std::vector<SentencePair>& train_pairs,
                  const std::vector<SentencePair>& dev_pairs, const TrainConfig& cfg,
                  std::ostream* metrics_out) {
    if (train_pairs.empty()) throw DataError("train: empty training corpus");
    if (dev_pairs.empty()) throw DataError("train: empty validation corpus");
    if (cfg.checkpoint_interval <= 0) throw ConfigError("train: checkpoint_interval must be positive");
    if (cfg.max_updates < 0 && cfg.stop_patience <= 0)
        throw ConfigError("train: unbounded max_updates requires a positive stop_patience");

    TrainResult result;
    result.state.lr = cfg.lr;
    result.state.seed = cfg.seed;
    result.best = snapshot_model(model);
    if (cfg.max_updates == 0) return result; // zero budget: initial checkpoint untouched

    double clip = cfg.clip_norm;
    if (clip < 0.0) clip = model.config().family == Family::rnn ? 1.0 : 0.0;

    AdamState adam;
    adam.beta1 = cfg.adam_beta1;
    adam.beta2 = cfg.adam_beta2;
    adam.epsilon = cfg.adam_epsilon;
    adam.lr = cfg.lr;

    Rng master(cfg.seed);
    Rng dropout_rng = master.split();

    if (metrics_out) write_metrics_header(*metrics_out);

    double loss_accum = 0.0;
    long long token_accum = 0;
    bool done = false;
    for (std::uint64_t epoch = 0; !done; ++epoch) {
        auto batches = make_batches(train_pairs, cfg.token_budget, cfg.seed + epoch * 0x9e37u + 1);
        for (const auto& batch : batches) {
            auto& params = model.parameters();
            zero_grads(params);
            long long batch_tokens = 0;
            Tensor total;
            for (int r = 0; r < batch.rows; ++r) {
                SentencePair pair{batch.src_row(r), batch.tgt_row(r)};
                long long tokens = 0;
                Tensor nll = sentence_nll(model, pair, true, dropout_rng, cfg.label_smoothing, tokens);
                total = total.defined() ? add(total, nll) : nll;
                batch_tokens += tokens;
            }
            Tensor loss = scale(total, 1.0 / static_cast<double>(batch_tokens));
            const double batch_loss = loss[0];
            if (!std::isfinite(batch_loss))
                throw ContractError("training loss diverged (non-finite) at update " +
                                    std::to_string(result.state.update_count + 1));
            backward(loss);
            if (clip > 0.0) clip_global_norm(params, clip);
            adam.lr = result.state.lr;
            adam_update(params, adam);
            result.state.update_count += 1;
            loss_accum += batch_loss * static_cast<double>(batch_tokens);
            token_accum += batch_tokens;

            if (result.state.update_count % cfg.checkpoint_interval == 0) {
                result.state.checkpoint_index += 1;
                double val_ppl = perplexity(model, dev_pairs);
                ScheduleDecision d = lr_schedule_step(result.state, val_ppl, cfg);
                if (d.improved) result.best = snapshot_model(model);
                MetricsRow row{result.state.checkpoint_index, result.state.update_count,
                               token_accum ? loss_accum / static_cast<double>(token_accum) : 0.0, val_ppl,
                               result.state.lr};
                result.log.push_back(row);
                if (metrics_out) write_metrics_row(*metrics_out, row);
                loss_accum = 0.0;
                token_accum = 0;
                if (d.stop) {
                    result.stopped_early = true;
                    done = true;
                    break;
                }
            }
            if (cfg.max_updates > 0 && result.state.update_count >= cfg.max_updates) {
                done = true;
                break;
            }
        }
    }
    return result;
}

} // namespace nmtlab
