#pragma once

// Beam-search translation and forced decoding with attention capture.

#include <vector>

#include "nmtlab/model.hpp"

namespace nmtlab {

struct Hypothesis {
    std::vector<int> ids;  // generated tokens, always ending in EOS
    double logprob = 0.0;  // exact sum of chosen token log-probs
    bool finished = false;
    bool forced_eos = false; // EOS appended because max_len was reached
};

// Standard beam search with length-normalized final scoring
// (score = logprob / len^norm_exp, len counting the EOS). PAD and BOS are
// never proposed. Deterministic: score ties break on lexicographically
// smaller token ids. Hypotheses that reach max_len tokens are force-finished
// with EOS and flagged.
Hypothesis beam_search(Model& model, const std::vector<int>& src_ids, int beam = 8, int max_len = 0,
                       double length_norm_exp = 1.0);

double hypothesis_score(const Hypothesis& h, double length_norm_exp);

struct ForcedDecodeResult {
    std::vector<int> output;  // == the reference, by the forcing contract
    AttentionRecord record;   // [dec_layers][heads][|ref|][|src|]
};

// Runs the decoder over the whole reference in one teacher-forced pass
// (equivalent to stepwise forcing under the causal mask) and captures the
// cross-attention distribution at every reference position.
ForcedDecodeResult forced_decode(Model& model, const std::vector<int>& src_ids,
                                 const std::vector<int>& ref_ids);

} // namespace nmtlab
