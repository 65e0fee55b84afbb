#include "nmtlab/inference.hpp"

#include <algorithm>
#include <cmath>

#include "nmtlab/data.hpp"
#include "nmtlab/errors.hpp"

namespace nmtlab {

double hypothesis_score(const Hypothesis& h, double length_norm_exp) {
    const double len = static_cast<double>(h.ids.size());
    return h.logprob / std::pow(len, length_norm_exp);
}

namespace {

// log-probabilities of the next token after the given prefix
std::vector<double> next_logprobs(Model& model, const std::vector<int>& src_ids,
                                  const std::vector<int>& prefix) {
    std::vector<int> dec_in;
    dec_in.reserve(prefix.size() + 1);
    dec_in.push_back(kBosId);
    dec_in.insert(dec_in.end(), prefix.begin(), prefix.end());
    Rng rng(0); // inference draws nothing
    Tensor logits = model.forward(src_ids, dec_in, nullptr, false, rng);
    const int v = logits.cols();
    const int last = logits.rows() - 1;
    std::vector<double> lp(static_cast<size_t>(v));
    double mx = logits.at(last, 0);
    for (int j = 1; j < v; ++j) mx = std::max(mx, logits.at(last, j));
    double z = 0.0;
    for (int j = 0; j < v; ++j) z += std::exp(logits.at(last, j) - mx);
    const double lse = mx + std::log(z);
    for (int j = 0; j < v; ++j) lp[static_cast<size_t>(j)] = logits.at(last, j) - lse;
    return lp;
}

struct Candidate {
    std::vector<int> ids;
    double logprob;
    bool finished;
    bool forced;
};

bool better(const Candidate& a, const Candidate& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return a.ids < b.ids; // deterministic tie-break
}

} // namespace

Hypothesis beam_search(Model& model, const std::vector<int>& src_ids, int beam, int max_len,
                       double length_norm_exp) {
    if (src_ids.empty()) throw DataError("beam_search: empty source");
    if (beam < 1) throw ConfigError("beam_search: beam must be >= 1");
    if (max_len <= 0) max_len = 2 * static_cast<int>(src_ids.size()) + 10;

    std::vector<Candidate> live = {{{}, 0.0, false, false}};
    std::vector<Candidate> finished;

    for (int step = 0; step < max_len && !live.empty(); ++step) {
        std::vector<Candidate> expanded;
        for (const auto& hyp : live) {
            std::vector<double> lp = next_logprobs(model, src_ids, hyp.ids);
            const bool last_step = static_cast<int>(hyp.ids.size()) + 1 >= max_len;
            if (last_step) {
                // out of budget: only EOS may follow
                Candidate c = hyp;
                c.ids.push_back(kEosId);
                c.logprob += lp[kEosId];
                c.finished = true;
                c.forced = true;
                expanded.push_back(std::move(c));
                continue;
            }
            for (int tok = 0; tok < static_cast<int>(lp.size()); ++tok) {
                if (tok == kPadId || tok == kBosId) continue;
                Candidate c = hyp;
                c.ids.push_back(tok);
                c.logprob += lp[static_cast<size_t>(tok)];
                c.finished = tok == kEosId;
                expanded.push_back(std::move(c));
            }
        }
        std::sort(expanded.begin(), expanded.end(), better);
        if (static_cast<int>(expanded.size()) > beam) expanded.resize(static_cast<size_t>(beam));
        live.clear();
        for (auto& c : expanded) {
            if (c.finished)
                finished.push_back(std::move(c));
            else
                live.push_back(std::move(c));
        }
    }

    if (finished.empty()) throw ContractError("beam_search produced no finished hypothesis");
    const Candidate* best = nullptr;
    double best_score = 0.0;
    for (const auto& c : finished) {
        Hypothesis h{c.ids, c.logprob, true, c.forced};
        double s = hypothesis_score(h, length_norm_exp);
        if (!best || s > best_score || (s == best_score && c.ids < best->ids)) {
            best = &c;
            best_score = s;
        }
    }
    return Hypothesis{best->ids, best->logprob, true, best->forced};
}

ForcedDecodeResult forced_decode(Model& model, const std::vector<int>& src_ids,
                                 const std::vector<int>& ref_ids) {
    if (ref_ids.empty()) throw DataError("forced_decode: empty reference");
    if (src_ids.empty()) throw DataError("forced_decode: empty source");
    // decoder input BOS y1..y(n-1): attention row t belongs to the step
    // that produces reference token t
    std::vector<int> dec_in;
    dec_in.reserve(ref_ids.size());
    dec_in.push_back(kBosId);
    dec_in.insert(dec_in.end(), ref_ids.begin(), ref_ids.end() - 1);
    ForcedDecodeResult res;
    Rng rng(0);
    model.forward(src_ids, dec_in, &res.record, false, rng);
    res.output = ref_ids;
    return res;
}

} // namespace nmtlab
