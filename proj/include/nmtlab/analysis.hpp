#pragma once

// Measurement suite: attention entropy, subword-merged bidirectional
// alignment extraction, AER, corpus BLEU, embedding nearest neighbors and
// transplantation between checkpoints.

#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nmtlab/checkpoint.hpp"
#include "nmtlab/model.hpp"

namespace nmtlab {

// plain row-major matrix for analysis math (no autograd)
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

using Link = std::pair<int, int>; // (source word index, target word index)

struct AlignmentLinks {
    std::set<Link> links;
};

struct GoldAlignment {
    std::set<Link> sure;     // S
    std::set<Link> possible; // P, always a superset of S

    void validate() const; // DataError unless S is a subset of P
};

struct EntropyProfile {
    std::vector<double> per_layer; // mean entropy per layer, nats
    double overall = 0.0;          // mean over layers
};

// Eq.-style attention entropy: per layer, average the heads, take the
// Shannon entropy (natural log, 0 ln 0 = 0) of each target step's row, and
// average over steps; overall averages the layers. Rows whose sum deviates
// from 1 by more than 1e-4 are a data error.
EntropyProfile attention_entropy(const AttentionRecord& record);

// Streaming variant pooling timesteps across many sentence records.
class EntropyAccumulator {
  public:
    void add(const AttentionRecord& record);
    EntropyProfile profile() const;
    long long timesteps() const { return count_; }

  private:
    std::vector<double> sums_;
    long long count_ = 0;
};

using Span = std::pair<int, int>; // inclusive subword range of one word

// Word-level weights from subword-level ones: source subwords of one word
// are summed, target subwords of one word averaged, in that order.
Mat merge_subword_attention(const Mat& weights, const std::vector<Span>& src_spans,
                            const std::vector<Span>& tgt_spans);

// Sum heads in the chosen layer, merge subwords, then take bidirectional
// argmax links (ties toward the smaller index).
AlignmentLinks extract_alignment(const AttentionRecord& record, const std::vector<Span>& src_spans,
                                 const std::vector<Span>& tgt_spans, int layer);

// AER = 1 - (|A n S| + |A n P|) / (|A| + |S|); empty A and S scores 0.
double aer(const AlignmentLinks& pred, const GoldAlignment& gold);
double corpus_aer(const std::vector<AlignmentLinks>& pred, const std::vector<GoldAlignment>& gold);

// Corpus-level BLEU in [0, 100]: n-grams 1..4, clipped precision, brevity
// penalty, no smoothing (any zero n-gram precision gives 0).
double corpus_bleu(const std::vector<std::vector<std::string>>& hyps,
                   const std::vector<std::vector<std::string>>& refs);
double corpus_bleu_lines(const std::vector<std::string>& hyp_lines, const std::vector<std::string>& ref_lines);

struct Neighbor {
    int id;
    double similarity;
};

// Top-k rows of the embedding matrix by cosine similarity to token_id,
// query excluded, ties by token id.
std::vector<Neighbor> nearest_neighbors(const Tensor& embeddings, int token_id, int k = 5);

// Copies embedding tensors (and, under tying, the shared output projection)
// from source into target; fixed=true marks them frozen for later training.
Checkpoint transplant_embeddings(const Checkpoint& target, const Checkpoint& source, bool fixed);

// ---- file formats ----

// Attention dump: "sent <id> layers=<L> heads=<H> tgt=<T> src=<S>" then
// L*H*T lines of S space-separated decimals.
void write_attention_dump(std::ostream& os, int sent_id, const AttentionRecord& record);
struct DumpRecord {
    int id = 0;
    AttentionRecord record;
};
std::vector<DumpRecord> read_attention_dump(std::istream& is);

// Pharaoh alignments: "i-j" sure, "i?j" possible, 0-based, one sentence per line.
std::vector<GoldAlignment> read_gold_alignment_lines(const std::vector<std::string>& lines);
std::vector<AlignmentLinks> read_alignment_lines(const std::vector<std::string>& lines);
std::string alignment_to_line(const AlignmentLinks& links);

} // namespace nmtlab
