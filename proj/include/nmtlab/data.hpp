#pragma once

// Parallel-corpus ingestion: vocabulary over BPE-segmented text, id
// encoding, and token-budget batching.

#include <string>
#include <unordered_map>
#include <vector>

#include "nmtlab/rng.hpp"

namespace nmtlab {

// Reserved ids, stable across save/load.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;

class Vocabulary {
  public:
    Vocabulary();

    int size() const { return static_cast<int>(id_to_token_.size()); }
    int id(const std::string& token) const;        // UNK for unknown tokens
    int id_strict(const std::string& token) const; // LookupError for unknown
    const std::string& token(int id) const;
    bool contains(const std::string& token) const;

    void add(const std::string& token); // appends with the next free id

    void save(const std::string& path) const; // token<TAB>id lines
    static Vocabulary load(const std::string& path);

  private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

// Frequency-sorted ids (ties lexicographic); tokens below min_count are
// dropped and will encode as UNK.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, int min_count = 1);

// Source sides carry no specials; target sides get BOS ... EOS.
std::vector<int> encode_source(const Vocabulary& vocab, const std::vector<std::string>& tokens);
std::vector<int> encode_target(const Vocabulary& vocab, const std::vector<std::string>& tokens);
// Strips specials; inverse of the encoders up to UNK replacement.
std::vector<std::string> decode_tokens(const Vocabulary& vocab, const std::vector<int>& ids);

struct SentencePair {
    std::vector<int> src; // no specials
    std::vector<int> tgt; // BOS ... EOS
};

struct Batch {
    int rows = 0, max_src = 0, max_tgt = 0;
    std::vector<int> src;        // rows x max_src, PAD-filled
    std::vector<int> tgt;        // rows x max_tgt, PAD-filled
    std::vector<int> src_len, tgt_len;
    long long token_count = 0;   // non-pad target tokens

    int src_at(int r, int c) const { return src[static_cast<size_t>(r) * max_src + c]; }
    int tgt_at(int r, int c) const { return tgt[static_cast<size_t>(r) * max_tgt + c]; }
    bool src_masked(int r, int c) const { return c >= src_len[static_cast<size_t>(r)]; }
    bool tgt_masked(int r, int c) const { return c >= tgt_len[static_cast<size_t>(r)]; }
    std::vector<int> src_row(int r) const;
    std::vector<int> tgt_row(int r) const;
};

// Length-bucketed greedy packing under a target-token budget; batch order
// shuffled by seed. Every pair appears exactly once. A single pair larger
// than the budget is emitted alone with a warning on stderr.
std::vector<Batch> make_batches(const std::vector<SentencePair>& pairs, long long token_budget,
                                std::uint64_t shuffle_seed);

// One sentence per line, whitespace tokens.
std::vector<std::vector<std::string>> read_token_lines(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);

struct ParallelCorpus {
    std::vector<SentencePair> pairs;
};

ParallelCorpus encode_corpus(const Vocabulary& vocab, const std::vector<std::vector<std::string>>& src,
                             const std::vector<std::vector<std::string>>& tgt);

} // namespace nmtlab
