#include "nmtlab/data.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "nmtlab/errors.hpp"
#include "nmtlab/subword.hpp"

namespace nmtlab {

namespace {
const char* kReserved[4] = {"<pad>", "<s>", "</s>", "<unk>"};
}

Vocabulary::Vocabulary() {
    for (int i = 0; i < 4; ++i) add(kReserved[i]);
}

int Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
}

int Vocabulary::id_strict(const std::string& token) const {
    auto it = token_to_id_.find(token);
    if (it == token_to_id_.end()) throw LookupError("unknown token '" + token + "'");
    return it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw LookupError("token id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

void Vocabulary::add(const std::string& token) {
    if (token_to_id_.count(token)) throw DataError("duplicate vocabulary token '" + token + "'");
    token_to_id_.emplace(token, size());
    id_to_token_.push_back(token);
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write vocabulary to " + path);
    for (int i = 0; i < size(); ++i) os << id_to_token_[static_cast<size_t>(i)] << '\t' << i << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read vocabulary from " + path);
    Vocabulary v;
    std::string line;
    int row = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw DataError("vocabulary line without tab: '" + line + "'");
        std::string tok = line.substr(0, tab);
        int id = std::stoi(line.substr(tab + 1));
        if (row < 4) {
            if (tok != kReserved[row] || id != row)
                throw DataError("vocabulary reserved entry " + std::to_string(row) + " corrupted");
        } else {
            if (id != row) throw DataError("vocabulary ids must be dense, got " + std::to_string(id));
            v.add(tok);
        }
        ++row;
    }
    if (row < 4) throw DataError("vocabulary file missing reserved entries");
    return v;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, int min_count) {
    std::map<std::string, long long> freq;
    for (const auto& sent : corpus)
        for (const auto& tok : sent) freq[tok] += 1;
    if (freq.empty()) throw DataError("build_vocab: empty corpus");
    std::vector<std::pair<std::string, long long>> items(freq.begin(), freq.end());
    // higher frequency first; lexicographic among equals (map order is
    // already lexicographic, stable_sort keeps it)
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (const auto& [tok, f] : items)
        if (f >= min_count) v.add(tok);
    return v;
}

std::vector<int> encode_source(const Vocabulary& vocab, const std::vector<std::string>& tokens) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab.id(t));
    return ids;
}

std::vector<int> encode_target(const Vocabulary& vocab, const std::vector<std::string>& tokens) {
    std::vector<int> ids;
    ids.reserve(tokens.size() + 2);
    ids.push_back(kBosId);
    for (const auto& t : tokens) ids.push_back(vocab.id(t));
    ids.push_back(kEosId);
    return ids;
}

std::vector<std::string> decode_tokens(const Vocabulary& vocab, const std::vector<int>& ids) {
    std::vector<std::string> out;
    for (int id : ids) {
        if (id == kPadId || id == kBosId || id == kEosId) continue;
        out.push_back(vocab.token(id));
    }
    return out;
}

std::vector<int> Batch::src_row(int r) const {
    return {src.begin() + static_cast<long>(r) * max_src,
            src.begin() + static_cast<long>(r) * max_src + src_len[static_cast<size_t>(r)]};
}

std::vector<int> Batch::tgt_row(int r) const {
    return {tgt.begin() + static_cast<long>(r) * max_tgt,
            tgt.begin() + static_cast<long>(r) * max_tgt + tgt_len[static_cast<size_t>(r)]};
}

namespace {

Batch pack_batch(const std::vector<SentencePair>& pairs, const std::vector<int>& idx) {
    Batch b;
    b.rows = static_cast<int>(idx.size());
    for (int i : idx) {
        b.max_src = std::max(b.max_src, static_cast<int>(pairs[static_cast<size_t>(i)].src.size()));
        b.max_tgt = std::max(b.max_tgt, static_cast<int>(pairs[static_cast<size_t>(i)].tgt.size()));
    }
    b.src.assign(static_cast<size_t>(b.rows) * b.max_src, kPadId);
    b.tgt.assign(static_cast<size_t>(b.rows) * b.max_tgt, kPadId);
    for (size_t r = 0; r < idx.size(); ++r) {
        const auto& p = pairs[static_cast<size_t>(idx[r])];
        std::copy(p.src.begin(), p.src.end(), b.src.begin() + static_cast<long>(r) * b.max_src);
        std::copy(p.tgt.begin(), p.tgt.end(), b.tgt.begin() + static_cast<long>(r) * b.max_tgt);
        b.src_len.push_back(static_cast<int>(p.src.size()));
        b.tgt_len.push_back(static_cast<int>(p.tgt.size()));
        b.token_count += static_cast<long long>(p.tgt.size());
    }
    return b;
}

} // namespace

std::vector<Batch> make_batches(const std::vector<SentencePair>& pairs, long long token_budget,
                                std::uint64_t shuffle_seed) {
    if (token_budget < 1) throw ConfigError("make_batches: token budget must be >= 1");
    std::vector<int> order(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) order[i] = static_cast<int>(i);
    // length buckets: sort by target length, then source length, then
    // original position so the packing is fully deterministic
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const auto& pa = pairs[static_cast<size_t>(a)];
        const auto& pb = pairs[static_cast<size_t>(b)];
        if (pa.tgt.size() != pb.tgt.size()) return pa.tgt.size() < pb.tgt.size();
        if (pa.src.size() != pb.src.size()) return pa.src.size() < pb.src.size();
        return a < b;
    });

    std::vector<std::vector<int>> groups;
    std::vector<int> cur;
    long long cur_tokens = 0;
    for (int i : order) {
        const long long t = static_cast<long long>(pairs[static_cast<size_t>(i)].tgt.size());
        if (t > token_budget && cur.empty()) {
            std::cerr << "warning: sentence pair with " << t << " target tokens exceeds batch budget "
                      << token_budget << "; emitting it alone\n";
            groups.push_back({i});
            continue;
        }
        if (!cur.empty() && cur_tokens + t > token_budget) {
            groups.push_back(cur);
            cur.clear();
            cur_tokens = 0;
        }
        if (t > token_budget) {
            std::cerr << "warning: sentence pair with " << t << " target tokens exceeds batch budget "
                      << token_budget << "; emitting it alone\n";
            groups.push_back({i});
            continue;
        }
        cur.push_back(i);
        cur_tokens += t;
    }
    if (!cur.empty()) groups.push_back(cur);

    Rng rng(shuffle_seed);
    // Fisher-Yates over batch order
    for (size_t i = groups.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int>(i)));
        std::swap(groups[i - 1], groups[j]);
    }

    std::vector<Batch> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back(pack_batch(pairs, g));
    return out;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
    std::vector<std::vector<std::string>> out;
    for (const auto& line : read_lines(path)) out.push_back(split_ws(line));
    return out;
}

ParallelCorpus encode_corpus(const Vocabulary& vocab, const std::vector<std::vector<std::string>>& src,
                             const std::vector<std::vector<std::string>>& tgt) {
    if (src.size() != tgt.size())
        throw DataError("parallel corpus sides differ: " + std::to_string(src.size()) + " vs " +
                        std::to_string(tgt.size()) + " sentences");
    if (src.empty()) throw DataError("encode_corpus: empty corpus");
    ParallelCorpus c;
    c.pairs.reserve(src.size());
    for (size_t i = 0; i < src.size(); ++i) {
        if (src[i].empty() || tgt[i].empty())
            throw DataError("empty sentence at line " + std::to_string(i + 1));
        c.pairs.push_back({encode_source(vocab, src[i]), encode_target(vocab, tgt[i])});
    }
    return c;
}

} // namespace nmtlab
