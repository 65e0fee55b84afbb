#include "nmtlab/subword.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "nmtlab/errors.hpp"

namespace nmtlab {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::string join_ws(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

std::vector<std::string> utf8_chars(const std::string& word) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < word.size()) {
        unsigned char c = static_cast<unsigned char>(word[i]);
        size_t len = 1;
        if ((c & 0x80u) == 0)
            len = 1;
        else if ((c & 0xE0u) == 0xC0u)
            len = 2;
        else if ((c & 0xF0u) == 0xE0u)
            len = 3;
        else if ((c & 0xF8u) == 0xF0u)
            len = 4;
        if (i + len > word.size()) len = 1;
        out.push_back(word.substr(i, len));
        i += len;
    }
    return out;
}

namespace {

using SymPair = std::pair<std::string, std::string>;

std::vector<std::string> merge_pair_in_word(const std::vector<std::string>& syms, const SymPair& pair) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < syms.size()) {
        if (i + 1 < syms.size() && syms[i] == pair.first && syms[i + 1] == pair.second) {
            out.push_back(syms[i] + syms[i + 1]);
            i += 2;
        } else {
            out.push_back(syms[i]);
            i += 1;
        }
    }
    return out;
}

} // namespace

BpeModel learn_bpe(const std::vector<std::string>& corpus_lines, int num_merges, const std::string& marker) {
    if (num_merges < 0) throw ConfigError("learn_bpe: num_merges must be >= 0");
    std::map<std::string, long long> word_freq;
    for (const auto& line : corpus_lines)
        for (const auto& w : split_ws(line)) word_freq[w] += 1;
    if (word_freq.empty()) throw DataError("learn_bpe: empty corpus");

    std::vector<std::pair<std::vector<std::string>, long long>> words;
    words.reserve(word_freq.size());
    for (const auto& [w, f] : word_freq) words.emplace_back(utf8_chars(w), f);

    BpeModel model;
    model.marker = marker;
    for (int round = 0; round < num_merges; ++round) {
        // full recount each round; corpora here are desk-scale
        std::map<SymPair, long long> counts;
        for (const auto& [syms, f] : words)
            for (size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += f;
        if (counts.empty()) break;
        SymPair best;
        long long best_count = -1;
        for (const auto& [p, c] : counts) {
            // std::map iterates pairs in lexicographic order, so on a tie
            // the first seen (smallest) pair wins
            if (c > best_count) {
                best = p;
                best_count = c;
            }
        }
        model.merges.push_back(best);
        for (auto& [syms, f] : words) syms = merge_pair_in_word(syms, best);
    }
    model.num_merges = static_cast<int>(model.merges.size());
    return model;
}

std::vector<std::string> apply_bpe_word(const BpeModel& model, const std::string& word) {
    std::vector<std::string> syms = utf8_chars(word);
    if (syms.empty()) return {};
    std::unordered_map<std::string, int> rank;
    rank.reserve(model.merges.size());
    for (size_t i = 0; i < model.merges.size(); ++i) {
        const auto& m = model.merges[i];
        rank.emplace(m.first + "\x01" + m.second, static_cast<int>(i));
    }
    while (syms.size() > 1) {
        int best_rank = -1;
        for (size_t i = 0; i + 1 < syms.size(); ++i) {
            auto it = rank.find(syms[i] + "\x01" + syms[i + 1]);
            if (it != rank.end() && (best_rank < 0 || it->second < best_rank)) best_rank = it->second;
        }
        if (best_rank < 0) break;
        syms = merge_pair_in_word(syms, model.merges[static_cast<size_t>(best_rank)]);
    }
    // continuation marker on all but the last piece
    for (size_t i = 0; i + 1 < syms.size(); ++i) syms[i] += model.marker;
    return syms;
}

std::vector<std::string> apply_bpe(const BpeModel& model, const std::string& sentence) {
    std::vector<std::string> out;
    for (const auto& w : split_ws(sentence)) {
        auto pieces = apply_bpe_word(model, w);
        out.insert(out.end(), pieces.begin(), pieces.end());
    }
    return out;
}

RestoredWords restore_words(const std::vector<std::string>& subwords, const std::string& marker) {
    RestoredWords out;
    std::string cur;
    int start = -1;
    for (size_t i = 0; i < subwords.size(); ++i) {
        const std::string& s = subwords[i];
        bool continues = s.size() >= marker.size() && s.compare(s.size() - marker.size(), marker.size(), marker) == 0;
        std::string piece = continues ? s.substr(0, s.size() - marker.size()) : s;
        if (start < 0) start = static_cast<int>(i);
        cur += piece;
        if (!continues) {
            out.words.push_back(cur);
            out.spans.emplace_back(start, static_cast<int>(i));
            cur.clear();
            start = -1;
        }
    }
    if (start >= 0) { // dangling marker: close the word at sequence end
        out.words.push_back(cur);
        out.spans.emplace_back(start, static_cast<int>(subwords.size()) - 1);
    }
    return out;
}

void save_bpe(const BpeModel& model, std::ostream& os) {
    os << "# bpe v1 marker=" << model.marker << "\n";
    for (const auto& [a, b] : model.merges) os << a << ' ' << b << "\n";
}

BpeModel load_bpe(std::istream& is) {
    BpeModel model;
    std::string line;
    if (!std::getline(is, line)) throw DataError("bpe model: empty file");
    const std::string tag = "# bpe v1 marker=";
    if (line.rfind(tag, 0) != 0) throw DataError("bpe model: missing version comment line");
    model.marker = line.substr(tag.size());
    if (model.marker.empty()) throw DataError("bpe model: empty marker");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto sp = line.find(' ');
        if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size())
            throw DataError("bpe model: malformed merge line '" + line + "'");
        model.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
    model.num_merges = static_cast<int>(model.merges.size());
    return model;
}

void save_bpe_file(const BpeModel& model, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write bpe model to " + path);
    save_bpe(model, os);
}

BpeModel load_bpe_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read bpe model from " + path);
    return load_bpe(is);
}

} // namespace nmtlab
