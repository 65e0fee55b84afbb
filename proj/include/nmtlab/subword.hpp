#pragma once

// Byte-pair encoding: learn greedy merges, segment words, and restore
// word-level text (with subword index spans) after translation.

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace nmtlab {

struct BpeModel {
    std::vector<std::pair<std::string, std::string>> merges; // applied in order
    std::string marker = "@@"; // continuation marker on non-final subwords
    int num_merges = 0;        // always == merges.size()
};

// Greedy most-frequent-pair merges over whitespace-pretokenized text.
// Ties broken by lexicographic order of the pair. Stops early when no pair
// is left to merge.
BpeModel learn_bpe(const std::vector<std::string>& corpus_lines, int num_merges,
                   const std::string& marker = "@@");

// Segments one whitespace-pretokenized sentence. Each word is independent;
// non-final subwords of a word carry the continuation marker.
std::vector<std::string> apply_bpe(const BpeModel& model, const std::string& sentence);

std::vector<std::string> apply_bpe_word(const BpeModel& model, const std::string& word);

struct RestoredWords {
    std::vector<std::string> words;
    // inclusive [first, last] subword index range per word
    std::vector<std::pair<int, int>> spans;
};

// Inverse of apply_bpe. A dangling marker at sequence end closes the word.
RestoredWords restore_words(const std::vector<std::string>& subwords, const std::string& marker = "@@");

void save_bpe(const BpeModel& model, std::ostream& os);
BpeModel load_bpe(std::istream& is);
void save_bpe_file(const BpeModel& model, const std::string& path);
BpeModel load_bpe_file(const std::string& path);

std::vector<std::string> split_ws(const std::string& line);
std::string join_ws(const std::vector<std::string>& tokens);

// UTF-8 codepoint split; invalid bytes pass through as single symbols.
std::vector<std::string> utf8_chars(const std::string& word);

} // namespace nmtlab
