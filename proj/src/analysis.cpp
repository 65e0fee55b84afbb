#include "nmtlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include "nmtlab/errors.hpp"
#include "nmtlab/subword.hpp"

namespace nmtlab {

void GoldAlignment::validate() const {
    for (const auto& l : sure)
        if (!possible.count(l))
            throw DataError("gold alignment: sure link " + std::to_string(l.first) + "-" +
                            std::to_string(l.second) + " missing from possible set");
}

namespace {

double row_entropy(const double* row, int n) {
    double h = 0.0;
    for (int i = 0; i < n; ++i)
        if (row[i] > 0.0) h -= row[i] * std::log(row[i]);
    return h;
}

void check_row_stochastic(const AttentionRecord& r) {
    for (int l = 0; l < r.layers; ++l)
        for (int h = 0; h < r.heads; ++h)
            for (int t = 0; t < r.tgt_len; ++t) {
                double s = 0.0;
                for (int i = 0; i < r.src_len; ++i) s += r.at(l, h, t, i);
                if (std::fabs(s - 1.0) > 1e-4)
                    throw DataError("attention row (layer " + std::to_string(l) + ", head " + std::to_string(h) +
                                    ", step " + std::to_string(t) + ") sums to " + std::to_string(s));
            }
}

// per-layer sum over timesteps of head-averaged row entropies
std::vector<double> layer_entropy_sums(const AttentionRecord& r) {
    std::vector<double> sums(static_cast<size_t>(r.layers), 0.0);
    std::vector<double> avg(static_cast<size_t>(r.src_len));
    for (int l = 0; l < r.layers; ++l) {
        for (int t = 0; t < r.tgt_len; ++t) {
            std::fill(avg.begin(), avg.end(), 0.0);
            for (int h = 0; h < r.heads; ++h)
                for (int i = 0; i < r.src_len; ++i) avg[static_cast<size_t>(i)] += r.at(l, h, t, i);
            for (auto& v : avg) v /= r.heads;
            sums[static_cast<size_t>(l)] += row_entropy(avg.data(), r.src_len);
        }
    }
    return sums;
}

} // namespace

EntropyProfile attention_entropy(const AttentionRecord& record) {
    if (record.empty()) throw DataError("attention_entropy: empty record");
    check_row_stochastic(record);
    auto sums = layer_entropy_sums(record);
    EntropyProfile p;
    p.per_layer.resize(sums.size());
    for (size_t l = 0; l < sums.size(); ++l) p.per_layer[l] = sums[l] / record.tgt_len;
    double total = 0.0;
    for (double v : p.per_layer) total += v;
    p.overall = total / static_cast<double>(p.per_layer.size());
    return p;
}

void EntropyAccumulator::add(const AttentionRecord& record) {
    if (record.empty()) throw DataError("attention_entropy: empty record");
    check_row_stochastic(record);
    auto sums = layer_entropy_sums(record);
    if (sums_.empty()) sums_.resize(sums.size(), 0.0);
    if (sums_.size() != sums.size()) throw DataError("attention records disagree on layer count");
    for (size_t l = 0; l < sums.size(); ++l) sums_[l] += sums[l];
    count_ += record.tgt_len;
}

EntropyProfile EntropyAccumulator::profile() const {
    if (count_ == 0) throw DataError("no attention records accumulated");
    EntropyProfile p;
    p.per_layer.resize(sums_.size());
    for (size_t l = 0; l < sums_.size(); ++l) p.per_layer[l] = sums_[l] / static_cast<double>(count_);
    double total = 0.0;
    for (double v : p.per_layer) total += v;
    p.overall = total / static_cast<double>(p.per_layer.size());
    return p;
}

namespace {

void check_partition(const std::vector<Span>& spans, int extent, const char* axis) {
    int expect = 0;
    for (const auto& [a, b] : spans) {
        if (a != expect || b < a)
            throw ContractError(std::string(axis) + " spans do not partition the axis: gap or overlap at index " +
                                std::to_string(expect));
        expect = b + 1;
    }
    if (expect != extent)
        throw ContractError(std::string(axis) + " spans cover " + std::to_string(expect) + " of " +
                            std::to_string(extent) + " positions");
}

} // namespace

Mat merge_subword_attention(const Mat& weights, const std::vector<Span>& src_spans,
                            const std::vector<Span>& tgt_spans) {
    check_partition(src_spans, weights.cols, "source");
    check_partition(tgt_spans, weights.rows, "target");
    // source subwords of one word: sum
    Mat src_merged(weights.rows, static_cast<int>(src_spans.size()));
    for (int t = 0; t < weights.rows; ++t)
        for (int s = 0; s < static_cast<int>(src_spans.size()); ++s)
            for (int k = src_spans[static_cast<size_t>(s)].first; k <= src_spans[static_cast<size_t>(s)].second; ++k)
                src_merged.at(t, s) += weights.at(t, k);
    // target subwords of one word: average
    Mat out(static_cast<int>(tgt_spans.size()), src_merged.cols);
    for (int t = 0; t < out.rows; ++t) {
        const auto& span = tgt_spans[static_cast<size_t>(t)];
        const int n = span.second - span.first + 1;
        for (int s = 0; s < out.cols; ++s) {
            double sum = 0.0;
            for (int k = span.first; k <= span.second; ++k) sum += src_merged.at(k, s);
            out.at(t, s) = sum / n;
        }
    }
    return out;
}

AlignmentLinks extract_alignment(const AttentionRecord& record, const std::vector<Span>& src_spans,
                                 const std::vector<Span>& tgt_spans, int layer) {
    if (record.empty()) throw DataError("extract_alignment: empty record");
    if (layer < 0 || layer >= record.layers)
        throw ContractError("extract_alignment: layer " + std::to_string(layer) + " out of range [0, " +
                            std::to_string(record.layers) + ")");
    // sum the attention weights over all heads in the chosen layer
    Mat head_sum(record.tgt_len, record.src_len);
    for (int h = 0; h < record.heads; ++h)
        for (int t = 0; t < record.tgt_len; ++t)
            for (int s = 0; s < record.src_len; ++s) head_sum.at(t, s) += record.at(layer, h, t, s);
    Mat w = merge_subword_attention(head_sum, src_spans, tgt_spans);

    AlignmentLinks out;
    // highest-attention source word per target word
    for (int t = 0; t < w.rows; ++t) {
        int best = 0;
        for (int s = 1; s < w.cols; ++s)
            if (w.at(t, s) > w.at(t, best)) best = s; // ties keep the smaller index
        out.links.insert({best, t});
    }
    // highest-attention target word per source word
    for (int s = 0; s < w.cols; ++s) {
        int best = 0;
        for (int t = 1; t < w.rows; ++t)
            if (w.at(t, s) > w.at(best, s)) best = t;
        out.links.insert({s, best});
    }
    return out;
}

double aer(const AlignmentLinks& pred, const GoldAlignment& gold) {
    gold.validate();
    const auto& a = pred.links;
    long long a_s = 0, a_p = 0;
    for (const auto& l : a) {
        if (gold.sure.count(l)) ++a_s;
        if (gold.possible.count(l)) ++a_p;
    }
    const long long denom = static_cast<long long>(a.size()) + static_cast<long long>(gold.sure.size());
    if (denom == 0) return 0.0;
    return 1.0 - static_cast<double>(a_s + a_p) / static_cast<double>(denom);
}

double corpus_aer(const std::vector<AlignmentLinks>& pred, const std::vector<GoldAlignment>& gold) {
    if (pred.size() != gold.size())
        throw DataError("corpus_aer: " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(gold.size()) + " gold sentences");
    long long a_s = 0, a_p = 0, a_n = 0, s_n = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        gold[i].validate();
        for (const auto& l : pred[i].links) {
            if (gold[i].sure.count(l)) ++a_s;
            if (gold[i].possible.count(l)) ++a_p;
        }
        a_n += static_cast<long long>(pred[i].links.size());
        s_n += static_cast<long long>(gold[i].sure.size());
    }
    if (a_n + s_n == 0) return 0.0;
    return 1.0 - static_cast<double>(a_s + a_p) / static_cast<double>(a_n + s_n);
}

// ---- BLEU ----

namespace {

constexpr int kMaxOrder = 4;

std::map<std::string, long long> ngram_counts(const std::vector<std::string>& tokens, int n) {
    std::map<std::string, long long> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (int j = 0; j < n; ++j) {
            if (j) key += '\x01';
            key += tokens[i + static_cast<size_t>(j)];
        }
        counts[key] += 1;
    }
    return counts;
}

} // namespace

double corpus_bleu(const std::vector<std::vector<std::string>>& hyps,
                   const std::vector<std::vector<std::string>>& refs) {
    if (hyps.size() != refs.size())
        throw DataError("corpus_bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                        std::to_string(refs.size()) + " references");
    if (hyps.empty()) throw DataError("corpus_bleu: empty corpus");
    long long matched[kMaxOrder] = {0, 0, 0, 0};
    long long total[kMaxOrder] = {0, 0, 0, 0};
    long long hyp_len = 0, ref_len = 0;
    for (size_t i = 0; i < hyps.size(); ++i) {
        hyp_len += static_cast<long long>(hyps[i].size());
        ref_len += static_cast<long long>(refs[i].size());
        for (int n = 1; n <= kMaxOrder; ++n) {
            auto h = ngram_counts(hyps[i], n);
            auto r = ngram_counts(refs[i], n);
            for (const auto& [gram, c] : h) {
                auto it = r.find(gram);
                if (it != r.end()) matched[n - 1] += std::min(c, it->second);
                total[n - 1] += c;
            }
        }
    }
    if (hyp_len == 0) return 0.0;
    double log_precision = 0.0;
    for (int n = 0; n < kMaxOrder; ++n) {
        if (matched[n] == 0 || total[n] == 0) return 0.0; // no smoothing
        log_precision += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
    }
    double bp = hyp_len < ref_len ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)) : 1.0;
    return 100.0 * bp * std::exp(log_precision / kMaxOrder);
}

double corpus_bleu_lines(const std::vector<std::string>& hyp_lines, const std::vector<std::string>& ref_lines) {
    std::vector<std::vector<std::string>> h, r;
    h.reserve(hyp_lines.size());
    r.reserve(ref_lines.size());
    for (const auto& l : hyp_lines) h.push_back(split_ws(l));
    for (const auto& l : ref_lines) r.push_back(split_ws(l));
    return corpus_bleu(h, r);
}

// ---- embeddings ----

std::vector<Neighbor> nearest_neighbors(const Tensor& embeddings, int token_id, int k) {
    const int v = embeddings.rows(), d = embeddings.cols();
    if (token_id < 0 || token_id >= v)
        throw LookupError("nearest_neighbors: token id " + std::to_string(token_id) + " out of range");
    if (k < 1) throw ConfigError("nearest_neighbors: k must be >= 1");
    auto norm = [&](int row) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += embeddings.at(row, j) * embeddings.at(row, j);
        return std::sqrt(s);
    };
    const double qn = norm(token_id);
    std::vector<Neighbor> all;
    all.reserve(static_cast<size_t>(v) - 1);
    for (int row = 0; row < v; ++row) {
        if (row == token_id) continue;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += embeddings.at(row, j) * embeddings.at(token_id, j);
        const double rn = norm(row);
        const double sim = (qn == 0.0 || rn == 0.0) ? 0.0 : dot / (qn * rn);
        all.push_back({row, sim});
    }
    std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.id < b.id;
    });
    if (static_cast<int>(all.size()) > k) all.resize(static_cast<size_t>(k));
    return all;
}

Checkpoint transplant_embeddings(const Checkpoint& target, const Checkpoint& source, bool fixed) {
    if (target.config.tie_embeddings != source.config.tie_embeddings)
        throw ConfigError("transplant: models disagree on tie_embeddings");
    if (target.config.d_model != source.config.d_model)
        throw ConfigError("transplant: d_model differs: " + std::to_string(target.config.d_model) + " vs " +
                          std::to_string(source.config.d_model));
    if (target.config.vocab_size != source.config.vocab_size)
        throw ConfigError("transplant: vocab_size differs: " + std::to_string(target.config.vocab_size) + " vs " +
                          std::to_string(source.config.vocab_size));
    std::vector<std::string> names = target.config.tie_embeddings
                                         ? std::vector<std::string>{"embedding"}
                                         : std::vector<std::string>{"src_embedding", "tgt_embedding",
                                                                    "out_projection"};
    Checkpoint out = target;
    for (const auto& name : names) {
        const NamedTensorData* src = source.find(name);
        NamedTensorData* dst = out.find(name);
        if (!src || !dst) throw ConfigError("transplant: tensor '" + name + "' missing from a checkpoint");
        if (src->shape != dst->shape)
            throw ConfigError("transplant: tensor '" + name + "' shape differs: " + shape_str(src->shape) +
                              " vs " + shape_str(dst->shape));
        dst->values = src->values;
    }
    out.config.freeze_embeddings = fixed;
    return out;
}

// ---- file formats ----

void write_attention_dump(std::ostream& os, int sent_id, const AttentionRecord& r) {
    os << "sent " << sent_id << " layers=" << r.layers << " heads=" << r.heads << " tgt=" << r.tgt_len
       << " src=" << r.src_len << "\n";
    os.precision(17);
    for (int l = 0; l < r.layers; ++l)
        for (int h = 0; h < r.heads; ++h)
            for (int t = 0; t < r.tgt_len; ++t) {
                for (int s = 0; s < r.src_len; ++s) {
                    if (s) os << ' ';
                    os << r.at(l, h, t, s);
                }
                os << "\n";
            }
}

std::vector<DumpRecord> read_attention_dump(std::istream& is) {
    std::vector<DumpRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream hs(line);
        std::string word;
        DumpRecord rec;
        int layers = 0, heads = 0, tgt = 0, src = 0;
        if (!(hs >> word >> rec.id) || word != "sent")
            throw DataError("attention dump: bad header line '" + line + "'");
        auto parse_kv = [&](const char* key) {
            std::string kv;
            if (!(hs >> kv)) throw DataError("attention dump: truncated header");
            std::string prefix = std::string(key) + "=";
            if (kv.rfind(prefix, 0) != 0) throw DataError("attention dump: expected " + prefix + "...: '" + kv + "'");
            return std::stoi(kv.substr(prefix.size()));
        };
        layers = parse_kv("layers");
        heads = parse_kv("heads");
        tgt = parse_kv("tgt");
        src = parse_kv("src");
        rec.record.init(layers, heads, tgt, src);
        for (int l = 0; l < layers; ++l)
            for (int h = 0; h < heads; ++h)
                for (int t = 0; t < tgt; ++t) {
                    if (!std::getline(is, line)) throw DataError("attention dump: truncated matrix block");
                    std::istringstream rs(line);
                    for (int s = 0; s < src; ++s)
                        if (!(rs >> rec.record.at(l, h, t, s)))
                            throw DataError("attention dump: short row in sent " + std::to_string(rec.id));
                }
        out.push_back(std::move(rec));
    }
    return out;
}

namespace {

bool all_digits(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    return true;
}

} // namespace

std::vector<GoldAlignment> read_gold_alignment_lines(const std::vector<std::string>& lines) {
    std::vector<GoldAlignment> out;
    for (const auto& line : lines) {
        GoldAlignment g;
        for (const auto& tok : split_ws(line)) {
            auto pos = tok.find_first_of("-?");
            if (pos == std::string::npos) throw DataError("alignment token '" + tok + "' is not i-j or i?j");
            std::string left = tok.substr(0, pos);
            std::string right = tok.substr(pos + 1);
            if (!all_digits(left) || !all_digits(right))
                throw DataError("alignment token '" + tok + "' is not i-j or i?j");
            int i = std::stoi(left);
            int j = std::stoi(right);
            if (tok[pos] == '?') {
                g.possible.insert({i, j});
            } else {
                g.sure.insert({i, j});
                g.possible.insert({i, j});
            }
        }
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<AlignmentLinks> read_alignment_lines(const std::vector<std::string>& lines) {
    std::vector<AlignmentLinks> out;
    auto gold = read_gold_alignment_lines(lines);
    out.reserve(gold.size());
    for (auto& g : gold) {
        AlignmentLinks a;
        a.links = std::move(g.possible); // both '-' and '?' tokens count as predicted links
        out.push_back(std::move(a));
    }
    return out;
}

std::string alignment_to_line(const AlignmentLinks& links) {
    std::string out;
    for (const auto& [s, t] : links.links) {
        if (!out.empty()) out += ' ';
        out += std::to_string(s) + "-" + std::to_string(t);
    }
    return out;
}

} // namespace nmtlab
