#pragma once

// The ablation model zoo. One Transformer family with encoder depth 0..N
// (depth 0 drops the encoder entirely and attends to embeddings plus
// sinusoid positions) and one LSTM seq2seq family with independently
// removable encoder and attention.

#include <memory>
#include <string>
#include <vector>

#include "nmtlab/rng.hpp"
#include "nmtlab/tensor.hpp"

namespace nmtlab {

enum class Family { transformer, rnn };

std::string family_name(Family f);
Family family_from_name(const std::string& s);

struct ModelConfig {
    Family family = Family::transformer;
    int encoder_layers = 6;
    int decoder_layers = 6;
    bool use_attention = true;        // structural for transformer
    bool use_source_positions = true; // sinusoids on encoder-free source
    int d_model = 768;
    int ff_dim = 2048;
    int heads = 8;
    bool tie_embeddings = true;
    double dropout_embed = 0.1;
    double dropout_block = 0.1; // transformer sublayers
    double dropout_rnn = 0.2;
    bool freeze_embeddings = false;
    int vocab_size = 0; // set when the data is known

    void validate() const;
    // flat key=value serialization, one pair per line
    std::string to_kv() const;
    static ModelConfig from_kv(const std::string& text); // unknown keys rejected
};

// Per-layer, per-head target x source attention weights captured while
// decoding. Rows are the distribution over source tokens at one target step.
struct AttentionRecord {
    int layers = 0, heads = 0, tgt_len = 0, src_len = 0;
    std::vector<double> w; // [layer][head][tgt][src] row-major

    bool empty() const { return layers == 0; }
    void init(int L, int H, int T, int S) {
        layers = L;
        heads = H;
        tgt_len = T;
        src_len = S;
        w.assign(static_cast<size_t>(L) * H * T * S, 0.0);
    }
    size_t offset(int l, int h, int t) const {
        return ((static_cast<size_t>(l) * heads + h) * tgt_len + t) * src_len;
    }
    double& at(int l, int h, int t, int s) { return w[offset(l, h, t) + s]; }
    double at(int l, int h, int t, int s) const { return w[offset(l, h, t) + s]; }
};

// pe[pos, 2i] = sin(pos / 10000^(2i/d)), pe[pos, 2i+1] = cos(same)
Tensor sinusoid_positions(int length, int d_model);

struct SourceRepresentation {
    Tensor features; // [src_len x d_model]
    bool contextual = false; // true when produced by an encoder stack
};

class Model {
  public:
    virtual ~Model() = default;

    const ModelConfig& config() const { return cfg_; }
    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }
    long long parameter_count() const;

    // Features the decoder attends to. With encoder_layers=0 this is
    // scaled embeddings (+ sinusoid positions when enabled) and is
    // position-local; otherwise it is the encoder output.
    virtual SourceRepresentation source_representation(const std::vector<int>& src_ids, bool training,
                                                       Rng& rng) = 0;

    // Teacher-forced full-sequence forward: logits [len(tgt_in) x vocab].
    // tgt_in starts with BOS. When record is non-null, cross-attention
    // weights are captured per decoder layer and head.
    virtual Tensor forward(const std::vector<int>& src_ids, const std::vector<int>& tgt_in,
                           AttentionRecord* record, bool training, Rng& rng) = 0;

    // The embedding matrix [vocab x d_model]; with tied embeddings the
    // output projection shares this exact storage.
    Tensor embedding() const { return embedding_; }
    Tensor output_projection() const { return out_proj_; }

    Parameter* find_parameter(const std::string& name);

    // registers a trainable tensor under a stable name
    Tensor add_param(const std::string& name, Tensor t);

  protected:
    Model(ModelConfig cfg) : cfg_(std::move(cfg)) {}
    void register_embeddings(Rng& rng);
    Tensor logits_from(const Tensor& states); // states [T x d] -> [T x V]

    ModelConfig cfg_;
    std::vector<Parameter> params_;
    Tensor embedding_; // source/target table (tied) or source table
    Tensor tgt_embedding_;
    Tensor out_proj_; // [vocab x d]; same node as embedding_ when tied
};

std::unique_ptr<Model> build_model(const ModelConfig& cfg, Rng& init_rng);

// Analytic parameter accounting; must equal actual allocation exactly.
long long count_params(const ModelConfig& cfg);
// Parameters added by one more transformer encoder layer.
long long encoder_layer_param_delta(const ModelConfig& cfg);
// Human-readable per-component breakdown for the params CLI command.
std::string param_breakdown(const ModelConfig& cfg);

// Multi-head attention layer used by both transformer stacks.
struct MultiHeadAttention {
    Tensor wq, wk, wv, wo; // [d x d]
    Tensor bq, bk, bv, bo; // [d]
    int heads = 1;
    int d_model = 0;

    void init(const std::string& prefix, Model& owner, int d, int h, Rng& rng);
    // mask (optional) is added to the score matrix before softmax.
    // When record is set, per-head weights are written at record_layer.
    Tensor apply(const Tensor& queries, const Tensor& keys, const Tensor& values, const Tensor* mask,
                 AttentionRecord* record, int record_layer) const;
};

// additive causal mask: 0 on/below diagonal, large negative above
Tensor causal_mask(int len);

} // namespace nmtlab
