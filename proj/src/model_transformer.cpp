#include <cmath>

#include "nmtlab/errors.hpp"
#include "nmtlab/model.hpp"

namespace nmtlab {

namespace {

struct LayerNormParams {
    Tensor gain, bias;
    void init(const std::string& prefix, Model& owner, int d) {
        gain = owner.add_param(prefix + ".gain", Tensor::full({d}, 1.0));
        bias = owner.add_param(prefix + ".bias", Tensor::zeros({d}));
    }
    Tensor apply(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

struct FeedForwardParams {
    Tensor w1, b1, w2, b2;
    void init(const std::string& prefix, Model& owner, int d, int ff, Rng& rng) {
        auto glorot = [&rng](int in, int out) {
            return Tensor::randn({in, out}, rng, std::sqrt(2.0 / (in + out)));
        };
        w1 = owner.add_param(prefix + ".w1", glorot(d, ff));
        b1 = owner.add_param(prefix + ".b1", Tensor::zeros({ff}));
        w2 = owner.add_param(prefix + ".w2", glorot(ff, d));
        b2 = owner.add_param(prefix + ".b2", Tensor::zeros({d}));
    }
    Tensor apply(const Tensor& x) const {
        return add_bias(matmul(relu(add_bias(matmul(x, w1), b1)), w2), b2);
    }
};

struct EncoderLayer {
    MultiHeadAttention attn;
    LayerNormParams ln1, ln2;
    FeedForwardParams ff;
};

struct DecoderLayer {
    MultiHeadAttention self_attn, cross_attn;
    LayerNormParams ln1, ln2, ln3;
    FeedForwardParams ff;
};

class TransformerModel final : public Model {
  public:
    TransformerModel(ModelConfig cfg, Rng& rng) : Model(std::move(cfg)) {
        cfg_.validate();
        if (cfg_.vocab_size < 5) throw ConfigError("model construction requires vocab_size >= 5");
        register_embeddings(rng);
        const int d = cfg_.d_model;
        enc_.resize(static_cast<size_t>(cfg_.encoder_layers));
        for (int i = 0; i < cfg_.encoder_layers; ++i) {
            auto& l = enc_[static_cast<size_t>(i)];
            std::string p = "enc." + std::to_string(i);
            l.attn.init(p + ".attn", *this, d, cfg_.heads, rng);
            l.ln1.init(p + ".ln1", *this, d);
            l.ff.init(p + ".ff", *this, d, cfg_.ff_dim, rng);
            l.ln2.init(p + ".ln2", *this, d);
        }
        dec_.resize(static_cast<size_t>(cfg_.decoder_layers));
        for (int i = 0; i < cfg_.decoder_layers; ++i) {
            auto& l = dec_[static_cast<size_t>(i)];
            std::string p = "dec." + std::to_string(i);
            l.self_attn.init(p + ".self", *this, d, cfg_.heads, rng);
            l.ln1.init(p + ".ln1", *this, d);
            l.cross_attn.init(p + ".cross", *this, d, cfg_.heads, rng);
            l.ln2.init(p + ".ln2", *this, d);
            l.ff.init(p + ".ff", *this, d, cfg_.ff_dim, rng);
            l.ln3.init(p + ".ln3", *this, d);
        }
    }

    SourceRepresentation source_representation(const std::vector<int>& src_ids, bool training, Rng& rng) override {
        Tensor x = embedded_source(src_ids, training, rng);
        if (cfg_.encoder_layers == 0) return {x, false};
        for (auto& l : enc_) {
            Tensor a = l.attn.apply(x, x, x, nullptr, nullptr, 0);
            x = l.ln1.apply(add(x, dropout(a, cfg_.dropout_block, training, rng)));
            Tensor f = l.ff.apply(x);
            x = l.ln2.apply(add(x, dropout(f, cfg_.dropout_block, training, rng)));
        }
        return {x, true};
    }

    Tensor forward(const std::vector<int>& src_ids, const std::vector<int>& tgt_in, AttentionRecord* record,
                   bool training, Rng& rng) override {
        SourceRepresentation src = source_representation(src_ids, training, rng);
        const int t_len = static_cast<int>(tgt_in.size());
        if (record) record->init(cfg_.decoder_layers, cfg_.heads, t_len, static_cast<int>(src_ids.size()));

        Tensor x = scale(embedding_rows(tgt_embedding_, tgt_in), std::sqrt(static_cast<double>(cfg_.d_model)));
        x = add(x, sinusoid_positions(t_len, cfg_.d_model));
        x = dropout(x, cfg_.dropout_embed, training, rng);
        Tensor mask = causal_mask(t_len);
        for (int i = 0; i < cfg_.decoder_layers; ++i) {
            auto& l = dec_[static_cast<size_t>(i)];
            Tensor a = l.self_attn.apply(x, x, x, &mask, nullptr, 0);
            x = l.ln1.apply(add(x, dropout(a, cfg_.dropout_block, training, rng)));
            Tensor c = l.cross_attn.apply(x, src.features, src.features, nullptr, record, i);
            x = l.ln2.apply(add(x, dropout(c, cfg_.dropout_block, training, rng)));
            Tensor f = l.ff.apply(x);
            x = l.ln3.apply(add(x, dropout(f, cfg_.dropout_block, training, rng)));
        }
        return logits_from(x);
    }

  private:
    // scaled word embeddings (+ sinusoid positions) with embedding dropout
    Tensor embedded_source(const std::vector<int>& src_ids, bool training, Rng& rng) {
        Tensor x = scale(embedding_rows(embedding_, src_ids), std::sqrt(static_cast<double>(cfg_.d_model)));
        if (cfg_.use_source_positions)
            x = add(x, sinusoid_positions(static_cast<int>(src_ids.size()), cfg_.d_model));
        return dropout(x, cfg_.dropout_embed, training, rng);
    }

    std::vector<EncoderLayer> enc_;
    std::vector<DecoderLayer> dec_;
};

} // namespace

std::unique_ptr<Model> build_transformer(ModelConfig cfg, Rng& rng) {
    return std::make_unique<TransformerModel>(std::move(cfg), rng);
}

} // namespace nmtlab
