#include <cmath>

#include "nmtlab/errors.hpp"
#include "nmtlab/model.hpp"

namespace nmtlab {

namespace {

struct LstmLayer {
    Tensor wx, wh, b;
    int d = 0;

    void init(const std::string& prefix, Model& owner, int input, int hidden, Rng& rng) {
        d = hidden;
        auto glorot = [&rng](int in, int out) {
            return Tensor::randn({in, out}, rng, std::sqrt(2.0 / (in + out)));
        };
        wx = owner.add_param(prefix + ".wx", glorot(input, 4 * hidden));
        wh = owner.add_param(prefix + ".wh", glorot(hidden, 4 * hidden));
        Tensor bias = Tensor::zeros({4 * hidden});
        for (int j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0; // forget gate bias
        b = owner.add_param(prefix + ".b", bias);
    }

    // x [1 x input], h/c [1 x d] -> (h', c')
    std::pair<Tensor, Tensor> step(const Tensor& x, const Tensor& h, const Tensor& c) const {
        Tensor s = add_bias(add(matmul(x, wx), matmul(h, wh)), b);
        Tensor i = sigmoid(slice_cols(s, 0, d));
        Tensor f = sigmoid(slice_cols(s, d, 2 * d));
        Tensor g = tanh_op(slice_cols(s, 2 * d, 3 * d));
        Tensor o = sigmoid(slice_cols(s, 3 * d, 4 * d));
        Tensor c2 = add(mul(f, c), mul(i, g));
        Tensor h2 = mul(o, tanh_op(c2));
        return {h2, c2};
    }
};

struct LstmState {
    std::vector<Tensor> h, c; // per layer, [1 x d]
};

class RnnModel final : public Model {
  public:
    RnnModel(ModelConfig cfg, Rng& rng) : Model(std::move(cfg)) {
        cfg_.validate();
        if (cfg_.vocab_size < 5) throw ConfigError("model construction requires vocab_size >= 5");
        register_embeddings(rng);
        const int d = cfg_.d_model;
        enc_.resize(static_cast<size_t>(cfg_.encoder_layers));
        for (int i = 0; i < cfg_.encoder_layers; ++i)
            enc_[static_cast<size_t>(i)].init("enc." + std::to_string(i) + ".lstm", *this, d, d, rng);
        dec_.resize(static_cast<size_t>(cfg_.decoder_layers));
        for (int i = 0; i < cfg_.decoder_layers; ++i) {
            const int input = (i == 0 && !cfg_.use_attention) ? 2 * d : d;
            dec_[static_cast<size_t>(i)].init("dec." + std::to_string(i) + ".lstm", *this, input, d, rng);
        }
        if (cfg_.use_attention) {
            auto glorot = [&rng](int in, int out) {
                return Tensor::randn({in, out}, rng, std::sqrt(2.0 / (in + out)));
            };
            combine_w_ = add_param("dec.attn.combine.w", glorot(2 * d, d));
            combine_b_ = add_param("dec.attn.combine.b", Tensor::zeros({d}));
        }
    }

    SourceRepresentation source_representation(const std::vector<int>& src_ids, bool training, Rng& rng) override {
        if (cfg_.encoder_layers == 0) return {encoder_free_source(src_ids, training, rng), false};
        auto [outputs, state] = encode(src_ids, training, rng);
        return {outputs, true};
    }

    Tensor forward(const std::vector<int>& src_ids, const std::vector<int>& tgt_in, AttentionRecord* record,
                   bool training, Rng& rng) override {
        const int d = cfg_.d_model;
        const int t_len = static_cast<int>(tgt_in.size());
        const int s_len = static_cast<int>(src_ids.size());

        Tensor src_feats;          // attention keys/values
        Tensor summary;            // fixed per-step context for noAtt
        LstmState state;
        if (cfg_.encoder_layers > 0) {
            auto [outputs, enc_state] = encode(src_ids, training, rng);
            src_feats = outputs;
            state = enc_state; // decoder starts from the encoder's final state
            if (!cfg_.use_attention) summary = enc_state.h.back(); // final top hidden state
        } else {
            src_feats = encoder_free_source(src_ids, training, rng);
            if (!cfg_.use_attention) summary = mean_rows(src_feats);
        }
        for (int i = static_cast<int>(state.h.size()); i < cfg_.decoder_layers; ++i) {
            state.h.push_back(Tensor::zeros({1, d}));
            state.c.push_back(Tensor::zeros({1, d}));
        }

        if (record && cfg_.use_attention) record->init(1, 1, t_len, s_len);

        Tensor src_feats_t = cfg_.use_attention ? transpose2d(src_feats) : Tensor();
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
        std::vector<Tensor> out_rows;
        out_rows.reserve(static_cast<size_t>(t_len));
        for (int t = 0; t < t_len; ++t) {
            Tensor x = dropout(embedding_rows(tgt_embedding_, {tgt_in[static_cast<size_t>(t)]}),
                               cfg_.dropout_embed, training, rng);
            if (!cfg_.use_attention) x = concat_cols({x, summary});
            for (int i = 0; i < cfg_.decoder_layers; ++i) {
                auto [h2, c2] = dec_[static_cast<size_t>(i)].step(x, state.h[static_cast<size_t>(i)],
                                                                  state.c[static_cast<size_t>(i)]);
                state.h[static_cast<size_t>(i)] = h2;
                state.c[static_cast<size_t>(i)] = c2;
                x = dropout(h2, cfg_.dropout_rnn, training, rng);
            }
            if (cfg_.use_attention) {
                Tensor scores = scale(matmul(x, src_feats_t), inv_sqrt_d); // [1 x s]
                Tensor weights = softmax(scores, 1);
                if (record && !record->empty())
                    for (int s = 0; s < s_len; ++s) record->at(0, 0, t, s) = weights.at(0, s);
                Tensor ctx = matmul(weights, src_feats);
                x = tanh_op(add_bias(matmul(concat_cols({x, ctx}), combine_w_), combine_b_));
            }
            out_rows.push_back(x);
        }
        Tensor states = t_len == 1 ? out_rows[0] : concat_rows(out_rows);
        return logits_from(states);
    }

  private:
    Tensor encoder_free_source(const std::vector<int>& src_ids, bool training, Rng& rng) {
        Tensor x = scale(embedding_rows(embedding_, src_ids), std::sqrt(static_cast<double>(cfg_.d_model)));
        if (cfg_.use_source_positions)
            x = add(x, sinusoid_positions(static_cast<int>(src_ids.size()), cfg_.d_model));
        return dropout(x, cfg_.dropout_embed, training, rng);
    }

    // unidirectional stacked LSTM over the source; returns top-layer
    // outputs [s x d] and the final (h, c) per layer
    std::pair<Tensor, LstmState> encode(const std::vector<int>& src_ids, bool training, Rng& rng) {
        const int d = cfg_.d_model;
        LstmState state;
        for (int i = 0; i < cfg_.encoder_layers; ++i) {
            state.h.push_back(Tensor::zeros({1, d}));
            state.c.push_back(Tensor::zeros({1, d}));
        }
        std::vector<Tensor> outputs;
        outputs.reserve(src_ids.size());
        for (int s = 0; s < static_cast<int>(src_ids.size()); ++s) {
            Tensor x = dropout(embedding_rows(embedding_, {src_ids[static_cast<size_t>(s)]}),
                               cfg_.dropout_embed, training, rng);
            for (int i = 0; i < cfg_.encoder_layers; ++i) {
                auto [h2, c2] = enc_[static_cast<size_t>(i)].step(x, state.h[static_cast<size_t>(i)],
                                                                  state.c[static_cast<size_t>(i)]);
                state.h[static_cast<size_t>(i)] = h2;
                state.c[static_cast<size_t>(i)] = c2;
                x = dropout(h2, cfg_.dropout_rnn, training, rng);
            }
            outputs.push_back(x);
        }
        Tensor out = outputs.size() == 1 ? outputs[0] : concat_rows(outputs);
        return {out, state};
    }

    std::vector<LstmLayer> enc_, dec_;
    Tensor combine_w_, combine_b_;
};

} // namespace

std::unique_ptr<Model> build_rnn(ModelConfig cfg, Rng& rng) {
    return std::make_unique<RnnModel>(std::move(cfg), rng);
}

std::unique_ptr<Model> build_transformer(ModelConfig cfg, Rng& rng);

std::unique_ptr<Model> build_model(const ModelConfig& cfg, Rng& init_rng) {
    cfg.validate();
    if (cfg.family == Family::transformer) return build_transformer(cfg, init_rng);
    return build_rnn(cfg, init_rng);
}

} // namespace nmtlab
