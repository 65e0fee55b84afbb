#include "nmtlab/model.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "nmtlab/errors.hpp"

namespace nmtlab {

std::string family_name(Family f) { return f == Family::transformer ? "transformer" : "rnn"; }

Family family_from_name(const std::string& s) {
    if (s == "transformer") return Family::transformer;
    if (s == "rnn") return Family::rnn;
    throw ConfigError("unknown model family '" + s + "'");
}

namespace {

std::string fmt_double(double v) {
    // shortest decimal form that parses back to the same bits
    for (int prec = 1; prec <= 17; ++prec) {
        std::ostringstream os;
        os.precision(prec);
        os << v;
        if (std::stod(os.str()) == v) return os.str();
    }
    return std::to_string(v);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

} // namespace

void ModelConfig::validate() const {
    if (d_model < 2) throw ConfigError("d_model must be >= 2");
    if (d_model % 2 != 0) throw ConfigError("d_model must be even for sinusoid positions");
    if (heads < 1) throw ConfigError("heads must be >= 1");
    if (d_model % heads != 0)
        throw ConfigError("heads (" + std::to_string(heads) + ") must divide d_model (" + std::to_string(d_model) + ")");
    if (encoder_layers < 0) throw ConfigError("encoder_layers must be >= 0");
    if (decoder_layers < 1) throw ConfigError("decoder_layers must be >= 1");
    if (ff_dim < 1) throw ConfigError("ff_dim must be >= 1");
    if (family == Family::transformer && !use_attention)
        throw ConfigError("transformer requires use_attention=true: encoder-decoder attention is structural");
    for (double r : {dropout_embed, dropout_block, dropout_rnn})
        if (r < 0.0 || r >= 1.0) throw ConfigError("dropout rates must be in [0, 1)");
    if (vocab_size != 0 && vocab_size < 5)
        throw ConfigError("vocab_size must cover the 4 reserved ids plus at least one token");
}

std::string ModelConfig::to_kv() const {
    std::ostringstream os;
    os << "family=" << family_name(family) << "\n";
    os << "encoder_layers=" << encoder_layers << "\n";
    os << "decoder_layers=" << decoder_layers << "\n";
    os << "use_attention=" << (use_attention ? "true" : "false") << "\n";
    os << "use_source_positions=" << (use_source_positions ? "true" : "false") << "\n";
    os << "d_model=" << d_model << "\n";
    os << "ff_dim=" << ff_dim << "\n";
    os << "heads=" << heads << "\n";
    os << "tie_embeddings=" << (tie_embeddings ? "true" : "false") << "\n";
    os << "dropout_embed=" << fmt_double(dropout_embed) << "\n";
    os << "dropout_block=" << fmt_double(dropout_block) << "\n";
    os << "dropout_rnn=" << fmt_double(dropout_rnn) << "\n";
    os << "freeze_embeddings=" << (freeze_embeddings ? "true" : "false") << "\n";
    os << "vocab_size=" << vocab_size << "\n";
    return os.str();
}

ModelConfig ModelConfig::from_kv(const std::string& text) {
    ModelConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("model config line without '=': '" + line + "'");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        if (key == "family")
            cfg.family = family_from_name(val);
        else if (key == "encoder_layers")
            cfg.encoder_layers = std::stoi(val);
        else if (key == "decoder_layers")
            cfg.decoder_layers = std::stoi(val);
        else if (key == "use_attention")
            cfg.use_attention = parse_bool(val, key);
        else if (key == "use_source_positions")
            cfg.use_source_positions = parse_bool(val, key);
        else if (key == "d_model")
            cfg.d_model = std::stoi(val);
        else if (key == "ff_dim")
            cfg.ff_dim = std::stoi(val);
        else if (key == "heads")
            cfg.heads = std::stoi(val);
        else if (key == "tie_embeddings")
            cfg.tie_embeddings = parse_bool(val, key);
        else if (key == "dropout_embed")
            cfg.dropout_embed = std::stod(val);
        else if (key == "dropout_block")
            cfg.dropout_block = std::stod(val);
        else if (key == "dropout_rnn")
            cfg.dropout_rnn = std::stod(val);
        else if (key == "freeze_embeddings")
            cfg.freeze_embeddings = parse_bool(val, key);
        else if (key == "vocab_size")
            cfg.vocab_size = std::stoi(val);
        else
            throw ConfigError("unknown model config key '" + key + "'");
    }
    return cfg;
}

Tensor sinusoid_positions(int length, int d_model) {
    if (d_model % 2 != 0) throw ConfigError("sinusoid positions require even d_model, got " + std::to_string(d_model));
    if (length < 1) throw ContractError("sinusoid_positions: length must be >= 1");
    Tensor pe = Tensor::zeros({length, d_model});
    for (int pos = 0; pos < length; ++pos) {
        for (int i = 0; i < d_model / 2; ++i) {
            double rate = std::pow(10000.0, 2.0 * i / d_model);
            pe.at(pos, 2 * i) = std::sin(pos / rate);
            pe.at(pos, 2 * i + 1) = std::cos(pos / rate);
        }
    }
    return pe;
}

Tensor causal_mask(int len) {
    Tensor m = Tensor::zeros({len, len});
    for (int i = 0; i < len; ++i)
        for (int j = i + 1; j < len; ++j) m.at(i, j) = -1e9;
    return m;
}

// ---- Model base ----

Tensor Model::add_param(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params_.push_back({name, t});
    return t;
}

void Model::register_embeddings(Rng& rng) {
    const double std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
    if (cfg_.tie_embeddings) {
        embedding_ = add_param("embedding", Tensor::randn({cfg_.vocab_size, cfg_.d_model}, rng, std));
        tgt_embedding_ = embedding_;
        out_proj_ = embedding_; // same storage: mutating one mutates the other
    } else {
        embedding_ = add_param("src_embedding", Tensor::randn({cfg_.vocab_size, cfg_.d_model}, rng, std));
        tgt_embedding_ = add_param("tgt_embedding", Tensor::randn({cfg_.vocab_size, cfg_.d_model}, rng, std));
        out_proj_ = add_param("out_projection", Tensor::randn({cfg_.vocab_size, cfg_.d_model}, rng, std));
    }
    if (cfg_.freeze_embeddings) {
        embedding_.set_requires_grad(false);
        tgt_embedding_.set_requires_grad(false);
        out_proj_.set_requires_grad(false);
    }
}

Tensor Model::logits_from(const Tensor& states) { return matmul(states, transpose2d(out_proj_)); }

long long Model::parameter_count() const {
    long long n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
}

Parameter* Model::find_parameter(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

// ---- multi-head attention ----

namespace {

Tensor glorot(Shape shape, Rng& rng) {
    double fan_in = shape[0], fan_out = shape[1];
    return Tensor::randn(std::move(shape), rng, std::sqrt(2.0 / (fan_in + fan_out)));
}

} // namespace

void MultiHeadAttention::init(const std::string& prefix, Model& owner, int d, int h, Rng& rng) {
    heads = h;
    d_model = d;
    wq = owner.add_param(prefix + ".wq", glorot({d, d}, rng));
    wk = owner.add_param(prefix + ".wk", glorot({d, d}, rng));
    wv = owner.add_param(prefix + ".wv", glorot({d, d}, rng));
    wo = owner.add_param(prefix + ".wo", glorot({d, d}, rng));
    bq = owner.add_param(prefix + ".bq", Tensor::zeros({d}));
    bk = owner.add_param(prefix + ".bk", Tensor::zeros({d}));
    bv = owner.add_param(prefix + ".bv", Tensor::zeros({d}));
    bo = owner.add_param(prefix + ".bo", Tensor::zeros({d}));
}

Tensor MultiHeadAttention::apply(const Tensor& queries, const Tensor& keys, const Tensor& values,
                                 const Tensor* mask, AttentionRecord* record, int record_layer) const {
    if (queries.cols() != d_model || keys.cols() != d_model || values.cols() != d_model)
        throw ShapeError("attention inputs must have width " + std::to_string(d_model));
    if (keys.rows() != values.rows())
        throw ShapeError("attention keys/values length mismatch: " + shape_str(keys.shape()) + " vs " +
                         shape_str(values.shape()));
    const int dh = d_model / heads;
    Tensor q = add_bias(matmul(queries, wq), bq);
    Tensor k = add_bias(matmul(keys, wk), bk);
    Tensor v = add_bias(matmul(values, wv), bv);
    std::vector<Tensor> ctx;
    ctx.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul(qh, transpose2d(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
        if (mask) scores = add(scores, *mask);
        Tensor weights = softmax(scores, 1);
        if (record && !record->empty()) {
            for (int t = 0; t < weights.rows(); ++t)
                for (int s = 0; s < weights.cols(); ++s) record->at(record_layer, h, t, s) = weights.at(t, s);
        }
        ctx.push_back(matmul(weights, vh));
    }
    Tensor merged = heads == 1 ? ctx[0] : concat_cols(ctx);
    return add_bias(matmul(merged, wo), bo);
}

// ---- parameter accounting ----

namespace {

long long embedding_params(const ModelConfig& c) {
    long long e = static_cast<long long>(c.vocab_size) * c.d_model;
    return c.tie_embeddings ? e : 3 * e;
}

long long attention_block_params(int d) {
    return 4LL * d * d + 4LL * d; // wq wk wv wo + biases
}

long long layer_norm_params(int d) { return 2LL * d; }

long long ff_params(int d, int ff) { return static_cast<long long>(d) * ff + ff + static_cast<long long>(ff) * d + d; }

long long lstm_params(int input, int d) {
    return static_cast<long long>(input) * 4 * d + static_cast<long long>(d) * 4 * d + 4LL * d;
}

long long transformer_encoder_layer(const ModelConfig& c) {
    return attention_block_params(c.d_model) + ff_params(c.d_model, c.ff_dim) + 2 * layer_norm_params(c.d_model);
}

long long transformer_decoder_layer(const ModelConfig& c) {
    return 2 * attention_block_params(c.d_model) + ff_params(c.d_model, c.ff_dim) + 3 * layer_norm_params(c.d_model);
}

} // namespace

long long encoder_layer_param_delta(const ModelConfig& cfg) {
    if (cfg.family != Family::transformer)
        return lstm_params(cfg.d_model, cfg.d_model);
    return transformer_encoder_layer(cfg);
}

long long count_params(const ModelConfig& cfg) {
    cfg.validate();
    long long n = embedding_params(cfg);
    if (cfg.family == Family::transformer) {
        n += cfg.encoder_layers * transformer_encoder_layer(cfg);
        n += cfg.decoder_layers * transformer_decoder_layer(cfg);
    } else {
        n += cfg.encoder_layers * lstm_params(cfg.d_model, cfg.d_model);
        const int d = cfg.d_model;
        for (int i = 0; i < cfg.decoder_layers; ++i) {
            int input = (i == 0 && !cfg.use_attention) ? 2 * d : d;
            n += lstm_params(input, d);
        }
        if (cfg.use_attention) n += 2LL * d * d + d; // combine layer over [h; ctx]
    }
    return n;
}

std::string param_breakdown(const ModelConfig& cfg) {
    std::ostringstream os;
    os << "family\t" << family_name(cfg.family) << "\n";
    if (cfg.vocab_size > 0)
        os << "embeddings\t" << embedding_params(cfg) << "\n";
    else
        os << "embeddings\t" << (cfg.tie_embeddings ? 1 : 3) << " x vocab_size x " << cfg.d_model
           << " (vocab not set)\n";
    if (cfg.family == Family::transformer) {
        os << "encoder_layers\t" << cfg.encoder_layers << "\n";
        os << "per_encoder_layer\t" << transformer_encoder_layer(cfg) << "\n";
        os << "decoder_layers\t" << cfg.decoder_layers << "\n";
        os << "per_decoder_layer\t" << transformer_decoder_layer(cfg) << "\n";
    } else {
        os << "encoder_layers\t" << cfg.encoder_layers << "\n";
        os << "per_encoder_layer\t" << lstm_params(cfg.d_model, cfg.d_model) << "\n";
        os << "decoder_layers\t" << cfg.decoder_layers << "\n";
        for (int i = 0; i < cfg.decoder_layers; ++i) {
            int input = (i == 0 && !cfg.use_attention) ? 2 * cfg.d_model : cfg.d_model;
            os << "decoder_layer_" << i << "\t" << lstm_params(input, cfg.d_model) << "\n";
        }
        if (cfg.use_attention) os << "attention_combine\t" << (2LL * cfg.d_model * cfg.d_model + cfg.d_model) << "\n";
    }
    if (cfg.vocab_size > 0) os << "total\t" << count_params(cfg) << "\n";
    return os.str();
}

} // namespace nmtlab
