#include "jex/encoder.hpp"

#include <cmath>

namespace jex {

void EncoderConfig::validate() const {
    if (vocab_size < 1) throw ConfigError("encoder: vocab_size must be positive");
    if (d_model < 1 || n_heads < 1) throw ConfigError("encoder: d_model and n_heads must be positive");
    if (d_model % n_heads != 0)
        throw ConfigError("encoder: d_model " + std::to_string(d_model) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    if (n_layers < 0 || k_task < 0 || k_task > n_layers)
        throw ConfigError("encoder: need 0 <= K <= N, got K=" + std::to_string(k_task) +
                          " N=" + std::to_string(n_layers));
    if (max_len < 3) throw ConfigError("encoder: max_len too small for specials");
    if (activation != "gelu" && activation != "tanh")
        throw ConfigError("encoder: unknown activation '" + activation + "'");
    if (dropout != real(0))
        throw ConfigError("encoder: dropout hook is present but only 0 is supported");
}

namespace {

Tensor randn_param(Shape shape, Rng& rng, double stddev = 0.02) {
    std::vector<real> v(static_cast<size_t>(shape_numel(shape)));
    for (real& x : v) x = static_cast<real>(rng.normal(0.0, stddev));
    return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& config, Rng& rng) {
    config.validate();
    EncoderParams p;
    p.config = config;
    p.embedding.token = randn_param({config.vocab_size, config.d_model}, rng);
    p.embedding.position = randn_param({config.max_len, config.d_model}, rng);
    const int64_t d = config.d_model, dk = config.d_k();
    for (int64_t l = 0; l < config.n_layers; ++l) {
        LayerParams layer;
        for (int64_t h = 0; h < config.n_heads; ++h) {
            layer.wq.push_back(randn_param({d, dk}, rng));
            layer.wk.push_back(randn_param({d, dk}, rng));
            layer.wv.push_back(randn_param({d, dk}, rng));
        }
        layer.wo = randn_param({d, d}, rng);
        layer.ff_w1 = randn_param({d, config.d_ff}, rng);
        layer.ff_b1 = Tensor::zeros({config.d_ff}, true);
        layer.ff_w2 = randn_param({config.d_ff, d}, rng);
        layer.ff_b2 = Tensor::zeros({d}, true);
        layer.ln1_gamma = Tensor::full({d}, 1, true);
        layer.ln1_beta = Tensor::zeros({d}, true);
        layer.ln2_gamma = Tensor::full({d}, 1, true);
        layer.ln2_beta = Tensor::zeros({d}, true);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

Tensor embed(const std::vector<int64_t>& token_ids, const EncoderParams& params) {
    const auto& cfg = params.config;
    const int64_t t = static_cast<int64_t>(token_ids.size());
    if (t < 1) throw LengthError("embed: empty token sequence");
    if (t > cfg.max_len)
        throw LengthError("embed: sequence of " + std::to_string(t) + " tokens exceeds max_len " +
                          std::to_string(cfg.max_len));
    for (int64_t id : token_ids)
        if (id < 0 || id >= cfg.vocab_size)
            throw VocabError("embed: token id " + std::to_string(id) + " outside vocabulary of " +
                             std::to_string(cfg.vocab_size));
    Tensor tok = gather_rows(params.embedding.token, token_ids);
    Tensor pos = slice_rows(params.embedding.position, 0, t);
    return add(tok, pos);
}

Tensor encoder_layer(const Tensor& h_prev, const AttentionMask& mask, const LayerParams& layer,
                     const EncoderConfig& config) {
    if (h_prev.shape().size() != 2 || h_prev.shape()[1] != config.d_model)
        throw DimensionError("encoder_layer: expected [T," + std::to_string(config.d_model) +
                             "], got " + shape_str(h_prev.shape()));
    if (mask.size() != h_prev.shape()[0])
        throw DimensionError("encoder_layer: mask size " + std::to_string(mask.size()) +
                             " vs sequence " + shape_str(h_prev.shape()));

    const real inv_sqrt_dk = real(1) / std::sqrt(static_cast<real>(config.d_k()));
    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(config.n_heads));
    for (int64_t h = 0; h < config.n_heads; ++h) {
        const size_t hi = static_cast<size_t>(h);
        Tensor q = matmul(h_prev, layer.wq[hi]);
        Tensor k = matmul(h_prev, layer.wk[hi]);
        Tensor v = matmul(h_prev, layer.wv[hi]);
        Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
        Tensor attn = masked_softmax(scores, mask);
        heads.push_back(matmul(attn, v));
    }
    Tensor mhsa = matmul(concat_cols(heads), layer.wo);
    Tensor h_mid = layer_norm(add(h_prev, mhsa), layer.ln1_gamma, layer.ln1_beta, real(1e-5));

    Tensor ff_hidden = add_bias(matmul(h_mid, layer.ff_w1), layer.ff_b1);
    ff_hidden = config.activation == "tanh" ? tanh(ff_hidden) : gelu(ff_hidden);
    Tensor ff_out = add_bias(matmul(ff_hidden, layer.ff_w2), layer.ff_b2);
    return layer_norm(add(h_mid, ff_out), layer.ln2_gamma, layer.ln2_beta, real(1e-5));
}

Tensor run_layers(Tensor h, const AttentionMask& mask, const EncoderParams& params,
                  int64_t begin_layer, int64_t end_layer) {
    if (begin_layer < 0 || end_layer > params.config.n_layers || begin_layer > end_layer)
        throw ContractError("run_layers: bad layer range [" + std::to_string(begin_layer) + "," +
                            std::to_string(end_layer) + ")");
    for (int64_t l = begin_layer; l < end_layer; ++l)
        h = encoder_layer(h, mask, params.layers[static_cast<size_t>(l)], params.config);
    return h;
}

StrEncodeResult str_encode(const std::vector<int64_t>& token_ids, const AttentionMask& task_mask,
                           int64_t valid_len, const EncoderParams& params) {
    const int64_t t = static_cast<int64_t>(token_ids.size());
    if (task_mask.size() != t)
        throw DimensionError("str_encode: task mask size " + std::to_string(task_mask.size()) +
                             " vs " + std::to_string(t) + " tokens");
    const int64_t n = params.config.n_layers;
    const int64_t split = n - params.config.k_task;

    const AttentionMask context_mask = compose_padding(build_mask_all(t), valid_len);
    const AttentionMask focused_mask = compose_padding(task_mask, valid_len);

    StrEncodeResult out;
    Tensor h = embed(token_ids, params);
    out.h_shared = run_layers(std::move(h), context_mask, params, 0, split);
    out.h_task = run_layers(out.h_shared, focused_mask, params, split, n);
    return out;
}

}  // namespace jex
