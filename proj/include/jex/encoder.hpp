#pragma once

#include <string>
#include <vector>

#include "jex/common.hpp"
#include "jex/masks.hpp"
#include "jex/tensor.hpp"

namespace jex {

struct EncoderConfig {
    int64_t vocab_size = 0;
    int64_t d_model = 64;
    int64_t n_heads = 4;
    int64_t d_ff = 128;
    int64_t n_layers = 4;  // N
    int64_t k_task = 2;    // K: trailing layers that apply the task mask
    int64_t max_len = 128;
    std::string activation = "gelu";  // or "tanh"
    real dropout = 0;                 // config hook; this build requires 0

    int64_t d_k() const { return d_model / n_heads; }
    void validate() const;
};

// One self-attention layer: per-head Q/K/V projections, output projection,
// position-wise feed-forward, and the two layer norms around the residuals.
struct LayerParams {
    std::vector<Tensor> wq, wk, wv;  // n_heads x [d_model, d_k]
    Tensor wo;                       // [d_model, d_model]
    Tensor ff_w1, ff_b1;             // [d_model, d_ff], [d_ff]
    Tensor ff_w2, ff_b2;             // [d_ff, d_model], [d_model]
    Tensor ln1_gamma, ln1_beta;      // [d_model]
    Tensor ln2_gamma, ln2_beta;      // [d_model]
};

struct EmbeddingParams {
    Tensor token;     // [vocab_size, d_model]
    Tensor position;  // [max_len, d_model], learned
};

struct EncoderParams {
    EncoderConfig config;
    EmbeddingParams embedding;
    std::vector<LayerParams> layers;

    // normal(0, 0.02) projections and embeddings, zero biases, identity norms
    static EncoderParams init(const EncoderConfig& config, Rng& rng);
};

// Token plus learned position embeddings. Ids must already carry the leading
// and trailing special tokens.
Tensor embed(const std::vector<int64_t>& token_ids, const EncoderParams& params);

// h' = LN(h + MHSA(h, mask)); out = LN(h' + FFN(h')). Attention is scaled
// dot-product per head with the masked softmax; heads concatenate and
// project back to d_model.
Tensor encoder_layer(const Tensor& h_prev, const AttentionMask& mask, const LayerParams& layer,
                     const EncoderConfig& config);

// Applies layers [begin_layer, end_layer) under one mask.
Tensor run_layers(Tensor h, const AttentionMask& mask, const EncoderParams& params,
                  int64_t begin_layer, int64_t end_layer);

struct StrEncodeResult {
    Tensor h_task;    // final representation under the task mask
    Tensor h_shared;  // output of layer N-K, identical for every task
};

// The split encoder stack: the first N-K layers run with the all-ones mask
// and see only real tokens (padding composed in); the last K layers run with
// the task mask. valid_len counts real tokens including the specials.
StrEncodeResult str_encode(const std::vector<int64_t>& token_ids, const AttentionMask& task_mask,
                           int64_t valid_len, const EncoderParams& params);

}  // namespace jex
