#pragma once

#include "jex/common.hpp"
#include "jex/tensor.hpp"

namespace jex {

// Two-layer perceptron over the summary token: tanh hidden layer, softmax
// output over the directed relation label set.
struct RcParams {
    Tensor w1;  // [d_model, d_hidden]
    Tensor b1;  // [d_hidden]
    Tensor w2;  // [d_hidden, n_relations]
    Tensor b2;  // [n_relations]

    int64_t n_relations() const { return w2.shape()[1]; }

    static RcParams init(int64_t d_model, int64_t d_hidden, int64_t n_relations, Rng& rng);
};

// Relation logits from row 0 (the summary token) of the encoder output.
Tensor rc_logits(const Tensor& h, const RcParams& params);  // [1, n_relations]

// Probability vector over relation labels.
Tensor rc_forward(const Tensor& h, const RcParams& params);  // [n_relations]

// -log p[gold] on an explicit probability vector.
Tensor rc_loss(const Tensor& p, int64_t gold);

// Log-softmax fused with the negative log-likelihood, straight from logits;
// identical in value and gradient to rc_loss(softmax(logits), gold) but
// stable for extreme logits. The training path uses this form.
Tensor rc_nll_logits(const Tensor& logits, int64_t gold);

}  // namespace jex
