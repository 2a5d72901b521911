#include "jex/rc.hpp"

namespace jex {

RcParams RcParams::init(int64_t d_model, int64_t d_hidden, int64_t n_relations, Rng& rng) {
    auto randn = [&rng](Shape shape) {
        std::vector<real> v(static_cast<size_t>(shape_numel(shape)));
        for (real& x : v) x = static_cast<real>(rng.normal(0.0, 0.02));
        return Tensor::from(std::move(shape), std::move(v), true);
    };
    RcParams p;
    p.w1 = randn({d_model, d_hidden});
    p.b1 = Tensor::zeros({d_hidden}, true);
    p.w2 = randn({d_hidden, n_relations});
    p.b2 = Tensor::zeros({n_relations}, true);
    return p;
}

Tensor rc_logits(const Tensor& h, const RcParams& params) {
    if (h.shape().size() != 2)
        throw DimensionError("rc_logits: encoder output must be rank 2, got " +
                             shape_str(h.shape()));
    if (h.shape()[1] != params.w1.shape()[0])
        throw DimensionError("rc_logits: width " + shape_str(h.shape()) +
                             " does not match projection " + shape_str(params.w1.shape()));
    Tensor cls = slice_rows(h, 0, 1);
    Tensor hidden = tanh(add_bias(matmul(cls, params.w1), params.b1));
    return add_bias(matmul(hidden, params.w2), params.b2);
}

Tensor rc_forward(const Tensor& h, const RcParams& params) {
    Tensor logits = rc_logits(h, params);
    return reshape(softmax_rows(logits), {params.n_relations()});
}

Tensor rc_loss(const Tensor& p, int64_t gold) {
    const int64_t n = p.numel();
    if (gold < 0 || gold >= n)
        throw ContractError("rc_loss: label " + std::to_string(gold) + " outside " +
                            std::to_string(n) + " relations");
    Tensor picked = select_sum(reshape(p, {1, n}), {{0, gold}});
    return scale(log(picked), real(-1));
}

Tensor rc_nll_logits(const Tensor& logits, int64_t gold) {
    if (logits.shape().size() != 2 || logits.shape()[0] != 1)
        throw DimensionError("rc_nll_logits: expected [1, n] logits, got " +
                             shape_str(logits.shape()));
    const int64_t n = logits.shape()[1];
    if (gold < 0 || gold >= n)
        throw ContractError("rc_nll_logits: label " + std::to_string(gold) + " outside " +
                            std::to_string(n) + " relations");
    return sub(logsumexp_rows(logits), select_sum(logits, {{0, gold}}));
}

}  // namespace jex
