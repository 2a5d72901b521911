#include "jex/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "jex/crf.hpp"
#include "jex/rc.hpp"

namespace jex {

namespace {

Tensor random_leaf(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    std::vector<real> v(static_cast<size_t>(shape_numel(shape)));
    for (real& x : v) x = static_cast<real>(rng.uniform(lo, hi));
    return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

double gradient_check(const std::function<Tensor()>& fn, std::vector<Tensor>& inputs, Rng& rng,
                      double step) {
    Tensor probe = fn();
    std::vector<real> weights(static_cast<size_t>(probe.numel()));
    for (real& w : weights) w = static_cast<real>(rng.uniform(-1.0, 1.0));

    auto weighted_value = [&]() {
        Tensor out = fn();
        double acc = 0;
        auto v = out.values();
        for (size_t i = 0; i < v.size(); ++i) acc += static_cast<double>(v[i]) * weights[i];
        return acc;
    };

    // analytic gradients
    for (Tensor& in : inputs) in.zero_grad();
    {
        Tensor out = fn();
        Tensor loss = sum_all(mul(out, Tensor::from(out.shape(), weights)));
        backward(loss);
    }

    double worst = 0;
    for (Tensor& in : inputs) {
        auto vals = in.values_mut();
        auto grads = in.grad();
        for (size_t i = 0; i < vals.size(); ++i) {
            const real saved = vals[i];
            vals[i] = saved + static_cast<real>(step);
            const double up = weighted_value();
            vals[i] = saved - static_cast<real>(step);
            const double down = weighted_value();
            vals[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double analytic = static_cast<double>(grads[i]);
            const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
            worst = std::max(worst, std::fabs(analytic - numeric) / denom);
        }
    }
    return worst;
}

namespace {

using CaseFn = std::function<double(Rng&)>;

AttentionMask random_mask(int64_t t, Rng& rng) {
    AttentionMask m(t, 0);
    for (int64_t i = 0; i < t; ++i) {
        for (int64_t j = 0; j < t; ++j) m.set(i, j, rng.uniform() < 0.5 ? 1 : 0);
        m.set(i, i, 1);  // keep every row alive
    }
    return m;
}

const std::map<std::string, CaseFn>& case_table() {
    static const std::map<std::string, CaseFn> table = {
        {"matmul",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 4}, rng), random_leaf({4, 2}, rng)};
             return gradient_check([&] { return matmul(in[0], in[1]); }, in, rng);
         }},
        {"add",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 4}, rng), random_leaf({3, 4}, rng)};
             return gradient_check([&] { return add(in[0], in[1]); }, in, rng);
         }},
        {"sub",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 4}, rng), random_leaf({3, 4}, rng)};
             return gradient_check([&] { return sub(in[0], in[1]); }, in, rng);
         }},
        {"mul",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 4}, rng), random_leaf({3, 4}, rng)};
             return gradient_check([&] { return mul(in[0], in[1]); }, in, rng);
         }},
        {"add_bias",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 4}, rng), random_leaf({4}, rng)};
             return gradient_check([&] { return add_bias(in[0], in[1]); }, in, rng);
         }},
        {"scale",
         [](Rng& rng) {
             const real c = static_cast<real>(rng.uniform(-2.0, 2.0));
             std::vector<Tensor> in = {random_leaf({3, 4}, rng)};
             return gradient_check([&] { return scale(in[0], c); }, in, rng);
         }},
        {"tanh",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 4}, rng, -3.0, 3.0)};
             return gradient_check([&] { return tanh(in[0]); }, in, rng);
         }},
        {"gelu",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 4}, rng, -3.0, 3.0)};
             return gradient_check([&] { return gelu(in[0]); }, in, rng);
         }},
        {"log",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 4}, rng, 0.2, 3.0)};
             return gradient_check([&] { return log(in[0]); }, in, rng);
         }},
        {"transpose",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 4}, rng)};
             return gradient_check([&] { return transpose(in[0]); }, in, rng);
         }},
        {"reshape",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 4}, rng)};
             return gradient_check([&] { return reshape(in[0], {2, 6}); }, in, rng);
         }},
        {"slice_rows",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({5, 3}, rng)};
             return gradient_check([&] { return slice_rows(in[0], 1, 4); }, in, rng);
         }},
        {"concat_cols",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 2}, rng), random_leaf({3, 3}, rng),
                                       random_leaf({3, 1}, rng)};
             return gradient_check([&] { return concat_cols({in[0], in[1], in[2]}); }, in, rng);
         }},
        {"gather_rows",
         [](Rng& rng) {
             // repeated indices exercise gradient accumulation
             std::vector<Tensor> in = {random_leaf({5, 3}, rng)};
             std::vector<int64_t> rows = {0, 2, 2, 4, 1};
             return gradient_check([&] { return gather_rows(in[0], rows); }, in, rng);
         }},
        {"select_sum",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({4, 3}, rng)};
             std::vector<std::pair<int64_t, int64_t>> ij = {{0, 1}, {2, 2}, {0, 1}, {3, 0}};
             return gradient_check([&] { return select_sum(in[0], ij); }, in, rng);
         }},
        {"sum_all",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 4}, rng)};
             return gradient_check([&] { return sum_all(in[0]); }, in, rng);
         }},
        {"logsumexp_rows",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 5}, rng, -3.0, 3.0)};
             return gradient_check([&] { return logsumexp_rows(in[0]); }, in, rng);
         }},
        {"masked_softmax",
         [](Rng& rng) {
             AttentionMask mask = random_mask(4, rng);
             std::vector<Tensor> in = {random_leaf({4, 4}, rng, -3.0, 3.0)};
             return gradient_check([&] { return masked_softmax(in[0], mask); }, in, rng);
         }},
        {"layer_norm",
         [](Rng& rng) {
             std::vector<Tensor> in = {random_leaf({3, 6}, rng), random_leaf({6}, rng, 0.5, 1.5),
                                       random_leaf({6}, rng, -0.5, 0.5)};
             return gradient_check([&] { return layer_norm(in[0], in[1], in[2], real(1e-5)); },
                                   in, rng);
         }},
        {"crf_nll",
         [](Rng& rng) {
             const int64_t t_len = 4, n = 3;
             std::vector<Tensor> in = {random_leaf({t_len, n}, rng),
                                       random_leaf({n + 1, n}, rng)};
             TagSequence gold;
             for (int64_t t = 0; t < t_len; ++t) gold.push_back(rng.uniform_int(0, n - 1));
             return gradient_check([&] { return crf_nll(in[0], gold, in[1]); }, in, rng);
         }},
        {"rc_loss",
         [](Rng& rng) {
             const int64_t d = 6, dh = 5, nr = 4;
             std::vector<Tensor> in = {random_leaf({3, d}, rng), random_leaf({d, dh}, rng),
                                       random_leaf({dh}, rng), random_leaf({dh, nr}, rng),
                                       random_leaf({nr}, rng)};
             const int64_t gold = rng.uniform_int(0, nr - 1);
             return gradient_check(
                 [&] {
                     RcParams p{in[1], in[2], in[3], in[4]};
                     return rc_nll_logits(rc_logits(in[0], p), gold);
                 },
                 in, rng);
         }},
    };
    return table;
}

}  // namespace

std::vector<std::string> checkable_ops() {
    std::vector<std::string> names = registered_kernels();
    names.push_back("crf_nll");
    names.push_back("rc_loss");
    return names;
}

GradCheckResult check_op(const std::string& name, uint64_t seed, int trials) {
    const auto& table = case_table();
    auto it = table.find(name);
    if (it == table.end()) throw ContractError("gradcheck: unknown op " + name);
    Rng rng(seed ^ std::hash<std::string>{}(name));
    GradCheckResult result;
    result.name = name;
    for (int t = 0; t < trials; ++t)
        result.max_rel_error = std::max(result.max_rel_error, it->second(rng));
    result.passed = result.max_rel_error < kGradCheckTol;
    return result;
}

std::vector<GradCheckResult> check_all(uint64_t seed, int trials) {
    std::vector<GradCheckResult> results;
    for (const std::string& name : checkable_ops()) results.push_back(check_op(name, seed, trials));
    return results;
}

GradCheckResult check_corrupted_fixture(uint64_t seed) {
    Rng rng(seed);
    GradCheckResult result;
    result.name = "corrupted_square_fixture";
    std::vector<Tensor> in = {random_leaf({3, 3}, rng, 0.5, 2.0)};
    auto broken_square = [&](const Tensor& x) {
        auto node = std::make_shared<detail::TensorNode>();
        node->shape = x.shape();
        node->values.resize(x.values().size());
        for (size_t i = 0; i < node->values.size(); ++i)
            node->values[i] = x.values()[i] * x.values()[i];
        node->requires_grad = true;
        node->grad.assign(node->values.size(), real(0));
        node->op = "corrupted_square";
        node->parents = {x.node()};
        detail::TensorNode* o = node.get();
        detail::TensorNode* px = x.node().get();
        node->backprop = [o, px] {
            // wrong on purpose: claims d(x^2)/dx == 3x
            for (size_t i = 0; i < o->grad.size(); ++i)
                px->grad[i] += o->grad[i] * real(3) * px->values[i];
        };
        return Tensor(node);
    };
    result.max_rel_error = gradient_check([&] { return broken_square(in[0]); }, in, rng);
    result.passed = result.max_rel_error < kGradCheckTol;
    return result;
}

}  // namespace jex
