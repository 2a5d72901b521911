#include <doctest.h>

#include <cmath>

#include "jex/gradcheck.hpp"
#include "jex/tensor.hpp"

using namespace jex;

TEST_CASE("matmul identity and hand dot product") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor out = matmul(a, eye);
    for (size_t i = 0; i < 4; ++i) CHECK(out.values()[i] == a.values()[i]);

    // dot product oracle: [1,2].[3,4] = 1*3 + 2*4
    Tensor row = Tensor::from({1, 2}, {1, 2});
    Tensor col = Tensor::from({2, 1}, {3, 4});
    const real expected = 1 * 3 + 2 * 4;
    CHECK(matmul(row, col).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_AS(matmul(a, b), DimensionError);
    try {
        matmul(a, b);
    } catch (const DimensionError& e) {
        std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[2,2]") != std::string::npos);
    }
}

TEST_CASE("tanh is odd at the origin") {
    Tensor zeros = Tensor::zeros({3, 3});
    Tensor out = tanh(zeros);
    for (real v : out.values()) CHECK(v == real(0));
}

TEST_CASE("masked softmax uniform and one-hot rows") {
    Tensor logits = Tensor::full({4, 4}, real(1.7));
    Tensor p = masked_softmax(logits, build_mask_all(4));
    for (real v : p.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

    // single visible column pins the row regardless of logits
    AttentionMask onehot(3, 1);
    for (int64_t j = 0; j < 3; ++j) onehot.set(1, j, j == 2 ? 1 : 0);
    Tensor wild = Tensor::from({3, 3}, {5, -2, 0.5, 9, 1, -7, 0, 0, 0});
    Tensor q = masked_softmax(wild, onehot);
    CHECK(q.at(1, 0) == real(0));
    CHECK(q.at(1, 1) == real(0));
    CHECK(q.at(1, 2) == real(1));
}

TEST_CASE("masked softmax two-survivor row matches closed form") {
    // row [1,2,3] with middle column hidden: sigma = e^1 / (e^1 + e^3)
    const double sigma = std::exp(1.0) / (std::exp(1.0) + std::exp(3.0));
    AttentionMask mask(3, 1);
    mask.set(0, 1, 0);
    Tensor logits = Tensor::from({3, 3}, {1, 2, 3, 0, 0, 0, 0, 0, 0});
    Tensor p = masked_softmax(logits, mask);
    CHECK(p.at(0, 0) == doctest::Approx(sigma).epsilon(1e-12));
    CHECK(p.at(0, 1) == real(0));
    CHECK(p.at(0, 2) == doctest::Approx(1.0 - sigma).epsilon(1e-12));
}

TEST_CASE("masked softmax rows sum to one with exact zeros") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int64_t t = rng.uniform_int(2, 8);
        AttentionMask mask(t, 0);
        for (int64_t i = 0; i < t; ++i) {
            for (int64_t j = 0; j < t; ++j) mask.set(i, j, rng.uniform() < 0.4 ? 1 : 0);
            mask.set(i, i, 1);
        }
        std::vector<real> vals(static_cast<size_t>(t * t));
        for (real& v : vals) v = static_cast<real>(rng.uniform(-5.0, 5.0));
        Tensor p = masked_softmax(Tensor::from({t, t}, std::move(vals)), mask);
        for (int64_t i = 0; i < t; ++i) {
            real sum = 0;
            for (int64_t j = 0; j < t; ++j) {
                if (!mask.at(i, j)) CHECK(p.at(i, j) == real(0));
                sum += p.at(i, j);
            }
            CHECK(std::fabs(sum - real(1)) < 1e-12);
        }
    }
}

TEST_CASE("masked softmax rejects an all-zero row") {
    AttentionMask mask(2, 1);
    mask.set(0, 0, 0);
    mask.set(0, 1, 0);
    Tensor logits = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(masked_softmax(logits, mask), DegenerateMaskError);
}

TEST_CASE("masked softmax gradient is exactly zero at masked positions") {
    AttentionMask mask(3, 1);
    mask.set(0, 1, 0);
    mask.set(2, 0, 0);
    Tensor logits = Tensor::from({3, 3}, {0.3, -1.0, 2.0, 0.5, 0.5, 0.5, 1.0, 2.0, 3.0}, true);
    Tensor p = masked_softmax(logits, mask);
    backward(sum_all(mul(p, Tensor::from({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}))));
    CHECK(logits.grad()[1] == real(0));
    CHECK(logits.grad()[6] == real(0));
    // at least one unmasked position has nonzero gradient
    CHECK(logits.grad()[2] != real(0));
}

TEST_CASE("layer_norm degenerate rows") {
    Tensor gamma = Tensor::full({4}, 1);
    Tensor beta = Tensor::zeros({4});

    // constant row collapses to beta
    Tensor flat = layer_norm(Tensor::full({1, 4}, real(3.25)), gamma, beta, real(1e-5));
    for (real v : flat.values()) CHECK(std::fabs(v) < 1e-9);

    // already standardized row passes through as eps -> 0
    Tensor pm = layer_norm(Tensor::from({1, 2}, {1, -1}), Tensor::full({2}, 1),
                           Tensor::zeros({2}), real(1e-12));
    CHECK(pm.at(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(pm.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-9));

    // gamma == 0 broadcasts beta
    Tensor betas = Tensor::from({3}, {0.5, -0.25, 4});
    Tensor zg = layer_norm(Tensor::from({2, 3}, {1, 9, -3, 0, 2, 7}), Tensor::zeros({3}), betas,
                           real(1e-5));
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 3; ++j) CHECK(zg.at(i, j) == betas.values()[static_cast<size_t>(j)]);
}

TEST_CASE("layer_norm normalizes to zero mean and unit variance") {
    Rng rng(11);
    std::vector<real> vals(24);
    for (real& v : vals) v = static_cast<real>(rng.uniform(-4.0, 4.0));
    Tensor out = layer_norm(Tensor::from({4, 6}, std::move(vals)), Tensor::full({6}, 1),
                            Tensor::zeros({6}), real(1e-10));
    for (int64_t i = 0; i < 4; ++i) {
        real mean = 0, var = 0;
        for (int64_t j = 0; j < 6; ++j) mean += out.at(i, j);
        mean /= 6;
        for (int64_t j = 0; j < 6; ++j) var += (out.at(i, j) - mean) * (out.at(i, j) - mean);
        var /= 6;
        CHECK(std::fabs(mean) < 1e-9);
        CHECK(std::fabs(var - 1) < 1e-6);
    }
}

TEST_CASE("backward of sums and squares") {
    Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    backward(sum_all(x));
    for (real g : x.grad()) CHECK(g == real(1));

    Tensor y = Tensor::from({3}, {1, 2, 3}, true);
    backward(sum_all(mul(y, y)));
    CHECK(y.grad()[0] == real(2));
    CHECK(y.grad()[1] == real(4));
    CHECK(y.grad()[2] == real(6));
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
    CHECK_THROWS_AS(backward(mul(x, x)), ContractError);
}

TEST_CASE("composite graph agrees with finite differences") {
    Rng rng(3);
    std::vector<Tensor> inputs;
    {
        std::vector<real> a(12), b(8), v(2);
        for (real& x : a) x = static_cast<real>(rng.uniform(-1.5, 1.5));
        for (real& x : b) x = static_cast<real>(rng.uniform(-1.5, 1.5));
        for (real& x : v) x = static_cast<real>(rng.uniform(-0.5, 0.5));
        inputs = {Tensor::from({3, 4}, std::move(a), true), Tensor::from({4, 2}, std::move(b), true),
                  Tensor::from({2}, std::move(v), true)};
    }
    auto fn = [&] {
        Tensor h = gelu(add_bias(matmul(inputs[0], inputs[1]), inputs[2]));
        return logsumexp_rows(tanh(h));
    };
    CHECK(gradient_check(fn, inputs, rng) < kGradCheckTol);
}

TEST_CASE("shared leaf accumulation matches summed losses") {
    Rng rng(5);
    std::vector<real> vals(9);
    for (real& v : vals) v = static_cast<real>(rng.uniform(-2.0, 2.0));
    Tensor x = Tensor::from({3, 3}, vals, true);

    auto loss1 = [&] { return sum_all(mul(x, x)); };
    auto loss2 = [&] { return sum_all(tanh(x)); };

    x.zero_grad();
    backward(add(loss1(), loss2()));
    std::vector<real> combined(x.grad().begin(), x.grad().end());

    x.zero_grad();
    backward(loss1());
    std::vector<real> g1(x.grad().begin(), x.grad().end());
    x.zero_grad();
    backward(loss2());
    for (size_t i = 0; i < combined.size(); ++i)
        CHECK(std::fabs(combined[i] - (g1[i] + x.grad()[i])) < 1e-12);
}

TEST_CASE("leaf used twice accumulates both contributions") {
    Tensor x = Tensor::from({2}, {3, 5}, true);
    // f = sum(x * x) + sum(x) -> df/dx = 2x + 1
    backward(add(sum_all(mul(x, x)), sum_all(x)));
    CHECK(x.grad()[0] == real(7));
    CHECK(x.grad()[1] == real(11));
}

TEST_CASE("every registered kernel passes the finite-difference oracle") {
    for (const auto& result : check_all(/*seed=*/42, /*trials=*/20)) {
        INFO(result.name << " max rel error " << result.max_rel_error);
        CHECK(result.passed);
    }
}

TEST_CASE("gradcheck covers each checkable op exactly once") {
    auto names = checkable_ops();
    CHECK(names.size() == registered_kernels().size() + 2);
    for (const auto& kernel : registered_kernels())
        CHECK(std::count(names.begin(), names.end(), kernel) == 1);
}

TEST_CASE("corrupted backward rule is caught by the checker") {
    GradCheckResult r = check_corrupted_fixture(99);
    CHECK_FALSE(r.passed);
    CHECK(r.max_rel_error > kGradCheckTol);
}

TEST_CASE("forward ops stay finite on finite inputs") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<real> vals(16);
        for (real& v : vals) v = static_cast<real>(rng.uniform(-30.0, 30.0));
        Tensor x = Tensor::from({4, 4}, std::move(vals));
        Tensor p = masked_softmax(x, build_mask_all(4));
        Tensor l = layer_norm(x, Tensor::full({4}, 1), Tensor::zeros({4}), real(1e-5));
        for (real v : p.values()) CHECK(std::isfinite(v));
        for (real v : l.values()) CHECK(std::isfinite(v));
        for (real v : gelu(x).values()) CHECK(std::isfinite(v));
    }
}
