#include <doctest.h>

#include <cmath>

#include "jex/gradcheck.hpp"
#include "jex/rc.hpp"

using namespace jex;

TEST_CASE("zero weights give a uniform relation distribution") {
    RcParams p;
    p.w1 = Tensor::zeros({8, 8});
    p.b1 = Tensor::zeros({8});
    p.w2 = Tensor::zeros({8, 5});
    p.b2 = Tensor::zeros({5});
    Tensor h = Tensor::from({3, 8}, std::vector<real>(24, real(0.7)));
    Tensor probs = rc_forward(h, p);
    CHECK(probs.shape() == Shape{5});
    for (real v : probs.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("probabilities sum to one for random parameters") {
    Rng rng(101);
    for (int trial = 0; trial < 30; ++trial) {
        RcParams p = RcParams::init(8, 8, 6, rng);
        std::vector<real> hv(2 * 8);
        for (real& v : hv) v = static_cast<real>(rng.uniform(-2.0, 2.0));
        Tensor probs = rc_forward(Tensor::from({2, 8}, std::move(hv)), p);
        real sum = 0;
        for (real v : probs.values()) {
            CHECK(v > real(0));
            sum += v;
        }
        CHECK(std::fabs(sum - real(1)) < 1e-12);
    }
}

TEST_CASE("logits forced through the output bias match a hand softmax") {
    // zero weights, b2 = [2,0,0,0,0]: p = softmax([2,0,0,0,0])
    RcParams p;
    p.w1 = Tensor::zeros({4, 4});
    p.b1 = Tensor::zeros({4});
    p.w2 = Tensor::zeros({4, 5});
    p.b2 = Tensor::from({5}, {2, 0, 0, 0, 0});
    Tensor probs = rc_forward(Tensor::zeros({2, 4}), p);
    const double denom = std::exp(2.0) + 4.0;
    CHECK(probs.values()[0] == doctest::Approx(std::exp(2.0) / denom).epsilon(1e-12));
    for (int j = 1; j < 5; ++j)
        CHECK(probs.values()[static_cast<size_t>(j)] == doctest::Approx(1.0 / denom).epsilon(1e-12));
}

TEST_CASE("loss on explicit probability vectors") {
    CHECK(rc_loss(Tensor::from({4}, {0, 1, 0, 0}), 1).item() == doctest::Approx(0.0).epsilon(1e-12));
    Tensor uniform = Tensor::full({5}, real(0.2));
    CHECK(rc_loss(uniform, 3).item() == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    CHECK_THROWS_AS(rc_loss(uniform, 5), ContractError);
    CHECK_THROWS_AS(rc_loss(uniform, -1), ContractError);
}

TEST_CASE("loss is nonnegative and zero only at certainty") {
    Rng rng(103);
    for (int trial = 0; trial < 40; ++trial) {
        const int64_t n = rng.uniform_int(2, 7);
        std::vector<real> logits(static_cast<size_t>(n));
        for (real& v : logits) v = static_cast<real>(rng.uniform(-3.0, 3.0));
        Tensor p = reshape(softmax_rows(Tensor::from({1, n}, std::move(logits))), {n});
        const int64_t gold = rng.uniform_int(0, n - 1);
        const real loss = rc_loss(p, gold).item();
        CHECK(loss >= real(0));
        if (p.values()[static_cast<size_t>(gold)] < real(1)) CHECK(loss > real(0));
    }
}

TEST_CASE("fused nll equals loss through explicit probabilities") {
    Rng rng(107);
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t n = 6;
        std::vector<real> lv(static_cast<size_t>(n));
        for (real& v : lv) v = static_cast<real>(rng.uniform(-4.0, 4.0));
        Tensor logits = Tensor::from({1, n}, std::move(lv));
        const int64_t gold = rng.uniform_int(0, n - 1);
        const real fused = rc_nll_logits(logits, gold).item();
        const real explicit_path = rc_loss(reshape(softmax_rows(logits), {n}), gold).item();
        CHECK(fused == doctest::Approx(explicit_path).epsilon(1e-10));
    }
}

TEST_CASE("loss gradient on logits is p minus one-hot") {
    Rng rng(109);
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t n = 5;
        std::vector<real> lv(static_cast<size_t>(n));
        for (real& v : lv) v = static_cast<real>(rng.uniform(-2.0, 2.0));
        Tensor logits = Tensor::from({1, n}, lv, true);
        const int64_t gold = rng.uniform_int(0, n - 1);

        Tensor probs = softmax_rows(logits);
        Tensor loss = rc_loss(reshape(probs, {n}), gold);
        backward(loss);
        for (int64_t j = 0; j < n; ++j) {
            const real expected = probs.at(0, j) - (j == gold ? real(1) : real(0));
            CHECK(std::fabs(logits.grad()[static_cast<size_t>(j)] - expected) < 1e-10);
        }
    }
}

TEST_CASE("rc head gradient agrees with finite differences") {
    Rng rng(113);
    for (int trial = 0; trial < 5; ++trial) {
        const int64_t d = 6, dh = 6, n = 5;
        std::vector<Tensor> inputs;
        auto rand_leaf = [&](Shape s) {
            std::vector<real> v(static_cast<size_t>(shape_numel(s)));
            for (real& x : v) x = static_cast<real>(rng.uniform(-1.0, 1.0));
            return Tensor::from(std::move(s), std::move(v), true);
        };
        inputs = {rand_leaf({2, d}), rand_leaf({d, dh}), rand_leaf({dh}), rand_leaf({dh, n}),
                  rand_leaf({n})};
        const int64_t gold = rng.uniform_int(0, n - 1);
        auto fn = [&] {
            RcParams p{inputs[1], inputs[2], inputs[3], inputs[4]};
            return rc_nll_logits(rc_logits(inputs[0], p), gold);
        };
        CHECK(gradient_check(fn, inputs, rng) < kGradCheckTol);
    }
}
