#include <doctest.h>

#include <cmath>
#include <vector>

#include "jex/crf.hpp"
#include "jex/gradcheck.hpp"

using namespace jex;

namespace {

// Independent scoring path used as the oracle: raw doubles, no tensors.
double brute_score(const std::vector<double>& e, const std::vector<double>& a, int64_t n,
                   const TagSequence& tags) {
    double s = 0;
    int64_t prev = n;  // START
    for (size_t t = 0; t < tags.size(); ++t) {
        s += a[static_cast<size_t>(prev * n + tags[t])] + e[t * static_cast<size_t>(n) +
                                                            static_cast<size_t>(tags[t])];
        prev = tags[t];
    }
    return s;
}

template <typename Visit>
void for_each_sequence(int64_t t_len, int64_t n, Visit visit) {
    TagSequence tags(static_cast<size_t>(t_len), 0);
    while (true) {
        visit(tags);
        int64_t pos = t_len - 1;
        while (pos >= 0 && ++tags[static_cast<size_t>(pos)] == n) {
            tags[static_cast<size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
}

double brute_log_partition(const std::vector<double>& e, const std::vector<double>& a, int64_t t_len,
                           int64_t n) {
    std::vector<double> scores;
    for_each_sequence(t_len, n,
                      [&](const TagSequence& tags) { scores.push_back(brute_score(e, a, n, tags)); });
    double m = scores[0];
    for (double s : scores) m = std::max(m, s);
    double sum = 0;
    for (double s : scores) sum += std::exp(s - m);
    return m + std::log(sum);
}

TagSequence brute_argmax(const std::vector<double>& e, const std::vector<double>& a, int64_t t_len,
                         int64_t n) {
    TagSequence best;
    double best_score = -1e300;
    for_each_sequence(t_len, n, [&](const TagSequence& tags) {
        const double s = brute_score(e, a, n, tags);
        if (s > best_score) {
            best_score = s;
            best = tags;
        }
    });
    return best;
}

struct RandomCase {
    Tensor emissions;
    Tensor transitions;
    std::vector<double> e;
    std::vector<double> a;
    int64_t t_len;
    int64_t n;
};

RandomCase random_case(Rng& rng, int64_t max_t = 6, int64_t max_n = 5) {
    RandomCase c;
    c.t_len = rng.uniform_int(1, max_t);
    c.n = rng.uniform_int(1, max_n);
    c.e.resize(static_cast<size_t>(c.t_len * c.n));
    c.a.resize(static_cast<size_t>((c.n + 1) * c.n));
    for (double& x : c.e) x = rng.uniform(-3.0, 3.0);
    for (double& x : c.a) x = rng.uniform(-3.0, 3.0);
    c.emissions = Tensor::from({c.t_len, c.n}, std::vector<real>(c.e.begin(), c.e.end()));
    c.transitions = Tensor::from({c.n + 1, c.n}, std::vector<real>(c.a.begin(), c.a.end()));
    return c;
}

}  // namespace

TEST_CASE("zero parameters give zero scores and uniform partition") {
    const int64_t t_len = 4, n = 3;
    Tensor e = Tensor::zeros({t_len, n});
    Tensor a = Tensor::zeros({n + 1, n});
    for_each_sequence(t_len, n, [&](const TagSequence& tags) {
        CHECK(sequence_score(e, tags, a).item() == real(0));
    });
    CHECK(log_partition(e, a).item() ==
          doctest::Approx(t_len * std::log(double(n))).epsilon(1e-12));
}

TEST_CASE("single-position score expands to start transition plus emission") {
    Rng rng(31);
    RandomCase c = random_case(rng, 1, 5);
    c.t_len = 1;
    for (int64_t tag = 0; tag < c.n; ++tag) {
        const double expected = c.a[static_cast<size_t>(c.n * c.n + tag)] +
                                c.e[static_cast<size_t>(tag)];
        Tensor one_row = slice_rows(c.emissions, 0, 1);
        CHECK(sequence_score(one_row, {tag}, c.transitions).item() ==
              doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("any sequence score is bounded by the log partition") {
    Rng rng(37);
    for (int trial = 0; trial < 25; ++trial) {
        RandomCase c = random_case(rng);
        const double z = log_partition(c.emissions, c.transitions).item();
        for_each_sequence(c.t_len, c.n, [&](const TagSequence& tags) {
            CHECK(sequence_score(c.emissions, tags, c.transitions).item() <= z + 1e-9);
        });
    }
}

TEST_CASE("log partition matches exhaustive enumeration") {
    Rng rng(41);
    for (int trial = 0; trial < 60; ++trial) {
        RandomCase c = random_case(rng);
        const double expected = brute_log_partition(c.e, c.a, c.t_len, c.n);
        CHECK(log_partition(c.emissions, c.transitions).item() ==
              doctest::Approx(expected).epsilon(1e-8));
    }
}

TEST_CASE("adding a constant to emissions shifts the partition by T times it") {
    Rng rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        RandomCase c = random_case(rng);
        const double shift = rng.uniform(-2.0, 2.0);
        std::vector<real> shifted(c.e.begin(), c.e.end());
        for (real& x : shifted) x += static_cast<real>(shift);
        Tensor e2 = Tensor::from({c.t_len, c.n}, std::move(shifted));
        const double z1 = log_partition(c.emissions, c.transitions).item();
        const double z2 = log_partition(e2, c.transitions).item();
        CHECK(z2 - z1 == doctest::Approx(c.t_len * shift).epsilon(1e-9));
    }
}

TEST_CASE("tag posterior is a distribution over all sequences") {
    Rng rng(47);
    for (int trial = 0; trial < 20; ++trial) {
        RandomCase c = random_case(rng, 5, 4);
        const double z = log_partition(c.emissions, c.transitions).item();
        double total = 0;
        for_each_sequence(c.t_len, c.n, [&](const TagSequence& tags) {
            total += std::exp(sequence_score(c.emissions, tags, c.transitions).item() - z);
        });
        CHECK(std::fabs(total - 1.0) < 1e-10);
    }
}

TEST_CASE("nll is zero with one tag and nonnegative always") {
    Tensor e = Tensor::from({3, 1}, {0.7, -1.2, 3.0});
    Tensor a = Tensor::from({2, 1}, {0.4, -0.9});
    CHECK(crf_nll(e, {0, 0, 0}, a).item() == doctest::Approx(0.0).epsilon(1e-12));

    Rng rng(53);
    for (int trial = 0; trial < 25; ++trial) {
        RandomCase c = random_case(rng);
        TagSequence gold;
        for (int64_t t = 0; t < c.t_len; ++t) gold.push_back(rng.uniform_int(0, c.n - 1));
        CHECK(crf_nll(c.emissions, gold, c.transitions).item() >= -1e-12);
    }
}

TEST_CASE("nll gradient agrees with finite differences") {
    Rng rng(59);
    for (int trial = 0; trial < 5; ++trial) {
        const int64_t t_len = 5, n = 4;
        std::vector<Tensor> inputs;
        {
            std::vector<real> e(static_cast<size_t>(t_len * n)), a(static_cast<size_t>((n + 1) * n));
            for (real& x : e) x = static_cast<real>(rng.uniform(-2.0, 2.0));
            for (real& x : a) x = static_cast<real>(rng.uniform(-2.0, 2.0));
            inputs = {Tensor::from({t_len, n}, std::move(e), true),
                      Tensor::from({n + 1, n}, std::move(a), true)};
        }
        TagSequence gold;
        for (int64_t t = 0; t < t_len; ++t) gold.push_back(rng.uniform_int(0, n - 1));
        auto fn = [&] { return crf_nll(inputs[0], gold, inputs[1]); };
        CHECK(gradient_check(fn, inputs, rng) < kGradCheckTol);
    }
}

TEST_CASE("viterbi reduces to per-position argmax without transitions") {
    Tensor e = Tensor::from({3, 3}, {0, 9, 0, 9, 0, 0, 0, 0, 9});
    Tensor a = Tensor::zeros({4, 3});
    CHECK(viterbi_decode(e, a) == TagSequence{1, 0, 2});
}

TEST_CASE("viterbi ties break toward tag zero") {
    Tensor e = Tensor::zeros({4, 3});
    Tensor a = Tensor::zeros({4, 3});
    CHECK(viterbi_decode(e, a) == TagSequence{0, 0, 0, 0});
}

TEST_CASE("viterbi matches exhaustive argmax") {
    Rng rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        RandomCase c = random_case(rng);
        CHECK(viterbi_decode(c.emissions, c.transitions) == brute_argmax(c.e, c.a, c.t_len, c.n));
    }
}

TEST_CASE("gradient descent on a fixed example decreases the nll monotonically") {
    Rng rng(67);
    const int64_t t_len = 5, n = 4;
    std::vector<real> e(static_cast<size_t>(t_len * n)), a(static_cast<size_t>((n + 1) * n));
    for (real& x : e) x = static_cast<real>(rng.uniform(-1.0, 1.0));
    for (real& x : a) x = static_cast<real>(rng.uniform(-1.0, 1.0));
    Tensor emissions_t = Tensor::from({t_len, n}, std::move(e), true);
    Tensor transitions_t = Tensor::from({n + 1, n}, std::move(a), true);
    const TagSequence gold = {1, 3, 0, 2, 2};

    const real lr = real(0.05);
    double prev = 1e300;
    for (int step = 0; step < 10; ++step) {
        emissions_t.zero_grad();
        transitions_t.zero_grad();
        Tensor loss = crf_nll(emissions_t, gold, transitions_t);
        CHECK(loss.item() < prev);
        prev = loss.item();
        backward(loss);
        auto ev = emissions_t.values_mut();
        auto eg = emissions_t.grad();
        for (size_t i = 0; i < ev.size(); ++i) ev[i] -= lr * eg[i];
        auto av = transitions_t.values_mut();
        auto ag = transitions_t.grad();
        for (size_t i = 0; i < av.size(); ++i) av[i] -= lr * ag[i];
    }
}

TEST_CASE("emissions projection shape and contracts") {
    Rng rng(71);
    CrfParams p = CrfParams::init(8, 5, rng);
    Tensor h = Tensor::zeros({6, 8});
    Tensor e = emissions(h, 1, 5, p);
    CHECK(e.shape() == Shape{4, 5});
    for (real v : e.values()) CHECK(v == real(0));  // zero weights path: b is zero too
    CHECK_THROWS_AS(emissions(h, 2, 2, p), ContractError);

    // identity-like projection copies the selected representation slice
    CrfParams ident;
    std::vector<real> w(8 * 5, 0);
    for (int64_t j = 0; j < 5; ++j) w[static_cast<size_t>(j * 5 + j)] = 1;
    ident.emission_w = Tensor::from({8, 5}, std::move(w));
    ident.emission_b = Tensor::zeros({5});
    ident.transitions = Tensor::zeros({6, 5});
    std::vector<real> hv(2 * 8);
    for (size_t i = 0; i < hv.size(); ++i) hv[i] = static_cast<real>(i) * real(0.5);
    Tensor h2 = Tensor::from({2, 8}, std::move(hv));
    Tensor e2 = emissions(h2, 1, 2, ident);
    for (int64_t j = 0; j < 5; ++j) CHECK(e2.at(0, j) == h2.at(1, j));
}
