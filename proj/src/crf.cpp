#include "jex/crf.hpp"

#include <algorithm>
#include <cmath>

namespace jex {

namespace {

void check_pair(const Tensor& emissions, const Tensor& transitions) {
    if (emissions.shape().size() != 2)
        throw DimensionError("crf: emissions must be rank 2, got " + shape_str(emissions.shape()));
    if (transitions.shape().size() != 2)
        throw DimensionError("crf: transitions must be rank 2, got " +
                             shape_str(transitions.shape()));
    const int64_t n = emissions.shape()[1];
    if (transitions.shape()[0] != n + 1 || transitions.shape()[1] != n)
        throw DimensionError("crf: transitions " + shape_str(transitions.shape()) +
                             " do not match emissions " + shape_str(emissions.shape()));
    if (emissions.shape()[0] < 1) throw ContractError("crf: empty emission sequence");
}

}  // namespace

CrfParams CrfParams::init(int64_t d_model, int64_t n_tags, Rng& rng) {
    CrfParams p;
    std::vector<real> w(static_cast<size_t>(d_model * n_tags));
    for (real& x : w) x = static_cast<real>(rng.normal(0.0, 0.02));
    p.emission_w = Tensor::from({d_model, n_tags}, std::move(w), true);
    p.emission_b = Tensor::zeros({n_tags}, true);
    std::vector<real> a(static_cast<size_t>((n_tags + 1) * n_tags));
    for (real& x : a) x = static_cast<real>(rng.normal(0.0, 0.02));
    p.transitions = Tensor::from({n_tags + 1, n_tags}, std::move(a), true);
    return p;
}

Tensor emissions(const Tensor& h, int64_t word_begin, int64_t word_end, const CrfParams& params) {
    if (word_begin >= word_end) throw ContractError("emissions: empty word range");
    Tensor words = slice_rows(h, word_begin, word_end);
    return add_bias(matmul(words, params.emission_w), params.emission_b);
}

Tensor sequence_score(const Tensor& emissions, const TagSequence& tags, const Tensor& transitions) {
    check_pair(emissions, transitions);
    const int64_t t_len = emissions.shape()[0];
    const int64_t n = emissions.shape()[1];
    if (static_cast<int64_t>(tags.size()) != t_len)
        throw ContractError("sequence_score: " + std::to_string(tags.size()) + " tags for " +
                            std::to_string(t_len) + " positions");
    for (int64_t tag : tags)
        if (tag < 0 || tag >= n) throw ContractError("sequence_score: tag index out of range");

    std::vector<std::pair<int64_t, int64_t>> trans_ij;
    std::vector<std::pair<int64_t, int64_t>> emit_ij;
    int64_t prev = n;  // START
    for (int64_t t = 0; t < t_len; ++t) {
        trans_ij.emplace_back(prev, tags[static_cast<size_t>(t)]);
        emit_ij.emplace_back(t, tags[static_cast<size_t>(t)]);
        prev = tags[static_cast<size_t>(t)];
    }
    return add(select_sum(transitions, trans_ij), select_sum(emissions, emit_ij));
}

Tensor log_partition(const Tensor& emissions, const Tensor& transitions) {
    check_pair(emissions, transitions);
    const int64_t t_len = emissions.shape()[0];
    const int64_t n = emissions.shape()[1];

    Tensor start_row = reshape(slice_rows(transitions, n, n + 1), {n});
    Tensor alpha = add(start_row, reshape(slice_rows(emissions, 0, 1), {n}));
    if (t_len > 1) {
        // [to, from] layout so each row's log-sum-exp marginalizes the
        // previous tag.
        Tensor trans_t = transpose(slice_rows(transitions, 0, n));
        for (int64_t t = 1; t < t_len; ++t) {
            Tensor scores = add_bias(trans_t, alpha);
            alpha = add(logsumexp_rows(scores), reshape(slice_rows(emissions, t, t + 1), {n}));
        }
    }
    return logsumexp_rows(reshape(alpha, {1, n}));
}

Tensor crf_nll(const Tensor& emissions, const TagSequence& gold, const Tensor& transitions) {
    return sub(log_partition(emissions, transitions),
               sequence_score(emissions, gold, transitions));
}

TagSequence viterbi_decode(const Tensor& emissions, const Tensor& transitions) {
    check_pair(emissions, transitions);
    const int64_t t_len = emissions.shape()[0];
    const int64_t n = emissions.shape()[1];
    const auto e = emissions.values();
    const auto a = transitions.values();
    auto trans = [&](int64_t from, int64_t to) { return a[static_cast<size_t>(from * n + to)]; };

    std::vector<real> delta(static_cast<size_t>(n));
    std::vector<std::vector<int64_t>> back(static_cast<size_t>(t_len),
                                           std::vector<int64_t>(static_cast<size_t>(n), 0));
    for (int64_t j = 0; j < n; ++j)
        delta[static_cast<size_t>(j)] = trans(n, j) + e[static_cast<size_t>(j)];

    std::vector<real> next(static_cast<size_t>(n));
    for (int64_t t = 1; t < t_len; ++t) {
        for (int64_t j = 0; j < n; ++j) {
            real best = delta[0] + trans(0, j);
            int64_t best_i = 0;
            for (int64_t i = 1; i < n; ++i) {
                const real cand = delta[static_cast<size_t>(i)] + trans(i, j);
                if (cand > best) {  // strict: ties keep the lower index
                    best = cand;
                    best_i = i;
                }
            }
            next[static_cast<size_t>(j)] = best + e[static_cast<size_t>(t * n + j)];
            back[static_cast<size_t>(t)][static_cast<size_t>(j)] = best_i;
        }
        delta = next;
    }

    int64_t best_j = 0;
    for (int64_t j = 1; j < n; ++j)
        if (delta[static_cast<size_t>(j)] > delta[static_cast<size_t>(best_j)]) best_j = j;

    TagSequence tags(static_cast<size_t>(t_len));
    tags[static_cast<size_t>(t_len - 1)] = best_j;
    for (int64_t t = t_len - 1; t > 0; --t)
        tags[static_cast<size_t>(t - 1)] =
            back[static_cast<size_t>(t)][static_cast<size_t>(tags[static_cast<size_t>(t)])];
    return tags;
}

}  // namespace jex
