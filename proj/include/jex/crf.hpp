#pragma once

#include <vector>

#include "jex/common.hpp"
#include "jex/tensor.hpp"

namespace jex {

using TagSequence = std::vector<int64_t>;

// Linear-chain CRF over per-word tag emissions. The transition matrix has
// one extra row: index n_tags is a synthetic START state scoring the first
// tag of a sequence; there is no stop state.
struct CrfParams {
    Tensor emission_w;  // [d_model, n_tags]
    Tensor emission_b;  // [n_tags]
    Tensor transitions; // [n_tags + 1, n_tags], row n_tags = START

    int64_t n_tags() const { return emission_w.shape()[1]; }
    int64_t start_state() const { return n_tags(); }

    static CrfParams init(int64_t d_model, int64_t n_tags, Rng& rng);
};

// Emission scores for the word positions [word_begin, word_end) of the
// encoder output: rows x W + b. Special tokens are excluded by the range.
Tensor emissions(const Tensor& h, int64_t word_begin, int64_t word_end, const CrfParams& params);

// Unnormalized path score: sum over positions of transition + emission,
// starting from the synthetic START state.
Tensor sequence_score(const Tensor& emissions, const TagSequence& tags, const Tensor& transitions);

// Exact log of the partition sum over all tag sequences, computed by the
// forward algorithm in log space (max-shifted log-sum-exp at every step).
Tensor log_partition(const Tensor& emissions, const Tensor& transitions);

// Negative log-likelihood of the gold sequence: log_partition - score(gold).
Tensor crf_nll(const Tensor& emissions, const TagSequence& gold, const Tensor& transitions);

// Highest-scoring tag sequence. Ties break toward the lower tag index, both
// per backtracking step and at the final position.
TagSequence viterbi_decode(const Tensor& emissions, const Tensor& transitions);

}  // namespace jex
