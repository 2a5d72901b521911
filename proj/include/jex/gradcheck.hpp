#pragma once

#include <functional>
#include <string>
#include <vector>

#include "jex/common.hpp"
#include "jex/tensor.hpp"

namespace jex {

// Central-difference step and pass threshold for gradient verification.
// The float build cannot resolve 1e-5 steps, so it runs wider and looser.
#ifdef JEX_SINGLE_PRECISION
inline constexpr double kGradCheckStep = 1e-2;
inline constexpr double kGradCheckTol = 5e-2;
#else
inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTol = 1e-6;
#endif

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    bool passed = false;
};

// Compares the analytic gradient of a random linear functional of fn()
// against central finite differences, perturbing every element of every
// input leaf. Returns the maximum relative error
// |analytic - numeric| / max(1, |analytic|, |numeric|).
double gradient_check(const std::function<Tensor()>& fn, std::vector<Tensor>& inputs, Rng& rng,
                      double step = kGradCheckStep);

// Names covered by check_all: every registered kernel plus the two loss heads.
std::vector<std::string> checkable_ops();

// Runs `trials` random instances of the named op.
GradCheckResult check_op(const std::string& name, uint64_t seed, int trials);

std::vector<GradCheckResult> check_all(uint64_t seed, int trials);

// Negative control: an op wired with a deliberately wrong backward rule.
// A healthy checker reports failure for it.
GradCheckResult check_corrupted_fixture(uint64_t seed);

}  // namespace jex
