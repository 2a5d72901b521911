#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jex/common.hpp"
#include "jex/masks.hpp"

namespace jex {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

// One node of the computation graph. Interior nodes own their parents, and
// the backward closure captures raw pointers only, so the graph is acyclic
// and frees itself when the last Tensor handle goes away.
struct TensorNode {
    Shape shape;
    std::vector<real> values;
    std::vector<real> grad;  // allocated iff requires_grad, same length as values
    bool requires_grad = false;
    const char* op = "";  // kernel name, empty for leaves
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backprop;  // pulls this->grad into the parents' grad

    int64_t numel() const { return static_cast<int64_t>(values.size()); }
};

}  // namespace detail

// Dense row-major tensor. A Tensor is a cheap handle onto a graph node:
// copies alias the same storage. Every kernel produces a fresh node, so
// values are never mutated once another op has read them; parameter leaves
// are the one exception and are updated in place by the optimizer between
// forward passes.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, real value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<real> values, bool requires_grad = false);
    static Tensor scalar(real value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int64_t numel() const;
    bool requires_grad() const;

    std::span<const real> values() const;
    std::span<real> values_mut();  // parameter updates only
    std::span<const real> grad() const;
    bool has_grad() const;
    void zero_grad();

    real item() const;  // numel() must be 1

    // 2-D element access for tests and inference-side code.
    real at(int64_t i, int64_t j) const;

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

    // Wraps an existing graph node; used by the kernel implementations.
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::TensorNode> node_;
};

// --- kernels -----------------------------------------------------------
//
// Shape contracts are strict: a mismatch throws DimensionError naming the
// kernel and both shapes. Every kernel registers a backward rule; the
// gradcheck module verifies each against central finite differences.

Tensor matmul(const Tensor& a, const Tensor& b);     // [r,k] x [k,c] -> [r,c]
Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor sub(const Tensor& a, const Tensor& b);        // same shape
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise, same shape
Tensor add_bias(const Tensor& m, const Tensor& v);   // [r,c] + [c], broadcast over rows
Tensor scale(const Tensor& a, real c);
Tensor tanh(const Tensor& a);
Tensor gelu(const Tensor& a);                        // exact erf form
Tensor log(const Tensor& a);                         // elementwise natural log
Tensor transpose(const Tensor& a);                   // 2-D
Tensor reshape(const Tensor& a, Shape shape);        // numel preserved
Tensor slice_rows(const Tensor& a, int64_t begin, int64_t end);  // rows [begin,end)
Tensor concat_cols(const std::vector<Tensor>& parts);            // equal row counts
Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& rows);
Tensor select_sum(const Tensor& a, const std::vector<std::pair<int64_t, int64_t>>& ij);
Tensor sum_all(const Tensor& a);                     // -> scalar
Tensor logsumexp_rows(const Tensor& a);              // [r,c] -> [r], max-shifted

// Row-wise softmax with masked columns forced to exactly zero. The mask term
// is applied additively as -1e30 before the max-subtracted normalization, so
// finite logits can never produce NaN and masked outputs underflow to +0.
// A mask row with no visible column throws DegenerateMaskError.
Tensor masked_softmax(const Tensor& logits, const AttentionMask& mask);  // [T,T]
Tensor masked_softmax_bits(const Tensor& logits, const std::vector<uint8_t>& bits);
Tensor softmax_rows(const Tensor& logits);  // all columns visible

// Normalizes the last dimension to zero mean and unit variance (population
// variance, epsilon inside the square root), then applies gamma and beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps);

// Names of every differentiable kernel above, in registration order. The
// gradient-check harness must cover each exactly once.
const std::vector<std::string>& registered_kernels();

// Ordered record of the operations reachable from one output: every node's
// inputs precede it, and one run() populates each reachable grad exactly once.
class GradTape {
public:
    static GradTape record(const Tensor& output);
    void run();
    size_t size() const { return ops_.size(); }

private:
    detail::TensorNode* root_ = nullptr;
    std::vector<detail::TensorNode*> ops_;  // topological order
};

// Reverse-mode sweep from a scalar loss. Gradients accumulate additively
// into every requires_grad leaf reachable from it; call zero_grad on the
// leaves between independent backward passes.
void backward(const Tensor& loss);

}  // namespace jex
