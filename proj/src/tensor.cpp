#include "jex/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace jex {

using detail::TensorNode;

using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Mat>;
using MutMap = Eigen::Map<Mat>;

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

namespace {

std::shared_ptr<TensorNode> new_node(Shape shape, std::vector<real> values, bool requires_grad,
                                     const char* op) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    n->op = op;
    if (requires_grad) n->grad.assign(n->values.size(), real(0));
    return n;
}

[[noreturn]] void dim_error(const char* kernel, const Shape& a, const Shape& b) {
    throw DimensionError(std::string(kernel) + ": incompatible shapes " + shape_str(a) + " and " +
                         shape_str(b));
}

void require_rank(const Tensor& t, size_t rank, const char* kernel) {
    if (t.shape().size() != rank)
        throw DimensionError(std::string(kernel) + ": expected rank " + std::to_string(rank) +
                             ", got shape " + shape_str(t.shape()));
}

// Rows/cols of a tensor viewed as a matrix; rank-1 counts as a single row.
std::pair<int64_t, int64_t> as_matrix(const Tensor& t, const char* kernel) {
    if (t.shape().size() == 1) return {1, t.shape()[0]};
    if (t.shape().size() == 2) return {t.shape()[0], t.shape()[1]};
    throw DimensionError(std::string(kernel) + ": expected rank 1 or 2, got shape " +
                         shape_str(t.shape()));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    int64_t n = shape_numel(shape);
    return Tensor(new_node(std::move(shape), std::vector<real>(static_cast<size_t>(n), real(0)),
                           requires_grad, ""));
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
    int64_t n = shape_numel(shape);
    return Tensor(new_node(std::move(shape), std::vector<real>(static_cast<size_t>(n), value),
                           requires_grad, ""));
}

Tensor Tensor::from(Shape shape, std::vector<real> values, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
        throw DimensionError("tensor init: shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    return Tensor(new_node(std::move(shape), std::move(values), requires_grad, ""));
}

Tensor Tensor::scalar(real value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
    if (!node_) throw ContractError("empty tensor");
    return node_->shape;
}

int64_t Tensor::numel() const { return node_ ? node_->numel() : 0; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::span<const real> Tensor::values() const {
    if (!node_) throw ContractError("empty tensor");
    return {node_->values.data(), node_->values.size()};
}

std::span<real> Tensor::values_mut() {
    if (!node_) throw ContractError("empty tensor");
    return {node_->values.data(), node_->values.size()};
}

std::span<const real> Tensor::grad() const {
    if (!node_ || node_->grad.empty()) throw ContractError("tensor has no gradient");
    return {node_->grad.data(), node_->grad.size()};
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

void Tensor::zero_grad() {
    if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), real(0));
}

real Tensor::item() const {
    if (numel() != 1) throw ContractError("item(): tensor has " + std::to_string(numel()) +
                                          " elements, expected 1");
    return node_->values[0];
}

real Tensor::at(int64_t i, int64_t j) const {
    auto [r, c] = as_matrix(*this, "at");
    if (i < 0 || i >= r || j < 0 || j >= c) throw ContractError("at(): index out of range");
    return node_->values[static_cast<size_t>(i * c + j)];
}

// --- kernels -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int64_t r = a.shape()[0], k = a.shape()[1], c = b.shape()[1];
    if (b.shape()[0] != k) dim_error("matmul", a.shape(), b.shape());
    std::vector<real> vals(static_cast<size_t>(r * c));
    {
        ConstMap A(a.values().data(), r, k), B(b.values().data(), k, c);
        MutMap C(vals.data(), r, c);
        C.noalias() = A * B;
    }
    bool rg = a.requires_grad() || b.requires_grad();
    auto out = new_node({r, c}, std::move(vals), rg, "matmul");
    if (rg) {
        out->parents = {a.node(), b.node()};
        TensorNode* o = out.get();
        TensorNode* pa = a.node().get();
        TensorNode* pb = b.node().get();
        out->backprop = [o, pa, pb, r, k, c] {
            ConstMap G(o->grad.data(), r, c);
            ConstMap A(pa->values.data(), r, k), B(pb->values.data(), k, c);
            if (pa->requires_grad) {
                MutMap dA(pa->grad.data(), r, k);
                dA.noalias() += G * B.transpose();
            }
            if (pb->requires_grad) {
                MutMap dB(pb->grad.data(), k, c);
                dB.noalias() += A.transpose() * G;
            }
        };
    }
    return Tensor(out);
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_same_shape(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
    if (a.shape() != b.shape()) dim_error(name, a.shape(), b.shape());
    const size_t n = a.values().size();
    std::vector<real> vals(n);
    for (size_t i = 0; i < n; ++i) vals[i] = fwd(a.values()[i], b.values()[i]);
    bool rg = a.requires_grad() || b.requires_grad();
    auto out = new_node(a.shape(), std::move(vals), rg, name);
    if (rg) {
        out->parents = {a.node(), b.node()};
        TensorNode* o = out.get();
        TensorNode* pa = a.node().get();
        TensorNode* pb = b.node().get();
        out->backprop = [o, pa, pb, bwd, n] {
            for (size_t i = 0; i < n; ++i) bwd(o->grad[i], pa, pb, i);
        };
    }
    return Tensor(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_same_shape(
        a, b, "add", [](real x, real y) { return x + y; },
        [](real g, TensorNode* pa, TensorNode* pb, size_t i) {
            if (pa->requires_grad) pa->grad[i] += g;
            if (pb->requires_grad) pb->grad[i] += g;
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_same_shape(
        a, b, "sub", [](real x, real y) { return x - y; },
        [](real g, TensorNode* pa, TensorNode* pb, size_t i) {
            if (pa->requires_grad) pa->grad[i] += g;
            if (pb->requires_grad) pb->grad[i] -= g;
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_same_shape(
        a, b, "mul", [](real x, real y) { return x * y; },
        [](real g, TensorNode* pa, TensorNode* pb, size_t i) {
            if (pa->requires_grad) pa->grad[i] += g * pb->values[i];
            if (pb->requires_grad) pb->grad[i] += g * pa->values[i];
        });
}

Tensor add_bias(const Tensor& m, const Tensor& v) {
    require_rank(m, 2, "add_bias");
    require_rank(v, 1, "add_bias");
    const int64_t r = m.shape()[0], c = m.shape()[1];
    if (v.shape()[0] != c) dim_error("add_bias", m.shape(), v.shape());
    std::vector<real> vals(static_cast<size_t>(r * c));
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j)
            vals[static_cast<size_t>(i * c + j)] =
                m.values()[static_cast<size_t>(i * c + j)] + v.values()[static_cast<size_t>(j)];
    bool rg = m.requires_grad() || v.requires_grad();
    auto out = new_node({r, c}, std::move(vals), rg, "add_bias");
    if (rg) {
        out->parents = {m.node(), v.node()};
        TensorNode* o = out.get();
        TensorNode* pm = m.node().get();
        TensorNode* pv = v.node().get();
        out->backprop = [o, pm, pv, r, c] {
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) {
                    real g = o->grad[static_cast<size_t>(i * c + j)];
                    if (pm->requires_grad) pm->grad[static_cast<size_t>(i * c + j)] += g;
                    if (pv->requires_grad) pv->grad[static_cast<size_t>(j)] += g;
                }
        };
    }
    return Tensor(out);
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Bwd bwd) {
    const size_t n = a.values().size();
    std::vector<real> vals(n);
    for (size_t i = 0; i < n; ++i) vals[i] = fwd(a.values()[i]);
    bool rg = a.requires_grad();
    auto out = new_node(a.shape(), std::move(vals), rg, name);
    if (rg) {
        out->parents = {a.node()};
        TensorNode* o = out.get();
        TensorNode* pa = a.node().get();
        out->backprop = [o, pa, bwd, n] {
            for (size_t i = 0; i < n; ++i) pa->grad[i] += o->grad[i] * bwd(pa->values[i], o->values[i]);
        };
    }
    return Tensor(out);
}

constexpr real kSqrt2 = real(1.4142135623730950488L);
constexpr real kInvSqrt2Pi = real(0.3989422804014326779L);

}  // namespace

Tensor scale(const Tensor& a, real c) {
    return unary(
        a, "scale", [c](real x) { return c * x; }, [c](real, real) { return c; });
}

Tensor tanh(const Tensor& a) {
    return unary(
        a, "tanh", [](real x) { return std::tanh(x); },
        [](real, real y) { return real(1) - y * y; });
}

Tensor gelu(const Tensor& a) {
    return unary(
        a, "gelu", [](real x) { return real(0.5) * x * (real(1) + std::erf(x / kSqrt2)); },
        [](real x, real) {
            return real(0.5) * (real(1) + std::erf(x / kSqrt2)) +
                   x * kInvSqrt2Pi * std::exp(real(-0.5) * x * x);
        });
}

Tensor log(const Tensor& a) {
    return unary(
        a, "log", [](real x) { return std::log(x); }, [](real x, real) { return real(1) / x; });
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const int64_t r = a.shape()[0], c = a.shape()[1];
    std::vector<real> vals(static_cast<size_t>(r * c));
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j)
            vals[static_cast<size_t>(j * r + i)] = a.values()[static_cast<size_t>(i * c + j)];
    bool rg = a.requires_grad();
    auto out = new_node({c, r}, std::move(vals), rg, "transpose");
    if (rg) {
        out->parents = {a.node()};
        TensorNode* o = out.get();
        TensorNode* pa = a.node().get();
        out->backprop = [o, pa, r, c] {
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j)
                    pa->grad[static_cast<size_t>(i * c + j)] +=
                        o->grad[static_cast<size_t>(j * r + i)];
        };
    }
    return Tensor(out);
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) dim_error("reshape", a.shape(), shape);
    std::vector<real> vals(a.values().begin(), a.values().end());
    bool rg = a.requires_grad();
    auto out = new_node(std::move(shape), std::move(vals), rg, "reshape");
    if (rg) {
        out->parents = {a.node()};
        TensorNode* o = out.get();
        TensorNode* pa = a.node().get();
        out->backprop = [o, pa] {
            for (size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i];
        };
    }
    return Tensor(out);
}

Tensor slice_rows(const Tensor& a, int64_t begin, int64_t end) {
    require_rank(a, 2, "slice_rows");
    const int64_t r = a.shape()[0], c = a.shape()[1];
    if (begin < 0 || end > r || begin >= end)
        throw ContractError("slice_rows: empty or out-of-range row range [" +
                            std::to_string(begin) + "," + std::to_string(end) + ") for shape " +
                            shape_str(a.shape()));
    const int64_t rows = end - begin;
    std::vector<real> vals(a.values().begin() + static_cast<size_t>(begin * c),
                           a.values().begin() + static_cast<size_t>(end * c));
    bool rg = a.requires_grad();
    auto out = new_node({rows, c}, std::move(vals), rg, "slice_rows");
    if (rg) {
        out->parents = {a.node()};
        TensorNode* o = out.get();
        TensorNode* pa = a.node().get();
        out->backprop = [o, pa, begin, rows, c] {
            for (int64_t i = 0; i < rows; ++i)
                for (int64_t j = 0; j < c; ++j)
                    pa->grad[static_cast<size_t>((begin + i) * c + j)] +=
                        o->grad[static_cast<size_t>(i * c + j)];
        };
    }
    return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const int64_t r = parts[0].shape().size() == 2 ? parts[0].shape()[0] : -1;
    if (r < 0) throw DimensionError("concat_cols: expected rank 2 inputs");
    int64_t total = 0;
    for (const Tensor& p : parts) {
        require_rank(p, 2, "concat_cols");
        if (p.shape()[0] != r) dim_error("concat_cols", parts[0].shape(), p.shape());
        total += p.shape()[1];
    }
    std::vector<real> vals(static_cast<size_t>(r * total));
    int64_t offset = 0;
    for (const Tensor& p : parts) {
        const int64_t c = p.shape()[1];
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j)
                vals[static_cast<size_t>(i * total + offset + j)] =
                    p.values()[static_cast<size_t>(i * c + j)];
        offset += c;
    }
    bool rg = false;
    for (const Tensor& p : parts) rg |= p.requires_grad();
    auto out = new_node({r, total}, std::move(vals), rg, "concat_cols");
    if (rg) {
        std::vector<TensorNode*> raw;
        for (const Tensor& p : parts) {
            out->parents.push_back(p.node());
            raw.push_back(p.node().get());
        }
        TensorNode* o = out.get();
        out->backprop = [o, raw, r, total] {
            int64_t offset = 0;
            for (TensorNode* p : raw) {
                const int64_t c = p->shape[1];
                if (p->requires_grad)
                    for (int64_t i = 0; i < r; ++i)
                        for (int64_t j = 0; j < c; ++j)
                            p->grad[static_cast<size_t>(i * c + j)] +=
                                o->grad[static_cast<size_t>(i * total + offset + j)];
                offset += c;
            }
        };
    }
    return Tensor(out);
}

Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& rows) {
    require_rank(table, 2, "gather_rows");
    const int64_t n_rows = table.shape()[0], c = table.shape()[1];
    for (int64_t idx : rows)
        if (idx < 0 || idx >= n_rows)
            throw ContractError("gather_rows: row index " + std::to_string(idx) +
                                " out of range for shape " + shape_str(table.shape()));
    const int64_t n = static_cast<int64_t>(rows.size());
    std::vector<real> vals(static_cast<size_t>(n * c));
    for (int64_t t = 0; t < n; ++t)
        for (int64_t j = 0; j < c; ++j)
            vals[static_cast<size_t>(t * c + j)] =
                table.values()[static_cast<size_t>(rows[static_cast<size_t>(t)] * c + j)];
    bool rg = table.requires_grad();
    auto out = new_node({n, c}, std::move(vals), rg, "gather_rows");
    if (rg) {
        out->parents = {table.node()};
        TensorNode* o = out.get();
        TensorNode* pt = table.node().get();
        out->backprop = [o, pt, rows, n, c] {
            for (int64_t t = 0; t < n; ++t)
                for (int64_t j = 0; j < c; ++j)
                    pt->grad[static_cast<size_t>(rows[static_cast<size_t>(t)] * c + j)] +=
                        o->grad[static_cast<size_t>(t * c + j)];
        };
    }
    return Tensor(out);
}

Tensor select_sum(const Tensor& a, const std::vector<std::pair<int64_t, int64_t>>& ij) {
    require_rank(a, 2, "select_sum");
    const int64_t r = a.shape()[0], c = a.shape()[1];
    real total = 0;
    for (auto [i, j] : ij) {
        if (i < 0 || i >= r || j < 0 || j >= c)
            throw ContractError("select_sum: index (" + std::to_string(i) + "," +
                                std::to_string(j) + ") out of range for shape " +
                                shape_str(a.shape()));
        total += a.values()[static_cast<size_t>(i * c + j)];
    }
    bool rg = a.requires_grad();
    auto out = new_node({1}, {total}, rg, "select_sum");
    if (rg) {
        out->parents = {a.node()};
        TensorNode* o = out.get();
        TensorNode* pa = a.node().get();
        out->backprop = [o, pa, ij, c] {
            for (auto [i, j] : ij) pa->grad[static_cast<size_t>(i * c + j)] += o->grad[0];
        };
    }
    return Tensor(out);
}

Tensor sum_all(const Tensor& a) {
    real total = 0;
    for (real v : a.values()) total += v;
    bool rg = a.requires_grad();
    auto out = new_node({1}, {total}, rg, "sum_all");
    if (rg) {
        out->parents = {a.node()};
        TensorNode* o = out.get();
        TensorNode* pa = a.node().get();
        out->backprop = [o, pa] {
            for (size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += o->grad[0];
        };
    }
    return Tensor(out);
}

Tensor logsumexp_rows(const Tensor& a) {
    require_rank(a, 2, "logsumexp_rows");
    const int64_t r = a.shape()[0], c = a.shape()[1];
    if (c < 1) throw DimensionError("logsumexp_rows: empty rows in shape " + shape_str(a.shape()));
    std::vector<real> vals(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) {
        const real* row = a.values().data() + i * c;
        real m = row[0];
        for (int64_t j = 1; j < c; ++j) m = std::max(m, row[j]);
        real s = 0;
        for (int64_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
        vals[static_cast<size_t>(i)] = m + std::log(s);
    }
    bool rg = a.requires_grad();
    auto out = new_node({r}, std::move(vals), rg, "logsumexp_rows");
    if (rg) {
        out->parents = {a.node()};
        TensorNode* o = out.get();
        TensorNode* pa = a.node().get();
        out->backprop = [o, pa, r, c] {
            for (int64_t i = 0; i < r; ++i) {
                const real g = o->grad[static_cast<size_t>(i)];
                const real y = o->values[static_cast<size_t>(i)];
                for (int64_t j = 0; j < c; ++j)
                    pa->grad[static_cast<size_t>(i * c + j)] +=
                        g * std::exp(pa->values[static_cast<size_t>(i * c + j)] - y);
            }
        };
    }
    return Tensor(out);
}

namespace {

// -1e30 stands in for the -inf attention bias: after max subtraction the
// masked exponentials underflow to +0, giving exact zeros without NaN.
constexpr real kMaskNegative = real(-1e30);

}  // namespace

Tensor masked_softmax_bits(const Tensor& logits, const std::vector<uint8_t>& bits) {
    require_rank(logits, 2, "masked_softmax");
    const int64_t r = logits.shape()[0], c = logits.shape()[1];
    if (static_cast<int64_t>(bits.size()) != r * c)
        throw DimensionError("masked_softmax: mask has " + std::to_string(bits.size()) +
                             " bits for logits " + shape_str(logits.shape()));
    for (uint8_t b : bits)
        if (b > 1) throw ContractError("masked_softmax: mask is not binary");
    std::vector<real> vals(static_cast<size_t>(r * c));
    for (int64_t i = 0; i < r; ++i) {
        const real* row = logits.values().data() + i * c;
        const uint8_t* mrow = bits.data() + i * c;
        bool any = false;
        real m = kMaskNegative;
        for (int64_t j = 0; j < c; ++j) {
            real z = mrow[j] ? row[j] : row[j] + kMaskNegative;
            any |= (mrow[j] != 0);
            m = std::max(m, z);
        }
        if (!any)
            throw DegenerateMaskError("masked_softmax: row " + std::to_string(i) +
                                      " has no visible column");
        real s = 0;
        for (int64_t j = 0; j < c; ++j) {
            real z = mrow[j] ? row[j] : row[j] + kMaskNegative;
            real e = std::exp(z - m);
            vals[static_cast<size_t>(i * c + j)] = e;
            s += e;
        }
        for (int64_t j = 0; j < c; ++j) vals[static_cast<size_t>(i * c + j)] /= s;
    }
    bool rg = logits.requires_grad();
    auto out = new_node({r, c}, std::move(vals), rg, "masked_softmax");
    if (rg) {
        out->parents = {logits.node()};
        TensorNode* o = out.get();
        TensorNode* pa = logits.node().get();
        out->backprop = [o, pa, r, c] {
            // dX = P * (G - sum_k G_k P_k); masked entries have P == 0, so
            // their gradient is exactly zero.
            for (int64_t i = 0; i < r; ++i) {
                real dot = 0;
                for (int64_t j = 0; j < c; ++j)
                    dot += o->grad[static_cast<size_t>(i * c + j)] *
                           o->values[static_cast<size_t>(i * c + j)];
                for (int64_t j = 0; j < c; ++j) {
                    const size_t idx = static_cast<size_t>(i * c + j);
                    pa->grad[idx] += o->values[idx] * (o->grad[idx] - dot);
                }
            }
        };
    }
    return Tensor(out);
}

Tensor masked_softmax(const Tensor& logits, const AttentionMask& mask) {
    require_rank(logits, 2, "masked_softmax");
    if (logits.shape()[0] != mask.size() || logits.shape()[1] != mask.size())
        throw DimensionError("masked_softmax: logits " + shape_str(logits.shape()) +
                             " vs mask of size " + std::to_string(mask.size()));
    return masked_softmax_bits(logits, mask.bits());
}

Tensor softmax_rows(const Tensor& logits) {
    require_rank(logits, 2, "masked_softmax");
    return masked_softmax_bits(
        logits, std::vector<uint8_t>(static_cast<size_t>(logits.numel()), uint8_t(1)));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
    auto [r, c] = as_matrix(x, "layer_norm");
    if (c < 1) throw DimensionError("layer_norm: zero-length last dimension in shape " +
                                    shape_str(x.shape()));
    require_rank(gamma, 1, "layer_norm");
    require_rank(beta, 1, "layer_norm");
    if (gamma.shape()[0] != c) dim_error("layer_norm", x.shape(), gamma.shape());
    if (beta.shape()[0] != c) dim_error("layer_norm", x.shape(), beta.shape());
    if (!(eps > 0)) throw ContractError("layer_norm: eps must be positive");

    std::vector<real> vals(static_cast<size_t>(r * c));
    std::vector<real> xhat(static_cast<size_t>(r * c));
    std::vector<real> inv_sigma(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) {
        const real* row = x.values().data() + i * c;
        real mean = 0;
        for (int64_t j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<real>(c);
        real var = 0;
        for (int64_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<real>(c);
        const real inv = real(1) / std::sqrt(var + eps);
        inv_sigma[static_cast<size_t>(i)] = inv;
        for (int64_t j = 0; j < c; ++j) {
            const real xh = (row[j] - mean) * inv;
            xhat[static_cast<size_t>(i * c + j)] = xh;
            vals[static_cast<size_t>(i * c + j)] =
                gamma.values()[static_cast<size_t>(j)] * xh + beta.values()[static_cast<size_t>(j)];
        }
    }
    bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    auto out = new_node(x.shape(), std::move(vals), rg, "layer_norm");
    if (rg) {
        out->parents = {x.node(), gamma.node(), beta.node()};
        TensorNode* o = out.get();
        TensorNode* px = x.node().get();
        TensorNode* pg = gamma.node().get();
        TensorNode* pb = beta.node().get();
        out->backprop = [o, px, pg, pb, r, c, xhat = std::move(xhat),
                         inv_sigma = std::move(inv_sigma)] {
            for (int64_t i = 0; i < r; ++i) {
                const real* go = o->grad.data() + i * c;
                const real* xh = xhat.data() + i * c;
                if (pg->requires_grad)
                    for (int64_t j = 0; j < c; ++j) pg->grad[static_cast<size_t>(j)] += go[j] * xh[j];
                if (pb->requires_grad)
                    for (int64_t j = 0; j < c; ++j) pb->grad[static_cast<size_t>(j)] += go[j];
                if (px->requires_grad) {
                    real mean_g = 0, mean_gx = 0;
                    for (int64_t j = 0; j < c; ++j) {
                        const real g = go[j] * pg->values[static_cast<size_t>(j)];
                        mean_g += g;
                        mean_gx += g * xh[j];
                    }
                    mean_g /= static_cast<real>(c);
                    mean_gx /= static_cast<real>(c);
                    const real inv = inv_sigma[static_cast<size_t>(i)];
                    for (int64_t j = 0; j < c; ++j) {
                        const real g = go[j] * pg->values[static_cast<size_t>(j)];
                        px->grad[static_cast<size_t>(i * c + j)] +=
                            inv * (g - mean_g - xh[j] * mean_gx);
                    }
                }
            }
        };
    }
    return Tensor(out);
}

const std::vector<std::string>& registered_kernels() {
    static const std::vector<std::string> names = {
        "matmul",      "add",        "sub",        "mul",        "add_bias",
        "scale",       "tanh",       "gelu",       "log",        "transpose",
        "reshape",     "slice_rows", "concat_cols", "gather_rows", "select_sum",
        "sum_all",     "logsumexp_rows", "masked_softmax", "layer_norm",
    };
    return names;
}

// --- backward ----------------------------------------------------------

GradTape GradTape::record(const Tensor& output) {
    GradTape tape;
    if (!output.defined() || !output.requires_grad()) return tape;
    tape.root_ = output.node().get();

    // Iterative post-order DFS: parents are emitted before the nodes that
    // consume them, which is exactly the tape's topological-order invariant.
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    visited.insert(tape.root_);
    stack.emplace_back(tape.root_, 0);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* parent = node->parents[next++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            tape.ops_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void GradTape::run() {
    if (!root_) return;
    root_->grad[0] += real(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop();
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ContractError("backward: empty tensor");
    if (loss.numel() != 1)
        throw ContractError("backward: loss has " + std::to_string(loss.numel()) +
                            " elements, expected a scalar");
    GradTape tape = GradTape::record(loss);
    tape.run();
}

}  // namespace jex
