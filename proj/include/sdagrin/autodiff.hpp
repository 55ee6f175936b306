#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sdagrin/errors.hpp"
#include "sdagrin/tensor.hpp"

namespace sdagrin {

// Reverse-mode automatic differentiation over Tensor2 values.
//
// A Tape records every operation as a node in creation order. Creation order is a
// topological order of the (acyclic) graph, so backward() walks the node list from the
// loss back to index 0 and visits every node exactly once. Gradient contributions are
// accumulated in that fixed order, which makes repeated backward passes bitwise identical.

enum class Op : std::uint8_t {
    leaf,
    matmul,
    matmul_nt,
    transpose,
    add,
    sub,
    mul,
    add_row_bias,
    affine,
    sigmoid,
    tanh,
    abs,
    concat_cols,
    softmax_rows,
    row_normalize,
    filter_merge,
    reduce_mean,
    sum,
};

class Tape;

// Lightweight handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor2& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

class Tape {
   public:
    struct Node {
        Tensor2 value;
        Tensor2 grad;  // empty until something flows into it
        Op op = Op::leaf;
        std::vector<std::size_t> parents;
        Tensor2 aux_a;  // op-specific constants (mask, observed values)
        Tensor2 aux_b;
        double alpha = 0.0;
        double beta = 0.0;
        bool requires_grad = false;
    };

    Tape() { nodes_.reserve(256); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf whose gradient is collected (a parameter).
    Var variable(Tensor2 value) { return push_leaf(std::move(value), true); }
    // Leaf treated as a constant.
    Var constant(Tensor2 value) { return push_leaf(std::move(value), false); }

    const Tensor2& value(Var v) const { return nodes_.at(v.id).value; }
    const Node& node(Var v) const { return nodes_.at(v.id); }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Gradient of the last backward() target with respect to `v` (zeros if unreached).
    Tensor2 grad(Var v) const {
        const Node& n = nodes_.at(v.id);
        if (n.grad.empty()) return Tensor2(n.value.rows(), n.value.cols());
        return n.grad;
    }

    void zero_grad() {
        for (auto& n : nodes_) n.grad = Tensor2();
    }

    void backward(Var loss);

    // Used by the op constructors below.
    Var push(Node n) {
        for (std::size_t p : n.parents) {
            if (nodes_[p].requires_grad) n.requires_grad = true;
        }
        nodes_.push_back(std::move(n));
        return Var{this, nodes_.size() - 1};
    }
    Node& at(std::size_t id) { return nodes_[id]; }
    const Node& at(std::size_t id) const { return nodes_[id]; }

   private:
    Var push_leaf(Tensor2 value, bool requires_grad) {
        Node n;
        n.value = std::move(value);
        n.op = Op::leaf;
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return Var{this, nodes_.size() - 1};
    }

    Tensor2& grad_slot(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad = Tensor2(n.value.rows(), n.value.cols());
        return n.grad;
    }

    void propagate(std::size_t id);

    std::vector<Node> nodes_;
};

inline const Tensor2& Var::value() const { return tape->value(*this); }

namespace detail {

inline Tape& same_tape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || a.tape != b.tape) throw ContractError(std::string(op) + ": operands live on different tapes");
    return *a.tape;
}

inline Tape::Node make_node(Op op, Tensor2 value, std::initializer_list<std::size_t> parents) {
    Tape::Node n;
    n.op = op;
    n.value = std::move(value);
    n.parents.assign(parents.begin(), parents.end());
    return n;
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

// ---- operations -------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "matmul");
    return t.push(detail::make_node(Op::matmul, kernels::matmul(a.value(), b.value()), {a.id, b.id}));
}

// a * b^T
inline Var matmul_nt(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "matmul_nt");
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: cannot multiply " + a.value().shape() + " by transpose of " + b.value().shape());
    Tensor2 out(a.rows(), b.rows());
    kernels::matmul_nt_acc(a.value(), b.value(), out);
    return t.push(detail::make_node(Op::matmul_nt, std::move(out), {a.id, b.id}));
}

inline Var transpose(Var a) {
    return a.tape->push(detail::make_node(Op::transpose, a.value().transposed(), {a.id}));
}

enum class Binary { add, sub, mul };

inline Var elementwise(Var a, Var b, Binary kind) {
    Tape& t = detail::same_tape(a, b, "elementwise");
    kernels::require_same_shape(a.value(), b.value(), "elementwise");
    const Tensor2& x = a.value();
    const Tensor2& y = b.value();
    Tensor2 out(x.rows(), x.cols());
    Op op = Op::add;
    switch (kind) {
        case Binary::add:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
            op = Op::add;
            break;
        case Binary::sub:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
            op = Op::sub;
            break;
        case Binary::mul:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
            op = Op::mul;
            break;
    }
    return t.push(detail::make_node(op, std::move(out), {a.id, b.id}));
}

inline Var add(Var a, Var b) { return elementwise(a, b, Binary::add); }
inline Var sub(Var a, Var b) { return elementwise(a, b, Binary::sub); }
inline Var mul(Var a, Var b) { return elementwise(a, b, Binary::mul); }

// a (n x f) + bias (1 x f) broadcast over rows.
inline Var add_row_bias(Var a, Var bias) {
    Tape& t = detail::same_tape(a, bias, "add_row_bias");
    if (bias.rows() != 1 || bias.cols() != a.cols())
        throw ShapeError("add_row_bias: bias " + bias.value().shape() + " does not fit " + a.value().shape());
    Tensor2 out = a.value();
    const Tensor2& b = bias.value();
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[j];
    return t.push(detail::make_node(Op::add_row_bias, std::move(out), {a.id, bias.id}));
}

// alpha * a + beta
inline Var affine(Var a, double alpha, double beta) {
    Tensor2 out = a.value();
    for (auto& v : out.data()) v = alpha * v + beta;
    auto n = detail::make_node(Op::affine, std::move(out), {a.id});
    n.alpha = alpha;
    n.beta = beta;
    return a.tape->push(std::move(n));
}

inline Var scale(Var a, double alpha) { return affine(a, alpha, 0.0); }

enum class Unary { sigmoid, tanh, abs };

inline Var unary(Var a, Unary kind) {
    Tensor2 out = a.value();
    Op op = Op::sigmoid;
    switch (kind) {
        case Unary::sigmoid:
            for (auto& v : out.data()) v = detail::sigmoid(v);
            op = Op::sigmoid;
            break;
        case Unary::tanh:
            for (auto& v : out.data()) v = std::tanh(v);
            op = Op::tanh;
            break;
        case Unary::abs:
            for (auto& v : out.data()) v = std::fabs(v);
            op = Op::abs;
            break;
    }
    return a.tape->push(detail::make_node(op, std::move(out), {a.id}));
}

inline Var sigmoid(Var a) { return unary(a, Unary::sigmoid); }
inline Var tanh(Var a) { return unary(a, Unary::tanh); }
inline Var abs(Var a) { return unary(a, Unary::abs); }

// Horizontal concatenation of any number of blocks with equal row counts.
inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no operands");
    Tape& t = *parts.front().tape;
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    for (const Var& p : parts) {
        if (p.tape != &t) throw ContractError("concat_cols: operands live on different tapes");
        if (p.rows() != rows)
            throw ShapeError("concat_cols: row mismatch " + parts.front().value().shape() + " vs " + p.value().shape());
        cols += p.cols();
    }
    Tensor2 out(rows, cols);
    Tape::Node n;
    n.op = Op::concat_cols;
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor2& v = p.value();
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) out(i, offset + j) = v(i, j);
        offset += v.cols();
        n.parents.push_back(p.id);
    }
    n.value = std::move(out);
    return t.push(std::move(n));
}

inline Var concat_cols(Var a, Var b) { return concat_cols(std::vector<Var>{a, b}); }

// Row-wise softmax of a / scale, stabilized by subtracting the row maximum.
inline Var softmax_rows(Var a, double scale) {
    if (!(scale > 0.0)) throw ContractError("softmax_rows: scale must be positive");
    const Tensor2& x = a.value();
    Tensor2 out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        double mx = r[0];
        for (double v : r) mx = std::max(mx, v);
        double s = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            out(i, j) = std::exp((r[j] - mx) / scale);
            s += out(i, j);
        }
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= s;
    }
    auto n = detail::make_node(Op::softmax_rows, std::move(out), {a.id});
    n.alpha = scale;
    return a.tape->push(std::move(n));
}

// Divide every row by its sum. Rows summing to zero are left as zero (no gradient).
inline Var row_normalize(Var a) {
    return a.tape->push(detail::make_node(Op::row_normalize, kernels::row_normalize(a.value()), {a.id}));
}

// Phi(Y) = M * X + (1 - M) * Y with binary M. Observed positions are copied from X
// verbatim; the gradient reaches Y only at positions where M = 0.
inline Var filter_merge(Var y, const Tensor2& x, const Tensor2& mask) {
    const Tensor2& yv = y.value();
    kernels::require_same_shape(yv, x, "filter_merge");
    kernels::require_same_shape(yv, mask, "filter_merge");
    Tensor2 out(yv.rows(), yv.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (mask[i] == 1.0) {
            out[i] = x[i];
        } else if (mask[i] == 0.0) {
            out[i] = yv[i];
        } else {
            throw ContractError("filter_merge: mask is not binary");
        }
    }
    auto n = detail::make_node(Op::filter_merge, std::move(out), {y.id});
    n.aux_a = mask;
    return y.tape->push(std::move(n));
}

// Mean of the entries of `a` where `selection` is nonzero; returns a 1x1 node.
inline Var reduce_mean(Var a, const Tensor2& selection) {
    kernels::require_same_shape(a.value(), selection, "reduce_mean");
    double s = 0.0;
    std::size_t count = 0;
    const Tensor2& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (selection[i] != 0.0) {
            s += x[i];
            ++count;
        }
    }
    if (count == 0) throw EmptySelectionError();
    auto n = detail::make_node(Op::reduce_mean, Tensor2(1, 1, s / static_cast<double>(count)), {a.id});
    n.aux_a = selection;
    n.alpha = static_cast<double>(count);
    return a.tape->push(std::move(n));
}

inline Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return a.tape->push(detail::make_node(Op::sum, Tensor2(1, 1, s), {a.id}));
}

// ---- backward ------------------------------------------------------------------

inline void Tape::backward(Var loss) {
    if (loss.tape != this) throw ContractError("backward: loss lives on a different tape");
    const Tensor2& lv = nodes_.at(loss.id).value;
    if (lv.rows() != 1 || lv.cols() != 1)
        throw ContractError("backward: loss must be scalar, got " + lv.shape());
    zero_grad();
    grad_slot(loss.id)[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        if (nodes_[id].grad.empty() || !nodes_[id].requires_grad) continue;
        propagate(id);
    }
}

inline void Tape::propagate(std::size_t id) {
    // Parents may alias into nodes_, which never reallocates during backward.
    Node& n = nodes_[id];
    const Tensor2& g = n.grad;
    auto wants = [&](std::size_t k) { return nodes_[n.parents[k]].requires_grad; };
    switch (n.op) {
        case Op::leaf:
            break;
        case Op::matmul: {
            const Tensor2& a = nodes_[n.parents[0]].value;
            const Tensor2& b = nodes_[n.parents[1]].value;
            if (wants(0)) kernels::matmul_nt_acc(g, b, grad_slot(n.parents[0]));
            if (wants(1)) kernels::matmul_tn_acc(a, g, grad_slot(n.parents[1]));
            break;
        }
        case Op::matmul_nt: {
            // out = a b^T: da = g b, db = g^T a
            const Tensor2& a = nodes_[n.parents[0]].value;
            const Tensor2& b = nodes_[n.parents[1]].value;
            if (wants(0)) kernels::matmul_acc(g, b, grad_slot(n.parents[0]));
            if (wants(1)) kernels::matmul_tn_acc(g, a, grad_slot(n.parents[1]));
            break;
        }
        case Op::transpose: {
            Tensor2& ga = grad_slot(n.parents[0]);
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
            break;
        }
        case Op::add:
        case Op::sub: {
            const double sign = n.op == Op::add ? 1.0 : -1.0;
            if (wants(0)) {
                Tensor2& ga = grad_slot(n.parents[0]);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (wants(1)) {
                Tensor2& gb = grad_slot(n.parents[1]);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
            }
            break;
        }
        case Op::mul: {
            const Tensor2& a = nodes_[n.parents[0]].value;
            const Tensor2& b = nodes_[n.parents[1]].value;
            if (wants(0)) {
                Tensor2& ga = grad_slot(n.parents[0]);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
            }
            if (wants(1)) {
                Tensor2& gb = grad_slot(n.parents[1]);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
            }
            break;
        }
        case Op::add_row_bias: {
            if (wants(0)) {
                Tensor2& ga = grad_slot(n.parents[0]);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (wants(1)) {
                Tensor2& gb = grad_slot(n.parents[1]);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
            }
            break;
        }
        case Op::affine: {
            Tensor2& ga = grad_slot(n.parents[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.alpha * g[i];
            break;
        }
        case Op::sigmoid: {
            Tensor2& ga = grad_slot(n.parents[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
            break;
        }
        case Op::tanh: {
            Tensor2& ga = grad_slot(n.parents[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
            break;
        }
        case Op::abs: {
            const Tensor2& a = nodes_[n.parents[0]].value;
            Tensor2& ga = grad_slot(n.parents[0]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double s = a[i] > 0.0 ? 1.0 : (a[i] < 0.0 ? -1.0 : 0.0);
                ga[i] += g[i] * s;
            }
            break;
        }
        case Op::concat_cols: {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < n.parents.size(); ++k) {
                const std::size_t w = nodes_[n.parents[k]].value.cols();
                if (wants(k)) {
                    Tensor2& gp = grad_slot(n.parents[k]);
                    for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < w; ++j) gp(i, j) += g(i, offset + j);
                }
                offset += w;
            }
            break;
        }
        case Op::softmax_rows: {
            // d x_ij = y_ij (g_ij - sum_k g_ik y_ik) / scale
            const Tensor2& y = n.value;
            Tensor2& ga = grad_slot(n.parents[0]);
            for (std::size_t i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - dot) / n.alpha;
            }
            break;
        }
        case Op::row_normalize: {
            // y = a / s, s = row sum: d a_ij = (g_ij - sum_k g_ik y_ik) / s
            const Tensor2& a = nodes_[n.parents[0]].value;
            const Tensor2& y = n.value;
            Tensor2& ga = grad_slot(n.parents[0]);
            for (std::size_t i = 0; i < y.rows(); ++i) {
                double s = 0.0;
                for (double v : a.row(i)) s += v;
                if (s == 0.0) continue;
                double dot = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += (g(i, j) - dot) / s;
            }
            break;
        }
        case Op::filter_merge: {
            Tensor2& ga = grad_slot(n.parents[0]);
            for (std::size_t i = 0; i < g.size(); ++i)
                if (n.aux_a[i] == 0.0) ga[i] += g[i];
            break;
        }
        case Op::reduce_mean: {
            Tensor2& ga = grad_slot(n.parents[0]);
            const double w = g[0] / n.alpha;
            for (std::size_t i = 0; i < ga.size(); ++i)
                if (n.aux_a[i] != 0.0) ga[i] += w;
            break;
        }
        case Op::sum: {
            Tensor2& ga = grad_slot(n.parents[0]);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
            break;
        }
    }
}

}  // namespace sdagrin
