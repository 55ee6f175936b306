#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sdagrin/autodiff.hpp"
#include "sdagrin/errors.hpp"
#include "sdagrin/graph.hpp"
#include "sdagrin/params.hpp"
#include "sdagrin/tensor.hpp"

namespace sdagrin {

// Per-window graph adaptation by multi-head attention over variables.
//
// Each head l projects the window X (N x T, missing entries zero) to Q = X W_Q, K = X W_K
// and forms row-stochastic scores softmax(Q K^T / sqrt(d_h)). Heads are averaged, then
// restricted to the support of the static graph. Rows are not renormalized after masking.

struct AdaptedGraph {
    Tensor2 a_star;
    std::size_t window_start = 0;
    std::vector<std::size_t> empty_rows;  // nodes receiving no messages in this window
};

inline Var head_attention(Var x, Var w_query, Var w_key) {
    const std::size_t d = w_query.cols();
    if (d == 0) throw ContractError("head_attention: head dimension is zero");
    if (w_key.cols() != d) throw ShapeError("head_attention: query/key widths differ");
    Var q = matmul(x, w_query);
    Var k = matmul(x, w_key);
    return softmax_rows(matmul_nt(q, k), std::sqrt(static_cast<double>(d)));
}

inline Var pool_heads(const std::vector<Var>& heads) {
    if (heads.empty()) throw ContractError("pool_heads: no heads");
    Var acc = heads.front();
    for (std::size_t l = 1; l < heads.size(); ++l) acc = add(acc, heads[l]);
    if (heads.size() == 1) return acc;
    return scale(acc, 1.0 / static_cast<double>(heads.size()));
}

inline Var sparsify(Var pooled, const StaticGraph& graph) {
    if (pooled.rows() != graph.nodes() || pooled.cols() != graph.nodes())
        throw ShapeError("sparsify: attention " + pooled.value().shape() + " vs static graph " + graph.weights().shape());
    return mul(pooled, pooled.tape->constant(graph.support()));
}

// Differentiable A*_t for one window. With no heads configured the row-normalized static
// graph is returned as a constant.
inline Var adapt(Tape& tape, const Tensor2& x, const AdapterParamsT<Var>& adapter, const StaticGraph& graph) {
    if (adapter.query.empty()) return tape.constant(graph.row_normalized());
    Var xc = tape.constant(x);
    std::vector<Var> heads;
    heads.reserve(adapter.query.size());
    for (std::size_t l = 0; l < adapter.query.size(); ++l) heads.push_back(head_attention(xc, adapter.query[l], adapter.key[l]));
    return sparsify(pool_heads(heads), graph);
}

inline std::vector<std::size_t> empty_rows(const Tensor2& a) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        bool any = false;
        for (double v : a.row(i)) any = any || v != 0.0;
        if (!any) out.push_back(i);
    }
    return out;
}

// Value-only evaluation of adapt() for export and inspection.
inline AdaptedGraph adapt_window(const Tensor2& x, const ModelParams& params, const StaticGraph& graph,
                                 std::size_t window_start = 0) {
    Tape tape;
    AdapterParamsT<Var> bound;
    for (std::size_t l = 0; l < params.adapter.query.size(); ++l) {
        bound.query.push_back(tape.constant(params.adapter.query[l]));
        bound.key.push_back(tape.constant(params.adapter.key[l]));
    }
    AdaptedGraph g;
    g.a_star = adapt(tape, x, bound, graph).value();
    g.window_start = window_start;
    g.empty_rows = empty_rows(g.a_star);
    return g;
}

}  // namespace sdagrin
