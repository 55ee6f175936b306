#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "sdagrin/adapter.hpp"
#include "sdagrin/autodiff.hpp"
#include "sdagrin/dataset.hpp"
#include "sdagrin/errors.hpp"
#include "sdagrin/graph.hpp"
#include "sdagrin/params.hpp"
#include "sdagrin/tensor.hpp"

namespace sdagrin {

// Recurrent two-stage imputer on a (per-window) graph, run in both time directions and
// fused per node.
//
// Per step t of one direction, with H the state entering the step:
//   Y1 = H V_h + b_h                      X1 = Phi(Y1)
//   S  = SpatialMPNN(X1, m, H)            (tanh; no own observation, see spatial_mpnn)
//   Y2 = [S | H] V_s + b_s                X2 = Phi(Y2)
//   r  = sigmoid(MPNN_r([X2 | m | H]))    u = sigmoid(MPNN_u([X2 | m | H]))
//   c  = tanh(MPNN_c([X2 | m | r * H]))   H' = u * H + (1 - u) * c
// where Phi(Y) = m * x + (1 - m) * Y and every MPNN is order-K diffusion over the
// row-normalized adapted graph and its transpose.

// Row-normalized adjacency and its transpose, shared by every MPNN in a window, plus the
// self-free powers used by the spatial decoder.
struct DiffusionOperators {
    Var forward;
    Var backward;
    std::size_t order = 1;
    std::vector<Var> spatial_forward;   // row_normalize(offdiag(A^k)), k = 1..K-1
    std::vector<Var> spatial_backward;  // same for A^T
};

inline Var off_diagonal(Var a) {
    Tensor2 keep(a.rows(), a.cols(), 1.0);
    for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) keep(i, i) = 0.0;
    return mul(a, a.tape->constant(keep));
}

inline DiffusionOperators diffusion_operators(Var a_star, std::size_t order) {
    Var n = row_normalize(a_star);
    DiffusionOperators ops{n, transpose(n), order, {}, {}};
    Var pf = ops.forward;
    Var pb = ops.backward;
    for (std::size_t k = 1; k < order; ++k) {
        if (k > 1) {
            pf = matmul(ops.forward, pf);
            pb = matmul(ops.backward, pb);
        }
        ops.spatial_forward.push_back(row_normalize(off_diagonal(pf)));
        ops.spatial_backward.push_back(row_normalize(off_diagonal(pb)));
    }
    return ops;
}

// Diffusion supports of U: forward[k] = A^k U, backward[k] = (A^T)^k U for k < K.
struct Diffused {
    std::vector<Var> forward;
    std::vector<Var> backward;
};

inline Diffused diffuse(Var u, const DiffusionOperators& ops) {
    Diffused d;
    d.forward.push_back(u);
    d.backward.push_back(u);
    for (std::size_t k = 1; k < ops.order; ++k) {
        d.forward.push_back(matmul(ops.forward, d.forward.back()));
        d.backward.push_back(matmul(ops.backward, d.backward.back()));
    }
    return d;
}

// sum_k [A^k U Theta_k + (A^T)^k U Theta'_k] + bias, before any activation.
inline Var mpnn_linear(const Diffused& d, const MpnnWeights<Var>& w) {
    if (w.forward.size() != d.forward.size())
        throw ShapeError("mpnn: weights have order " + std::to_string(w.forward.size()) + ", supports have order " +
                         std::to_string(d.forward.size()));
    // Both k = 0 terms multiply U itself.
    Var acc = matmul(d.forward[0], add(w.forward[0], w.backward[0]));
    for (std::size_t k = 1; k < d.forward.size(); ++k) {
        acc = add(acc, matmul(d.forward[k], w.forward[k]));
        acc = add(acc, matmul(d.backward[k], w.backward[k]));
    }
    return add_row_bias(acc, w.bias);
}

inline Var mpnn(Var u, const DiffusionOperators& ops, const MpnnWeights<Var>& w) {
    return tanh(mpnn_linear(diffuse(u, ops), w));
}

// Spatial decoder. Node i sees its own state H but never its own X1 or mask at this step,
// so S (and Y2 and the fused output built on it) cannot copy an observed target; only
// neighbours reached through the self-free supports contribute [X1 | m | H]:
//   S = tanh([0 | 0 | H](Theta_f0 + Theta_b0) + sum_k F_k U Theta_fk + B_k U Theta_bk + b)
inline Var spatial_mpnn(Var x1, Var m, Var h, const DiffusionOperators& ops, const MpnnWeights<Var>& w) {
    if (w.forward.size() != ops.order)
        throw ShapeError("spatial_mpnn: weights have order " + std::to_string(w.forward.size()) + ", operators have order " +
                         std::to_string(ops.order));
    Tape& tape = *x1.tape;
    Var u = concat_cols({x1, m, h});
    Var own = concat_cols(tape.constant(Tensor2(x1.rows(), 2)), h);
    Var acc = matmul(own, add(w.forward[0], w.backward[0]));
    for (std::size_t k = 1; k < ops.order; ++k) {
        acc = add(acc, matmul(matmul(ops.spatial_forward[k - 1], u), w.forward[k]));
        acc = add(acc, matmul(matmul(ops.spatial_backward[k - 1], u), w.backward[k]));
    }
    return tanh(add_row_bias(acc, w.bias));
}

inline Var mpgru_step(Var x, Var m, Var h_prev, const DiffusionOperators& ops, const DirectionParams<Var>& p,
                      long step_index = 0) {
    const Diffused gate_in = diffuse(concat_cols({x, m, h_prev}), ops);
    Var r = sigmoid(mpnn_linear(gate_in, p.reset));
    Var u = sigmoid(mpnn_linear(gate_in, p.update));
    Var c = tanh(mpnn_linear(diffuse(concat_cols({x, m, mul(r, h_prev)}), ops), p.candidate));
    Var h_next = add(mul(u, h_prev), mul(affine(u, -1.0, 1.0), c));
    if (!h_next.value().all_finite())
        throw DivergenceError("recurrent state became non-finite at step " + std::to_string(step_index), step_index);
    return h_next;
}

// Per-step outputs of one direction, in processing order.
struct DirectionTrace {
    std::vector<Var> y1, x1, y2, x2;  // N x 1 each
    std::vector<Var> s;               // N x d_spatial
    std::vector<Var> h_prev;          // state entering the step, N x d_state
    Var h_last;
};

inline DirectionTrace unidirectional_pass(Tape& tape, const Tensor2& x, const Tensor2& mask, const DiffusionOperators& ops,
                                          const DirectionParams<Var>& p, std::size_t state_dim, long step_offset = 0) {
    kernels::require_same_shape(x, mask, "unidirectional_pass");
    const std::size_t steps = x.cols();
    DirectionTrace tr;
    Var h = tape.constant(Tensor2(x.rows(), state_dim));
    for (std::size_t t = 0; t < steps; ++t) {
        const Tensor2 xt = x.col(t);
        const Tensor2 mt = mask.col(t);
        Var m = tape.constant(mt);
        Var y1 = add_row_bias(matmul(h, p.dec1_weight), p.dec1_bias);
        Var x1 = filter_merge(y1, xt, mt);
        Var s = spatial_mpnn(x1, m, h, ops, p.encoder);
        Var y2 = add_row_bias(matmul(concat_cols(s, h), p.dec2_weight), p.dec2_bias);
        Var x2 = filter_merge(y2, xt, mt);
        tr.y1.push_back(y1);
        tr.x1.push_back(x1);
        tr.y2.push_back(y2);
        tr.x2.push_back(x2);
        tr.s.push_back(s);
        tr.h_prev.push_back(h);
        h = mpgru_step(x2, m, h, ops, p, step_offset + static_cast<long>(t));
    }
    tr.h_last = h;
    return tr;
}

inline Tensor2 reverse_columns(const Tensor2& a) {
    Tensor2 r(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) r(i, a.cols() - 1 - j) = a(i, j);
    return r;
}

// Stage outputs stacked to N x T in original time order (backward-direction outputs are
// re-reversed).
struct ImputationTrace {
    Var a_star;
    Var y1_fwd, x1_fwd, y2_fwd, x2_fwd;
    Var y1_bwd, x1_bwd, y2_bwd, x2_bwd;
    Var y_pre;    // fusion MLP output before filtering
    Var y_final;  // Phi(y_pre)
    DirectionTrace forward;
    DirectionTrace backward;  // in processing (reversed) order
};

struct ImputationOutput {
    Tensor2 final;
    Tensor2 pre_filter;
    Tensor2 x1_fwd, x2_fwd, x1_bwd, x2_bwd;
    Tensor2 y1_fwd, y2_fwd, y1_bwd, y2_bwd;
};

namespace detail {

inline Var stack(const std::vector<Var>& cols, bool reversed) {
    if (!reversed) return concat_cols(cols);
    return concat_cols(std::vector<Var>(cols.rbegin(), cols.rend()));
}

}  // namespace detail

// Runs both directions over one window on a given adapted graph and fuses them:
//   y_t = MLP([s_fwd(t) | h_fwd(t-1) | s_bwd(t) | h_bwd(t+1)])
// h_fwd(-1) and h_bwd(T) are the zero initial states of the two passes.
inline ImputationTrace bidirectional_impute(Tape& tape, const WindowBatch& w, Var a_star, const BoundParams& p,
                                            const ModelConfig& cfg) {
    const std::size_t steps = w.length();
    ImputationTrace out;
    out.a_star = a_star;
    const DiffusionOperators ops = diffusion_operators(a_star, cfg.diffusion_order);
    const long offset = static_cast<long>(w.start);
    out.forward = unidirectional_pass(tape, w.x, w.mask, ops, p.fwd, cfg.state_dim, offset);
    out.backward = unidirectional_pass(tape, reverse_columns(w.x), reverse_columns(w.mask), ops, p.bwd, cfg.state_dim, offset);

    std::vector<Var> fused;
    fused.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t tb = steps - 1 - t;
        Var in = concat_cols({out.forward.s[t], out.forward.h_prev[t], out.backward.s[tb], out.backward.h_prev[tb]});
        Var hidden = tanh(add_row_bias(matmul(in, p.fusion.w1), p.fusion.b1));
        fused.push_back(add_row_bias(matmul(hidden, p.fusion.w2), p.fusion.b2));
    }
    out.y1_fwd = detail::stack(out.forward.y1, false);
    out.x1_fwd = detail::stack(out.forward.x1, false);
    out.y2_fwd = detail::stack(out.forward.y2, false);
    out.x2_fwd = detail::stack(out.forward.x2, false);
    out.y1_bwd = detail::stack(out.backward.y1, true);
    out.x1_bwd = detail::stack(out.backward.x1, true);
    out.y2_bwd = detail::stack(out.backward.y2, true);
    out.x2_bwd = detail::stack(out.backward.x2, true);
    out.y_pre = concat_cols(fused);
    out.y_final = filter_merge(out.y_pre, w.x, w.mask);
    return out;
}

// Adapts the graph for the window and imputes it.
inline ImputationTrace forward_window(Tape& tape, const WindowBatch& w, const BoundParams& p, const StaticGraph& graph,
                                      const ModelConfig& cfg) {
    if (w.nodes() != cfg.nodes || w.length() != cfg.window)
        throw ShapeError("window " + w.x.shape() + " does not match model (" + std::to_string(cfg.nodes) + " nodes, window " +
                         std::to_string(cfg.window) + ")");
    Var a_star = adapt(tape, w.x, p.adapter, graph);
    return bidirectional_impute(tape, w, a_star, p, cfg);
}

inline ImputationOutput output_of(const ImputationTrace& tr) {
    ImputationOutput o;
    o.final = tr.y_final.value();
    o.pre_filter = tr.y_pre.value();
    o.x1_fwd = tr.x1_fwd.value();
    o.x2_fwd = tr.x2_fwd.value();
    o.x1_bwd = tr.x1_bwd.value();
    o.x2_bwd = tr.x2_bwd.value();
    o.y1_fwd = tr.y1_fwd.value();
    o.y2_fwd = tr.y2_fwd.value();
    o.y1_bwd = tr.y1_bwd.value();
    o.y2_bwd = tr.y2_bwd.value();
    return o;
}

// Sum over the five pre-filter predictions (Y1/Y2 of both directions and the fused output)
// of the MAE against the input at positions observed by the model. Equal weights.
inline Var training_loss(const ImputationTrace& tr, const WindowBatch& w) {
    Tape& tape = *tr.y_pre.tape;
    Var target = tape.constant(w.x);
    Var loss;
    bool first = true;
    for (Var pred : {tr.y1_fwd, tr.y2_fwd, tr.y1_bwd, tr.y2_bwd, tr.y_pre}) {
        Var term = reduce_mean(abs(sub(pred, target)), w.mask);
        loss = first ? term : add(loss, term);
        first = false;
    }
    return loss;
}

// Value-only imputation of one window (no gradients are recorded for the parameters).
inline ImputationOutput impute_window(const ModelParams& params, const WindowBatch& w, const StaticGraph& graph,
                                      const ModelConfig& cfg) {
    Tape tape;
    BoundParams b = bind(tape, params);
    return output_of(forward_window(tape, w, b, graph, cfg));
}

}  // namespace sdagrin
