#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "sdagrin/adapter.hpp"
#include "support.hpp"

using namespace sdagrin;

namespace {

ModelParams adapter_params(Rng& rng, std::size_t heads, std::size_t steps, std::size_t dh, double spread = 1.0) {
    ModelConfig c = testing_support::small_config(4, steps, heads);
    c.head_dim = dh;
    ModelParams p = zero_params(c);
    for (std::size_t l = 0; l < heads; ++l) {
        p.adapter.query[l] = testing_support::random_tensor(rng, steps, dh, -spread, spread);
        p.adapter.key[l] = testing_support::random_tensor(rng, steps, dh, -spread, spread);
    }
    return p;
}

Tensor2 permute(const Tensor2& a, const std::vector<std::size_t>& perm, bool both) {
    Tensor2 out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = both ? a(perm[i], perm[j]) : a(perm[i], j);
    return out;
}

}  // namespace

TEST(HeadAttention, ZeroInputGivesUniformRows) {
    Tape tape;
    Rng rng(1);
    Var x = tape.constant(Tensor2(5, 6));
    Var wq = tape.variable(testing_support::random_tensor(rng, 6, 3));
    Var wk = tape.variable(testing_support::random_tensor(rng, 6, 3));
    const Tensor2 a = head_attention(x, wq, wk).value();
    for (double v : a.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(HeadAttention, TwoNodeHandComputation) {
    // X = [[1,0],[0,1]], W_Q = W_K = I, d_h = 2: logits = I / sqrt(2).
    Tape tape;
    Var x = tape.constant(Tensor2::identity(2));
    const Tensor2 a = head_attention(x, tape.variable(Tensor2::identity(2)), tape.variable(Tensor2::identity(2))).value();
    const double e = std::exp(1.0 / std::sqrt(2.0));
    EXPECT_NEAR(a(0, 0), e / (e + 1.0), 1e-15);
    EXPECT_NEAR(a(0, 1), 1.0 / (e + 1.0), 1e-15);
    EXPECT_NEAR(a(1, 1), e / (e + 1.0), 1e-15);
}

TEST(HeadAttention, ShapeErrors) {
    Tape tape;
    Var x = tape.constant(Tensor2(3, 4));
    EXPECT_THROW(head_attention(x, tape.variable(Tensor2(4, 2)), tape.variable(Tensor2(4, 3))), ShapeError);
    EXPECT_THROW(head_attention(x, tape.variable(Tensor2(5, 2)), tape.variable(Tensor2(5, 2))), ShapeError);
}

TEST(PoolHeads, AveragesHeads) {
    Tape tape;
    Var a = tape.constant(Tensor2{{0.5, 0.5}, {1, 0}});
    Var b = tape.constant(Tensor2{{1, 0}, {0, 1}});
    const Tensor2 p = pool_heads({a, b}).value();
    EXPECT_EQ(p, (Tensor2{{0.75, 0.25}, {0.5, 0.5}}));
    EXPECT_EQ(pool_heads({a}).value(), a.value());
    EXPECT_THROW(pool_heads({}), ContractError);
}

TEST(PoolHeads, IdenticalHeadsEqualOneHead) {
    Rng rng(3);
    ModelParams one = adapter_params(rng, 1, 8, 4);
    ModelParams three = one;
    three.adapter.query.assign(3, one.adapter.query[0]);
    three.adapter.key.assign(3, one.adapter.key[0]);
    const StaticGraph g = testing_support::random_graph(rng, 4);
    const Tensor2 x = testing_support::random_tensor(rng, 4, 8);
    const Tensor2 a1 = adapt_window(x, one, g).a_star;
    const Tensor2 a3 = adapt_window(x, three, g).a_star;
    for (std::size_t k = 0; k < a1.size(); ++k) EXPECT_NEAR(a1[k], a3[k], 1e-15);
}

TEST(Sparsify, MasksToSupportWithoutRenormalizing) {
    Tape tape;
    Var p = tape.constant(Tensor2{{0.2, 0.3, 0.5}, {0.1, 0.1, 0.8}, {0.4, 0.4, 0.2}});
    const StaticGraph g(Tensor2{{1, 0.7, 0}, {0.7, 1, 0}, {0, 0, 2}});
    const Tensor2 s = sparsify(p, g).value();
    EXPECT_EQ(s, (Tensor2{{0.2, 0.3, 0}, {0.1, 0.1, 0}, {0, 0, 0.2}}));
    EXPECT_THROW(sparsify(tape.constant(Tensor2(2, 2)), g), ShapeError);
}

TEST(Adapt, RowsSubStochasticAndSupportPreserved) {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.index(7);
        const std::size_t steps = 2 + rng.index(10);
        ModelParams p = adapter_params(rng, 1 + rng.index(3), steps, 1 + rng.index(4), 3.0);
        const StaticGraph g = testing_support::random_graph(rng, n);
        const Tensor2 a = adapt_window(testing_support::random_tensor(rng, n, steps, -3, 3), p, g).a_star;
        const Tensor2 support = g.support();
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                EXPECT_GE(a(i, j), 0.0);
                if (support(i, j) == 0.0) EXPECT_EQ(a(i, j), 0.0);
                s += a(i, j);
            }
            EXPECT_LE(s, 1.0 + 1e-12);
        }
    }
}

TEST(Adapt, CompleteGraphRowsSumToOne) {
    Rng rng(12);
    const StaticGraph full(Tensor2(5, 5, 1.0));
    ModelParams p = adapter_params(rng, 2, 6, 3, 5.0);
    const Tensor2 a = adapt_window(testing_support::random_tensor(rng, 5, 6, -4, 4), p, full).a_star;
    for (std::size_t i = 0; i < 5; ++i) {
        double s = 0.0;
        for (double v : a.row(i)) s += v;
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Adapt, ZeroParametersGiveScaledSupport) {
    Rng rng(5);
    ModelParams p = adapter_params(rng, 2, 7, 3);
    for (auto& t : p.adapter.query) t.fill(0.0);
    for (auto& t : p.adapter.key) t.fill(0.0);
    const StaticGraph g = testing_support::random_graph(rng, 6);
    const Tensor2 a = adapt_window(testing_support::random_tensor(rng, 6, 7), p, g).a_star;
    const Tensor2 support = g.support();
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], support[k] / 6.0, 1e-15);
}

TEST(Adapt, PermutationEquivariant) {
    Rng rng(6);
    const std::size_t n = 6, steps = 5;
    ModelParams p = adapter_params(rng, 2, steps, 3);
    const StaticGraph g = testing_support::random_graph(rng, n);
    const Tensor2 x = testing_support::random_tensor(rng, n, steps);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const Tensor2 a = adapt_window(x, p, g).a_star;
    const Tensor2 ap = adapt_window(permute(x, perm, false), p, StaticGraph(permute(g.weights(), perm, true))).a_star;
    const Tensor2 expected = permute(a, perm, true);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(ap[k], expected[k], 1e-13);
}

TEST(Adapt, NoHeadsGivesRowNormalizedStaticGraph) {
    const StaticGraph g(Tensor2{{1, 3, 0}, {1, 1, 2}, {0, 1, 1}});
    ModelConfig c = testing_support::small_config(3, 4, 0);
    const Tensor2 a = adapt_window(Tensor2(3, 4, 1.0), zero_params(c), g).a_star;
    EXPECT_EQ(a, g.row_normalized());
    EXPECT_NEAR(a(0, 1), 0.75, 1e-15);
}

TEST(Adapt, EmptyRowsReported) {
    EXPECT_EQ(empty_rows(Tensor2{{0, 0}, {0.5, 0.5}}), std::vector<std::size_t>{0});
    EXPECT_TRUE(empty_rows(Tensor2::identity(3)).empty());
}

TEST(Adapt, GradientMatchesFiniteDifferences) {
    Rng rng(9);
    const std::size_t n = 4, steps = 6;
    ModelParams p = adapter_params(rng, 2, steps, 3);
    const StaticGraph g = testing_support::random_graph(rng, n, 0.5);
    const Tensor2 x = testing_support::random_tensor(rng, n, steps);
    const Tensor2 weights = testing_support::random_tensor(rng, n, n);
    auto objective = [&](const ModelParams& q, Tensor2* grad_q0, Tensor2* grad_k1) {
        Tape tape;
        AdapterParamsT<Var> b;
        for (std::size_t l = 0; l < 2; ++l) {
            b.query.push_back(tape.variable(q.adapter.query[l]));
            b.key.push_back(tape.variable(q.adapter.key[l]));
        }
        Var loss = sum(mul(adapt(tape, x, b, g), tape.constant(weights)));
        if (grad_q0) {
            tape.backward(loss);
            *grad_q0 = tape.grad(b.query[0]);
            *grad_k1 = tape.grad(b.key[1]);
        }
        return loss.value()(0, 0);
    };
    Tensor2 gq, gk;
    objective(p, &gq, &gk);
    auto f = [&] { return objective(p, nullptr, nullptr); };
    EXPECT_LT(testing_support::max_fd_error(p.adapter.query[0], gq, f), 1e-5);
    EXPECT_LT(testing_support::max_fd_error(p.adapter.key[1], gk, f), 1e-5);
}
