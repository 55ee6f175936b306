#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sdagrin/autodiff.hpp"
#include "sdagrin/errors.hpp"
#include "sdagrin/rng.hpp"
#include "sdagrin/tensor.hpp"
#include "support.hpp"

using namespace sdagrin;
using testing_support::random_tensor;

// ---- Tensor2 / kernels ---------------------------------------------------------------

TEST(Tensor, ConstructionValidatesLength) {
    EXPECT_THROW(Tensor2(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
    EXPECT_THROW(Tensor2::checked(1, 2, {1.0, std::nan("")}), DataError);
    EXPECT_THROW(Tensor2::checked(1, 1, {INFINITY}), DataError);
    Tensor2 t{{1, 2}, {3, 4}};
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t(1, 0), 3.0);
}

TEST(Tensor, MatmulIdentityAndSelector) {
    EXPECT_EQ(kernels::matmul(Tensor2::identity(2), Tensor2{{1, 2}, {3, 4}}), (Tensor2{{1, 2}, {3, 4}}));
    EXPECT_EQ(kernels::matmul(Tensor2{{1, 0}}, Tensor2{{5}, {7}}), (Tensor2{{5}}));
}

TEST(Tensor, MatmulMatchesTripleLoop) {
    Rng rng(3);
    const Tensor2 a = random_tensor(rng, 3, 4), b = random_tensor(rng, 4, 2);
    const Tensor2 c = kernels::matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
            EXPECT_NEAR(c(i, j), s, 1e-15);
        }
}

TEST(Tensor, MatmulShapeErrorNamesBothShapes) {
    try {
        kernels::matmul(Tensor2(2, 3), Tensor2(2, 3));
        FAIL();
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    }
}

TEST(Tensor, RowNormalizeLeavesZeroRows) {
    const Tensor2 r = kernels::row_normalize(Tensor2{{1, 3}, {0, 0}});
    EXPECT_EQ(r, (Tensor2{{0.25, 0.75}, {0, 0}}));
}

// ---- RNG -----------------------------------------------------------------------------

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    Rng c(43);
    Rng d(42);
    EXPECT_NE(c.next_u64(), d.next_u64());
}

TEST(Rng, UniformMean) {
    Rng r(1);
    double s = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        s += u;
    }
    EXPECT_GE(s / 1e5, 0.49);
    EXPECT_LE(s / 1e5, 0.51);
}

TEST(Rng, NormalVariance) {
    Rng r(2);
    std::vector<double> v(100000);
    double m = 0.0;
    for (auto& x : v) m += (x = r.normal());
    m /= static_cast<double>(v.size());
    double q = 0.0;
    for (double x : v) q += (x - m) * (x - m);
    q /= static_cast<double>(v.size() - 1);
    EXPECT_GE(q, 0.98);
    EXPECT_LE(q, 1.02);
}

TEST(Rng, ShuffleIsPermutationAndDeterministic) {
    std::vector<int> a(50), b(50);
    for (int i = 0; i < 50; ++i) a[i] = b[i] = i;
    Rng r1(9), r2(9);
    r1.shuffle(a);
    r2.shuffle(b);
    EXPECT_EQ(a, b);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

// ---- forward semantics of ops ------------------------------------------------------------

TEST(Autodiff, SoftmaxExamples) {
    Tape t;
    Var a = softmax_rows(t.constant(Tensor2{{0, 0}}), 1.0);
    EXPECT_DOUBLE_EQ(a.value()(0, 0), 0.5);
    Var b = softmax_rows(t.constant(Tensor2{{1, 0}}), 1.0);
    EXPECT_NEAR(b.value()(0, 0), 0.73106, 1e-5);
    EXPECT_NEAR(b.value()(0, 1), 0.26894, 1e-5);
    Var c = softmax_rows(t.constant(Tensor2{{1 + 7.5, 0 + 7.5}}), 1.0);
    EXPECT_NEAR(c.value()(0, 0), b.value()(0, 0), 1e-15);
    EXPECT_THROW(softmax_rows(t.constant(Tensor2{{1, 0}}), 0.0), ContractError);
}

TEST(Autodiff, SoftmaxRowsAreStochasticEvenForLargeLogits) {
    Rng rng(5);
    Tape t;
    Var s = softmax_rows(t.constant(random_tensor(rng, 20, 9, -800, 800)), 0.5);
    for (std::size_t i = 0; i < 20; ++i) {
        double sum = 0.0;
        for (double v : s.value().row(i)) sum += v;
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Autodiff, ElementaryExamples) {
    Tape t;
    EXPECT_DOUBLE_EQ(sigmoid(t.constant(Tensor2{{0}})).value()(0, 0), 0.5);
    Var cat = concat_cols(t.constant(Tensor2(2, 1)), t.constant(Tensor2(2, 3)));
    EXPECT_EQ(cat.rows(), 2u);
    EXPECT_EQ(cat.cols(), 4u);
    Var m = reduce_mean(t.constant(Tensor2{{1, 2}, {3, 4}}), Tensor2{{1, 0}, {0, 1}});
    EXPECT_DOUBLE_EQ(m.value()(0, 0), 2.5);
    EXPECT_THROW(reduce_mean(t.constant(Tensor2{{1, 2}}), Tensor2{{0, 0}}), EmptySelectionError);
}

TEST(Autodiff, FilterMergeSemantics) {
    Tape t;
    const Tensor2 x{{1, 2}};
    Var y = t.variable(Tensor2{{9, 9}});
    EXPECT_EQ(filter_merge(y, x, Tensor2{{1, 0}}).value(), (Tensor2{{1, 9}}));
    EXPECT_EQ(filter_merge(y, x, Tensor2{{1, 1}}).value(), x);
    EXPECT_EQ(filter_merge(y, x, Tensor2{{0, 0}}).value(), y.value());
    EXPECT_THROW(filter_merge(y, x, Tensor2{{0.5, 1}}), ContractError);
    Var loss = sum(filter_merge(y, x, Tensor2{{1, 0}}));
    t.backward(loss);
    EXPECT_EQ(t.grad(y), (Tensor2{{0, 1}}));
}

TEST(Autodiff, BackwardRejectsNonScalarLoss) {
    Tape t;
    Var a = t.variable(Tensor2(2, 2, 1.0));
    EXPECT_THROW(t.backward(a), ContractError);
}

TEST(Autodiff, LinearMapGradientIsOuterProduct) {
    Tape t;
    const Tensor2 x{{2}, {-3}, {5}};
    Var w = t.variable(Tensor2{{1, 2, 3}, {4, 5, 6}});
    Var loss = sum(matmul(w, t.constant(x)));
    t.backward(loss);
    const Tensor2 g = t.grad(w);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(g(i, j), x(j, 0));
}

TEST(Autodiff, SigmoidGradientAtZero) {
    Tape t;
    Var x = t.variable(Tensor2{{0}});
    t.backward(sum(sigmoid(x)));
    EXPECT_DOUBLE_EQ(t.grad(x)(0, 0), 0.25);
}

TEST(Autodiff, BackwardTwiceIsBitwiseIdentical) {
    Rng rng(11);
    Tape t;
    Var a = t.variable(random_tensor(rng, 3, 4));
    Var b = t.variable(random_tensor(rng, 4, 2));
    Var loss = sum(tanh(matmul(a, b)));
    t.backward(loss);
    const Tensor2 ga = t.grad(a);
    t.zero_grad();
    t.backward(loss);
    EXPECT_EQ(t.grad(a), ga);
}

// ---- per-op finite-difference checks ---------------------------------------------------

namespace {

// loss = sum(op(inputs) * weights), weights fixed and random so every output entry matters.
struct OpCase {
    const char* name;
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    std::function<Var(Tape&, const std::vector<Var>&)> op;
    double lo = -1.0, hi = 1.0;
};

double check_op(const OpCase& c, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor2> inputs;
    for (auto [r, k] : c.shapes) inputs.push_back(random_tensor(rng, r, k, c.lo, c.hi));
    Tensor2 weights;
    auto eval = [&](bool record, std::vector<Tensor2>* grads) {
        Tape t;
        std::vector<Var> vars;
        for (const auto& in : inputs) vars.push_back(t.variable(in));
        Var out = c.op(t, vars);
        if (weights.size() == 0) weights = random_tensor(rng, out.rows(), out.cols());
        Var loss = sum(mul(out, t.constant(weights)));
        if (record) {
            t.backward(loss);
            for (const auto& v : vars) grads->push_back(t.grad(v));
        }
        return loss.value()(0, 0);
    };
    std::vector<Tensor2> grads;
    eval(true, &grads);
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        worst = std::max(worst, testing_support::max_fd_error(inputs[i], grads[i], [&] { return eval(false, nullptr); }));
    return worst;
}

}  // namespace

TEST(Autodiff, EveryOpMatchesFiniteDifferences) {
    const std::vector<OpCase> cases = {
        {"matmul", {{3, 4}, {4, 2}}, [](Tape&, const std::vector<Var>& v) { return matmul(v[0], v[1]); }},
        {"matmul_nt", {{3, 4}, {5, 4}}, [](Tape&, const std::vector<Var>& v) { return matmul_nt(v[0], v[1]); }},
        {"transpose", {{3, 4}}, [](Tape&, const std::vector<Var>& v) { return transpose(v[0]); }},
        {"add", {{3, 2}, {3, 2}}, [](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]); }},
        {"sub", {{3, 2}, {3, 2}}, [](Tape&, const std::vector<Var>& v) { return sub(v[0], v[1]); }},
        {"mul", {{3, 2}, {3, 2}}, [](Tape&, const std::vector<Var>& v) { return mul(v[0], v[1]); }},
        {"add_row_bias", {{3, 2}, {1, 2}}, [](Tape&, const std::vector<Var>& v) { return add_row_bias(v[0], v[1]); }},
        {"affine", {{3, 2}}, [](Tape&, const std::vector<Var>& v) { return affine(v[0], -1.5, 0.25); }},
        {"sigmoid", {{3, 2}}, [](Tape&, const std::vector<Var>& v) { return sigmoid(v[0]); }},
        {"tanh", {{3, 2}}, [](Tape&, const std::vector<Var>& v) { return tanh(v[0]); }},
        {"abs", {{3, 2}}, [](Tape&, const std::vector<Var>& v) { return abs(v[0]); }, 0.1, 1.0},
        {"concat_cols", {{3, 1}, {3, 2}, {3, 3}}, [](Tape&, const std::vector<Var>& v) { return concat_cols(v); }},
        {"softmax_rows", {{4, 5}}, [](Tape&, const std::vector<Var>& v) { return softmax_rows(v[0], 1.7); }},
        {"row_normalize", {{4, 3}}, [](Tape&, const std::vector<Var>& v) { return row_normalize(v[0]); }, 0.1, 1.0},
        {"reduce_mean", {{3, 3}},
         [](Tape&, const std::vector<Var>& v) { return reduce_mean(v[0], Tensor2{{1, 0, 1}, {0, 1, 0}, {1, 1, 1}}); }},
        {"filter_merge", {{2, 3}},
         [](Tape&, const std::vector<Var>& v) { return filter_merge(v[0], Tensor2(2, 3, 7.0), Tensor2{{1, 0, 1}, {0, 0, 1}}); }},
        {"sum", {{2, 3}}, [](Tape&, const std::vector<Var>& v) { return sum(v[0]); }},
    };
    for (const auto& c : cases) EXPECT_LT(check_op(c, 17), 1e-4) << c.name;
}
