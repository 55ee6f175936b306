#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdagrin/dataset.hpp"
#include "sdagrin/errors.hpp"
#include "sdagrin/graph.hpp"
#include "sdagrin/rng.hpp"
#include "sdagrin/tensor.hpp"

namespace sdagrin {

struct RegimeVarSpec {
    std::size_t nodes = 12;
    std::size_t steps = 2048;
    std::vector<Tensor2> regimes;  // nonnegative N x N generating patterns
    std::size_t switch_period = 64;
    double noise_scale = 0.3;
    double decay = 0.9;
    std::uint64_t seed = 0;
};

// Regime-switching graph VAR(1):
//   x_t = decay * Abar_{r(t)} x_{t-1} + noise_scale * eps_t,  eps_t ~ N(0, I)
// with Abar the row-normalized regime pattern, r(t) = (t / switch_period) mod R and
// x_0 ~ N(0, I). Draw order: x_0 (node order), then eps_t for t = 1.. (node order).
inline Tensor2 simulate_regime_var(const RegimeVarSpec& spec) {
    if (spec.regimes.size() < 2) throw ContractError("synth_regime_var: need at least 2 regime patterns");
    if (spec.switch_period < 2) throw ContractError("synth_regime_var: switch_period must be >= 2");
    if (spec.nodes == 0 || spec.steps == 0) throw ContractError("synth_regime_var: empty series requested");
    std::vector<Tensor2> transition;
    for (std::size_t r = 0; r < spec.regimes.size(); ++r) {
        const Tensor2& p = spec.regimes[r];
        if (p.rows() != spec.nodes || p.cols() != spec.nodes)
            throw ShapeError("synth_regime_var: regime " + std::to_string(r) + " has shape " + p.shape());
        for (std::size_t i = 0; i < p.rows(); ++i) {
            double s = 0.0;
            for (double v : p.row(i)) {
                if (v < 0.0) throw DataError("synth_regime_var: regime " + std::to_string(r) + " has a negative weight");
                s += v;
            }
            if (s == 0.0)
                throw DataError("synth_regime_var: regime " + std::to_string(r) + " has an all-zero row " + std::to_string(i));
        }
        transition.push_back(kernels::row_normalize(p));
    }
    Rng rng(spec.seed);
    const std::size_t n = spec.nodes;
    Tensor2 x(spec.steps, n);
    for (std::size_t i = 0; i < n; ++i) x(0, i) = rng.normal();
    for (std::size_t t = 1; t < spec.steps; ++t) {
        const Tensor2& a = transition[(t / spec.switch_period) % transition.size()];
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += a(i, j) * x(t - 1, j);
            x(t, i) = spec.decay * s;
        }
        for (std::size_t i = 0; i < n; ++i) x(t, i) += spec.noise_scale * rng.normal();
    }
    return x;
}

// Fully observed dataset around simulate_regime_var; ids v0..v{N-1}, timestamps 0..T-1.
inline TimeSeriesDataset synth_regime_var(const RegimeVarSpec& spec) {
    Tensor2 x = simulate_regime_var(spec);
    std::vector<std::string> ids, ts;
    for (std::size_t i = 0; i < spec.nodes; ++i) ids.push_back("v" + std::to_string(i));
    for (std::size_t t = 0; t < spec.steps; ++t) ts.push_back(std::to_string(t));
    Tensor2 observed(x.rows(), x.cols(), 1.0);
    return make_dataset(std::move(ids), std::move(ts), std::move(x), std::move(observed));
}

// Nodes i, j linked when they fall in the same block of `group` consecutive ids.
inline Tensor2 block_pattern(std::size_t n, std::size_t group) {
    Tensor2 p(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) p(i, j) = (i / group == j / group) ? 1.0 : 0.0;
    return p;
}

// Nodes i, j linked when i = j (mod n / group): groups of `group` nodes spread across blocks.
// Off-diagonal support is disjoint from block_pattern(n, group) when group^2 <= n.
inline Tensor2 strided_pattern(std::size_t n, std::size_t group) {
    const std::size_t stride = n / group;
    Tensor2 p(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) p(i, j) = (i % stride == j % stride) ? 1.0 : 0.0;
    return p;
}

// 0/1 union of the supports of several patterns (diagonal always set).
inline StaticGraph union_graph(const std::vector<Tensor2>& patterns) {
    if (patterns.empty()) throw ContractError("union_graph: no patterns");
    const std::size_t n = patterns.front().rows();
    Tensor2 u(n, n);
    for (const auto& p : patterns) {
        kernels::require_same_shape(p, u, "union_graph");
        for (std::size_t k = 0; k < u.size(); ++k)
            if (p[k] > 0.0) u[k] = 1.0;
    }
    for (std::size_t i = 0; i < n; ++i) u(i, i) = 1.0;
    return StaticGraph(std::move(u));
}

// The benchmark's two regimes: block cliques and strided cliques of size `group`.
inline std::vector<Tensor2> two_clique_regimes(std::size_t n, std::size_t group) {
    if (group < 2 || n % group != 0 || group * group > n)
        throw ContractError("two_clique_regimes: need group >= 2, group | n and group^2 <= n");
    return {block_pattern(n, group), strided_pattern(n, group)};
}

// Perfect pairing with self-loops: i linked to partner(i), where `half` selects
// partner(i) = (i + n/2) mod n and otherwise partner(i) = i xor 1.
inline Tensor2 pairing_pattern(std::size_t n, bool half) {
    if (n < 4 || n % 2 != 0) throw ContractError("pairing_pattern: need an even node count >= 4");
    Tensor2 p(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        p(i, i) = 1.0;
        p(i, half ? (i + n / 2) % n : (i ^ 1u)) = 1.0;
    }
    return p;
}

// Two pairings with disjoint off-diagonal support: neighbours (i xor 1) in one regime,
// (i + n/2) mod n in the other.
inline std::vector<Tensor2> two_pairing_regimes(std::size_t n) { return {pairing_pattern(n, false), pairing_pattern(n, true)}; }

}  // namespace sdagrin
