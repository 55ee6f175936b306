#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "sdagrin/autodiff.hpp"
#include "sdagrin/errors.hpp"
#include "sdagrin/rng.hpp"
#include "sdagrin/tensor.hpp"

namespace sdagrin {

// Shape of the model. `heads == 0` disables the attention adapter: the imputer then runs
// on the row-normalized static graph (the static-graph ablation).
struct ModelConfig {
    std::size_t nodes = 0;          // N
    std::size_t window = 32;        // T
    std::size_t heads = 1;          // L
    std::size_t head_dim = 64;      // d_h per head
    std::size_t state_dim = 64;     // d_state
    std::size_t spatial_dim = 64;   // d_spatial (width of S_t)
    std::size_t diffusion_order = 2;  // K
    std::size_t fusion_hidden = 64;

    bool dynamic() const noexcept { return heads > 0; }

    void validate() const {
        if (nodes == 0) throw ContractError("model config: nodes must be positive");
        if (window == 0) throw ContractError("model config: window must be positive");
        if (heads > 0 && head_dim == 0) throw ContractError("model config: head_dim must be positive");
        if (state_dim == 0 || spatial_dim == 0 || fusion_hidden == 0)
            throw ContractError("model config: state_dim, spatial_dim and fusion_hidden must be positive");
        if (diffusion_order == 0) throw ContractError("model config: diffusion_order must be >= 1");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Order-K diffusion weights: forward[k] multiplies A^k U, backward[k] multiplies (A^T)^k U.
template <class T>
struct MpnnWeights {
    std::vector<T> forward;
    std::vector<T> backward;
    T bias;
};

template <class T>
struct DirectionParams {
    MpnnWeights<T> encoder;  // spatial encoder producing S_t
    MpnnWeights<T> reset;
    MpnnWeights<T> update;
    MpnnWeights<T> candidate;
    T dec1_weight;  // V_h: d_state x 1
    T dec1_bias;    // b_h: 1 x 1
    T dec2_weight;  // V_s: (d_spatial + d_state) x 1
    T dec2_bias;    // b_s: 1 x 1
};

template <class T>
struct FusionParams {
    T w1;  // 2 (d_spatial + d_state) x hidden
    T b1;  // 1 x hidden
    T w2;  // hidden x 1
    T b2;  // 1 x 1
};

template <class T>
struct AdapterParamsT {
    std::vector<T> query;  // per head: T x d_h
    std::vector<T> key;
};

// Every learnable tensor of the model. T = Tensor2 for stored values, T = Var when bound
// to a tape.
template <class T>
struct ModelParamsT {
    AdapterParamsT<T> adapter;
    DirectionParams<T> fwd;
    DirectionParams<T> bwd;
    FusionParams<T> fusion;

    // Named views in a fixed canonical order (checkpoint order, flat-vector order).
    template <class Self>
    static auto entries_of(Self& self) {
        using Ptr = std::conditional_t<std::is_const_v<Self>, const T*, T*>;
        std::vector<std::pair<std::string, Ptr>> out;
        for (std::size_t l = 0; l < self.adapter.query.size(); ++l) {
            out.emplace_back("adapter.query." + std::to_string(l), &self.adapter.query[l]);
            out.emplace_back("adapter.key." + std::to_string(l), &self.adapter.key[l]);
        }
        auto mpnn = [&out](const std::string& prefix, auto& m) {
            for (std::size_t k = 0; k < m.forward.size(); ++k) out.emplace_back(prefix + ".fwd." + std::to_string(k), &m.forward[k]);
            for (std::size_t k = 0; k < m.backward.size(); ++k) out.emplace_back(prefix + ".bwd." + std::to_string(k), &m.backward[k]);
            out.emplace_back(prefix + ".bias", &m.bias);
        };
        auto direction = [&](const std::string& prefix, auto& d) {
            mpnn(prefix + ".encoder", d.encoder);
            mpnn(prefix + ".reset", d.reset);
            mpnn(prefix + ".update", d.update);
            mpnn(prefix + ".candidate", d.candidate);
            out.emplace_back(prefix + ".dec1.weight", &d.dec1_weight);
            out.emplace_back(prefix + ".dec1.bias", &d.dec1_bias);
            out.emplace_back(prefix + ".dec2.weight", &d.dec2_weight);
            out.emplace_back(prefix + ".dec2.bias", &d.dec2_bias);
        };
        direction("forward", self.fwd);
        direction("backward", self.bwd);
        out.emplace_back("fusion.w1", &self.fusion.w1);
        out.emplace_back("fusion.b1", &self.fusion.b1);
        out.emplace_back("fusion.w2", &self.fusion.w2);
        out.emplace_back("fusion.b2", &self.fusion.b2);
        return out;
    }

    auto entries() { return entries_of(*this); }
    auto entries() const { return entries_of(*this); }
};

using ModelParams = ModelParamsT<Tensor2>;
using BoundParams = ModelParamsT<Var>;

namespace detail {

// Allocates every tensor at its configured shape, all zeros. Returns fan-in per entry
// (in entries() order) for initialization.
inline std::vector<std::size_t> allocate(ModelParams& p, const ModelConfig& c) {
    std::vector<std::size_t> fan_in;
    p.adapter.query.clear();
    p.adapter.key.clear();
    for (std::size_t l = 0; l < c.heads; ++l) {
        p.adapter.query.emplace_back(c.window, c.head_dim);
        p.adapter.key.emplace_back(c.window, c.head_dim);
        fan_in.push_back(c.window);
        fan_in.push_back(c.window);
    }
    auto mpnn = [&](MpnnWeights<Tensor2>& m, std::size_t in, std::size_t out) {
        m.forward.assign(c.diffusion_order, Tensor2(in, out));
        m.backward.assign(c.diffusion_order, Tensor2(in, out));
        m.bias = Tensor2(1, out);
        for (std::size_t k = 0; k < 2 * c.diffusion_order + 1; ++k) fan_in.push_back(in);
    };
    auto direction = [&](DirectionParams<Tensor2>& d) {
        const std::size_t gate_in = 2 + c.state_dim;  // [x | m | h]
        mpnn(d.encoder, gate_in, c.spatial_dim);
        mpnn(d.reset, gate_in, c.state_dim);
        mpnn(d.update, gate_in, c.state_dim);
        mpnn(d.candidate, gate_in, c.state_dim);
        d.dec1_weight = Tensor2(c.state_dim, 1);
        d.dec1_bias = Tensor2(1, 1);
        d.dec2_weight = Tensor2(c.spatial_dim + c.state_dim, 1);
        d.dec2_bias = Tensor2(1, 1);
        fan_in.insert(fan_in.end(), {c.state_dim, c.state_dim, c.spatial_dim + c.state_dim, c.spatial_dim + c.state_dim});
    };
    direction(p.fwd);
    direction(p.bwd);
    const std::size_t fusion_in = 2 * (c.spatial_dim + c.state_dim);
    p.fusion.w1 = Tensor2(fusion_in, c.fusion_hidden);
    p.fusion.b1 = Tensor2(1, c.fusion_hidden);
    p.fusion.w2 = Tensor2(c.fusion_hidden, 1);
    p.fusion.b2 = Tensor2(1, 1);
    fan_in.insert(fan_in.end(), {fusion_in, fusion_in, c.fusion_hidden, c.fusion_hidden});
    return fan_in;
}

}  // namespace detail

inline ModelParams zero_params(const ModelConfig& c) {
    c.validate();
    ModelParams p;
    detail::allocate(p, c);
    return p;
}

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for every entry, tensors visited in entries()
// order, values in row-major order.
inline ModelParams init_params(const ModelConfig& c, std::uint64_t seed) {
    c.validate();
    ModelParams p;
    const auto fan_in = detail::allocate(p, c);
    Rng rng(seed);
    auto entries = p.entries();
    for (std::size_t e = 0; e < entries.size(); ++e) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in[e]));
        for (auto& v : entries[e].second->data()) v = rng.uniform(-bound, bound);
    }
    return p;
}

// Registers every parameter as a differentiable leaf on `tape`.
inline BoundParams bind(Tape& tape, const ModelParams& p) {
    BoundParams b;
    b.adapter.query.resize(p.adapter.query.size());
    b.adapter.key.resize(p.adapter.key.size());
    auto size_mpnn = [](MpnnWeights<Var>& dst, const MpnnWeights<Tensor2>& src) {
        dst.forward.resize(src.forward.size());
        dst.backward.resize(src.backward.size());
    };
    for (auto [to, from] : {std::pair{&b.fwd, &p.fwd}, std::pair{&b.bwd, &p.bwd}}) {
        size_mpnn(to->encoder, from->encoder);
        size_mpnn(to->reset, from->reset);
        size_mpnn(to->update, from->update);
        size_mpnn(to->candidate, from->candidate);
    }
    auto dst = b.entries();
    auto src = p.entries();
    for (std::size_t e = 0; e < src.size(); ++e) *dst[e].second = tape.variable(*src[e].second);
    return b;
}

// Gradients of the last backward pass, shaped like the parameters.
inline ModelParams gradients(const Tape& tape, const BoundParams& bound, const ModelParams& like) {
    ModelParams g = like;
    auto dst = g.entries();
    auto src = bound.entries();
    for (std::size_t e = 0; e < src.size(); ++e) *dst[e].second = tape.grad(*src[e].second);
    return g;
}

inline std::size_t total_size(const ModelParams& p) {
    std::size_t n = 0;
    for (const auto& [name, t] : p.entries()) n += t->size();
    return n;
}

// Flat view in entries() order, row-major within each tensor.
inline std::vector<double> pack(const ModelParams& p) {
    std::vector<double> flat;
    flat.reserve(total_size(p));
    for (const auto& [name, t] : p.entries()) flat.insert(flat.end(), t->data().begin(), t->data().end());
    return flat;
}

inline void unpack(ModelParams& p, const std::vector<double>& flat) {
    if (flat.size() != total_size(p))
        throw ShapeError("unpack: flat vector has " + std::to_string(flat.size()) + " entries, parameters need " +
                         std::to_string(total_size(p)));
    std::size_t offset = 0;
    for (auto& [name, t] : p.entries()) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                  flat.begin() + static_cast<std::ptrdiff_t>(offset + t->size()), t->data().begin());
        offset += t->size();
    }
}

struct ParameterCount {
    std::size_t core = 0;
    std::size_t adapter = 0;
    double overhead_pct = 0.0;
};

// adapter = the attention projections (2 * L * T * d_h); core = everything else.
inline ParameterCount count_parameters(const ModelParams& p) {
    ParameterCount c;
    for (std::size_t l = 0; l < p.adapter.query.size(); ++l) c.adapter += p.adapter.query[l].size() + p.adapter.key[l].size();
    c.core = total_size(p) - c.adapter;
    c.overhead_pct = c.core == 0 ? 0.0 : 100.0 * static_cast<double>(c.adapter) / static_cast<double>(c.core);
    return c;
}

inline ParameterCount count_parameters(const ModelConfig& c) { return count_parameters(zero_params(c)); }

}  // namespace sdagrin
