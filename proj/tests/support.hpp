#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "sdagrin/autodiff.hpp"
#include "sdagrin/dataset.hpp"
#include "sdagrin/graph.hpp"
#include "sdagrin/params.hpp"
#include "sdagrin/rng.hpp"
#include "sdagrin/synth.hpp"
#include "sdagrin/trainer.hpp"
#include "sdagrin/tensor.hpp"

namespace testing_support {

using sdagrin::Tensor2;

inline Tensor2 random_tensor(sdagrin::Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
    Tensor2 t(r, c);
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

inline Tensor2 random_mask(sdagrin::Rng& rng, std::size_t r, std::size_t c, double p_missing) {
    Tensor2 m(r, c);
    for (auto& v : m.data()) v = rng.bernoulli(p_missing) ? 0.0 : 1.0;
    return m;
}

// Window with missing entries zeroed, as the dataset layer produces them.
inline sdagrin::WindowBatch random_window(sdagrin::Rng& rng, std::size_t n, std::size_t steps, double p_missing = 0.3) {
    sdagrin::WindowBatch w;
    w.truth = random_tensor(rng, n, steps, -2.0, 2.0);
    w.mask = random_mask(rng, n, steps, p_missing);
    w.mask(0, 0) = 1.0;  // keep at least one visible entry
    w.x = Tensor2(n, steps);
    for (std::size_t k = 0; k < w.x.size(); ++k) w.x[k] = w.mask[k] * w.truth[k];
    w.eval = Tensor2(n, steps);
    w.start = 0;
    return w;
}

// Symmetric random support with self-loops and a ring so no row is empty.
inline sdagrin::StaticGraph random_graph(sdagrin::Rng& rng, std::size_t n, double p_edge = 0.4) {
    Tensor2 a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        a(i, i) = 1.0;
        a(i, (i + 1) % n) = a((i + 1) % n, i) = rng.uniform(0.2, 1.0);
        for (std::size_t j = i + 2; j < n; ++j)
            if (rng.bernoulli(p_edge)) a(i, j) = a(j, i) = rng.uniform(0.1, 1.0);
    }
    return sdagrin::StaticGraph(std::move(a));
}

inline sdagrin::ModelConfig small_config(std::size_t n, std::size_t steps, std::size_t heads = 1) {
    sdagrin::ModelConfig c;
    c.nodes = n;
    c.window = steps;
    c.heads = heads;
    c.head_dim = 3;
    c.state_dim = 4;
    c.spatial_dim = 3;
    c.diffusion_order = 2;
    c.fusion_hidden = 5;
    return c;
}

// Max relative error between analytic gradients and central differences of `f` over all
// entries of `params`; relative to max(|fd|, |analytic|, floor).
inline double max_fd_error(Tensor2& param, const Tensor2& analytic, const std::function<double()>& f, double h = 1e-5,
                           double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t k = 0; k < param.size(); ++k) {
        const double saved = param[k];
        param[k] = saved + h;
        const double up = f();
        param[k] = saved - h;
        const double down = f();
        param[k] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::fabs(fd), std::fabs(analytic[k]), floor});
        worst = std::max(worst, std::fabs(fd - analytic[k]) / denom);
    }
    return worst;
}

// Fresh scratch directory under the build tree's temp area.
inline std::string scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("sdagrin_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

// Small regime-switching benchmark with its union graph.
struct TinyBenchmark {
    sdagrin::TimeSeriesDataset raw;
    sdagrin::StaticGraph graph;
};

inline TinyBenchmark tiny_benchmark(std::size_t nodes = 6, std::size_t steps = 1600, std::uint64_t seed = 31) {
    sdagrin::RegimeVarSpec spec;
    spec.nodes = nodes;
    spec.steps = steps;
    spec.regimes = sdagrin::two_pairing_regimes(nodes);
    spec.switch_period = 32;
    spec.noise_scale = 1.0;
    spec.seed = seed;
    return {sdagrin::synth_regime_var(spec), sdagrin::union_graph(spec.regimes)};
}

inline sdagrin::TrainConfig tiny_train_config(std::size_t heads = 1) {
    sdagrin::TrainConfig c;
    c.model.window = 16;
    c.model.heads = heads;
    c.model.head_dim = 4;
    c.model.state_dim = 6;
    c.model.spatial_dim = 6;
    c.model.fusion_hidden = 6;
    c.learning_rate = 5e-3;
    c.max_epochs = 3;
    c.patience = 3;
    c.seed = 1;
    c.log_timing = false;
    return c;
}

}  // namespace testing_support
