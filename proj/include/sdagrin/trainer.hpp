#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sdagrin/autodiff.hpp"
#include "sdagrin/checkpoint.hpp"
#include "sdagrin/csv.hpp"
#include "sdagrin/dataset.hpp"
#include "sdagrin/errors.hpp"
#include "sdagrin/graph.hpp"
#include "sdagrin/imputer.hpp"
#include "sdagrin/metrics.hpp"
#include "sdagrin/params.hpp"
#include "sdagrin/rng.hpp"

namespace sdagrin {

struct TrainConfig {
    ModelConfig model;            // model.nodes is taken from the data when 0
    double learning_rate = 1e-3;
    std::size_t batch_size = 1;   // windows whose gradients are averaged per Adam step
    std::size_t max_epochs = 100;
    std::size_t patience = 25;
    std::uint64_t seed = 0;
    double missing_rate = 0.25;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool log_timing = true;       // false writes 0 in the seconds column

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ContractError("train config: learning_rate must be >= 0");
        if (batch_size == 0) throw ContractError("train config: batch_size must be positive");
        if (max_epochs == 0) throw ContractError("train config: max_epochs must be positive");
        if (patience == 0 || patience > max_epochs) throw ContractError("train config: patience must lie in [1, max_epochs]");
        if (!(missing_rate > 0.0 && missing_rate < 1.0)) throw ContractError("train config: missing_rate must lie in (0, 1)");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
            throw ContractError("train config: invalid Adam hyperparameters");
    }
};

// Independent seeds for the different random consumers of one run.
enum class SeedStream : std::uint64_t { missing_mask = 0, init = 1, shuffle = 2 };

inline std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream) {
    return Rng::splitmix64(seed ^ Rng::splitmix64(static_cast<std::uint64_t>(stream) + 0x5851f42d4c957f2dULL));
}

// ---- Adam ----------------------------------------------------------------------------

struct AdamState {
    ModelParams m;
    ModelParams v;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState like(const ModelParams& p, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8) {
        AdamState s;
        s.m = p;
        s.v = p;
        for (auto& [name, t] : s.m.entries()) t->fill(0.0);
        for (auto& [name, t] : s.v.entries()) t->fill(0.0);
        s.beta1 = beta1;
        s.beta2 = beta2;
        s.epsilon = epsilon;
        return s;
    }
};

// Bias-corrected Adam update. Gradients are checked before anything is modified.
inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr) {
    auto p = params.entries();
    auto g = grads.entries();
    auto m = state.m.entries();
    auto v = state.v.entries();
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
        throw ShapeError("adam_step: parameter, gradient and moment sets differ");
    for (std::size_t e = 0; e < p.size(); ++e) {
        if (!g[e].second->same_shape(*p[e].second) || !m[e].second->same_shape(*p[e].second))
            throw ShapeError("adam_step: shape mismatch for '" + p[e].first + "'");
        if (!g[e].second->all_finite())
            throw DivergenceError("non-finite gradient for parameter '" + p[e].first + "'", static_cast<long>(state.step));
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t e = 0; e < p.size(); ++e) {
        auto pd = p[e].second->data();
        auto gd = g[e].second->data();
        auto md = m[e].second->data();
        auto vd = v[e].second->data();
        for (std::size_t k = 0; k < pd.size(); ++k) {
            md[k] = state.beta1 * md[k] + (1.0 - state.beta1) * gd[k];
            vd[k] = state.beta2 * vd[k] + (1.0 - state.beta2) * gd[k] * gd[k];
            const double mhat = md[k] / c1;
            const double vhat = vd[k] / c2;
            pd[k] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

// ---- prediction ----------------------------------------------------------------------

// Raw-scale final imputations (steps x variables) for the rows of the given splits; other
// rows are 0. Each split is tiled with covering_starts(); where the end-aligned last
// window overlaps its predecessor, the earlier window's values are kept.
inline Tensor2 predict(const ModelParams& params, const ModelConfig& cfg, const TimeSeriesDataset& ds, const StaticGraph& graph,
                       const std::vector<Split>& splits = {Split::train, Split::val, Split::test}) {
    Tensor2 pred(ds.steps(), ds.variables());
    for (Split s : splits) {
        const TimeRange& r = ds.range(s);
        const auto starts = covering_starts(r, cfg.window);
        if (starts.empty())
            throw DataError(std::string("predict: window ") + std::to_string(cfg.window) + " exceeds " + split_name(s) + " split");
        std::size_t covered_until = r.begin;
        for (std::size_t start : starts) {
            const WindowBatch w = window_at(ds, start, cfg.window);
            const ImputationOutput out = impute_window(params, w, graph, cfg);
            for (std::size_t j = 0; j < cfg.window; ++j) {
                const std::size_t t = start + j;
                if (t < covered_until) continue;
                for (std::size_t i = 0; i < ds.variables(); ++i) pred(t, i) = ds.destandardize(i, out.final(i, j));
            }
            covered_until = start + cfg.window;
        }
    }
    return pred;
}

// ---- fit -----------------------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_mae = 0.0;
    double seconds = 0.0;
};

struct TrainingLog {
    std::string header;  // comment lines written above the CSV table
    std::vector<EpochRecord> epochs;
};

inline std::string format_training_log(const TrainingLog& log) {
    std::string out = log.header;
    out += "epoch,train_loss,val_mae,seconds\n";
    for (const auto& e : log.epochs) {
        out += std::to_string(e.epoch) + "," + csv::format_double(e.train_loss) + "," + csv::format_double(e.val_mae) + "," +
               csv::format_double(e.seconds) + "\n";
    }
    return out;
}

struct FitResult {
    ModelParams best;
    ModelParams initial;
    ModelConfig model;
    TrainingLog log;
    std::size_t best_epoch = 0;  // 0 = no epoch completed
    double best_val_mae = std::numeric_limits<double>::infinity();
    bool diverged = false;
    std::string message;
};

inline std::string train_config_text(const TrainConfig& c) {
    std::ostringstream os;
    os << "learning_rate = " << csv::format_double(c.learning_rate) << "\n"
       << "batch_size = " << c.batch_size << "\n"
       << "max_epochs = " << c.max_epochs << "\n"
       << "patience = " << c.patience << "\n"
       << "seed = " << c.seed << "\n"
       << "missing_rate = " << csv::format_double(c.missing_rate) << "\n"
       << "beta1 = " << csv::format_double(c.beta1) << "\n"
       << "beta2 = " << csv::format_double(c.beta2) << "\n"
       << "epsilon = " << csv::format_double(c.epsilon) << "\n";
    return os.str();
}

inline ModelConfig resolve_model(const TrainConfig& cfg, const TimeSeriesDataset& ds) {
    ModelConfig m = cfg.model;
    if (m.nodes == 0) m.nodes = ds.variables();
    if (m.nodes != ds.variables())
        throw DataError("model expects " + std::to_string(m.nodes) + " nodes, dataset has " + std::to_string(ds.variables()));
    m.validate();
    return m;
}

// Accumulated loss and gradient for one window.
inline double window_gradient(const ModelParams& params, const WindowBatch& w, const StaticGraph& graph, const ModelConfig& cfg,
                              ModelParams& grad_acc) {
    Tape tape;
    BoundParams b = bind(tape, params);
    const ImputationTrace tr = forward_window(tape, w, b, graph, cfg);
    Var loss = training_loss(tr, w);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) throw DivergenceError("training loss became non-finite", static_cast<long>(w.start));
    tape.backward(loss);
    auto dst = grad_acc.entries();
    auto src = b.entries();
    for (std::size_t e = 0; e < src.size(); ++e) {
        const Tensor2 g = tape.grad(*src[e].second);
        auto d = dst[e].second->data();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] += g[k];
    }
    return value;
}

// Adam over shuffled training windows with early stopping on validation MAE (raw scale,
// eval positions of the val split). `ds` must already carry its eval mask.
inline FitResult fit(const TimeSeriesDataset& ds, const StaticGraph& graph, const TrainConfig& cfg) {
    cfg.validate();
    const ModelConfig model = resolve_model(cfg, ds);
    if (graph.nodes() != model.nodes) throw DataError("static graph size does not match the dataset");
    const std::vector<WindowBatch> train_windows = windows(ds, model.window, model.window, Split::train);
    if (model.window > ds.val.length()) throw DataError("fit: window exceeds the validation split");
    {
        const Tensor2 val_eval = split_eval_mask(ds, Split::val);
        bool any = false;
        for (double v : val_eval.data()) any = any || v != 0.0;
        if (!any) throw DataError("fit: validation split has no held-out entries");
    }

    FitResult res;
    res.model = model;
    res.initial = init_params(model, derive_seed(cfg.seed, SeedStream::init));
    res.best = res.initial;
    {
        std::ostringstream h;
        h << "# optimizer = adam beta1=" << csv::format_double(cfg.beta1) << " beta2=" << csv::format_double(cfg.beta2)
          << " epsilon=" << csv::format_double(cfg.epsilon) << "\n";
        h << "# learning_rate = " << csv::format_double(cfg.learning_rate) << "\n";
        h << "# seed = " << cfg.seed << "\n";
        std::istringstream mt(model_config_text(model));
        for (std::string line; std::getline(mt, line);) h << "# " << line << "\n";
        res.log.header = h.str();
    }

    ModelParams params = res.initial;
    AdamState adam = AdamState::like(params, cfg.beta1, cfg.beta2, cfg.epsilon);
    Rng shuffle_rng(derive_seed(cfg.seed, SeedStream::shuffle));
    std::vector<std::size_t> order(train_windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::size_t since_best = 0;
    try {
        for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
            const auto t0 = std::chrono::steady_clock::now();
            shuffle_rng.shuffle(order);
            ModelParams grad_acc = zero_params(model);
            std::size_t in_batch = 0;
            double loss_sum = 0.0;
            for (std::size_t k = 0; k < order.size(); ++k) {
                loss_sum += window_gradient(params, train_windows[order[k]], graph, model, grad_acc);
                ++in_batch;
                if (in_batch == cfg.batch_size || k + 1 == order.size()) {
                    const double inv = 1.0 / static_cast<double>(in_batch);
                    for (auto& [name, t] : grad_acc.entries())
                        for (auto& v : t->data()) v *= inv;
                    adam_step(params, grad_acc, adam, cfg.learning_rate);
                    for (auto& [name, t] : grad_acc.entries()) t->fill(0.0);
                    in_batch = 0;
                }
            }
            const Tensor2 pred = predict(params, model, ds, graph, {Split::val});
            const double val_mae = score_split(ds, pred, Split::val).mae;
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            res.log.epochs.push_back({epoch, loss_sum / static_cast<double>(order.size()), val_mae, cfg.log_timing ? secs : 0.0});
            if (!std::isfinite(val_mae)) throw DivergenceError("validation MAE became non-finite", static_cast<long>(epoch));
            if (val_mae < res.best_val_mae) {
                res.best_val_mae = val_mae;
                res.best = params;
                res.best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    } catch (const DivergenceError& e) {
        res.diverged = true;
        res.message = e.what();
    }
    return res;
}

}  // namespace sdagrin
