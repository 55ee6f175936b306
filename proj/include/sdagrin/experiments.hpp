#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sdagrin/csv.hpp"
#include "sdagrin/dataset.hpp"
#include "sdagrin/errors.hpp"
#include "sdagrin/graph.hpp"
#include "sdagrin/metrics.hpp"
#include "sdagrin/params.hpp"
#include "sdagrin/trainer.hpp"

namespace sdagrin {

// One masked fit on a fully prepared raw dataset, scored on the test split.
struct RunOutcome {
    MetricReport model;
    MetricReport mean_baseline;
    std::size_t best_epoch = 0;
    bool diverged = false;
    ParameterCount params;
};

// Holds out cfg.missing_rate of the observed entries (seeded from cfg.seed), trains, and
// scores the final imputations on the test split.
inline RunOutcome run_once(const TimeSeriesDataset& raw, const StaticGraph& graph, const TrainConfig& cfg) {
    const TimeSeriesDataset ds = inject_missing(raw, cfg.missing_rate, derive_seed(cfg.seed, SeedStream::missing_mask));
    const FitResult fr = fit(ds, graph, cfg);
    RunOutcome out;
    out.best_epoch = fr.best_epoch;
    out.diverged = fr.diverged;
    out.params = count_parameters(fr.best);
    const Tensor2 pred = predict(fr.best, fr.model, ds, graph, {Split::test});
    out.model = score_split(ds, pred, Split::test);
    out.model.seed = cfg.seed;
    out.mean_baseline = score_split(ds, mean_baseline(ds), Split::test);
    out.mean_baseline.seed = cfg.seed;
    return out;
}

struct Summary {
    double mean = 0.0;
    double stdev = 0.0;  // population std over repeats
};

inline Summary summarize(const std::vector<double>& v) {
    Summary s;
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    double q = 0.0;
    for (double x : v) q += (x - s.mean) * (x - s.mean);
    s.stdev = std::sqrt(q / static_cast<double>(v.size()));
    return s;
}

// ---- sweeps --------------------------------------------------------------------------

enum class SweepAxis { window, missing, heads };

inline const char* axis_name(SweepAxis a) {
    switch (a) {
        case SweepAxis::window: return "window";
        case SweepAxis::missing: return "missing_rate";
        case SweepAxis::heads: return "heads";
    }
    return "?";
}

inline std::vector<double> default_axis_values(SweepAxis a) {
    switch (a) {
        case SweepAxis::window: return {32, 64, 128, 256};
        case SweepAxis::missing: return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
        case SweepAxis::heads: return {1, 2, 3, 4};
    }
    return {};
}

struct SweepRow {
    double value = 0.0;
    bool feasible = true;
    std::string note;
    std::vector<RunOutcome> runs;  // one per repeat, seeds base, base+1, ...
    Summary mae, mse, mre_pct, mean_mae;
};

inline TrainConfig with_axis(TrainConfig cfg, SweepAxis axis, double value) {
    switch (axis) {
        case SweepAxis::window: cfg.model.window = static_cast<std::size_t>(value); break;
        case SweepAxis::missing: cfg.missing_rate = value; break;
        case SweepAxis::heads: cfg.model.heads = static_cast<std::size_t>(value); break;
    }
    return cfg;
}

inline std::size_t shortest_split(const TimeSeriesDataset& ds) {
    return std::min({ds.train.length(), ds.val.length(), ds.test.length()});
}

inline SweepRow sweep_cell(const TimeSeriesDataset& raw, const StaticGraph& graph, const TrainConfig& base, SweepAxis axis,
                           double value, std::size_t repeats) {
    SweepRow row;
    row.value = value;
    const TrainConfig cfg = with_axis(base, axis, value);
    if (cfg.model.window > shortest_split(raw)) {
        row.feasible = false;
        row.note = "window " + std::to_string(cfg.model.window) + " exceeds shortest split (" +
                   std::to_string(shortest_split(raw)) + " steps)";
        return row;
    }
    std::vector<double> mae, mse, mre, base_mae;
    for (std::size_t r = 0; r < repeats; ++r) {
        TrainConfig c = cfg;
        c.seed = base.seed + r;
        row.runs.push_back(run_once(raw, graph, c));
        mae.push_back(row.runs.back().model.mae);
        mse.push_back(row.runs.back().model.mse);
        mre.push_back(row.runs.back().model.mre_pct);
        base_mae.push_back(row.runs.back().mean_baseline.mae);
    }
    row.mae = summarize(mae);
    row.mse = summarize(mse);
    row.mre_pct = summarize(mre);
    row.mean_mae = summarize(base_mae);
    return row;
}

// Every other hyperparameter stays at `base`. Infeasible cells are kept as marked rows.
inline std::vector<SweepRow> sweep(const TimeSeriesDataset& raw, const StaticGraph& graph, const TrainConfig& base, SweepAxis axis,
                                   const std::vector<double>& values, std::size_t repeats = 5) {
    if (repeats == 0) throw ContractError("sweep: repeats must be positive");
    std::vector<SweepRow> rows;
    for (double v : values) rows.push_back(sweep_cell(raw, graph, base, axis, v, repeats));
    return rows;
}

inline std::string comment_block(const std::string& text) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        const std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        out += "# " + line + "\n";
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    return out;
}

inline std::string format_sweep(const std::vector<SweepRow>& rows, SweepAxis axis, std::size_t repeats, const std::string& echo) {
    std::string out = comment_block(echo);
    out += "# repeats = " + std::to_string(repeats) + " (seeds seed..seed+repeats-1), std is the population std\n";
    out += std::string(axis_name(axis)) + ",status,mae_mean,mae_std,mse_mean,mse_std,mre_pct_mean,mre_pct_std,mean_baseline_mae\n";
    for (const auto& r : rows) {
        out += csv::format_double(r.value) + ",";
        if (!r.feasible) {
            out += "infeasible,,,,,,,\n";
            continue;
        }
        out += "ok," + csv::format_double(r.mae.mean) + "," + csv::format_double(r.mae.stdev) + "," + csv::format_double(r.mse.mean) +
               "," + csv::format_double(r.mse.stdev) + "," + csv::format_double(r.mre_pct.mean) + "," +
               csv::format_double(r.mre_pct.stdev) + "," + csv::format_double(r.mean_mae.mean) + "\n";
    }
    return out;
}

// ---- static-graph ablation -----------------------------------------------------------

struct AblationResult {
    std::vector<RunOutcome> dynamic, fixed;  // paired by seed
    Summary dynamic_mae, fixed_mae, mean_mae;
};

// Two models per seed, identical except that the ablated one has no attention heads and
// uses the row-normalized static graph in every window.
inline AblationResult static_ablation(const TimeSeriesDataset& raw, const StaticGraph& graph, const TrainConfig& cfg,
                                      std::size_t repeats = 5) {
    if (repeats == 0) throw ContractError("static_ablation: repeats must be positive");
    if (cfg.model.heads == 0) throw ContractError("static_ablation: the dynamic model needs at least one head");
    AblationResult res;
    std::vector<double> d, s, m;
    for (std::size_t r = 0; r < repeats; ++r) {
        TrainConfig dyn = cfg;
        dyn.seed = cfg.seed + r;
        TrainConfig fixed = dyn;
        fixed.model.heads = 0;
        res.dynamic.push_back(run_once(raw, graph, dyn));
        res.fixed.push_back(run_once(raw, graph, fixed));
        d.push_back(res.dynamic.back().model.mae);
        s.push_back(res.fixed.back().model.mae);
        m.push_back(res.dynamic.back().mean_baseline.mae);
    }
    res.dynamic_mae = summarize(d);
    res.fixed_mae = summarize(s);
    res.mean_mae = summarize(m);
    return res;
}

inline std::string format_ablation(const AblationResult& a, const std::string& echo) {
    std::string out = comment_block(echo);
    out += "seed,model,mae,mse,mre_pct,adapter_params,overhead_pct\n";
    auto line = [&](const RunOutcome& r, const char* name, const MetricReport& m) {
        out += std::to_string(m.seed) + "," + name + "," + csv::format_double(m.mae) + "," + csv::format_double(m.mse) + "," +
               csv::format_double(m.mre_pct) + "," + std::to_string(r.params.adapter) + "," +
               csv::format_double(r.params.overhead_pct) + "\n";
    };
    for (std::size_t k = 0; k < a.dynamic.size(); ++k) {
        line(a.dynamic[k], "dynamic", a.dynamic[k].model);
        line(a.fixed[k], "static", a.fixed[k].model);
        line(a.dynamic[k], "mean", a.dynamic[k].mean_baseline);
    }
    out += "# summary mae mean/std: dynamic " + csv::format_double(a.dynamic_mae.mean) + " / " +
           csv::format_double(a.dynamic_mae.stdev) + ", static " + csv::format_double(a.fixed_mae.mean) + " / " +
           csv::format_double(a.fixed_mae.stdev) + ", mean " + csv::format_double(a.mean_mae.mean) + " / " +
           csv::format_double(a.mean_mae.stdev) + "\n";
    return out;
}

inline std::string format_report(const MetricReport& r, const std::string& split, const std::string& echo) {
    std::string out = comment_block(echo);
    out += "split,n_scored,mae,mse,mre_pct,seed\n";
    out += split + "," + std::to_string(r.n_scored) + "," + csv::format_double(r.mae) + "," + csv::format_double(r.mse) + "," +
           csv::format_double(r.mre_pct) + "," + std::to_string(r.seed) + "\n";
    return out;
}

inline std::string format_volatility(const VolatilityProfile& p, const std::string& echo) {
    std::string out = comment_block(echo);
    out += "# relative MSE normalized by the pooled variance of observed train values: " + csv::format_double(p.normalizer) + "\n";
    out += "# pairs use only steps where both variables are observed\n";
    for (std::size_t w : p.skipped) out += "# skipped window " + std::to_string(w) + ": no pair with common observations\n";
    out += "window,start,mean,std,pairs\n";
    for (const auto& v : p.points)
        out += std::to_string(v.window_index) + "," + std::to_string(v.start) + "," + csv::format_double(v.mean) + "," +
               csv::format_double(v.stdev) + "," + std::to_string(v.pairs) + "\n";
    return out;
}

}  // namespace sdagrin
