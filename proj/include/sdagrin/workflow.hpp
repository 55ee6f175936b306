#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "sdagrin/adapter.hpp"
#include "sdagrin/checkpoint.hpp"
#include "sdagrin/config.hpp"
#include "sdagrin/csv.hpp"
#include "sdagrin/dataset.hpp"
#include "sdagrin/errors.hpp"
#include "sdagrin/experiments.hpp"
#include "sdagrin/graph.hpp"
#include "sdagrin/metrics.hpp"
#include "sdagrin/synth.hpp"
#include "sdagrin/trainer.hpp"

namespace sdagrin {

// The subcommands of the command-line tool, callable in-process. Each one writes its
// outputs plus `config.resolved` (format version, seeds, every effective key) into
// cfg.run.out.

struct PreparedData {
    TimeSeriesDataset raw;  // no eval mask yet
    StaticGraph graph;
    bool synthetic = false;
};

inline std::vector<Tensor2> synth_patterns(const SynthSection& s) {
    if (s.pattern == "pairs") return two_pairing_regimes(s.nodes);
    if (s.pattern == "cliques") return two_clique_regimes(s.nodes, s.group);
    if (s.pattern == "single") {
        // One regime repeated: the control benchmark.
        const Tensor2 p = pairing_pattern(s.nodes, false);
        return {p, p};
    }
    throw UsageError("synth.pattern must be pairs, cliques or single (got '" + s.pattern + "')");
}

inline RegimeVarSpec synth_spec(const SynthSection& s) {
    RegimeVarSpec spec;
    spec.nodes = s.nodes;
    spec.steps = s.steps;
    spec.regimes = synth_patterns(s);
    spec.switch_period = s.switch_period;
    spec.noise_scale = s.noise_scale;
    spec.decay = s.decay;
    spec.seed = s.seed;
    return spec;
}

inline DistanceMetric parse_metric(const std::string& name) {
    if (name == "haversine") return DistanceMetric::haversine_km;
    if (name == "euclidean") return DistanceMetric::euclidean;
    throw UsageError("data.distance must be haversine or euclidean (got '" + name + "')");
}

// Loads data.values (with coords/mask/adjacency), or simulates the [synth] benchmark when
// no values file is configured. The synthetic graph is the union of the regime patterns.
inline PreparedData prepare_data(const RunConfig& cfg) {
    if (cfg.data.values.empty()) {
        const RegimeVarSpec spec = synth_spec(cfg.synth);
        return {synth_regime_var(spec), union_graph(spec.regimes), true};
    }
    TimeSeriesDataset ds = load_csv(cfg.data.values, cfg.data.coords, cfg.data.mask);
    if (!cfg.data.adjacency.empty()) {
        Tensor2 a = read_adjacency_csv(cfg.data.adjacency, ds.ids);
        return {std::move(ds), StaticGraph(std::move(a)), false};
    }
    if (!ds.coords) throw UsageError("need data.adjacency or data.coords to build the static graph");
    StaticGraph g = build_static_adjacency(*ds.coords, cfg.data.threshold, parse_metric(cfg.data.distance), ds.ids);
    return {std::move(ds), std::move(g), false};
}

// Applies data.eval_mask when given, otherwise holds out train.missing_rate of the
// observed entries with the run's mask seed.
inline TimeSeriesDataset with_eval_mask(const RunConfig& cfg, const TimeSeriesDataset& raw) {
    if (!cfg.data.eval_mask.empty()) {
        TimeSeriesDataset ds = raw;
        apply_eval_mask_csv(ds, cfg.data.eval_mask);
        return ds;
    }
    return inject_missing(raw, cfg.train.missing_rate, derive_seed(cfg.train.seed, SeedStream::missing_mask));
}

namespace detail {

inline std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (std::filesystem::path(cfg.run.out) / name).string();
}

inline void begin_output(const RunConfig& cfg, const std::string& command) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.run.out, ec);
    if (ec) throw DataError("cannot create output directory " + cfg.run.out + ": " + ec.message());
    csv::write_file(out_path(cfg, "config.resolved"), "# command = " + command + "\n" + format_run_config(cfg));
}

inline std::string run_echo(const RunConfig& cfg, const std::string& command) {
    return "command = " + command + "\nformat_version = " + std::to_string(kRunFormatVersion) +
           "\nseed = " + std::to_string(cfg.train.seed) + "\n" + model_config_text(cfg.train.model) +
           train_config_text(cfg.train);
}

inline Split parse_split(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw UsageError("split must be train, val or test (got '" + name + "')");
}

}  // namespace detail

// synth: values.csv (fully observed), adjacency.csv (union of regime patterns) and
// regimes.csv (active regime per step).
inline void command_synth(const RunConfig& cfg) {
    detail::begin_output(cfg, "synth");
    const RegimeVarSpec spec = synth_spec(cfg.synth);
    const TimeSeriesDataset ds = synth_regime_var(spec);
    write_values_csv(ds, detail::out_path(cfg, "values.csv"));
    write_adjacency_csv(union_graph(spec.regimes).weights(), ds.ids, detail::out_path(cfg, "adjacency.csv"));
    std::string regimes = "timestamp,regime\n";
    for (std::size_t t = 0; t < spec.steps; ++t)
        regimes += ds.timestamps[t] + "," + std::to_string((t / spec.switch_period) % spec.regimes.size()) + "\n";
    csv::write_file(detail::out_path(cfg, "regimes.csv"), regimes);
}

// train: checkpoint.bin (best validation epoch), training_log.csv, eval_mask.csv.
// Returns the fit so callers can map divergence to an exit status.
inline FitResult command_train(const RunConfig& cfg) {
    detail::begin_output(cfg, "train");
    const PreparedData data = prepare_data(cfg);
    const TimeSeriesDataset ds = with_eval_mask(cfg, data.raw);
    write_mask_csv(ds, ds.eval, detail::out_path(cfg, "eval_mask.csv"));
    FitResult fr = fit(ds, data.graph, cfg.train);
    csv::write_file(detail::out_path(cfg, "training_log.csv"), format_training_log(fr.log));
    save_checkpoint(detail::out_path(cfg, "checkpoint.bin"), fr.model, fr.best, train_config_text(cfg.train));
    return fr;
}

// impute: filled.csv (visible entries copied, everything else imputed) and provenance.csv
// (1 = imputed, 0 = observed input).
inline void command_impute(const RunConfig& cfg) {
    if (cfg.run.checkpoint.empty()) throw UsageError("impute needs run.checkpoint");
    detail::begin_output(cfg, "impute");
    const Checkpoint ck = load_checkpoint(cfg.run.checkpoint);
    const PreparedData data = prepare_data(cfg);
    const TimeSeriesDataset ds = with_eval_mask(cfg, data.raw);
    if (ck.config.nodes != ds.variables())
        throw DataError("checkpoint has " + std::to_string(ck.config.nodes) + " nodes, data has " + std::to_string(ds.variables()));
    const Tensor2 pred = predict(ck.params, ck.config, ds, data.graph);
    Tensor2 filled(ds.steps(), ds.variables());
    Tensor2 imputed(ds.steps(), ds.variables());
    for (std::size_t t = 0; t < ds.steps(); ++t)
        for (std::size_t i = 0; i < ds.variables(); ++i) {
            const bool visible = ds.visible(t, i);
            filled(t, i) = visible ? ds.values(t, i) : pred(t, i);
            imputed(t, i) = visible ? 0.0 : 1.0;
        }
    csv::write_file(detail::out_path(cfg, "filled.csv"), format_series(ds, filled, nullptr));
    write_mask_csv(ds, imputed, detail::out_path(cfg, "provenance.csv"));
    write_mask_csv(ds, ds.eval, detail::out_path(cfg, "eval_mask.csv"));
}

// evaluate: metrics.csv for every split that has held-out entries.
inline std::vector<MetricReport> command_evaluate(const RunConfig& cfg) {
    if (cfg.run.predictions.empty()) throw UsageError("evaluate needs run.predictions (a filled CSV)");
    detail::begin_output(cfg, "evaluate");
    const PreparedData data = prepare_data(cfg);
    const TimeSeriesDataset ds = with_eval_mask(cfg, data.raw);
    const TimeSeriesDataset filled = load_csv(cfg.run.predictions);
    if (filled.ids != ds.ids || filled.timestamps != ds.timestamps)
        throw DataError(cfg.run.predictions + ": ids or timestamps differ from the dataset");
    for (std::size_t k = 0; k < ds.eval.size(); ++k)
        if (ds.eval[k] != 0.0 && filled.observed[k] == 0.0) throw DataError(cfg.run.predictions + ": held-out cell left empty");
    std::string out = comment_block(detail::run_echo(cfg, "evaluate"));
    out += "split,n_scored,mae,mse,mre_pct,seed\n";
    std::vector<MetricReport> reports;
    for (Split s : {Split::train, Split::val, Split::test}) {
        MetricReport r;
        try {
            r = score_split(ds, filled.values, s);
        } catch (const EmptySelectionError&) {
            continue;
        }
        r.seed = cfg.train.seed;
        reports.push_back(r);
        out += std::string(split_name(s)) + "," + std::to_string(r.n_scored) + "," + csv::format_double(r.mae) + "," +
               csv::format_double(r.mse) + "," + csv::format_double(r.mre_pct) + "," + std::to_string(r.seed) + "\n";
    }
    csv::write_file(detail::out_path(cfg, "metrics.csv"), out);
    return reports;
}

// ablate: static.csv (dynamic vs static graph per seed) or sweep_<axis>.csv.
inline void command_ablate(const RunConfig& cfg) {
    detail::begin_output(cfg, "ablate");
    const PreparedData data = prepare_data(cfg);
    const std::string echo = detail::run_echo(cfg, "ablate");
    if (cfg.ablate.mode == "static") {
        const AblationResult r = static_ablation(data.raw, data.graph, cfg.train, cfg.ablate.repeats);
        csv::write_file(detail::out_path(cfg, "static.csv"), format_ablation(r, echo));
        return;
    }
    SweepAxis axis;
    if (cfg.ablate.mode == "window") axis = SweepAxis::window;
    else if (cfg.ablate.mode == "missing") axis = SweepAxis::missing;
    else if (cfg.ablate.mode == "heads") axis = SweepAxis::heads;
    else throw UsageError("ablate.mode must be static, window, missing or heads (got '" + cfg.ablate.mode + "')");
    std::vector<double> values = parse_value_list(cfg.ablate.values);
    if (values.empty()) values = default_axis_values(axis);
    const auto rows = sweep(data.raw, data.graph, cfg.train, axis, values, cfg.ablate.repeats);
    csv::write_file(detail::out_path(cfg, std::string("sweep_") + axis_name(axis) + ".csv"),
                    format_sweep(rows, axis, cfg.ablate.repeats, echo));
}

// diagnose: volatility.csv on the raw observed values.
inline VolatilityProfile command_diagnose(const RunConfig& cfg) {
    detail::begin_output(cfg, "diagnose");
    const PreparedData data = prepare_data(cfg);
    const std::size_t length = cfg.diagnose.window == 0 ? cfg.train.model.window : cfg.diagnose.window;
    const VolatilityProfile p = volatility_profile(data.raw, length, detail::parse_split(cfg.diagnose.split));
    csv::write_file(detail::out_path(cfg, "volatility.csv"),
                    format_volatility(p, detail::run_echo(cfg, "diagnose") + "window_length = " + std::to_string(length) +
                                             "\nsplit = " + cfg.diagnose.split + "\n"));
    return p;
}

// export-graphs: static_adjacency.csv plus adapted_<index>_t<start>.csv for the first
// export.max_windows windows of the split (same tiling as prediction).
inline std::size_t command_export_graphs(const RunConfig& cfg) {
    if (cfg.run.checkpoint.empty()) throw UsageError("export-graphs needs run.checkpoint");
    detail::begin_output(cfg, "export-graphs");
    const Checkpoint ck = load_checkpoint(cfg.run.checkpoint);
    const PreparedData data = prepare_data(cfg);
    const TimeSeriesDataset ds = with_eval_mask(cfg, data.raw);
    write_adjacency_csv(data.graph.weights(), ds.ids, detail::out_path(cfg, "static_adjacency.csv"));
    const Split split = detail::parse_split(cfg.export_graphs.split);
    const auto starts = covering_starts(ds.range(split), ck.config.window);
    std::size_t written = 0;
    std::string index = "index,start,empty_rows\n";
    for (std::size_t k = 0; k < starts.size() && written < cfg.export_graphs.max_windows; ++k, ++written) {
        const WindowBatch w = window_at(ds, starts[k], ck.config.window);
        const AdaptedGraph g = adapt_window(w.x, ck.params, data.graph, starts[k]);
        write_adjacency_csv(g.a_star, ds.ids,
                            detail::out_path(cfg, "adapted_" + std::to_string(k) + "_t" + std::to_string(starts[k]) + ".csv"));
        std::string empty;
        for (std::size_t r : g.empty_rows) empty += (empty.empty() ? "" : " ") + ds.ids[r];
        index += std::to_string(k) + "," + std::to_string(starts[k]) + "," + empty + "\n";
    }
    csv::write_file(detail::out_path(cfg, "adapted_index.csv"), index);
    return written;
}

}  // namespace sdagrin
