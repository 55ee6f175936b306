#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "sdagrin/checkpoint.hpp"
#include "sdagrin/experiments.hpp"
#include "sdagrin/trainer.hpp"
#include "support.hpp"

using namespace sdagrin;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ModelParams single_scalar_like(const ModelConfig& c, double value) {
    ModelParams p = zero_params(c);
    for (auto& [name, t] : p.entries()) t->fill(value);
    return p;
}

}  // namespace

TEST(Adam, HandComputedSteps) {
    const ModelConfig c = testing_support::small_config(2, 3, 1);
    ModelParams p = single_scalar_like(c, 1.0);
    const ModelParams g = single_scalar_like(c, 0.5);
    AdamState s = AdamState::like(p);
    adam_step(p, g, s, 0.1);
    // m = 0.05, v = 0.00025; bias-corrected m = 0.5, v = 0.25.
    const double first = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
    for (const auto& [name, t] : p.entries())
        for (double v : t->data()) EXPECT_DOUBLE_EQ(v, first);
    const ModelParams g2 = single_scalar_like(c, -1.0);
    adam_step(p, g2, s, 0.1);
    const double m = 0.9 * 0.05 + 0.1 * -1.0, v = 0.999 * 0.00025 + 0.001 * 1.0;
    const double mhat = m / (1.0 - 0.81), vhat = v / (1.0 - 0.999 * 0.999);
    for (const auto& [name, t] : p.entries())
        for (double x : t->data()) EXPECT_NEAR(x, first - 0.1 * mhat / (std::sqrt(vhat) + 1e-8), 1e-15);
    EXPECT_EQ(s.step, 2u);
}

TEST(Adam, ZeroLearningRateLeavesParameters) {
    const ModelConfig c = testing_support::small_config(2, 3, 1);
    ModelParams p = init_params(c, 1);
    const ModelParams before = p;
    AdamState s = AdamState::like(p);
    adam_step(p, single_scalar_like(c, 3.0), s, 0.0);
    EXPECT_EQ(pack(p), pack(before));
}

TEST(Adam, NonFiniteGradientIsRejectedBeforeUpdate) {
    const ModelConfig c = testing_support::small_config(2, 3, 1);
    ModelParams p = init_params(c, 1);
    const ModelParams before = p;
    ModelParams g = single_scalar_like(c, 0.1);
    g.fusion.b2(0, 0) = std::numeric_limits<double>::quiet_NaN();
    AdamState s = AdamState::like(p);
    EXPECT_THROW(adam_step(p, g, s, 0.1), DivergenceError);
    EXPECT_EQ(pack(p), pack(before));
    EXPECT_EQ(s.step, 0u);
}

TEST(DeriveSeed, StreamsAreDistinctAndStable) {
    EXPECT_NE(derive_seed(5, SeedStream::init), derive_seed(5, SeedStream::shuffle));
    EXPECT_NE(derive_seed(5, SeedStream::init), derive_seed(6, SeedStream::init));
    EXPECT_EQ(derive_seed(5, SeedStream::missing_mask), derive_seed(5, SeedStream::missing_mask));
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    c.learning_rate = -1.0;
    EXPECT_THROW(c.validate(), ContractError);
    c = TrainConfig{};
    c.patience = c.max_epochs + 1;
    EXPECT_THROW(c.validate(), ContractError);
    c = TrainConfig{};
    c.missing_rate = 1.0;
    EXPECT_THROW(c.validate(), ContractError);
    c = TrainConfig{};
    c.learning_rate = 0.0;
    EXPECT_NO_THROW(c.validate());
}

TEST(Fit, ZeroLearningRateStopsAfterPatience) {
    const auto bench = testing_support::tiny_benchmark();
    TrainConfig cfg = testing_support::tiny_train_config();
    cfg.learning_rate = 0.0;
    cfg.max_epochs = 10;
    cfg.patience = 1;
    const TimeSeriesDataset ds = inject_missing(bench.raw, cfg.missing_rate, derive_seed(cfg.seed, SeedStream::missing_mask));
    const FitResult r = fit(ds, bench.graph, cfg);
    ASSERT_EQ(r.log.epochs.size(), 2u);
    EXPECT_EQ(r.best_epoch, 1u);
    EXPECT_EQ(r.log.epochs[0].val_mae, r.log.epochs[1].val_mae);
    EXPECT_EQ(pack(r.best), pack(r.initial));
    EXPECT_FALSE(r.diverged);
}

TEST(Fit, DeterministicUnderSeed) {
    const auto bench = testing_support::tiny_benchmark();
    TrainConfig cfg = testing_support::tiny_train_config();
    cfg.max_epochs = 2;
    cfg.patience = 2;
    const TimeSeriesDataset ds = inject_missing(bench.raw, cfg.missing_rate, derive_seed(cfg.seed, SeedStream::missing_mask));
    const FitResult a = fit(ds, bench.graph, cfg);
    const FitResult b = fit(ds, bench.graph, cfg);
    EXPECT_EQ(format_training_log(a.log), format_training_log(b.log));
    EXPECT_EQ(serialize_checkpoint(a.model, a.best), serialize_checkpoint(b.model, b.best));
    cfg.seed = 2;
    const FitResult c = fit(ds, bench.graph, cfg);
    EXPECT_NE(pack(c.best), pack(a.best));
}

TEST(Fit, BeatsMeanBaselineOnTinyBenchmark) {
    const auto bench = testing_support::tiny_benchmark();
    TrainConfig cfg = testing_support::tiny_train_config();
    const RunOutcome o = run_once(bench.raw, bench.graph, cfg);
    EXPECT_FALSE(o.diverged);
    EXPECT_LT(o.model.mae, o.mean_baseline.mae);
}

TEST(Fit, DivergenceKeepsBestSoFar) {
    const auto bench = testing_support::tiny_benchmark();
    TrainConfig cfg = testing_support::tiny_train_config();
    cfg.learning_rate = 1e300;
    const TimeSeriesDataset ds = inject_missing(bench.raw, cfg.missing_rate, derive_seed(cfg.seed, SeedStream::missing_mask));
    const FitResult r = fit(ds, bench.graph, cfg);
    EXPECT_TRUE(r.diverged);
    EXPECT_FALSE(r.message.empty());
    for (double v : pack(r.best)) EXPECT_TRUE(std::isfinite(v));
    if (r.best_epoch == 0) EXPECT_EQ(pack(r.best), pack(r.initial));
}

TEST(Fit, DataErrors) {
    const auto bench = testing_support::tiny_benchmark();
    TrainConfig cfg = testing_support::tiny_train_config();
    const TimeSeriesDataset ds = inject_missing(bench.raw, cfg.missing_rate, 1);
    cfg.model.window = 400;  // longer than the validation split
    EXPECT_THROW(fit(ds, bench.graph, cfg), DataError);
    cfg = testing_support::tiny_train_config();
    cfg.model.nodes = 5;
    EXPECT_THROW(fit(ds, bench.graph, cfg), DataError);
    cfg = testing_support::tiny_train_config();
    EXPECT_THROW(fit(ds, StaticGraph(Tensor2::identity(4)), cfg), DataError);
    EXPECT_THROW(fit(bench.raw, bench.graph, cfg), DataError);  // no held-out entries
}

TEST(Predict, CoversEverySplitRowAndKeepsObservedValues) {
    const auto bench = testing_support::tiny_benchmark();
    TrainConfig cfg = testing_support::tiny_train_config();
    const TimeSeriesDataset ds = inject_missing(bench.raw, 0.3, 4);
    ModelConfig m = resolve_model(cfg, ds);
    const Tensor2 pred = predict(init_params(m, 3), m, ds, bench.graph);
    for (std::size_t t = 0; t < ds.steps(); ++t)
        for (std::size_t i = 0; i < ds.variables(); ++i) {
            EXPECT_TRUE(std::isfinite(pred(t, i)));
            const bool visible = ds.observed(t, i) == 1.0 && ds.eval(t, i) == 0.0;
            if (visible) EXPECT_NEAR(pred(t, i), ds.values(t, i), 1e-9 * (1.0 + std::fabs(ds.values(t, i))));
        }
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    const auto dir = testing_support::scratch_dir("checkpoint");
    ModelConfig c = testing_support::small_config(3, 4, 2);
    const ModelParams p = init_params(c, 12);
    const std::string a = (std::filesystem::path(dir) / "a.bin").string();
    const std::string b = (std::filesystem::path(dir) / "b.bin").string();
    save_checkpoint(a, c, p, "seed = 12\n");
    const Checkpoint ck = load_checkpoint(a);
    EXPECT_EQ(ck.config, c);
    EXPECT_EQ(pack(ck.params), pack(p));
    std::ofstream(b, std::ios::binary) << serialize_checkpoint(ck);
    EXPECT_EQ(slurp(a), slurp(b));
}

TEST(Checkpoint, CorruptFilesAreDataErrors) {
    ModelConfig c = testing_support::small_config(3, 4, 1);
    const std::string good = serialize_checkpoint(c, init_params(c, 1));
    std::string bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(bad_magic), DataError);
    std::string bad_version = good;
    bad_version[8] = 9;
    EXPECT_THROW(deserialize_checkpoint(bad_version), DataError);
    EXPECT_THROW(deserialize_checkpoint(good.substr(0, good.size() - 3)), DataError);
    EXPECT_THROW(deserialize_checkpoint(good + "x"), DataError);
    EXPECT_THROW(load_checkpoint("/nonexistent/checkpoint.bin"), DataError);
}

TEST(TrainingLog, FormatHasHeaderAndRows) {
    TrainingLog log;
    log.header = "# seed = 1\n";
    log.epochs.push_back({1, 0.5, 0.25, 0.0});
    EXPECT_EQ(format_training_log(log), "# seed = 1\nepoch,train_loss,val_mae,seconds\n1,0.5,0.25,0\n");
}
