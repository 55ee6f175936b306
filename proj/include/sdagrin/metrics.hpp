#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sdagrin/dataset.hpp"
#include "sdagrin/errors.hpp"
#include "sdagrin/tensor.hpp"

namespace sdagrin {

struct MetricReport {
    double mae = 0.0;
    double mse = 0.0;
    double mre_pct = 0.0;  // 100 * sum|e| / sum|truth|
    std::size_t n_scored = 0;
    std::uint64_t seed = 0;
    std::string config;  // free-form echo of what produced the numbers
};

// Errors over entries where `mask` is nonzero, accumulated in row-major order.
inline MetricReport score(const Tensor2& truth, const Tensor2& pred, const Tensor2& mask) {
    kernels::require_same_shape(truth, pred, "score");
    kernels::require_same_shape(truth, mask, "score");
    double abs_sum = 0.0, sq_sum = 0.0, truth_sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (mask[k] == 0.0) continue;
        const double e = pred[k] - truth[k];
        abs_sum += std::fabs(e);
        sq_sum += e * e;
        truth_sum += std::fabs(truth[k]);
        ++n;
    }
    if (n == 0) throw EmptySelectionError();
    if (truth_sum == 0.0) throw DataError("score: MRE undefined, scored truth values are all zero");
    MetricReport r;
    r.n_scored = n;
    r.mae = abs_sum / static_cast<double>(n);
    r.mse = sq_sum / static_cast<double>(n);
    r.mre_pct = 100.0 * abs_sum / truth_sum;
    return r;
}

// Eval mask restricted to the rows of one split.
inline Tensor2 split_eval_mask(const TimeSeriesDataset& ds, Split split) {
    const TimeRange& r = ds.range(split);
    Tensor2 m(ds.steps(), ds.variables());
    for (std::size_t t = r.begin; t < r.end; ++t)
        for (std::size_t i = 0; i < ds.variables(); ++i) m(t, i) = ds.eval(t, i);
    return m;
}

// Scores raw-scale predictions (steps x variables) on the held-out entries of a split.
inline MetricReport score_split(const TimeSeriesDataset& ds, const Tensor2& pred, Split split) {
    return score(ds.values, pred, split_eval_mask(ds, split));
}

// Every cell predicted by its variable's mean over visible train entries.
inline Tensor2 mean_baseline(const TimeSeriesDataset& ds) {
    Tensor2 pred(ds.steps(), ds.variables());
    for (std::size_t t = 0; t < ds.steps(); ++t)
        for (std::size_t i = 0; i < ds.variables(); ++i) pred(t, i) = ds.mean[i];
    return pred;
}

// Pairwise relative MSE between variables, per window.
struct VolatilityPoint {
    std::size_t window_index = 0;
    std::size_t start = 0;
    double mean = 0.0;
    double stdev = 0.0;
    std::size_t pairs = 0;
};

struct VolatilityProfile {
    double normalizer = 0.0;  // pooled variance of observed train values
    std::vector<VolatilityPoint> points;
    std::vector<std::size_t> skipped;  // window indices without any valid pair
};

// For each full window of `length` steps in `split` and each pair i < j:
//   relMSE = mean_t (x_i - x_j)^2 / var_train
// over steps where both are observed. var_train pools every observed train-split value.
// Pairs with no common observation are skipped; a window with no valid pair is skipped.
inline VolatilityProfile volatility_profile(const TimeSeriesDataset& ds, std::size_t length, Split split = Split::val) {
    const std::size_t n = ds.variables();
    if (n < 2) throw ContractError("volatility_profile: need at least 2 variables");
    const TimeRange& r = ds.range(split);
    if (length == 0 || length > r.length()) throw DataError("volatility_profile: no full window fits the split");

    double s = 0.0, ss = 0.0;
    std::size_t count = 0;
    for (std::size_t t = ds.train.begin; t < ds.train.end; ++t)
        for (std::size_t i = 0; i < n; ++i)
            if (ds.observed(t, i) != 0.0) {
                s += ds.values(t, i);
                ++count;
            }
    if (count == 0) throw DataError("volatility_profile: no observed train values");
    const double mean = s / static_cast<double>(count);
    for (std::size_t t = ds.train.begin; t < ds.train.end; ++t)
        for (std::size_t i = 0; i < n; ++i)
            if (ds.observed(t, i) != 0.0) ss += (ds.values(t, i) - mean) * (ds.values(t, i) - mean);
    const double var = ss / static_cast<double>(count);
    if (!(var > 0.0)) throw DataError("volatility_profile: train values have zero variance");

    VolatilityProfile prof;
    prof.normalizer = var;
    std::size_t w = 0;
    for (std::size_t start = r.begin; start + length <= r.end; start += length, ++w) {
        std::vector<double> rel;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double acc = 0.0;
                std::size_t c = 0;
                for (std::size_t t = start; t < start + length; ++t) {
                    if (ds.observed(t, i) == 0.0 || ds.observed(t, j) == 0.0) continue;
                    const double d = ds.values(t, i) - ds.values(t, j);
                    acc += d * d;
                    ++c;
                }
                if (c > 0) rel.push_back(acc / static_cast<double>(c) / var);
            }
        }
        if (rel.empty()) {
            prof.skipped.push_back(w);
            continue;
        }
        double m = 0.0;
        for (double v : rel) m += v;
        m /= static_cast<double>(rel.size());
        double q = 0.0;
        for (double v : rel) q += (v - m) * (v - m);
        VolatilityPoint p;
        p.window_index = w;
        p.start = start;
        p.mean = m;
        p.stdev = std::sqrt(q / static_cast<double>(rel.size()));
        p.pairs = rel.size();
        prof.points.push_back(p);
    }
    return prof;
}

}  // namespace sdagrin
