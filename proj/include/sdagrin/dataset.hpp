#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "sdagrin/csv.hpp"
#include "sdagrin/errors.hpp"
#include "sdagrin/rng.hpp"
#include "sdagrin/tensor.hpp"

namespace sdagrin {

enum class Split { train, val, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

// Half-open time range [begin, end).
struct TimeRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t length() const noexcept { return end - begin; }
    bool contains(std::size_t t) const noexcept { return t >= begin && t < end; }
};

// Multivariate series stored time-major (rows = steps, cols = variables).
//
// `observed` marks entries present in the raw data, `eval` marks observed entries held out
// for scoring. The model only ever sees `visible() = observed & !eval`. Standardization
// statistics come from visible entries of the train split.
struct TimeSeriesDataset {
    std::vector<std::string> ids;
    std::vector<std::string> timestamps;
    Tensor2 values;    // raw values, 0 where not observed
    Tensor2 observed;  // {0,1}
    Tensor2 eval;      // {0,1}, subset of observed
    std::optional<Tensor2> coords;  // N x 2 (lat, lon)
    TimeRange train, val, test;
    std::vector<double> mean;
    std::vector<double> stdev;

    std::size_t steps() const noexcept { return values.rows(); }
    std::size_t variables() const noexcept { return values.cols(); }

    const TimeRange& range(Split s) const {
        switch (s) {
            case Split::train: return train;
            case Split::val: return val;
            case Split::test: return test;
        }
        return train;
    }

    bool visible(std::size_t t, std::size_t i) const noexcept { return observed(t, i) == 1.0 && eval(t, i) == 0.0; }

    double standardize(std::size_t i, double v) const { return (v - mean[i]) / stdev[i]; }
    double destandardize(std::size_t i, double z) const { return z * stdev[i] + mean[i]; }
};

// 70/10/20 contiguous split in time order.
inline void assign_default_splits(TimeSeriesDataset& ds) {
    const std::size_t n = ds.steps();
    const auto train_end = static_cast<std::size_t>(std::floor(0.7 * static_cast<double>(n)));
    const auto val_end = static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(n)));
    ds.train = {0, train_end};
    ds.val = {train_end, val_end};
    ds.test = {val_end, n};
}

// Per-variable mean/std over visible train entries. A zero std is replaced by 1.
inline void update_statistics(TimeSeriesDataset& ds) {
    const std::size_t n = ds.variables();
    ds.mean.assign(n, 0.0);
    ds.stdev.assign(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        std::size_t count = 0;
        for (std::size_t t = ds.train.begin; t < ds.train.end; ++t) {
            if (ds.visible(t, i)) {
                s += ds.values(t, i);
                ++count;
            }
        }
        if (count == 0) {
            throw DataError("variable '" + ds.ids[i] + "' has no observed entries in the train split");
        }
        const double m = s / static_cast<double>(count);
        double ss = 0.0;
        for (std::size_t t = ds.train.begin; t < ds.train.end; ++t) {
            if (ds.visible(t, i)) ss += (ds.values(t, i) - m) * (ds.values(t, i) - m);
        }
        const double sd = std::sqrt(ss / static_cast<double>(count));
        ds.mean[i] = m;
        ds.stdev[i] = sd > 0.0 ? sd : 1.0;
    }
}

// Builds a dataset from raw arrays, checking the mask invariants and assigning default splits.
inline TimeSeriesDataset make_dataset(std::vector<std::string> ids, std::vector<std::string> timestamps,
                                      Tensor2 values, Tensor2 observed, std::optional<Tensor2> coords = std::nullopt) {
    if (values.cols() != ids.size() || values.rows() != timestamps.size())
        throw ShapeError("make_dataset: values " + values.shape() + " do not match " + std::to_string(timestamps.size()) +
                         " timestamps x " + std::to_string(ids.size()) + " ids");
    kernels::require_same_shape(values, observed, "make_dataset");
    if (coords && (coords->rows() != ids.size() || coords->cols() != 2))
        throw ShapeError("make_dataset: coords must be N x 2, got " + coords->shape());
    TimeSeriesDataset ds;
    ds.ids = std::move(ids);
    ds.timestamps = std::move(timestamps);
    ds.values = std::move(values);
    ds.observed = std::move(observed);
    ds.eval = Tensor2(ds.values.rows(), ds.values.cols());
    ds.coords = std::move(coords);
    for (std::size_t k = 0; k < ds.values.size(); ++k) {
        if (ds.observed[k] != 0.0 && ds.observed[k] != 1.0) throw DataError("observed mask must be binary");
        if (ds.observed[k] == 0.0) ds.values[k] = 0.0;
    }
    if (!ds.values.all_finite()) throw DataError("non-finite value in series");
    assign_default_splits(ds);
    update_statistics(ds);
    return ds;
}

// ---- CSV ---------------------------------------------------------------------------

namespace detail {

inline void check_unique_ids(const std::vector<std::string>& ids, const std::string& file) {
    std::set<std::string> seen;
    for (std::size_t j = 0; j < ids.size(); ++j) {
        if (ids[j].empty()) throw ParseError(file, 1, j + 2, "empty variable id");
        if (!seen.insert(ids[j]).second) throw ParseError(file, 1, j + 2, "duplicate variable id '" + ids[j] + "'");
    }
}

inline Tensor2 read_mask_table(const std::string& path, const std::vector<std::string>& ids,
                               const std::vector<std::string>& timestamps) {
    auto t = csv::read(path);
    if (t.header.size() != ids.size() + 1 || !std::equal(ids.begin(), ids.end(), t.header.begin() + 1))
        throw ParseError(path, 1, 1, "mask header does not match values header");
    if (t.rows.size() != timestamps.size())
        throw ParseError(path, t.line_numbers.empty() ? 1 : t.line_numbers.back(), 1,
                         "mask has " + std::to_string(t.rows.size()) + " rows, values have " +
                             std::to_string(timestamps.size()));
    Tensor2 m(timestamps.size(), ids.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.rows[r][0] != timestamps[r])
            throw ParseError(path, t.line_numbers[r], 1, "timestamp '" + t.rows[r][0] + "' does not match values");
        for (std::size_t j = 0; j < ids.size(); ++j) {
            const std::string& cell = t.rows[r][j + 1];
            if (cell == "1") {
                m(r, j) = 1.0;
            } else if (cell != "0") {
                throw ParseError(path, t.line_numbers[r], j + 2, "mask cell must be 0 or 1, got '" + cell + "'");
            }
        }
    }
    return m;
}

}  // namespace detail

// values: `timestamp,<id1>,...,<idN>`, empty cell = missing.
// coords: `id,lat,lon`, one row per id (any order, ids must match the header).
// mask:   mirrors the values file with {0,1}; overrides the empty-cell rule when given.
inline TimeSeriesDataset load_csv(const std::string& values_path, const std::string& coords_path = {},
                                  const std::string& mask_path = {}) {
    auto t = csv::read(values_path);
    if (t.header.size() < 2 || t.header[0] != "timestamp")
        throw ParseError(values_path, 1, 1, "header must start with 'timestamp' followed by variable ids");
    std::vector<std::string> ids(t.header.begin() + 1, t.header.end());
    detail::check_unique_ids(ids, values_path);
    const std::size_t n = ids.size();
    const std::size_t steps = t.rows.size();
    if (steps == 0) throw ParseError(values_path, 2, 1, "no data rows");

    std::vector<std::string> timestamps;
    timestamps.reserve(steps);
    std::set<std::string> seen_ts;
    Tensor2 values(steps, n), observed(steps, n);
    for (std::size_t r = 0; r < steps; ++r) {
        const auto& row = t.rows[r];
        const std::size_t line = t.line_numbers[r];
        if (!seen_ts.insert(row[0]).second) throw ParseError(values_path, line, 1, "duplicate timestamp '" + row[0] + "'");
        timestamps.push_back(row[0]);
        for (std::size_t j = 0; j < n; ++j) {
            const std::string& cell = row[j + 1];
            if (cell.empty()) continue;
            values(r, j) = csv::parse_double(cell, values_path, line, j + 2);
            observed(r, j) = 1.0;
        }
    }
    if (!mask_path.empty()) {
        Tensor2 m = detail::read_mask_table(mask_path, ids, timestamps);
        for (std::size_t k = 0; k < m.size(); ++k) {
            if (m[k] == 1.0 && observed[k] == 0.0) {
                throw DataError(mask_path + ": mask marks an empty cell as observed (row " + std::to_string(k / n + 1) +
                                ", variable '" + ids[k % n] + "')");
            }
        }
        observed = std::move(m);
    }

    std::optional<Tensor2> coords;
    if (!coords_path.empty()) {
        auto c = csv::read(coords_path);
        if (c.header.size() != 3 || c.header[0] != "id")
            throw ParseError(coords_path, 1, 1, "coords header must be 'id,lat,lon'");
        std::unordered_map<std::string, std::size_t> index;
        for (std::size_t j = 0; j < n; ++j) index[ids[j]] = j;
        Tensor2 xy(n, 2);
        std::vector<bool> filled(n, false);
        for (std::size_t r = 0; r < c.rows.size(); ++r) {
            const auto it = index.find(c.rows[r][0]);
            if (it == index.end())
                throw ParseError(coords_path, c.line_numbers[r], 1, "unknown id '" + c.rows[r][0] + "'");
            if (filled[it->second])
                throw ParseError(coords_path, c.line_numbers[r], 1, "duplicate id '" + c.rows[r][0] + "'");
            filled[it->second] = true;
            xy(it->second, 0) = csv::parse_double(c.rows[r][1], coords_path, c.line_numbers[r], 2);
            xy(it->second, 1) = csv::parse_double(c.rows[r][2], coords_path, c.line_numbers[r], 3);
        }
        for (std::size_t j = 0; j < n; ++j)
            if (!filled[j]) throw ParseError(coords_path, c.rows.size() + 1, 1, "missing coordinates for id '" + ids[j] + "'");
        coords = std::move(xy);
    }
    return make_dataset(std::move(ids), std::move(timestamps), std::move(values), std::move(observed), std::move(coords));
}

// Writes a T x N matrix in the values layout; cells where `present` is 0 are left empty.
inline std::string format_series(const TimeSeriesDataset& ds, const Tensor2& matrix, const Tensor2* present) {
    std::string out = "timestamp";
    for (const auto& id : ds.ids) out += "," + id;
    out += "\n";
    for (std::size_t t = 0; t < matrix.rows(); ++t) {
        out += ds.timestamps[t];
        for (std::size_t i = 0; i < matrix.cols(); ++i) {
            out += ",";
            if (present == nullptr || (*present)(t, i) != 0.0) out += csv::format_double(matrix(t, i));
        }
        out += "\n";
    }
    return out;
}

inline std::string format_mask(const TimeSeriesDataset& ds, const Tensor2& mask) {
    std::string out = "timestamp";
    for (const auto& id : ds.ids) out += "," + id;
    out += "\n";
    for (std::size_t t = 0; t < mask.rows(); ++t) {
        out += ds.timestamps[t];
        for (std::size_t i = 0; i < mask.cols(); ++i) out += mask(t, i) != 0.0 ? ",1" : ",0";
        out += "\n";
    }
    return out;
}

// Raw values with missing cells empty.
inline void write_values_csv(const TimeSeriesDataset& ds, const std::string& path) {
    csv::write_file(path, format_series(ds, ds.values, &ds.observed));
}

inline void write_mask_csv(const TimeSeriesDataset& ds, const Tensor2& mask, const std::string& path) {
    csv::write_file(path, format_mask(ds, mask));
}

inline void write_coords_csv(const TimeSeriesDataset& ds, const std::string& path) {
    if (!ds.coords) throw ContractError("write_coords_csv: dataset has no coordinates");
    std::string out = "id,lat,lon\n";
    for (std::size_t i = 0; i < ds.variables(); ++i)
        out += ds.ids[i] + "," + csv::format_double((*ds.coords)(i, 0)) + "," + csv::format_double((*ds.coords)(i, 1)) + "\n";
    csv::write_file(path, out);
}

// Reads an eval mask written by write_mask_csv and applies it to `ds`.
inline void apply_eval_mask_csv(TimeSeriesDataset& ds, const std::string& path) {
    Tensor2 m = detail::read_mask_table(path, ds.ids, ds.timestamps);
    for (std::size_t k = 0; k < m.size(); ++k)
        if (m[k] == 1.0 && ds.observed[k] == 0.0) throw DataError(path + ": eval mask selects an unobserved entry");
    ds.eval = std::move(m);
    update_statistics(ds);
}

// ---- masking -------------------------------------------------------------------------

// Moves each visible entry into the eval mask with probability `rate`. One uniform draw per
// visible entry, visited in row-major (time, variable) order.
inline TimeSeriesDataset inject_missing(const TimeSeriesDataset& ds, double rate, std::uint64_t seed) {
    if (!(rate > 0.0 && rate < 1.0)) throw ContractError("inject_missing: rate must lie in (0, 1)");
    TimeSeriesDataset out = ds;
    Rng rng(seed);
    std::size_t hidden = 0;
    for (std::size_t t = 0; t < out.steps(); ++t) {
        for (std::size_t i = 0; i < out.variables(); ++i) {
            if (!out.visible(t, i)) continue;
            if (rng.bernoulli(rate)) {
                out.eval(t, i) = 1.0;
                ++hidden;
            }
        }
    }
    if (hidden == 0) throw DataError("inject_missing: no entries were held out (eval mask empty)");
    update_statistics(out);  // throws if a variable lost all visible training entries
    return out;
}

// ---- windows -------------------------------------------------------------------------

// One T-step slice in node-major layout (N x T), standardized.
struct WindowBatch {
    Tensor2 x;       // visible values, 0 elsewhere
    Tensor2 mask;    // visible mask
    Tensor2 truth;   // all observed values (including eval), 0 elsewhere
    Tensor2 eval;    // eval mask within the window
    std::size_t start = 0;

    std::size_t nodes() const noexcept { return x.rows(); }
    std::size_t length() const noexcept { return x.cols(); }
};

inline WindowBatch window_at(const TimeSeriesDataset& ds, std::size_t start, std::size_t length) {
    if (start + length > ds.steps()) throw ContractError("window_at: window exceeds series length");
    const std::size_t n = ds.variables();
    WindowBatch w;
    w.start = start;
    w.x = Tensor2(n, length);
    w.mask = Tensor2(n, length);
    w.truth = Tensor2(n, length);
    w.eval = Tensor2(n, length);
    for (std::size_t j = 0; j < length; ++j) {
        const std::size_t t = start + j;
        for (std::size_t i = 0; i < n; ++i) {
            if (ds.observed(t, i) == 0.0) continue;
            const double z = ds.standardize(i, ds.values(t, i));
            w.truth(i, j) = z;
            if (ds.eval(t, i) != 0.0) {
                w.eval(i, j) = 1.0;
            } else {
                w.x(i, j) = z;
                w.mask(i, j) = 1.0;
            }
        }
    }
    return w;
}

// Windows of `length` steps inside a split, starting every `stride` steps. A trailing
// partial window is dropped.
inline std::vector<WindowBatch> windows(const TimeSeriesDataset& ds, std::size_t length, std::size_t stride, Split split) {
    const TimeRange& r = ds.range(split);
    if (length == 0) throw ContractError("windows: window size must be positive");
    if (stride == 0) throw ContractError("windows: stride must be >= 1");
    if (length > r.length())
        throw DataError("windows: window size " + std::to_string(length) + " exceeds " + split_name(split) +
                        " split length " + std::to_string(r.length()));
    std::vector<WindowBatch> out;
    for (std::size_t s = r.begin; s + length <= r.end; s += stride) out.push_back(window_at(ds, s, length));
    return out;
}

// Start indices that tile a range completely: non-overlapping windows plus, when the range is
// not a multiple of `length`, one final window aligned to the end of the range.
inline std::vector<std::size_t> covering_starts(const TimeRange& r, std::size_t length) {
    std::vector<std::size_t> starts;
    if (length > r.length()) return starts;
    std::size_t s = r.begin;
    for (; s + length <= r.end; s += length) starts.push_back(s);
    if (s < r.end) starts.push_back(r.end - length);
    return starts;
}

}  // namespace sdagrin
