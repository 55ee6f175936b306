#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_map>
#include <vector>

#include "sdagrin/csv.hpp"
#include "sdagrin/errors.hpp"
#include "sdagrin/tensor.hpp"

namespace sdagrin {

// Fixed N x N nonnegative adjacency with a retained self-connection on every node.
class StaticGraph {
   public:
    StaticGraph() = default;
    explicit StaticGraph(Tensor2 weights) : weights_(std::move(weights)) { validate(); }

    const Tensor2& weights() const noexcept { return weights_; }
    std::size_t nodes() const noexcept { return weights_.rows(); }

    // 0/1 indicator of A > 0.
    Tensor2 support() const {
        Tensor2 s(weights_.rows(), weights_.cols());
        for (std::size_t k = 0; k < s.size(); ++k) s[k] = weights_[k] > 0.0 ? 1.0 : 0.0;
        return s;
    }

    Tensor2 row_normalized() const { return kernels::row_normalize(weights_); }

   private:
    void validate() const {
        if (weights_.rows() != weights_.cols()) throw ShapeError("static graph must be square, got " + weights_.shape());
        if (!weights_.all_finite()) throw DataError("static graph has non-finite weights");
        for (std::size_t i = 0; i < weights_.rows(); ++i) {
            for (std::size_t j = 0; j < weights_.cols(); ++j)
                if (weights_(i, j) < 0.0) throw DataError("static graph has a negative weight at row " + std::to_string(i));
            if (!(weights_(i, i) > 0.0)) throw DataError("static graph node " + std::to_string(i) + " lacks a self-connection");
        }
    }

    Tensor2 weights_;
};

enum class DistanceMetric { haversine_km, euclidean };

inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
    constexpr double kEarthRadiusKm = 6371.0088;
    const double to_rad = std::numbers::pi / 180.0;
    const double dlat = (lat2 - lat1) * to_rad;
    const double dlon = (lon2 - lon1) * to_rad;
    const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(lat1 * to_rad) * std::cos(lat2 * to_rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

inline Tensor2 pairwise_distances(const Tensor2& coords, DistanceMetric metric) {
    const std::size_t n = coords.rows();
    Tensor2 d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (metric == DistanceMetric::haversine_km) {
                d(i, j) = haversine_km(coords(i, 0), coords(i, 1), coords(j, 0), coords(j, 1));
            } else {
                const double dx = coords(i, 0) - coords(j, 0);
                const double dy = coords(i, 1) - coords(j, 1);
                d(i, j) = std::sqrt(dx * dx + dy * dy);
            }
        }
    }
    return d;
}

// Thresholded Gaussian kernel: A[i,j] = exp(-d(i,j)^2 / sigma^2), sigma = population std of
// all N*N pairwise distances (diagonal zeros included), entries below `threshold` zeroed,
// diagonal forced to 1. A node left without any neighbor besides itself is rejected.
inline StaticGraph build_static_adjacency(const Tensor2& coords, double threshold,
                                          DistanceMetric metric = DistanceMetric::haversine_km,
                                          const std::vector<std::string>& ids = {}) {
    const std::size_t n = coords.rows();
    if (n < 2) throw ContractError("build_static_adjacency: need at least 2 nodes");
    if (coords.cols() != 2) throw ShapeError("build_static_adjacency: coords must be N x 2, got " + coords.shape());
    if (!(threshold >= 0.0 && threshold < 1.0)) throw ContractError("build_static_adjacency: threshold must lie in [0, 1)");
    const Tensor2 d = pairwise_distances(coords, metric);
    double mean = 0.0;
    for (double v : d.data()) mean += v;
    mean /= static_cast<double>(d.size());
    double var = 0.0;
    for (double v : d.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d.size());
    if (!(var > 0.0)) throw DataError("build_static_adjacency: all coordinates identical (kernel width is zero)");

    Tensor2 a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        bool has_neighbor = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                a(i, j) = 1.0;
                continue;
            }
            const double w = std::exp(-d(i, j) * d(i, j) / var);
            if (w >= threshold && w > 0.0) {
                a(i, j) = w;
                has_neighbor = true;
            }
        }
        if (!has_neighbor) {
            const std::string name = i < ids.size() ? "'" + ids[i] + "'" : std::to_string(i);
            throw DataError("build_static_adjacency: node " + name + " is isolated at threshold " + csv::format_double(threshold));
        }
    }
    return StaticGraph(std::move(a));
}

// N x N matrix CSV: header `id,<id1>,...,<idN>`, one row per node starting with its id.
inline std::string format_adjacency(const Tensor2& a, const std::vector<std::string>& ids) {
    std::string out = "id";
    for (const auto& id : ids) out += "," + id;
    out += "\n";
    for (std::size_t i = 0; i < a.rows(); ++i) {
        out += ids[i];
        for (std::size_t j = 0; j < a.cols(); ++j) out += "," + csv::format_double(a(i, j));
        out += "\n";
    }
    return out;
}

inline void write_adjacency_csv(const Tensor2& a, const std::vector<std::string>& ids, const std::string& path) {
    csv::write_file(path, format_adjacency(a, ids));
}

// Reads a matrix written by write_adjacency_csv and reorders it to `ids`.
inline Tensor2 read_adjacency_csv(const std::string& path, const std::vector<std::string>& ids) {
    auto t = csv::read(path);
    const std::size_t n = ids.size();
    if (t.header.size() != n + 1 || t.header[0] != "id") throw ParseError(path, 1, 1, "adjacency header must be 'id,<ids>'");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < n; ++j) index[ids[j]] = j;
    std::vector<std::size_t> col_map(n);
    for (std::size_t j = 0; j < n; ++j) {
        auto it = index.find(t.header[j + 1]);
        if (it == index.end()) throw ParseError(path, 1, j + 2, "unknown id '" + t.header[j + 1] + "'");
        col_map[j] = it->second;
    }
    if (t.rows.size() != n) throw ParseError(path, 1, 1, "adjacency must have one row per node");
    Tensor2 a(n, n);
    std::vector<bool> seen(n, false);
    for (std::size_t r = 0; r < n; ++r) {
        auto it = index.find(t.rows[r][0]);
        if (it == index.end()) throw ParseError(path, t.line_numbers[r], 1, "unknown id '" + t.rows[r][0] + "'");
        if (seen[it->second]) throw ParseError(path, t.line_numbers[r], 1, "duplicate row id '" + t.rows[r][0] + "'");
        seen[it->second] = true;
        for (std::size_t j = 0; j < n; ++j)
            a(it->second, col_map[j]) = csv::parse_double(t.rows[r][j + 1], path, t.line_numbers[r], j + 2);
    }
    return a;
}

}  // namespace sdagrin
