#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdagrin/errors.hpp"

namespace sdagrin {

// Dense row-major matrix of doubles. Plain value type: copies are deep.
class Tensor2 {
   public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match " +
                             shape_string(rows_, cols_));
        }
    }
    Tensor2(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("ragged initializer for Tensor2");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Tensor2 zeros(std::size_t rows, std::size_t cols) { return Tensor2(rows, cols, 0.0); }
    static Tensor2 identity(std::size_t n) {
        Tensor2 t(n, n);
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }
    // Validating constructor for external inputs: rejects NaN/Inf.
    static Tensor2 checked(std::size_t rows, std::size_t cols, std::vector<double> data) {
        Tensor2 t(rows, cols, std::move(data));
        if (!t.all_finite()) throw DataError("non-finite value in input tensor " + shape_string(rows, cols));
        return t;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    bool same_shape(const Tensor2& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape() const { return shape_string(rows_, cols_); }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    void fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

    Tensor2 transposed() const {
        Tensor2 t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Tensor2 col(std::size_t c) const {
        Tensor2 t(rows_, 1);
        for (std::size_t i = 0; i < rows_; ++i) t[i] = (*this)(i, c);
        return t;
    }

    friend bool operator==(const Tensor2& a, const Tensor2& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

    static std::string shape_string(std::size_t r, std::size_t c) {
        return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
    }

   private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Plain (non-differentiable) kernels shared by the tape and by data code.
// Every reduction runs sequentially in row-major order so results are bit-reproducible.
namespace kernels {

inline void require_same_shape(const Tensor2& a, const Tensor2& b, const char* op) {
    if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
}

// out += a * b
inline void matmul_acc(const Tensor2& a, const Tensor2& b, Tensor2& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double* o = out.row(i).data();
        const double* ar = a.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ar[p];
            if (av == 0.0) continue;
            const double* br = b.row(p).data();
            for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
        }
    }
}

// out += a^T * b
inline void matmul_tn_acc(const Tensor2& a, const Tensor2& b, Tensor2& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ar = a.row(i).data();
        const double* br = b.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ar[p];
            if (av == 0.0) continue;
            double* o = out.row(p).data();
            for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
        }
    }
}

// out += a * b^T
inline void matmul_nt_acc(const Tensor2& a, const Tensor2& b, Tensor2& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ar = a.row(i).data();
        double* o = out.row(i).data();
        for (std::size_t j = 0; j < m; ++j) {
            const double* br = b.row(j).data();
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
            o[j] += s;
        }
    }
}

inline Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: cannot multiply " + a.shape() + " by " + b.shape());
    Tensor2 out(a.rows(), b.cols());
    matmul_acc(a, b, out);
    return out;
}

// Divides each row by its sum; rows summing to zero stay zero.
inline Tensor2 row_normalize(const Tensor2& a) {
    Tensor2 out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (double v : a.row(i)) s += v;
        if (s == 0.0) continue;
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) / s;
    }
    return out;
}

}  // namespace kernels
}  // namespace sdagrin
