#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace protoot {

// Row-major dense matrix of doubles. All reductions over matrices in this
// library run in sequential row-major order so that results are reproducible
// run to run; everything is computed in 64-bit floating point.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const DenseMatrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    // Throws Error if any entry is NaN or infinite; `context` names the caller.
    void ensure_finite(const char* context) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Matrix whose rows all have unit Euclidean norm (within 1e-9). Construction
// validates the invariant; use l2_normalize_rows to produce one from raw data.
class UnitRowMatrix {
public:
    UnitRowMatrix() = default;
    explicit UnitRowMatrix(DenseMatrix m);

    const DenseMatrix& matrix() const { return inner_; }
    std::size_t rows() const { return inner_.rows(); }
    std::size_t cols() const { return inner_.cols(); }
    std::span<const double> row(std::size_t i) const { return inner_.row(i); }
    double operator()(std::size_t i, std::size_t j) const { return inner_(i, j); }

    // Replaces row i; the replacement must itself be unit-norm.
    void set_row(std::size_t i, std::span<const double> values);

    static constexpr double kNormTolerance = 1e-9;

private:
    DenseMatrix inner_;
};

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);

// Scales every row to unit norm. Throws ZeroRowError when a row's norm falls
// below 1e-12 (degenerate feature; the caller decides the fallback).
UnitRowMatrix l2_normalize_rows(const DenseMatrix& m);

// out[i][j] = <a.row(i), b.row(j)>. For unit rows this is the cosine.
DenseMatrix cosine_similarity(const UnitRowMatrix& a, const UnitRowMatrix& b);

// c[j][k] = sum_i q(i,j) * m(i,k); the q^T m product used for soft updates.
DenseMatrix transpose_product(const DenseMatrix& q, const DenseMatrix& m);

}  // namespace protoot
