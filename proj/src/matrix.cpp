#include "protoot/matrix.hpp"

#include <cmath>
#include <string>

#include "protoot/errors.hpp"

namespace protoot {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw DimMismatchError("DenseMatrix: rows and cols must be >= 1");
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) throw DimMismatchError("DenseMatrix: rows and cols must be >= 1");
    if (data_.size() != rows * cols) {
        throw DimMismatchError("DenseMatrix: data length " + std::to_string(data_.size()) +
                               " != rows*cols " + std::to_string(rows * cols));
    }
    ensure_finite("DenseMatrix");
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0) throw DimMismatchError("from_rows: empty row list");
    const std::size_t cols = rows.begin()->size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw DimMismatchError("from_rows: ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return DenseMatrix(rows.size(), cols, std::move(data));
}

void DenseMatrix::ensure_finite(const char* context) const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw Error(std::string(context) + ": non-finite entry");
        }
    }
}

UnitRowMatrix::UnitRowMatrix(DenseMatrix m) : inner_(std::move(m)) {
    inner_.ensure_finite("UnitRowMatrix");
    for (std::size_t i = 0; i < inner_.rows(); ++i) {
        const double norm = std::sqrt(dot(inner_.row(i), inner_.row(i)));
        if (std::abs(norm - 1.0) > kNormTolerance) {
            throw ZeroRowError("UnitRowMatrix: row " + std::to_string(i) +
                               " has norm " + std::to_string(norm));
        }
    }
}

void UnitRowMatrix::set_row(std::size_t i, std::span<const double> values) {
    if (i >= inner_.rows()) throw IndexOutOfRangeError("set_row: row index out of range");
    if (values.size() != inner_.cols()) throw DimMismatchError("set_row: width mismatch");
    const double norm = std::sqrt(dot(values, values));
    if (std::abs(norm - 1.0) > kNormTolerance) {
        throw ZeroRowError("set_row: replacement row is not unit-norm");
    }
    auto dst = inner_.row(i);
    for (std::size_t j = 0; j < values.size(); ++j) dst[j] = values[j];
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

UnitRowMatrix l2_normalize_rows(const DenseMatrix& m) {
    DenseMatrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double norm = std::sqrt(dot(m.row(i), m.row(i)));
        if (norm < 1e-12) {
            throw ZeroRowError("l2_normalize_rows: row " + std::to_string(i) +
                               " has near-zero norm");
        }
        const double inv = 1.0 / norm;
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) * inv;
    }
    out.ensure_finite("l2_normalize_rows");
    return UnitRowMatrix(std::move(out));
}

DenseMatrix cosine_similarity(const UnitRowMatrix& a, const UnitRowMatrix& b) {
    if (a.cols() != b.cols()) {
        throw DimMismatchError("cosine_similarity: feature dims differ (" +
                               std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) + ")");
    }
    DenseMatrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            out(i, j) = dot(a.row(i), b.row(j));
        }
    }
    out.ensure_finite("cosine_similarity");
    return out;
}

DenseMatrix transpose_product(const DenseMatrix& q, const DenseMatrix& m) {
    if (q.rows() != m.rows()) throw DimMismatchError("transpose_product: row counts differ");
    DenseMatrix out(q.cols(), m.cols(), 0.0);
    // Accumulate over i in fixed order; out stays row-major sequential.
    for (std::size_t i = 0; i < q.rows(); ++i) {
        for (std::size_t j = 0; j < q.cols(); ++j) {
            const double qij = q(i, j);
            for (std::size_t k = 0; k < m.cols(); ++k) {
                out(j, k) += qij * m(i, k);
            }
        }
    }
    out.ensure_finite("transpose_product");
    return out;
}

}  // namespace protoot
