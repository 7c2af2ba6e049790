#ifndef VECFOLD_MATRIX_HPP
#define VECFOLD_MATRIX_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "vecfold/error.hpp"

namespace vecfold {

/**
 * @brief Non-owning row-major view over `rows x cols` values.
 *
 * Memory-mapped store files, in-memory matrices and numpy buffers all reduce
 * to this, so the numerical kernels never care where the data lives.
 */
template<typename T>
class MatrixView {
public:
    MatrixView() = default;
    MatrixView(std::span<const T> data, std::size_t rows, std::size_t cols) :
        data_(data), rows_(rows), cols_(cols) {
        if (data.size() != rows * cols) {
            throw Error(Errc::DimensionMismatch, "matrix view: buffer size does not match rows*cols");
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::span<const T> data() const { return data_; }
    std::span<const T> row(std::size_t i) const { return data_.subspan(i * cols_, cols_); }

    /// Rows [begin, end) as a contiguous sub-view.
    MatrixView block(std::size_t begin, std::size_t end) const {
        return MatrixView(data_.subspan(begin * cols_, (end - begin) * cols_), end - begin, cols_);
    }

private:
    std::span<const T> data_;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
};

/// Owning dense row-major matrix.
template<typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{}) :
        values_(rows * cols, fill), rows_(rows), cols_(cols) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<T> values) :
        values_(std::move(values)), rows_(rows), cols_(cols) {
        if (values_.size() != rows * cols) {
            throw Error(Errc::DimensionMismatch, "matrix: value count does not match rows*cols");
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::span<T> row(std::size_t i) { return std::span<T>(values_).subspan(i * cols_, cols_); }
    std::span<const T> row(std::size_t i) const { return std::span<const T>(values_).subspan(i * cols_, cols_); }
    T& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

    std::vector<T>& values() { return values_; }
    const std::vector<T>& values() const { return values_; }

    MatrixView<T> view() const { return MatrixView<T>(values_, rows_, cols_); }

    bool operator==(const Matrix&) const = default;

private:
    std::vector<T> values_;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
};

using FloatView = MatrixView<float>;

} // namespace vecfold

#endif
