#pragma once

// Column-major real matrix and the partial symmetric eigensolver (LAPACK dsyevr).

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgsim {

class EigenSolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(int rows, int cols) : rows_(rows), cols_(cols), data_(std::size_t(rows) * cols) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double& operator()(int i, int j) { return data_[std::size_t(j) * rows_ + i]; }
    double operator()(int i, int j) const { return data_[std::size_t(j) * rows_ + i]; }
    std::span<double> column(int j) { return {data_.data() + std::size_t(j) * rows_, std::size_t(rows_)}; }
    std::span<const double> column(int j) const {
        return {data_.data() + std::size_t(j) * rows_, std::size_t(rows_)};
    }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::vector<double> multiply(std::span<const double> x) const {
        std::vector<double> y(rows_, 0.0);
        for (int j = 0; j < cols_; ++j) {
            const double xj = x[j];
            if (xj == 0.0) continue;
            const double* c = data_.data() + std::size_t(j) * rows_;
            for (int i = 0; i < rows_; ++i) y[i] += c[i] * xj;
        }
        return y;
    }

    /// max |A_ij - A_ji| relative to max |A_ij|.
    double asymmetry() const {
        double diff = 0.0, scale = 0.0;
        for (int j = 0; j < cols_; ++j)
            for (int i = 0; i < rows_; ++i) {
                diff = std::max(diff, std::abs((*this)(i, j) - (*this)(j, i)));
                scale = std::max(scale, std::abs((*this)(i, j)));
            }
        return scale > 0 ? diff / scale : 0.0;
    }

    void symmetrize() {
        for (int j = 0; j < cols_; ++j)
            for (int i = j + 1; i < rows_; ++i) {
                const double a = 0.5 * ((*this)(i, j) + (*this)(j, i));
                (*this)(i, j) = a;
                (*this)(j, i) = a;
            }
    }

private:
    int rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

struct EigenPairs {
    std::vector<double> values;  ///< ascending
    DenseMatrix vectors;         ///< column j pairs with values[j], unit Euclidean norm
};

/// Lowest `count` eigenpairs of a symmetric matrix (lower triangle referenced).
inline EigenPairs lowest_eigenpairs(DenseMatrix a, int count, bool want_vectors = true) {
    const int n = a.rows();
    if (a.cols() != n) throw std::invalid_argument("eigensolve needs a square matrix");
    count = std::clamp(count, 1, n);
    EigenPairs out;
    std::vector<double> w(n);
    if (want_vectors) out.vectors = DenseMatrix(n, count);
    std::vector<lapack_int> support(2 * std::size_t(std::max(count, 1)));
    lapack_int found = 0;
    const lapack_int info = LAPACKE_dsyevr(
        LAPACK_COL_MAJOR, want_vectors ? 'V' : 'N', 'I', 'L', n, a.data(), n, 0.0, 0.0, 1, count,
        0.0, &found, w.data(), want_vectors ? out.vectors.data() : nullptr, n, support.data());
    if (info != 0 || found != count)
        throw EigenSolverError("dsyevr failed (info=" + std::to_string(info) + ", found=" +
                               std::to_string(found) + ")");
    out.values.assign(w.begin(), w.begin() + count);
    return out;
}

inline std::vector<double> all_eigenvalues(DenseMatrix a) {
    const int n = a.rows();
    std::vector<double> w(n);
    const lapack_int info = LAPACKE_dsyev(LAPACK_COL_MAJOR, 'N', 'L', n, a.data(), n, w.data());
    if (info != 0) throw EigenSolverError("dsyev failed (info=" + std::to_string(info) + ")");
    return w;
}

}  // namespace kgsim
