#pragma once

#include "sagpool/error.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace sagpool {

/// Dense row-major matrix of doubles. The one value type every numeric
/// routine in this project works on.
struct DenseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

    double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }

    size_t size() const { return data.size(); }

    bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

/// Throws NumericError if the matrix holds a NaN or Inf. A single pass
/// summing all entries catches any non-finite value (NaN poisons the sum,
/// infinities either survive or cancel to NaN).
inline void check_finite(const DenseMatrix& m, const char* what) {
    double s = 0.0;
    for (double v : m.data) s += v;
    if (!std::isfinite(s)) {
        throw NumericError(std::string("non-finite value in ") + what);
    }
}

/// Compressed sparse row matrix. Column indices are kept sorted within each
/// row and (row, col) pairs are unique.
struct CsrMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<int> indptr;    // rows + 1, monotone non-decreasing
    std::vector<int> indices;   // nnz column ids
    std::vector<double> values; // nnz

    CsrMatrix() : indptr(1, 0) {}
    CsrMatrix(int r, int c) : rows(r), cols(c), indptr(static_cast<size_t>(r) + 1, 0) {}

    int nnz() const { return static_cast<int>(indices.size()); }
    int row_begin(int i) const { return indptr[i]; }
    int row_end(int i) const { return indptr[i + 1]; }
    int row_nnz(int i) const { return indptr[i + 1] - indptr[i]; }

    DenseMatrix to_dense() const {
        DenseMatrix d(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int e = row_begin(i); e < row_end(i); ++e)
                d.at(i, indices[e]) = values[e];
        return d;
    }
};

/// Builds a CsrMatrix from unordered (row, col, value) triples. Entries are
/// sorted per row; duplicate coordinates are an error.
CsrMatrix csr_from_triples(int rows, int cols,
                           std::vector<std::pair<std::pair<int, int>, double>> triples);

/// Structural validation: offsets monotone, indices in range, columns sorted
/// and unique per row. Throws ValueError naming the first violation.
void validate_csr(const CsrMatrix& m, const char* what);

/// True if (i, j) and (j, i) always carry equal values.
bool csr_is_symmetric(const CsrMatrix& m);

} // namespace sagpool
