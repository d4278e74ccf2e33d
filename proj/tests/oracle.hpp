#pragma once

// Straight-line dense oracles used only by tests. These deliberately share no
// code with the library kernels they check: everything here is written as
// plain nested loops over dense matrices.

#include "sagpool/matrix.hpp"

#include <cmath>
#include <vector>

namespace oracle {

using sagpool::DenseMatrix;

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
            out.at(i, j) = s;
        }
    return out;
}

/// D^{-1/2} (A + I) D^{-1/2} computed densely.
inline DenseMatrix normalize(const DenseMatrix& a) {
    const int n = a.rows;
    DenseMatrix tilde = a;
    for (int i = 0; i < n; ++i) tilde.at(i, i) += 1.0;
    std::vector<double> d(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) d[i] += tilde.at(i, j);
    DenseMatrix out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out.at(i, j) = tilde.at(i, j) / (std::sqrt(d[i]) * std::sqrt(d[j]));
    return out;
}

/// A[idx][:, idx] by double indexing.
inline DenseMatrix index2(const DenseMatrix& a, const std::vector<int>& idx) {
    const int m = static_cast<int>(idx.size());
    DenseMatrix out(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) out.at(i, j) = a.at(idx[i], idx[j]);
    return out;
}

/// A + A^2 with the diagonal of the result dropped.
inline DenseMatrix two_hop(const DenseMatrix& a, bool binarize = false) {
    const int n = a.rows;
    DenseMatrix out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            double s = a.at(i, j);
            for (int k = 0; k < n; ++k) s += a.at(i, k) * a.at(k, j);
            out.at(i, j) = binarize ? (s != 0.0 ? 1.0 : 0.0) : s;
        }
    return out;
}

inline DenseMatrix elementwise_tanh(const DenseMatrix& a) {
    DenseMatrix out = a;
    for (double& v : out.data) v = std::tanh(v);
    return out;
}

inline DenseMatrix elementwise_relu(const DenseMatrix& a) {
    DenseMatrix out = a;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) return 1e300;
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

/// True if nodes u, v are connected by a path of length 1 or 2, by
/// brute-force enumeration over intermediate nodes.
inline bool has_short_path(const DenseMatrix& a, int u, int v) {
    if (a.at(u, v) != 0.0) return true;
    for (int w = 0; w < a.rows; ++w)
        if (a.at(u, w) != 0.0 && a.at(w, v) != 0.0) return true;
    return false;
}

} // namespace oracle
