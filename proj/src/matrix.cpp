#include "sagpool/matrix.hpp"

#include <algorithm>
#include <string>

namespace sagpool {

CsrMatrix csr_from_triples(int rows, int cols,
                           std::vector<std::pair<std::pair<int, int>, double>> triples) {
    std::sort(triples.begin(), triples.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    CsrMatrix m(rows, cols);
    m.indices.reserve(triples.size());
    m.values.reserve(triples.size());
    int prev_r = -1, prev_c = -1;
    for (const auto& [rc, v] : triples) {
        auto [r, c] = rc;
        if (r < 0 || r >= rows || c < 0 || c >= cols)
            throw ValueError("csr_from_triples: entry (" + std::to_string(r) + ", " +
                             std::to_string(c) + ") out of range");
        if (r == prev_r && c == prev_c)
            throw ValueError("csr_from_triples: duplicate entry (" + std::to_string(r) + ", " +
                             std::to_string(c) + ")");
        m.indices.push_back(c);
        m.values.push_back(v);
        ++m.indptr[r + 1];
        prev_r = r;
        prev_c = c;
    }
    for (int i = 0; i < rows; ++i) m.indptr[i + 1] += m.indptr[i];
    return m;
}

void validate_csr(const CsrMatrix& m, const char* what) {
    const std::string tag(what);
    if (static_cast<int>(m.indptr.size()) != m.rows + 1)
        throw ValueError(tag + ": indptr length != rows + 1");
    if (m.indptr.front() != 0 || m.indptr.back() != m.nnz())
        throw ValueError(tag + ": indptr endpoints inconsistent with nnz");
    for (int i = 0; i < m.rows; ++i) {
        if (m.indptr[i + 1] < m.indptr[i])
            throw ValueError(tag + ": indptr not monotone at row " + std::to_string(i));
        for (int e = m.row_begin(i); e < m.row_end(i); ++e) {
            int c = m.indices[e];
            if (c < 0 || c >= m.cols)
                throw ValueError(tag + ": column " + std::to_string(c) + " out of range in row " +
                                 std::to_string(i));
            if (e > m.row_begin(i) && m.indices[e - 1] >= c)
                throw ValueError(tag + ": columns not sorted/unique in row " + std::to_string(i));
        }
    }
}

bool csr_is_symmetric(const CsrMatrix& m) {
    if (m.rows != m.cols) return false;
    for (int i = 0; i < m.rows; ++i) {
        for (int e = m.row_begin(i); e < m.row_end(i); ++e) {
            int j = m.indices[e];
            const int* lo = m.indices.data() + m.row_begin(j);
            const int* hi = m.indices.data() + m.row_end(j);
            const int* it = std::lower_bound(lo, hi, i);
            if (it == hi || *it != i) return false;
            if (m.values[it - m.indices.data()] != m.values[e]) return false;
        }
    }
    return true;
}

} // namespace sagpool
