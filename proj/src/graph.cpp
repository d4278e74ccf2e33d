#include "sagpool/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace sagpool {

SparseGraph make_graph_weighted(int num_nodes,
                                const std::vector<std::pair<std::pair<int, int>, double>>& edges,
                                DenseMatrix features, int label) {
    if (features.rows != num_nodes)
        throw ShapeError("make_graph: feature rows != num_nodes");
    // Symmetrize with value max and drop self-loops; map dedups.
    std::map<std::pair<int, int>, double> entries;
    for (const auto& [uv, w] : edges) {
        auto [u, v] = uv;
        if (u < 0 || u >= num_nodes || v < 0 || v >= num_nodes)
            throw ValueError("make_graph: edge (" + std::to_string(u) + ", " +
                             std::to_string(v) + ") out of range");
        if (u == v) continue;
        for (auto key : {std::pair{u, v}, std::pair{v, u}}) {
            auto [it, inserted] = entries.emplace(key, w);
            if (!inserted) it->second = std::max(it->second, w);
        }
    }
    std::vector<std::pair<std::pair<int, int>, double>> triples(entries.begin(), entries.end());
    SparseGraph g;
    g.num_nodes = num_nodes;
    g.adj = csr_from_triples(num_nodes, num_nodes, std::move(triples));
    g.features = std::move(features);
    g.label = label;
    return g;
}

SparseGraph make_graph(int num_nodes, const std::vector<std::pair<int, int>>& edges,
                       DenseMatrix features, int label) {
    std::vector<std::pair<std::pair<int, int>, double>> weighted;
    weighted.reserve(edges.size());
    for (auto e : edges) weighted.push_back({e, 1.0});
    return make_graph_weighted(num_nodes, weighted, std::move(features), label);
}

void validate_graph(const SparseGraph& g) {
    if (g.adj.rows != g.num_nodes || g.adj.cols != g.num_nodes)
        throw ValueError("graph: adjacency shape != num_nodes");
    validate_csr(g.adj, "graph adjacency");
    if (g.features.rows != g.num_nodes)
        throw ValueError("graph: feature rows != num_nodes");
    for (int i = 0; i < g.num_nodes; ++i)
        for (int e = g.adj.row_begin(i); e < g.adj.row_end(i); ++e)
            if (g.adj.indices[e] == i)
                throw ValueError("graph: self-loop stored at node " + std::to_string(i));
    if (!csr_is_symmetric(g.adj))
        throw ValueError("graph: adjacency not symmetric");
}

NormalizedAdjacency normalize_adjacency(const CsrMatrix& adj) {
    const int n = adj.rows;
    // Degree of A + I: one plus the weighted row sum.
    std::vector<double> inv_sqrt_deg(n);
    for (int i = 0; i < n; ++i) {
        double d = 1.0;
        for (int e = adj.row_begin(i); e < adj.row_end(i); ++e) d += adj.values[e];
        inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
    }
    CsrMatrix out(n, n);
    out.indices.reserve(adj.nnz() + n);
    out.values.reserve(adj.nnz() + n);
    for (int i = 0; i < n; ++i) {
        bool diag_done = false;
        for (int e = adj.row_begin(i); e < adj.row_end(i); ++e) {
            int j = adj.indices[e];
            if (!diag_done && j > i) {
                out.indices.push_back(i);
                out.values.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[i]);
                diag_done = true;
            }
            out.indices.push_back(j);
            out.values.push_back(adj.values[e] * inv_sqrt_deg[i] * inv_sqrt_deg[j]);
        }
        if (!diag_done) {
            out.indices.push_back(i);
            out.values.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[i]);
        }
        out.indptr[i + 1] = static_cast<int>(out.indices.size());
    }
    return NormalizedAdjacency{std::move(out)};
}

NormalizedAdjacency normalize_adjacency(const SparseGraph& g) {
    return normalize_adjacency(g.adj);
}

CsrMatrix induced_subgraph_csr(const CsrMatrix& adj, std::span<const int> idx) {
    const int n = adj.rows;
    const int m = static_cast<int>(idx.size());
    std::vector<int> pos(n, -1); // old node -> new position, -1 if dropped
    for (int a = 0; a < m; ++a) {
        int v = idx[a];
        if (v < 0 || v >= n)
            throw ValueError("induced_subgraph: index " + std::to_string(v) + " out of range");
        if (pos[v] != -1)
            throw ValueError("induced_subgraph: duplicate index " + std::to_string(v));
        pos[v] = a;
    }
    CsrMatrix out(m, m);
    std::vector<std::pair<int, double>> row;
    for (int a = 0; a < m; ++a) {
        int v = idx[a];
        row.clear();
        for (int e = adj.row_begin(v); e < adj.row_end(v); ++e) {
            int b = pos[adj.indices[e]];
            if (b != -1) row.push_back({b, adj.values[e]});
        }
        std::sort(row.begin(), row.end());
        for (auto [b, w] : row) {
            out.indices.push_back(b);
            out.values.push_back(w);
        }
        out.indptr[a + 1] = static_cast<int>(out.indices.size());
    }
    return out;
}

SparseGraph induced_subgraph(const SparseGraph& g, const std::vector<int>& idx) {
    SparseGraph out;
    out.num_nodes = static_cast<int>(idx.size());
    out.adj = induced_subgraph_csr(g.adj, idx);
    out.features = DenseMatrix(out.num_nodes, g.features.cols);
    for (int a = 0; a < out.num_nodes; ++a)
        std::copy_n(g.features.row(idx[a]), g.features.cols, out.features.row(a));
    out.label = g.label;
    return out;
}

CsrMatrix augment_two_hop_csr(const CsrMatrix& adj, bool binarize) {
    const int n = adj.rows;
    CsrMatrix out(n, n);
    std::vector<double> acc(n, 0.0);
    std::vector<int> touched;
    for (int i = 0; i < n; ++i) {
        touched.clear();
        // A row.
        for (int e = adj.row_begin(i); e < adj.row_end(i); ++e) {
            int j = adj.indices[e];
            if (acc[j] == 0.0) touched.push_back(j);
            acc[j] += adj.values[e];
        }
        // A^2 row: paths i -> j -> k; the diagonal (k == i) is dropped.
        for (int e = adj.row_begin(i); e < adj.row_end(i); ++e) {
            int j = adj.indices[e];
            double vij = adj.values[e];
            for (int f = adj.row_begin(j); f < adj.row_end(j); ++f) {
                int k = adj.indices[f];
                if (k == i) continue;
                if (acc[k] == 0.0) touched.push_back(k);
                acc[k] += vij * adj.values[f];
            }
        }
        std::sort(touched.begin(), touched.end());
        for (int j : touched) {
            out.indices.push_back(j);
            out.values.push_back(binarize ? 1.0 : acc[j]);
            acc[j] = 0.0;
        }
        out.indptr[i + 1] = static_cast<int>(out.indices.size());
    }
    return out;
}

SparseGraph augment_two_hop(const SparseGraph& g, bool binarize) {
    SparseGraph out = g;
    out.adj = augment_two_hop_csr(g.adj, binarize);
    return out;
}

GraphBatch make_batch(std::span<const SparseGraph* const> graphs) {
    if (graphs.empty()) throw ValueError("make_batch: empty graph list");
    const int f = graphs[0]->feature_dim();
    int total_nodes = 0;
    int total_nnz = 0;
    for (const SparseGraph* g : graphs) {
        if (g->feature_dim() != f)
            throw ValueError("make_batch: mismatched feature dimensions (" +
                             std::to_string(g->feature_dim()) + " vs " + std::to_string(f) + ")");
        total_nodes += g->num_nodes;
        total_nnz += g->adj.nnz();
    }
    GraphBatch b;
    b.adj = CsrMatrix(total_nodes, total_nodes);
    b.adj.indices.reserve(total_nnz);
    b.adj.values.reserve(total_nnz);
    b.features = DenseMatrix(total_nodes, f);
    b.indicator.resize(total_nodes);
    b.node_offsets.push_back(0);
    int base = 0;
    for (size_t gi = 0; gi < graphs.size(); ++gi) {
        const SparseGraph& g = *graphs[gi];
        for (int i = 0; i < g.num_nodes; ++i) {
            for (int e = g.adj.row_begin(i); e < g.adj.row_end(i); ++e) {
                b.adj.indices.push_back(base + g.adj.indices[e]);
                b.adj.values.push_back(g.adj.values[e]);
            }
            b.adj.indptr[base + i + 1] = static_cast<int>(b.adj.indices.size());
            b.indicator[base + i] = static_cast<int>(gi);
            std::copy_n(g.features.row(i), f, b.features.row(base + i));
        }
        b.labels.push_back(g.label);
        base += g.num_nodes;
        b.node_offsets.push_back(base);
    }
    return b;
}

GraphBatch make_batch(const std::vector<SparseGraph>& graphs) {
    std::vector<const SparseGraph*> ptrs;
    ptrs.reserve(graphs.size());
    for (const auto& g : graphs) ptrs.push_back(&g);
    return make_batch(ptrs);
}

SparseGraph extract_graph(const GraphBatch& batch, int g) {
    if (g < 0 || g >= batch.num_graphs())
        throw ValueError("extract_graph: graph index out of range");
    const int lo = batch.node_offsets[g];
    const int hi = batch.node_offsets[g + 1];
    SparseGraph out;
    out.num_nodes = hi - lo;
    out.adj = CsrMatrix(out.num_nodes, out.num_nodes);
    for (int i = lo; i < hi; ++i) {
        for (int e = batch.adj.row_begin(i); e < batch.adj.row_end(i); ++e) {
            out.adj.indices.push_back(batch.adj.indices[e] - lo);
            out.adj.values.push_back(batch.adj.values[e]);
        }
        out.adj.indptr[i - lo + 1] = static_cast<int>(out.adj.indices.size());
    }
    out.features = DenseMatrix(out.num_nodes, batch.features.cols);
    for (int i = lo; i < hi; ++i)
        std::copy_n(batch.features.row(i), batch.features.cols, out.features.row(i - lo));
    out.label = batch.labels[g];
    return out;
}

} // namespace sagpool
