#pragma once

#include "sagpool/matrix.hpp"

#include <span>
#include <vector>

namespace sagpool {

/// One graph: symmetric CSR adjacency without self-loops, node features and
/// a class label. Immutable after construction.
struct SparseGraph {
    int num_nodes = 0;
    CsrMatrix adj;         // num_nodes x num_nodes, symmetric, zero diagonal
    DenseMatrix features;  // num_nodes x F
    int label = 0;

    int feature_dim() const { return features.cols; }
    /// Undirected edge count (stored entries count both directions).
    int num_edges() const { return adj.nnz() / 2; }
};

/// Symmetrically normalized adjacency with self-loops materialized:
/// entry (i, j) of D^{-1/2} (A + I) D^{-1/2} where D is the degree of A + I.
struct NormalizedAdjacency {
    CsrMatrix m;
};

/// Several graphs merged into one block-diagonal graph so a single sparse
/// kernel processes the whole minibatch.
struct GraphBatch {
    CsrMatrix adj;
    DenseMatrix features;
    std::vector<int> indicator;     // node -> graph index, non-decreasing
    std::vector<int> labels;        // per graph
    std::vector<int> node_offsets;  // size num_graphs + 1

    int num_graphs() const { return static_cast<int>(labels.size()); }
    int num_nodes() const { return adj.rows; }
};

/// Builds a SparseGraph from an undirected edge list. Directed duplicates are
/// symmetrized with value max, repeated edges deduplicated, self-loops dropped.
SparseGraph make_graph(int num_nodes, const std::vector<std::pair<int, int>>& edges,
                       DenseMatrix features, int label = 0);

/// Same, with explicit edge weights.
SparseGraph make_graph_weighted(int num_nodes,
                                const std::vector<std::pair<std::pair<int, int>, double>>& edges,
                                DenseMatrix features, int label = 0);

/// Throws ValueError if any SparseGraph invariant is violated.
void validate_graph(const SparseGraph& g);

/// D^{-1/2} (A + I) D^{-1/2} in CSR form; the input is not modified.
/// Every valid graph normalizes; an isolated node gets diagonal entry 1.
NormalizedAdjacency normalize_adjacency(const CsrMatrix& adj);
NormalizedAdjacency normalize_adjacency(const SparseGraph& g);

/// Adjacency (and features) restricted to `idx`: output entry (a, b) equals
/// input entry (idx[a], idx[b]). Output node order follows idx order.
/// Duplicate or out-of-range indices raise ValueError.
CsrMatrix induced_subgraph_csr(const CsrMatrix& adj, std::span<const int> idx);
SparseGraph induced_subgraph(const SparseGraph& g, const std::vector<int>& idx);

/// A + A^2 with the diagonal of A^2 dropped (self-loops are added later, at
/// normalization). Off-diagonal values keep weighted path counts unless
/// `binarize` clamps them to 1.
CsrMatrix augment_two_hop_csr(const CsrMatrix& adj, bool binarize = false);
SparseGraph augment_two_hop(const SparseGraph& g, bool binarize = false);

/// Block-diagonal merge in list order. All graphs must share the feature
/// dimension; an empty list is an error.
GraphBatch make_batch(std::span<const SparseGraph* const> graphs);
GraphBatch make_batch(const std::vector<SparseGraph>& graphs);

/// Inverse of make_batch for one block.
SparseGraph extract_graph(const GraphBatch& batch, int g);

} // namespace sagpool
