#pragma once

// Shared generators for test inputs.

#include "sagpool/graph.hpp"
#include "sagpool/rng.hpp"

#include <set>
#include <utility>
#include <vector>

namespace testgen {

using namespace sagpool;

inline DenseMatrix random_features(int n, int f, Rng& rng, double lo = -1.0, double hi = 1.0) {
    DenseMatrix m(n, f);
    for (double& v : m.data) v = rng.uniform(lo, hi);
    return m;
}

/// Random simple undirected graph with roughly `target_edges` edges.
inline SparseGraph random_graph(int n, int target_edges, int feature_dim, Rng& rng,
                                int label = 0) {
    std::set<std::pair<int, int>> seen;
    std::vector<std::pair<int, int>> edges;
    for (int t = 0; t < target_edges * 3 && static_cast<int>(edges.size()) < target_edges; ++t) {
        int u = rng.uniform_int(n);
        int v = rng.uniform_int(n);
        if (u == v) continue;
        auto key = std::minmax(u, v);
        if (seen.insert(key).second) edges.push_back(key);
    }
    return make_graph(n, edges, random_features(n, feature_dim, rng), label);
}

inline SparseGraph path_graph(int n, DenseMatrix features, int label = 0) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
    return make_graph(n, edges, std::move(features), label);
}

} // namespace testgen
