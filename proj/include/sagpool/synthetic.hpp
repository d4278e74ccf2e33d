#pragma once

#include "sagpool/dataset.hpp"
#include "sagpool/rng.hpp"

namespace sagpool {

/// Cycle graph C_n, n >= 3: every node has degree 2.
SparseGraph make_cycle(int n, int label = 0);

/// Star graph S_n, n >= 2: node 0 is the hub joined to n - 1 leaves.
SparseGraph make_star(int n, int label = 1);

/// Topology-only classification benchmark: `per_class` cycles (label 0) and
/// stars (label 1). Sizes for both classes are drawn from the same uniform
/// range and every node carries the constant feature 1.0, so nothing but
/// structure separates the classes.
Dataset synthetic_topology_dataset(int per_class, int min_nodes, int max_nodes, uint64_t seed);

/// Random simple graph with about n * avg_degree / 2 distinct edges and
/// uniform [-1, 1) features. For gradient checks and scaling benchmarks.
SparseGraph random_simple_graph(int n, double avg_degree, int feature_dim, Rng& rng,
                                int label = 0);

} // namespace sagpool
