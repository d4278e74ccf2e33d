#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sagpool {

/// One measured size of the pooling scaling probe.
struct BenchPoint {
    int num_nodes = 0;
    long long num_edges = 0;      // undirected
    uint64_t spmm_ops = 0;        // multiply-adds in the sparse path, one pass
    double sparse_seconds = 0.0;  // per forward, sparse pipeline
    double dense_seconds = -1.0;  // per forward, dense reference; -1 if skipped
};

/// Times one attention-pooling forward (normalize, score, select, induce) at
/// each node count against a straight-line dense reference. Graphs are random
/// with the given average degree, so edge count grows linearly with nodes:
/// the sparse path should scale with edges, the dense path with nodes^2.
std::vector<BenchPoint> run_pool_bench(const std::vector<int>& sizes, double avg_degree,
                                       int feature_dim, double ratio, uint64_t seed,
                                       bool with_dense = true, int max_dense_nodes = 1 << 14);

/// Least-squares slope of log(y) against log(x). Sizes must be positive.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

std::string bench_csv(const std::vector<BenchPoint>& points);

} // namespace sagpool
