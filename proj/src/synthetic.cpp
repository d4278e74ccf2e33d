#include "sagpool/synthetic.hpp"

#include "sagpool/error.hpp"

#include <set>
#include <utility>

namespace sagpool {

SparseGraph make_cycle(int n, int label) {
    if (n < 3) throw ValueError("cycle needs at least 3 nodes");
    std::vector<std::pair<int, int>> edges;
    edges.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
    DenseMatrix x(n, 1);
    x.fill(1.0);
    return make_graph(n, edges, std::move(x), label);
}

SparseGraph make_star(int n, int label) {
    if (n < 2) throw ValueError("star needs at least 2 nodes");
    std::vector<std::pair<int, int>> edges;
    edges.reserve(static_cast<size_t>(n - 1));
    for (int i = 1; i < n; ++i) edges.emplace_back(0, i);
    DenseMatrix x(n, 1);
    x.fill(1.0);
    return make_graph(n, edges, std::move(x), label);
}

Dataset synthetic_topology_dataset(int per_class, int min_nodes, int max_nodes, uint64_t seed) {
    if (per_class < 1) throw ValueError("need at least one graph per class");
    if (min_nodes < 3 || max_nodes < min_nodes)
        throw ValueError("node range must satisfy 3 <= min <= max");
    Dataset ds;
    ds.name = "synthetic";
    ds.num_classes = 2;
    ds.graphs.reserve(static_cast<size_t>(2 * per_class));
    Rng cycle_rng = substream(seed, "cycle-sizes");
    Rng star_rng = substream(seed, "star-sizes");
    const int span = max_nodes - min_nodes + 1;
    for (int i = 0; i < per_class; ++i)
        ds.graphs.push_back(make_cycle(min_nodes + cycle_rng.uniform_int(span), 0));
    for (int i = 0; i < per_class; ++i)
        ds.graphs.push_back(make_star(min_nodes + star_rng.uniform_int(span), 1));
    return ds;
}

SparseGraph random_simple_graph(int n, double avg_degree, int feature_dim, Rng& rng, int label) {
    if (n < 1) throw ValueError("graph needs at least one node");
    if (avg_degree < 0.0) throw ValueError("average degree must be non-negative");
    if (feature_dim < 1) throw ValueError("feature dimension must be positive");
    const long long max_edges = static_cast<long long>(n) * (n - 1) / 2;
    long long target = static_cast<long long>(avg_degree * n / 2.0 + 0.5);
    if (target > max_edges) target = max_edges;
    std::set<std::pair<int, int>> picked;
    while (static_cast<long long>(picked.size()) < target) {
        int a = rng.uniform_int(n);
        int b = rng.uniform_int(n);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        picked.insert({a, b});
    }
    std::vector<std::pair<int, int>> edges(picked.begin(), picked.end());
    DenseMatrix x(n, feature_dim);
    for (double& v : x.data) v = rng.uniform() * 2.0 - 1.0;
    return make_graph(n, edges, std::move(x), label);
}

} // namespace sagpool
