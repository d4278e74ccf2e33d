#include "sagpool/bench.hpp"

#include "sagpool/error.hpp"
#include "sagpool/layers.hpp"
#include "sagpool/synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace sagpool {

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// Full sparse pooling pass on a prebuilt batch: normalize, score, rank, cut.
void sparse_once(const GraphBatch& batch, const PoolingLayer& layer, double ratio) {
    BatchState state = initial_state(batch);
    auto result = layer.forward(state, [&](int n) { return top_rank_count(ratio, n); });
    if (result.state.h.rows() < 1) throw ValueError("pooling dropped every node");
}

// Same computation against dense n x n matrices, written straight-line so its
// cost is the textbook one: normalization and score propagation touch every
// (i, j) pair regardless of sparsity.
void dense_once(const std::vector<std::vector<double>>& a, const DenseMatrix& x,
                const DenseMatrix& w, double ratio) {
    const int n = static_cast<int>(a.size());
    const int f = x.cols;

    // D^{-1/2} (A + I) D^{-1/2}
    std::vector<double> dinv(n);
    for (int i = 0; i < n; ++i) {
        double deg = 1.0;
        for (int j = 0; j < n; ++j) deg += a[i][j];
        dinv[i] = 1.0 / std::sqrt(deg);
    }
    std::vector<std::vector<double>> norm(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) norm[i][j] = dinv[i] * a[i][j] * dinv[j];
        norm[i][i] += dinv[i] * dinv[i];
    }

    // z = tanh(norm (x w))
    std::vector<double> xw(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = 0; k < f; ++k) acc += x.at(i, k) * w.at(k, 0);
        xw[i] = acc;
    }
    std::vector<double> z(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += norm[i][j] * xw[j];
        z[i] = std::tanh(acc);
    }

    // top-k by score, ties toward the lower index
    const int keep = top_rank_count(ratio, n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int l, int r) { return z[l] > z[r]; });
    order.resize(keep);

    // gated surviving features and the induced dense adjacency
    std::vector<double> gated(static_cast<size_t>(keep) * f);
    for (int i = 0; i < keep; ++i)
        for (int k = 0; k < f; ++k) gated[static_cast<size_t>(i) * f + k] = x.at(order[i], k) * z[order[i]];
    double checksum = 0.0;
    for (int i = 0; i < keep; ++i)
        for (int j = 0; j < keep; ++j) checksum += a[order[i]][order[j]];
    if (checksum < 0.0) throw ValueError("negative adjacency weight");
}

// Seconds per run: calibrate repetitions to a measurable window, take the
// fastest of three samples to shed scheduler noise.
template <typename F>
double time_run(F&& run) {
    run(); // warm up caches and allocators
    double t0 = now_seconds();
    run();
    double single = now_seconds() - t0;
    int reps = 1;
    if (single < 0.02) reps = static_cast<int>(std::min(1000.0, std::ceil(0.02 / std::max(single, 1e-9))));
    double best = std::numeric_limits<double>::infinity();
    for (int sample = 0; sample < 3; ++sample) {
        double start = now_seconds();
        for (int r = 0; r < reps; ++r) run();
        best = std::min(best, (now_seconds() - start) / reps);
    }
    return best;
}

} // namespace

std::vector<BenchPoint> run_pool_bench(const std::vector<int>& sizes, double avg_degree,
                                       int feature_dim, double ratio, uint64_t seed,
                                       bool with_dense, int max_dense_nodes) {
    if (sizes.empty()) throw ValueError("no sizes to benchmark");
    std::vector<BenchPoint> points;
    points.reserve(sizes.size());
    NoGradGuard ng;
    for (size_t i = 0; i < sizes.size(); ++i) {
        const int n = sizes[i];
        Rng rng = substream(seed, "bench-graph", i);
        SparseGraph g = random_simple_graph(n, avg_degree, feature_dim, rng);
        std::vector<const SparseGraph*> one = {&g};
        GraphBatch batch = make_batch(one);

        Rng layer_rng = substream(seed, "bench-layer", i);
        PoolConfig cfg;
        cfg.ratio = ratio;
        PoolingLayer layer(feature_dim, cfg, layer_rng);

        BenchPoint p;
        p.num_nodes = n;
        p.num_edges = g.num_edges();

        reset_spmm_work();
        sparse_once(batch, layer, ratio);
        p.spmm_ops = spmm_work();

        p.sparse_seconds = time_run([&] { sparse_once(batch, layer, ratio); });

        if (with_dense && n <= max_dense_nodes) {
            std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
            for (int r = 0; r < g.adj.rows; ++r)
                for (int e = g.adj.row_begin(r); e < g.adj.row_end(r); ++e)
                    a[r][g.adj.indices[e]] = g.adj.values[e];
            DenseMatrix w(feature_dim, 1);
            Rng wrng = substream(seed, "bench-dense-w", i);
            for (double& v : w.data) v = wrng.uniform() * 2.0 - 1.0;
            p.dense_seconds = time_run([&] { dense_once(a, g.features, w, ratio); });
        }
        points.push_back(p);
    }
    return points;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ValueError("need two matched points for a slope");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        if (x[i] <= 0.0 || y[i] <= 0.0) throw ValueError("log-log fit needs positive values");
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw ValueError("log-log fit needs distinct x values");
    return (n * sxy - sx * sy) / denom;
}

std::string bench_csv(const std::vector<BenchPoint>& points) {
    std::ostringstream out;
    out << "nodes,edges,spmm_ops,sparse_seconds,dense_seconds\n";
    char buf[64];
    for (const BenchPoint& p : points) {
        out << p.num_nodes << ',' << p.num_edges << ',' << p.spmm_ops << ',';
        std::snprintf(buf, sizeof(buf), "%.9g", p.sparse_seconds);
        out << buf << ',';
        if (p.dense_seconds >= 0.0) {
            std::snprintf(buf, sizeof(buf), "%.9g", p.dense_seconds);
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

} // namespace sagpool
