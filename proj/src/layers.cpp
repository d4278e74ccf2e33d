#include "sagpool/layers.hpp"

#include "sagpool/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sagpool {

Tensor glorot(int rows, int cols, Rng& rng) {
    const double s = std::sqrt(6.0 / (rows + cols));
    DenseMatrix m(rows, cols);
    for (double& v : m.data) v = rng.uniform(-s, s);
    return Tensor::from(std::move(m), true);
}

GcnLayer::GcnLayer(int in_dim, int out_dim, Rng& rng) : w_(glorot(in_dim, out_dim, rng)) {
    if (in_dim < 1 || out_dim < 1) throw ValueError("GcnLayer: dimensions must be positive");
}

Tensor GcnLayer::forward(const CsrMatrix& norm_adj, const Tensor& h, bool activate) const {
    Tensor out = spmm(norm_adj, matmul(h, w_));
    return activate ? relu(out) : out;
}

BatchState initial_state(const GraphBatch& batch) {
    BatchState s;
    s.adj = batch.adj;
    s.norm = normalize_adjacency(batch.adj).m;
    s.indicator = batch.indicator;
    s.num_graphs = batch.num_graphs();
    s.h = Tensor::from(batch.features);
    return s;
}

int top_rank_count(double ratio, int n) {
    if (!(ratio > 0.0) || ratio > 1.0)
        throw ValueError("top_rank_count: keep ratio must be in (0, 1]");
    if (n < 1) throw ValueError("top_rank_count: graph has no nodes");
    // The nudge keeps exact products like 0.1 * 30 from rounding up to 4;
    // ratios this close to a node-count boundary are otherwise meaningless.
    const int k = static_cast<int>(std::ceil(ratio * n - 1e-9));
    return std::clamp(k, 1, n);
}

std::vector<int> top_rank(const DenseMatrix& scores, const std::vector<int>& indicator,
                          int num_graphs, const std::function<int(int)>& count) {
    if (scores.cols != 1) throw ShapeError("top_rank: scores must be a column");
    if (static_cast<int>(indicator.size()) != scores.rows)
        throw ValueError("top_rank: indicator size does not match scores");
    if (num_graphs < 1) throw ValueError("top_rank: no graphs");

    std::vector<std::vector<int>> nodes(num_graphs);
    for (int i = 0; i < scores.rows; ++i) {
        const int g = indicator[i];
        if (g < 0 || g >= num_graphs) throw ValueError("top_rank: indicator id out of range");
        nodes[g].push_back(i);
    }

    std::vector<int> kept;
    kept.reserve(scores.rows);
    for (int g = 0; g < num_graphs; ++g) {
        const int n = static_cast<int>(nodes[g].size());
        if (n == 0) throw ValueError("top_rank: graph " + std::to_string(g) + " has no nodes");
        const int k = count(n);
        if (k < 1 || k > n)
            throw ValueError("top_rank: keep count " + std::to_string(k) + " outside [1, " +
                             std::to_string(n) + "]");
        std::sort(nodes[g].begin(), nodes[g].end(), [&](int a, int b) {
            if (scores.at(a, 0) != scores.at(b, 0)) return scores.at(a, 0) > scores.at(b, 0);
            return a < b;
        });
        if (KinkMargins* m = active_margins(); m && k < n) {
            // Exact ties across the boundary come from structural symmetry
            // (identical rows of a normalized adjacency, relu-dead regions);
            // tied scores move in lockstep and the index tie-break keeps the
            // selection stable, so only NEAR-ties threaten differencing.
            const double gap = scores.at(nodes[g][k - 1], 0) - scores.at(nodes[g][k], 0);
            if (gap != 0.0) m->topk = std::min(m->topk, gap);
        }
        kept.insert(kept.end(), nodes[g].begin(), nodes[g].begin() + k);
    }
    return kept;
}

Tensor readout(const Tensor& h, const std::vector<int>& indicator, int num_graphs) {
    return concat_cols({segment_mean(h, indicator, num_graphs),
                        segment_max(h, indicator, num_graphs)});
}

PoolingLayer::PoolingLayer(int in_dim, PoolConfig cfg, Rng& rng) : cfg_(cfg), in_dim_(in_dim) {
    if (in_dim < 1) throw ValueError("PoolingLayer: feature dimension must be positive");
    if (!(cfg.ratio > 0.0) || cfg.ratio > 1.0)
        throw ValueError("PoolingLayer: keep ratio must be in (0, 1]");
    switch (cfg_.kind == PoolKind::gpool ? AttentionVariant::base : cfg_.variant) {
    case AttentionVariant::base:
    case AttentionVariant::augmentation:
        params_.push_back(glorot(in_dim, 1, rng));
        break;
    case AttentionVariant::serial:
        params_.push_back(glorot(in_dim, in_dim, rng));
        params_.push_back(glorot(in_dim, 1, rng));
        break;
    case AttentionVariant::parallel:
        if (cfg_.heads < 1) throw ValueError("PoolingLayer: parallel variant needs >= 1 head");
        for (int m = 0; m < cfg_.heads; ++m) params_.push_back(glorot(in_dim, 1, rng));
        break;
    }
}

int PoolingLayer::param_count() const {
    int n = 0;
    for (const Tensor& p : params_) n += p.rows() * p.cols();
    return n;
}

PoolingLayer::Scores PoolingLayer::scores(const BatchState& in) const {
    if (in.h.cols() != in_dim_)
        throw ShapeError("PoolingLayer: got " + std::to_string(in.h.cols()) +
                         " feature columns, built for " + std::to_string(in_dim_));
    Scores out;
    if (cfg_.kind == PoolKind::gpool) {
        // Projection scores never see the adjacency: ranking is on the raw
        // projection, the gate saturates it through tanh.
        Tensor y = project_rows(in.h, params_[0]);
        out.rank_on = y.value();
        out.gate = tanh(y);
        return out;
    }
    switch (cfg_.variant) {
    case AttentionVariant::base: {
        out.gate = tanh(spmm(in.norm, matmul(in.h, params_[0])));
        break;
    }
    case AttentionVariant::augmentation: {
        // Scores flow over the two-hop augmented graph; the pooled output
        // still cuts the ORIGINAL adjacency (see forward).
        const CsrMatrix aug =
            normalize_adjacency(augment_two_hop_csr(in.adj, cfg_.binarize_augmented)).m;
        out.gate = tanh(spmm(aug, matmul(in.h, params_[0])));
        break;
    }
    case AttentionVariant::serial: {
        Tensor inner = tanh(spmm(in.norm, matmul(in.h, params_[0])));
        out.gate = tanh(spmm(in.norm, matmul(inner, params_[1])));
        break;
    }
    case AttentionVariant::parallel: {
        Tensor sum;
        for (const Tensor& w : params_) {
            Tensor z = tanh(spmm(in.norm, matmul(in.h, w)));
            sum = sum.defined() ? add(sum, z) : z;
        }
        out.gate = scale(sum, 1.0 / static_cast<double>(params_.size()));
        break;
    }
    }
    out.rank_on = out.gate.value();
    return out;
}

PoolingLayer::Result PoolingLayer::forward(const BatchState& in,
                                           const std::function<int(int)>& count) const {
    Scores s = scores(in);
    Result r;
    r.kept = top_rank(s.rank_on, in.indicator, in.num_graphs, count);

    r.state.adj = induced_subgraph_csr(in.adj, r.kept);
    r.state.norm = normalize_adjacency(r.state.adj).m;
    r.state.num_graphs = in.num_graphs;
    r.state.indicator.reserve(r.kept.size());
    for (int i : r.kept) r.state.indicator.push_back(in.indicator[i]);
    r.state.h = colwise_mul(gather_rows(in.h, r.kept), gather_rows(s.gate, r.kept));
    return r;
}

PoolingLayer::Result PoolingLayer::forward(const BatchState& in) const {
    const double ratio = cfg_.ratio;
    return forward(in, [ratio](int n) { return top_rank_count(ratio, n); });
}

} // namespace sagpool
