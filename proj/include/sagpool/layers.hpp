#pragma once

#include "sagpool/graph.hpp"
#include "sagpool/rng.hpp"
#include "sagpool/tensor.hpp"

#include <functional>
#include <vector>

namespace sagpool {

/// Glorot-uniform initialized parameter: U(-s, s), s = sqrt(6 / (rows + cols)).
Tensor glorot(int rows, int cols, Rng& rng);

/// Graph convolution relu(A_hat h W). The adjacency is data; the weight
/// matrix is the layer's only state. `activate = false` drops the relu (used
/// where a different nonlinearity follows).
class GcnLayer {
public:
    GcnLayer(int in_dim, int out_dim, Rng& rng);

    Tensor forward(const CsrMatrix& norm_adj, const Tensor& h, bool activate = true) const;

    std::vector<Tensor> parameters() const { return {w_}; }
    int in_dim() const { return w_.rows(); }
    int out_dim() const { return w_.cols(); }

private:
    Tensor w_;
};

/// The evolving minibatch state threaded through convolutions and pooling:
/// current adjacency (raw and normalized), node-to-graph map and features.
struct BatchState {
    CsrMatrix adj;
    CsrMatrix norm;
    std::vector<int> indicator;
    int num_graphs = 0;
    Tensor h;
};

/// Wraps a merged batch for the first layer. Features enter as constants;
/// gradients stop at the parameters.
BatchState initial_state(const GraphBatch& batch);

/// Nodes kept when a graph of n nodes is pooled at keep-ratio `ratio`:
/// ceil(ratio * n), clamped to [1, n].
int top_rank_count(double ratio, int n);

/// Per-graph top-k selection. For each graph, keeps the `count(n)` nodes
/// with the highest scores (ties broken toward the lower node index),
/// ordered by descending score; graphs contribute in batch order. Selection
/// is not differentiable, so scores arrive as plain values.
std::vector<int> top_rank(const DenseMatrix& scores, const std::vector<int>& indicator,
                          int num_graphs, const std::function<int(int)>& count);

/// Graph embedding [columnwise mean || columnwise max] per graph, G x 2F.
Tensor readout(const Tensor& h, const std::vector<int>& indicator, int num_graphs);

enum class PoolKind {
    sagpool, // attention scores from a graph convolution over the features
    gpool,   // scores from projection onto a learned vector, blind to topology
};

enum class AttentionVariant {
    base,         // tanh(A_hat h w)
    augmentation, // scores on the normalized two-hop augmented adjacency
    serial,       // tanh(A_hat tanh(A_hat h W1) W2), a two-layer score stack
    parallel,     // mean of M independently parameterized base scores
};

struct PoolConfig {
    PoolKind kind = PoolKind::sagpool;
    AttentionVariant variant = AttentionVariant::base;
    int heads = 3;                  // parallel variant only
    bool binarize_augmented = false;
    double ratio = 0.5;             // default keep ratio when no count fn is given
};

/// Self-attention (or projection) pooling: score every node, keep the
/// top-scoring nodes per graph, gate the surviving features by their scores
/// and induce the subgraph on the ORIGINAL adjacency.
class PoolingLayer {
public:
    PoolingLayer(int in_dim, PoolConfig cfg, Rng& rng);

    struct Scores {
        Tensor gate;            // N x 1, multiplies surviving features
        DenseMatrix rank_on;    // values ranking is performed on
    };

    /// Differentiable scores for every node of the current state.
    Scores scores(const BatchState& in) const;

    struct Result {
        BatchState state;
        std::vector<int> kept; // input-numbering ids of surviving nodes
    };

    Result forward(const BatchState& in, const std::function<int(int)>& count) const;
    Result forward(const BatchState& in) const; // count from cfg.ratio

    std::vector<Tensor> parameters() const { return params_; }
    int param_count() const;
    const PoolConfig& config() const { return cfg_; }
    int in_dim() const { return in_dim_; }

private:
    PoolConfig cfg_;
    int in_dim_ = 0;
    std::vector<Tensor> params_;
};

} // namespace sagpool
