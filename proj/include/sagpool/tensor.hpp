#pragma once

#include "sagpool/matrix.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

namespace sagpool {

/// Dense 2-D value participating in reverse-mode differentiation. A Tensor is
/// a shared handle to a graph-of-computation node; ops build new nodes that
/// reference their inputs, and backward() replays the tape in reverse
/// topological order. A computation graph is confined to one thread.
class Tensor {
public:
    struct Node {
        DenseMatrix value;
        DenseMatrix grad; // allocated on first accumulation
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        // Reads this node's grad and accumulates vector-Jacobian products
        // into the parents' grads. Null for leaves and constants.
        std::function<void(Node&)> backprop;

        DenseMatrix& ensure_grad() {
            if (!grad.same_shape(value)) grad = DenseMatrix(value.rows, value.cols);
            return grad;
        }
    };

    Tensor() = default;

    static Tensor from(DenseMatrix value, bool requires_grad = false);
    static Tensor zeros(int rows, int cols, bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    int rows() const { return node_->value.rows; }
    int cols() const { return node_->value.cols; }
    const DenseMatrix& value() const { return node_->value; }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    /// Direct value access for leaf mutation (optimizer steps, finite
    /// differencing). Using it on an op output would desynchronize the tape.
    DenseMatrix& raw_value() { return node_->value; }

    const DenseMatrix& grad() const { return node_->ensure_grad(); }
    void zero_grad() { node_->ensure_grad().fill(0.0); }

    std::shared_ptr<Node> node() const { return node_; }

    /// Op-node constructor used by every operation (including fused ops
    /// defined outside this module). Skips the tape when no parent needs
    /// gradients or gradients are globally disabled.
    static Tensor make_op(DenseMatrix value, const std::vector<Tensor>& parents,
                          std::function<void(Node&)> backprop, const char* what);

private:
    std::shared_ptr<Node> node_;
};

/// Disables tape construction in scope (evaluation, finite differencing).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

/// Populates grad fields of all requires-grad leaves reachable from `loss`
/// (a 1x1 tensor). Leaf gradients accumulate across calls; interior gradients
/// are reset per call. Each node's backprop runs exactly once.
void backward(const Tensor& loss);

// ---- dense ops --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b); // same shape
Tensor scale(const Tensor& a, double c);
/// x (N x F) with each row i scaled by col (N x 1) entry i.
Tensor colwise_mul(const Tensor& x, const Tensor& col);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Rows of x reordered/selected by idx; gradient flows only to selected rows.
Tensor gather_rows(const Tensor& x, std::vector<int> idx);
/// Per-segment mean of rows; indicator maps row -> segment in [0, num_segments).
Tensor segment_mean(const Tensor& x, std::vector<int> indicator, int num_segments);
/// Per-segment columnwise max; gradient routes to the first (lowest row
/// index) argmax row per segment per column.
Tensor segment_max(const Tensor& x, std::vector<int> indicator, int num_segments);
Tensor sum_all(const Tensor& x);
/// Projection scores x * p / ||p||_2 for p an F x 1 vector with nonzero norm.
Tensor project_rows(const Tensor& x, const Tensor& p);

// ---- sparse kernel ----------------------------------------------------------

/// CSR x dense product; work is proportional to nnz(s) * cols(d). The
/// gradient w.r.t. d is S^T * upstream (s itself is constant).
Tensor spmm(const CsrMatrix& s, const Tensor& d);

/// Multiply-add count executed by spmm kernels on this thread since the last
/// reset, used to verify the complexity contract.
uint64_t spmm_work();
void reset_spmm_work();

// ---- gradcheck support --------------------------------------------------------

/// While registered (thread-local), forward passes record how close inputs
/// came to non-differentiable points: relu kinks, top-rank selection
/// boundaries, segment-max argmax ties. The finite-difference checker uses
/// these to reject and resample inputs too close to a kink.
struct KinkMargins {
    double relu = std::numeric_limits<double>::infinity();
    double topk = std::numeric_limits<double>::infinity();
    double segmax = std::numeric_limits<double>::infinity();

    double min() const { return std::min(relu, std::min(topk, segmax)); }
};

KinkMargins* active_margins();
void set_active_margins(KinkMargins* m);

} // namespace sagpool
