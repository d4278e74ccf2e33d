#include "sagpool/tensor.hpp"

#include "sagpool/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <unordered_set>

namespace sagpool {

namespace {

bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

uint64_t& spmm_counter() {
    thread_local uint64_t count = 0;
    return count;
}

KinkMargins*& margin_slot() {
    thread_local KinkMargins* margins = nullptr;
    return margins;
}

std::string shape_str(const DenseMatrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

[[noreturn]] void shape_fail(const char* op, const DenseMatrix& a, const DenseMatrix& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// out += a * b
void acc_nn(DenseMatrix& out, const DenseMatrix& a, const DenseMatrix& b) {
    for (int i = 0; i < a.rows; ++i) {
        double* orow = out.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            const double* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
}

// out += a * b^T
void acc_nt(DenseMatrix& out, const DenseMatrix& a, const DenseMatrix& b) {
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (int k = 0; k < b.rows; ++k) {
            const double* brow = b.row(k);
            double dot = 0.0;
            for (int j = 0; j < a.cols; ++j) dot += arow[j] * brow[j];
            orow[k] += dot;
        }
    }
}

// out += a^T * b
void acc_tn(DenseMatrix& out, const DenseMatrix& a, const DenseMatrix& b) {
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        const double* brow = b.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            double* orow = out.row(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
}

DenseMatrix& parent_grad(const Tensor& p) { return p.node()->ensure_grad(); }

} // namespace

Tensor Tensor::from(DenseMatrix value, bool requires_grad) {
    check_finite(value, "tensor");
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->value = std::move(value);
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->value = DenseMatrix(rows, cols);
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double v) {
    DenseMatrix m(1, 1);
    m.at(0, 0) = v;
    return from(std::move(m));
}

Tensor Tensor::make_op(DenseMatrix value, const std::vector<Tensor>& parents,
                       std::function<void(Node&)> backprop, const char* what) {
    check_finite(value, what);
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->value = std::move(value);
    bool needs = false;
    if (grad_mode()) {
        for (const Tensor& p : parents) needs = needs || p.requires_grad();
    }
    t.node_->requires_grad = needs;
    if (needs) {
        t.node_->parents.reserve(parents.size());
        for (const Tensor& p : parents) t.node_->parents.push_back(p.node());
        t.node_->backprop = std::move(backprop);
    }
    return t;
}

NoGradGuard::NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
NoGradGuard::~NoGradGuard() { grad_mode() = prev_; }

bool grad_enabled() { return grad_mode(); }

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ValueError("backward: undefined tensor");
    if (loss.rows() != 1 || loss.cols() != 1)
        throw ValueError("backward: loss must be 1x1, got " + shape_str(loss.value()));
    if (!loss.requires_grad()) throw ValueError("backward: loss does not require gradients");

    Tensor::Node* root = loss.node().get();
    if (!root->backprop) { // loss is itself a leaf parameter
        root->ensure_grad().at(0, 0) += 1.0;
        return;
    }

    // Iterative post-order DFS; `order` ends topologically sorted with the
    // root last. Only requires-grad interior nodes are expanded.
    std::vector<Tensor::Node*> order;
    std::unordered_set<Tensor::Node*> seen;
    std::vector<std::pair<Tensor::Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor::Node* p = node->parents[next++].get();
            if (p->requires_grad && p->backprop && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior gradients are scratch space for this call; leaf gradients
    // accumulate across calls until zero_grad.
    for (Tensor::Node* n : order) n->ensure_grad().fill(0.0);
    root->grad.at(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) (*it)->backprop(**it);
}

// ---- dense ops --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const DenseMatrix& av = a.value();
    const DenseMatrix& bv = b.value();
    if (av.cols != bv.rows) shape_fail("matmul", av, bv);
    DenseMatrix out(av.rows, bv.cols);
    acc_nn(out, av, bv);
    return Tensor::make_op(std::move(out), {a, b},
                           [a, b](Tensor::Node& self) {
                               if (a.requires_grad()) acc_nt(parent_grad(a), self.grad, b.value());
                               if (b.requires_grad()) acc_tn(parent_grad(b), a.value(), self.grad);
                           },
                           "matmul");
}

Tensor add(const Tensor& a, const Tensor& b) {
    const DenseMatrix& av = a.value();
    const DenseMatrix& bv = b.value();
    if (!av.same_shape(bv)) shape_fail("add", av, bv);
    DenseMatrix out = av;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
    return Tensor::make_op(std::move(out), {a, b},
                           [a, b](Tensor::Node& self) {
                               for (const Tensor& p : {a, b}) {
                                   if (!p.requires_grad()) continue;
                                   DenseMatrix& g = parent_grad(p);
                                   for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
                               }
                           },
                           "add");
}

Tensor scale(const Tensor& a, double c) {
    DenseMatrix out = a.value();
    for (double& v : out.data) v *= c;
    return Tensor::make_op(std::move(out), {a},
                           [a, c](Tensor::Node& self) {
                               if (!a.requires_grad()) return;
                               DenseMatrix& g = parent_grad(a);
                               for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += c * self.grad.data[i];
                           },
                           "scale");
}

Tensor colwise_mul(const Tensor& x, const Tensor& col) {
    const DenseMatrix& xv = x.value();
    const DenseMatrix& cv = col.value();
    if (cv.cols != 1 || cv.rows != xv.rows) shape_fail("colwise_mul", xv, cv);
    DenseMatrix out = xv;
    for (int i = 0; i < out.rows; ++i) {
        const double s = cv.at(i, 0);
        double* row = out.row(i);
        for (int j = 0; j < out.cols; ++j) row[j] *= s;
    }
    return Tensor::make_op(std::move(out), {x, col},
                           [x, col](Tensor::Node& self) {
                               const DenseMatrix& xv = x.value();
                               const DenseMatrix& cv = col.value();
                               if (x.requires_grad()) {
                                   DenseMatrix& g = parent_grad(x);
                                   for (int i = 0; i < g.rows; ++i) {
                                       const double s = cv.at(i, 0);
                                       const double* up = self.grad.row(i);
                                       double* grow = g.row(i);
                                       for (int j = 0; j < g.cols; ++j) grow[j] += s * up[j];
                                   }
                               }
                               if (col.requires_grad()) {
                                   DenseMatrix& g = parent_grad(col);
                                   for (int i = 0; i < xv.rows; ++i) {
                                       const double* up = self.grad.row(i);
                                       const double* xrow = xv.row(i);
                                       double dot = 0.0;
                                       for (int j = 0; j < xv.cols; ++j) dot += up[j] * xrow[j];
                                       g.at(i, 0) += dot;
                                   }
                               }
                           },
                           "colwise_mul");
}

Tensor relu(const Tensor& x) {
    DenseMatrix out = x.value();
    if (KinkMargins* m = margin_slot()) {
        for (double v : out.data) m->relu = std::min(m->relu, std::fabs(v));
    }
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return Tensor::make_op(std::move(out), {x},
                           [x](Tensor::Node& self) {
                               if (!x.requires_grad()) return;
                               DenseMatrix& g = parent_grad(x);
                               const DenseMatrix& xv = x.value();
                               for (size_t i = 0; i < g.data.size(); ++i)
                                   if (xv.data[i] > 0.0) g.data[i] += self.grad.data[i];
                           },
                           "relu");
}

Tensor tanh(const Tensor& x) {
    DenseMatrix out = x.value();
    for (double& v : out.data) v = std::tanh(v);
    return Tensor::make_op(std::move(out), {x},
                           [x](Tensor::Node& self) {
                               if (!x.requires_grad()) return;
                               DenseMatrix& g = parent_grad(x);
                               for (size_t i = 0; i < g.data.size(); ++i) {
                                   const double t = self.value.data[i];
                                   g.data[i] += (1.0 - t * t) * self.grad.data[i];
                               }
                           },
                           "tanh");
}

Tensor softmax_rows(const Tensor& x) {
    DenseMatrix out = x.value();
    for (int i = 0; i < out.rows; ++i) {
        double* row = out.row(i);
        double mx = row[0];
        for (int j = 1; j < out.cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < out.cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < out.cols; ++j) row[j] /= sum;
    }
    return Tensor::make_op(std::move(out), {x},
                           [x](Tensor::Node& self) {
                               if (!x.requires_grad()) return;
                               DenseMatrix& g = parent_grad(x);
                               for (int i = 0; i < g.rows; ++i) {
                                   const double* s = self.value.row(i);
                                   const double* up = self.grad.row(i);
                                   double dot = 0.0;
                                   for (int j = 0; j < g.cols; ++j) dot += up[j] * s[j];
                                   double* grow = g.row(i);
                                   for (int j = 0; j < g.cols; ++j) grow[j] += s[j] * (up[j] - dot);
                               }
                           },
                           "softmax_rows");
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ValueError("concat_cols: no inputs");
    const int rows = parts.front().rows();
    int cols = 0;
    for (const Tensor& p : parts) {
        if (p.rows() != rows) shape_fail("concat_cols", parts.front().value(), p.value());
        cols += p.cols();
    }
    DenseMatrix out(rows, cols);
    std::vector<int> offsets;
    offsets.reserve(parts.size());
    int at = 0;
    for (const Tensor& p : parts) {
        offsets.push_back(at);
        const DenseMatrix& v = p.value();
        for (int i = 0; i < rows; ++i)
            std::copy(v.row(i), v.row(i) + v.cols, out.row(i) + at);
        at += v.cols;
    }
    return Tensor::make_op(std::move(out), parts,
                           [parts, offsets](Tensor::Node& self) {
                               for (size_t k = 0; k < parts.size(); ++k) {
                                   if (!parts[k].requires_grad()) continue;
                                   DenseMatrix& g = parent_grad(parts[k]);
                                   const int off = offsets[k];
                                   for (int i = 0; i < g.rows; ++i) {
                                       const double* up = self.grad.row(i) + off;
                                       double* grow = g.row(i);
                                       for (int j = 0; j < g.cols; ++j) grow[j] += up[j];
                                   }
                               }
                           },
                           "concat_cols");
}

Tensor gather_rows(const Tensor& x, std::vector<int> idx) {
    const DenseMatrix& xv = x.value();
    for (int i : idx)
        if (i < 0 || i >= xv.rows)
            throw ValueError("gather_rows: index " + std::to_string(i) + " out of range for " +
                             std::to_string(xv.rows) + " rows");
    DenseMatrix out(static_cast<int>(idx.size()), xv.cols);
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy(xv.row(idx[r]), xv.row(idx[r]) + xv.cols, out.row(static_cast<int>(r)));
    return Tensor::make_op(std::move(out), {x},
                           [x, idx = std::move(idx)](Tensor::Node& self) {
                               if (!x.requires_grad()) return;
                               DenseMatrix& g = parent_grad(x);
                               for (size_t r = 0; r < idx.size(); ++r) {
                                   const double* up = self.grad.row(static_cast<int>(r));
                                   double* grow = g.row(idx[r]);
                                   for (int j = 0; j < g.cols; ++j) grow[j] += up[j];
                               }
                           },
                           "gather_rows");
}

namespace {

std::vector<int> segment_counts(const DenseMatrix& x, const std::vector<int>& indicator,
                                int num_segments, const char* op) {
    if (static_cast<int>(indicator.size()) != x.rows)
        throw ValueError(std::string(op) + ": indicator covers " + std::to_string(indicator.size()) +
                         " rows, input has " + std::to_string(x.rows));
    if (num_segments <= 0) throw ValueError(std::string(op) + ": num_segments must be positive");
    std::vector<int> counts(num_segments, 0);
    for (int s : indicator) {
        if (s < 0 || s >= num_segments)
            throw ValueError(std::string(op) + ": segment id " + std::to_string(s) + " out of range");
        ++counts[s];
    }
    for (int s = 0; s < num_segments; ++s)
        if (counts[s] == 0)
            throw ValueError(std::string(op) + ": segment " + std::to_string(s) + " is empty");
    return counts;
}

} // namespace

Tensor segment_mean(const Tensor& x, std::vector<int> indicator, int num_segments) {
    const DenseMatrix& xv = x.value();
    std::vector<int> counts = segment_counts(xv, indicator, num_segments, "segment_mean");
    DenseMatrix out(num_segments, xv.cols);
    for (int i = 0; i < xv.rows; ++i) {
        const double* row = xv.row(i);
        double* orow = out.row(indicator[i]);
        for (int j = 0; j < xv.cols; ++j) orow[j] += row[j];
    }
    for (int s = 0; s < num_segments; ++s) {
        double* orow = out.row(s);
        for (int j = 0; j < xv.cols; ++j) orow[j] /= counts[s];
    }
    return Tensor::make_op(std::move(out), {x},
                           [x, indicator = std::move(indicator), counts = std::move(counts)](Tensor::Node& self) {
                               if (!x.requires_grad()) return;
                               DenseMatrix& g = parent_grad(x);
                               for (int i = 0; i < g.rows; ++i) {
                                   const int s = indicator[i];
                                   const double* up = self.grad.row(s);
                                   double* grow = g.row(i);
                                   const double inv = 1.0 / counts[s];
                                   for (int j = 0; j < g.cols; ++j) grow[j] += up[j] * inv;
                               }
                           },
                           "segment_mean");
}

Tensor segment_max(const Tensor& x, std::vector<int> indicator, int num_segments) {
    const DenseMatrix& xv = x.value();
    segment_counts(xv, indicator, num_segments, "segment_max");
    DenseMatrix out(num_segments, xv.cols);
    out.fill(-std::numeric_limits<double>::infinity());
    std::vector<int> argmax(static_cast<size_t>(num_segments) * xv.cols, -1);
    std::vector<double> runner(argmax.size(), -std::numeric_limits<double>::infinity());
    // Rows scanned in ascending order, ties keep the earlier row.
    for (int i = 0; i < xv.rows; ++i) {
        const int s = indicator[i];
        const double* row = xv.row(i);
        double* orow = out.row(s);
        for (int j = 0; j < xv.cols; ++j) {
            const size_t slot = static_cast<size_t>(s) * xv.cols + j;
            if (row[j] > orow[j]) {
                runner[slot] = orow[j];
                orow[j] = row[j];
                argmax[slot] = i;
            } else if (row[j] > runner[slot]) {
                runner[slot] = row[j];
            }
        }
    }
    if (KinkMargins* m = margin_slot()) {
        for (size_t k = 0; k < argmax.size(); ++k) {
            if (std::isinf(runner[k])) continue; // single-row segment has no tie to break
            const int s = static_cast<int>(k / xv.cols);
            const int j = static_cast<int>(k % xv.cols);
            // Exact ties arise from structure (relu-dead rows, symmetric
            // nodes of a vertex-transitive graph): the tied values move in
            // lockstep under perturbation and the lowest-index rule keeps the
            // routing stable, so they are not kinks. Near-ties are.
            if (out.at(s, j) == runner[k]) continue;
            m->segmax = std::min(m->segmax, out.at(s, j) - runner[k]);
        }
    }
    return Tensor::make_op(std::move(out), {x},
                           [x, argmax = std::move(argmax)](Tensor::Node& self) {
                               if (!x.requires_grad()) return;
                               DenseMatrix& g = parent_grad(x);
                               const int cols = self.value.cols;
                               for (int s = 0; s < self.value.rows; ++s) {
                                   const double* up = self.grad.row(s);
                                   for (int j = 0; j < cols; ++j)
                                       g.at(argmax[static_cast<size_t>(s) * cols + j], j) += up[j];
                               }
                           },
                           "segment_max");
}

Tensor sum_all(const Tensor& x) {
    double total = 0.0;
    for (double v : x.value().data) total += v;
    DenseMatrix out(1, 1);
    out.at(0, 0) = total;
    return Tensor::make_op(std::move(out), {x},
                           [x](Tensor::Node& self) {
                               if (!x.requires_grad()) return;
                               DenseMatrix& g = parent_grad(x);
                               const double up = self.grad.at(0, 0);
                               for (double& v : g.data) v += up;
                           },
                           "sum_all");
}

Tensor project_rows(const Tensor& x, const Tensor& p) {
    const DenseMatrix& xv = x.value();
    const DenseMatrix& pv = p.value();
    if (pv.cols != 1 || pv.rows != xv.cols) shape_fail("project_rows", xv, pv);
    double sq = 0.0;
    for (double v : pv.data) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm == 0.0) throw ValueError("project_rows: projection vector has zero norm");
    DenseMatrix out(xv.rows, 1);
    for (int i = 0; i < xv.rows; ++i) {
        const double* row = xv.row(i);
        double dot = 0.0;
        for (int j = 0; j < xv.cols; ++j) dot += row[j] * pv.data[j];
        out.at(i, 0) = dot / norm;
    }
    // y = X p / r with r = ||p||:  dX = u p^T / r,  dp = X^T u / r - (u . y) p / r^2.
    return Tensor::make_op(std::move(out), {x, p},
                           [x, p, norm](Tensor::Node& self) {
                               const DenseMatrix& xv = x.value();
                               const DenseMatrix& pv = p.value();
                               if (x.requires_grad()) {
                                   DenseMatrix& g = parent_grad(x);
                                   for (int i = 0; i < g.rows; ++i) {
                                       const double u = self.grad.at(i, 0) / norm;
                                       double* grow = g.row(i);
                                       for (int j = 0; j < g.cols; ++j) grow[j] += u * pv.data[j];
                                   }
                               }
                               if (p.requires_grad()) {
                                   DenseMatrix& g = parent_grad(p);
                                   double uy = 0.0;
                                   for (int i = 0; i < xv.rows; ++i) uy += self.grad.at(i, 0) * self.value.at(i, 0);
                                   for (int j = 0; j < xv.cols; ++j) {
                                       double xtu = 0.0;
                                       for (int i = 0; i < xv.rows; ++i) xtu += xv.at(i, j) * self.grad.at(i, 0);
                                       g.at(j, 0) += xtu / norm - uy * pv.data[j] / (norm * norm);
                                   }
                               }
                           },
                           "project_rows");
}

// ---- sparse kernel ----------------------------------------------------------

namespace {

// out += S * d for CSR S; every multiply-add is counted.
void acc_spmm(DenseMatrix& out, const CsrMatrix& s, const DenseMatrix& d) {
    uint64_t work = 0;
    for (int i = 0; i < s.rows; ++i) {
        double* orow = out.row(i);
        for (int e = s.row_begin(i); e < s.row_end(i); ++e) {
            const double v = s.values[e];
            const double* drow = d.row(s.indices[e]);
            for (int j = 0; j < d.cols; ++j) {
                orow[j] += v * drow[j];
                ++work;
            }
        }
    }
    spmm_counter() += work;
}

// out += S^T * d, iterated over S's own CSR entries.
void acc_spmm_t(DenseMatrix& out, const CsrMatrix& s, const DenseMatrix& d) {
    uint64_t work = 0;
    for (int i = 0; i < s.rows; ++i) {
        const double* drow = d.row(i);
        for (int e = s.row_begin(i); e < s.row_end(i); ++e) {
            const double v = s.values[e];
            double* orow = out.row(s.indices[e]);
            for (int j = 0; j < d.cols; ++j) {
                orow[j] += v * drow[j];
                ++work;
            }
        }
    }
    spmm_counter() += work;
}

} // namespace

Tensor spmm(const CsrMatrix& s, const Tensor& d) {
    const DenseMatrix& dv = d.value();
    if (s.cols != dv.rows)
        throw ShapeError("spmm: sparse " + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                         " against dense " + shape_str(dv));
    DenseMatrix out(s.rows, dv.cols);
    acc_spmm(out, s, dv);
    // The CSR operand is captured by value: pooling layers build transient
    // induced adjacencies that must outlive the forward pass.
    return Tensor::make_op(std::move(out), {d},
                           [d, s](Tensor::Node& self) {
                               if (d.requires_grad()) acc_spmm_t(parent_grad(d), s, self.grad);
                           },
                           "spmm");
}

uint64_t spmm_work() { return spmm_counter(); }
void reset_spmm_work() { spmm_counter() = 0; }

KinkMargins* active_margins() { return margin_slot(); }
void set_active_margins(KinkMargins* m) { margin_slot() = m; }

} // namespace sagpool
