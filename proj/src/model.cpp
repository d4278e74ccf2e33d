#include "sagpool/model.hpp"

#include "sagpool/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace sagpool {

namespace {

Tensor zeros_param(int rows, int cols) { return Tensor::zeros(rows, cols, true); }

/// x W + 1 b: bias rows are produced by an explicit ones-column product so
/// the op set needs no broadcasting.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    DenseMatrix ones(x.rows(), 1);
    ones.fill(1.0);
    return add(matmul(x, w), matmul(Tensor::from(std::move(ones)), b));
}

} // namespace

ClassifierHead::ClassifierHead(int in_dim, int hidden, int classes, Rng& rng)
    : w1_(glorot(in_dim, hidden, rng)),
      b1_(zeros_param(1, hidden)),
      w2_(glorot(hidden, classes, rng)),
      b2_(zeros_param(1, classes)) {
    if (in_dim < 1 || hidden < 1 || classes < 2)
        throw ValueError("ClassifierHead: need positive dims and >= 2 classes");
}

Tensor ClassifierHead::forward(const Tensor& x) const {
    return affine(relu(affine(x, w1_, b1_)), w2_, b2_);
}

int global_keep_from_sizes(const std::vector<int>& sizes) {
    if (sizes.empty()) throw ValueError("global_keep_from_sizes: no graphs");
    const long t = static_cast<long>(sizes.size());
    // Want the largest K with 5 * |{n : n > K}| >= 3 * t. Counts only drop
    // at distinct sizes, so K is one below the m-th largest size where
    // m = ceil(3t / 5).
    const long m = (3 * t + 4) / 5;
    std::vector<int> sorted = sizes;
    std::sort(sorted.begin(), sorted.end(), std::greater<int>());
    return std::max(1, sorted[m - 1] - 1);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    const DenseMatrix& lv = logits.value();
    const int rows = lv.rows;
    const int cols = lv.cols;
    if (static_cast<int>(labels.size()) != rows)
        throw ValueError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " logit rows");
    if (rows == 0) throw ValueError("cross_entropy: empty batch");

    DenseMatrix probs(rows, cols);
    double total = 0.0;
    for (int r = 0; r < rows; ++r) {
        const int y = labels[r];
        if (y < 0 || y >= cols)
            throw ValueError("cross_entropy: label " + std::to_string(y) + " out of range");
        const double* row = lv.row(r);
        double mx = row[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            probs.at(r, c) = std::exp(row[c] - mx);
            sum += probs.at(r, c);
        }
        for (int c = 0; c < cols; ++c) probs.at(r, c) /= sum;
        total += mx + std::log(sum) - row[y];
    }

    DenseMatrix out(1, 1);
    out.at(0, 0) = total / rows;
    return Tensor::make_op(std::move(out), {logits},
                           [logits, probs = std::move(probs), labels](Tensor::Node& self) {
                               if (!logits.requires_grad()) return;
                               DenseMatrix& g = logits.node()->ensure_grad();
                               const double up = self.grad.at(0, 0) / probs.rows;
                               for (int r = 0; r < probs.rows; ++r)
                                   for (int c = 0; c < probs.cols; ++c)
                                       g.at(r, c) +=
                                           up * (probs.at(r, c) - (labels[r] == c ? 1.0 : 0.0));
                           },
                           "cross_entropy");
}

double accuracy(const DenseMatrix& logits, const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != logits.rows || logits.rows == 0)
        throw ValueError("accuracy: label/logit size mismatch");
    int hits = 0;
    for (int r = 0; r < logits.rows; ++r) {
        int best = 0;
        for (int c = 1; c < logits.cols; ++c)
            if (logits.at(r, c) > logits.at(r, best)) best = c;
        hits += best == labels[r];
    }
    return static_cast<double>(hits) / logits.rows;
}

namespace {

GcnLayer make_conv(int in, int out, uint64_t seed, uint64_t idx) {
    Rng rng = substream(seed, "conv", idx);
    return GcnLayer(in, out, rng);
}

PoolingLayer make_pool(int in, const PoolConfig& cfg, uint64_t seed, uint64_t idx) {
    Rng rng = substream(seed, "pool", idx);
    return PoolingLayer(in, cfg, rng);
}

ClassifierHead make_head(int in, int hidden, int classes, uint64_t seed) {
    Rng rng = substream(seed, "head");
    return ClassifierHead(in, hidden, classes, rng);
}

void append_params(std::vector<NamedParam>& out, const std::string& prefix,
                   const std::vector<Tensor>& params) {
    for (size_t i = 0; i < params.size(); ++i)
        out.push_back({prefix + ".w" + std::to_string(i), params[i]});
}

void append_head(std::vector<NamedParam>& out, const ClassifierHead& head) {
    const std::vector<Tensor> p = head.parameters();
    out.push_back({"head.w1", p[0]});
    out.push_back({"head.b1", p[1]});
    out.push_back({"head.w2", p[2]});
    out.push_back({"head.b2", p[3]});
}

/// Three convolutions into one pooling over their concatenation; the graph
/// keeps min(K, n) nodes, readout feeds the classifier.
class GlobalModel final : public Model {
public:
    GlobalModel(const ModelConfig& cfg, int feature_dim, int classes, uint64_t seed)
        : cfg_(cfg),
          conv1_(make_conv(feature_dim, cfg.hidden, seed, 0)),
          conv2_(make_conv(cfg.hidden, cfg.hidden, seed, 1)),
          conv3_(make_conv(cfg.hidden, cfg.hidden, seed, 2)),
          pool_(make_pool(3 * cfg.hidden, cfg.pool, seed, 0)),
          head_(make_head(6 * cfg.hidden, cfg.hidden, classes, seed)) {
        if (cfg.global_keep < 1) throw ValueError("global architecture: keep count must be >= 1");
    }

    Tensor logits(const GraphBatch& batch) const override {
        BatchState st = initial_state(batch);
        Tensor h1 = conv1_.forward(st.norm, st.h);
        Tensor h2 = conv2_.forward(st.norm, h1);
        Tensor h3 = conv3_.forward(st.norm, h2);
        BatchState cat = st;
        cat.h = concat_cols({h1, h2, h3});
        const int keep = cfg_.global_keep;
        auto r = pool_.forward(cat, [keep](int n) { return std::min(keep, n); });
        return head_.forward(readout(r.state.h, r.state.indicator, r.state.num_graphs));
    }

    std::vector<NamedParam> parameters() const override {
        std::vector<NamedParam> out;
        out.push_back({"conv1.w", conv1_.parameters()[0]});
        out.push_back({"conv2.w", conv2_.parameters()[0]});
        out.push_back({"conv3.w", conv3_.parameters()[0]});
        append_params(out, "pool", pool_.parameters());
        append_head(out, head_);
        return out;
    }

    const ModelConfig& config() const override { return cfg_; }

private:
    ModelConfig cfg_;
    GcnLayer conv1_, conv2_, conv3_;
    PoolingLayer pool_;
    ClassifierHead head_;
};

/// Three conv+pool blocks; per-block readouts are summed before the
/// classifier, so later blocks refine rather than replace earlier signal.
class HierarchicalModel final : public Model {
public:
    HierarchicalModel(const ModelConfig& cfg, int feature_dim, int classes, uint64_t seed)
        : cfg_(cfg),
          convs_{make_conv(feature_dim, cfg.hidden, seed, 0),
                 make_conv(cfg.hidden, cfg.hidden, seed, 1),
                 make_conv(cfg.hidden, cfg.hidden, seed, 2)},
          pools_{make_pool(cfg.hidden, cfg.pool, seed, 0),
                 make_pool(cfg.hidden, cfg.pool, seed, 1),
                 make_pool(cfg.hidden, cfg.pool, seed, 2)},
          head_(make_head(2 * cfg.hidden, cfg.hidden, classes, seed)) {}

    Tensor logits(const GraphBatch& batch) const override {
        BatchState st = initial_state(batch);
        Tensor sum;
        for (int b = 0; b < 3; ++b) {
            st.h = convs_[b].forward(st.norm, st.h);
            auto r = pools_[b].forward(st);
            st = std::move(r.state);
            Tensor emb = readout(st.h, st.indicator, st.num_graphs);
            sum = sum.defined() ? add(sum, emb) : emb;
        }
        return head_.forward(sum);
    }

    std::vector<NamedParam> parameters() const override {
        std::vector<NamedParam> out;
        for (int b = 0; b < 3; ++b) {
            const std::string prefix = "block" + std::to_string(b);
            out.push_back({prefix + ".conv.w", convs_[b].parameters()[0]});
            append_params(out, prefix + ".pool", pools_[b].parameters());
        }
        append_head(out, head_);
        return out;
    }

    const ModelConfig& config() const override { return cfg_; }

private:
    ModelConfig cfg_;
    std::vector<GcnLayer> convs_;
    std::vector<PoolingLayer> pools_;
    ClassifierHead head_;
};

} // namespace

std::unique_ptr<Model> build_model(const ModelConfig& cfg, int feature_dim, int num_classes,
                                   uint64_t seed) {
    if (cfg.hidden < 1) throw ValueError("build_model: hidden size must be positive");
    if (feature_dim < 1) throw ValueError("build_model: feature dimension must be positive");
    if (num_classes < 2) throw ValueError("build_model: need at least two classes");
    if (cfg.arch == ArchKind::global)
        return std::make_unique<GlobalModel>(cfg, feature_dim, num_classes, seed);
    return std::make_unique<HierarchicalModel>(cfg, feature_dim, num_classes, seed);
}

std::string parameter_inventory(const Model& model) {
    std::string out;
    for (const NamedParam& p : model.parameters()) {
        out += p.name + " " + std::to_string(p.tensor.rows()) + "x" +
               std::to_string(p.tensor.cols()) + "\n";
    }
    return out;
}

int param_count(const Model& model) {
    int n = 0;
    for (const NamedParam& p : model.parameters()) n += p.tensor.rows() * p.tensor.cols();
    return n;
}

void save_checkpoint(const Model& model, const std::string& path) {
    nlohmann::ordered_json j;
    j["format"] = "sagpool-checkpoint-v1";
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const NamedParam& p : model.parameters()) {
        nlohmann::ordered_json e;
        e["rows"] = p.tensor.rows();
        e["cols"] = p.tensor.cols();
        e["data"] = p.tensor.value().data;
        params[p.name] = std::move(e);
    }
    j["params"] = std::move(params);
    std::ofstream out(path);
    if (!out) throw ValueError("save_checkpoint: cannot write " + path);
    out << j.dump(1) << '\n';
}

void load_checkpoint(Model& model, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValueError("load_checkpoint: cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, 0, e.what());
    }
    if (!j.contains("params") || !j["params"].is_object())
        throw ParseError(path, 0, "missing params object");

    std::vector<NamedParam> params = model.parameters();
    const auto& stored = j["params"];
    if (stored.size() != params.size())
        throw ValueError("load_checkpoint: " + std::to_string(stored.size()) +
                         " stored parameters, model has " + std::to_string(params.size()));
    for (NamedParam& p : params) {
        if (!stored.contains(p.name))
            throw ValueError("load_checkpoint: missing parameter " + p.name);
        const auto& e = stored[p.name];
        DenseMatrix& v = p.tensor.raw_value();
        if (e.value("rows", -1) != v.rows || e.value("cols", -1) != v.cols)
            throw ValueError("load_checkpoint: shape mismatch for " + p.name);
        const auto& data = e["data"];
        if (!data.is_array() || data.size() != v.data.size())
            throw ValueError("load_checkpoint: bad data length for " + p.name);
        for (size_t i = 0; i < v.data.size(); ++i) v.data[i] = data[i].get<double>();
        check_finite(v, p.name.c_str());
    }
}

} // namespace sagpool
