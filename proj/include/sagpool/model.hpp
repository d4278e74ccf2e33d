#pragma once

#include "sagpool/layers.hpp"

#include <memory>
#include <string>
#include <vector>

namespace sagpool {

/// Two affine layers with a relu between. Weights are Glorot-initialized,
/// biases start at zero. Bias addition is expressed as ones * b so every
/// binary op stays a plain matrix product (no broadcasting rules).
class ClassifierHead {
public:
    ClassifierHead(int in_dim, int hidden, int classes, Rng& rng);

    Tensor forward(const Tensor& x) const;
    std::vector<Tensor> parameters() const { return {w1_, b1_, w2_, b2_}; }

private:
    Tensor w1_, b1_, w2_, b2_;
};

enum class ArchKind {
    global,       // three convolutions, one pooling over their concatenation
    hierarchical, // three conv+pool blocks with summed per-block readouts
};

struct ModelConfig {
    ArchKind arch = ArchKind::hierarchical;
    PoolConfig pool;      // kind, variant, heads, keep ratio (hierarchical)
    int hidden = 64;
    int global_keep = 10; // global arch: every graph keeps min(K, n) nodes
};

struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// A graph classifier: batched forward to logits plus a stable, named
/// parameter list (ordering is part of the checkpoint format).
class Model {
public:
    virtual ~Model() = default;
    virtual Tensor logits(const GraphBatch& batch) const = 0;
    virtual std::vector<NamedParam> parameters() const = 0;
    virtual const ModelConfig& config() const = 0;
};

/// Builds the configured architecture. Every layer draws its weights from a
/// named substream of `seed`, so identical (config, seed) pairs produce
/// bitwise identical parameters regardless of anything else.
std::unique_ptr<Model> build_model(const ModelConfig& cfg, int feature_dim, int num_classes,
                                   uint64_t seed);

/// Largest K such that at least 60% of the given graph sizes are strictly
/// greater than K (exact integer arithmetic), clamped to >= 1. Used to pick
/// the global architecture's keep count from the training split.
int global_keep_from_sizes(const std::vector<int>& sizes);

/// Mean cross-entropy of logits (rows x classes) against labels, as a
/// differentiable 1x1 tensor. Log-sum-exp is max-shifted for stability.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Fraction of rows whose argmax (ties toward the lower class id) equals the
/// label.
double accuracy(const DenseMatrix& logits, const std::vector<int>& labels);

/// One line per parameter: "name rows x cols". Architectures must produce
/// inventories that depend only on (config, feature_dim, classes).
std::string parameter_inventory(const Model& model);

int param_count(const Model& model);

/// JSON checkpoint of every named parameter. Values round-trip exactly.
void save_checkpoint(const Model& model, const std::string& path);
void load_checkpoint(Model& model, const std::string& path);

} // namespace sagpool
