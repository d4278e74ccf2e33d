#pragma once

#include "sagpool/dataset.hpp"
#include "sagpool/model.hpp"

#include <functional>
#include <vector>

namespace sagpool {

/// All training-time graph access goes through this indirection so tests can
/// audit exactly which graphs a run touches. The reference must outlive use.
using GraphProvider = std::function<const SparseGraph&(int)>;

GraphProvider dataset_provider(const Dataset& ds);

// The published hyperparameter grid. Model selection searches exactly these
// axes; everything else (batch size, patience, epoch cap) is protocol.
extern const std::vector<double> grid_lr;
extern const std::vector<int> grid_hidden;
extern const std::vector<double> grid_weight_decay;
extern const std::vector<double> grid_ratio; // hierarchical architecture only

/// One trial's hyperparameters.
struct TrialConfig {
    ModelConfig model;
    double lr = 5e-4;
    double weight_decay = 1e-4;
    int batch_size = 128;
    int patience = 50;
    int max_epochs = 1000;
    bool off_grid = false; // permit values outside the published grid

    /// ValueError on nonsensical values, or on grid-axis values outside the
    /// published grid unless off_grid is set.
    void validate() const;
};

/// Adam with additive weight decay: the decay term joins the raw gradient
/// before the moment updates.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr = 0.0;
    double weight_decay = 0.0;
    long step_count = 0;
    std::vector<DenseMatrix> m;
    std::vector<DenseMatrix> v;

    AdamState(const std::vector<Tensor>& params, double lr, double weight_decay);
};

/// One update from the gradients currently held by `params` (grads are not
/// cleared here). Non-finite gradients raise NumericError.
void adam_step(AdamState& state, std::vector<Tensor>& params);

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    int best_epoch = -1; // epoch with the lowest validation loss
    double best_val_loss = 0.0;
    double best_val_acc = 0.0;

    int epochs_run() const { return static_cast<int>(epochs.size()); }
};

/// Minibatch training with early stopping: stops once the validation loss has
/// not improved for `patience` consecutive epochs (patience 0 trains exactly
/// one epoch) or at max_epochs. On return the model holds the parameters of
/// the best validation epoch. Only train/val indices are ever fetched.
TrainResult train_one(Model& model, const GraphProvider& graphs,
                      const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                      const TrialConfig& cfg, uint64_t seed);

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Mean loss and accuracy over `indices`, batched, without building a tape.
EvalResult evaluate(const Model& model, const GraphProvider& graphs,
                    const std::vector<int>& indices, int batch_size);

struct FoldOutcome {
    int fold = 0;
    double test_acc = 0.0;
    double val_acc = 0.0;  // at the best validation epoch
    double val_loss = 0.0;
    int best_epoch = -1;
    int epochs_run = 0;
};

struct CvResult {
    std::vector<FoldOutcome> folds;
    double mean_test_acc = 0.0;
    double stdev_test_acc = 0.0; // sample standard deviation
    double mean_val_acc = 0.0;
};

struct CvOptions {
    int num_folds = 10;
    bool stratify = true;
    int jobs = 1;
};

/// Stratified k-fold cross-validation. Per fold: hold the fold out as test,
/// split the rest into train/validation, train with early stopping, evaluate
/// the restored best model on the held-out fold exactly once. For the global
/// architecture the keep count is recomputed per fold from non-test graph
/// sizes. Fold plan, splits and weights all derive from substreams of `seed`,
/// so results are independent of the number of jobs.
CvResult cross_validate(const Dataset& ds, const GraphProvider& graphs, const TrialConfig& cfg,
                        uint64_t seed, const CvOptions& opt);

struct GridRow {
    TrialConfig cfg;
    double mean_val_acc = 0.0; // 0 when the trial diverged
    bool diverged = false;
};

struct GridResult {
    std::vector<GridRow> rows;
    int best_index = -1;
};

/// Expands the published grid over a base config (architecture, pooling kind
/// and variant, protocol constants are taken from `base`). The keep-ratio
/// axis applies to the hierarchical architecture only.
std::vector<TrialConfig> published_grid(const TrialConfig& base);

/// Scores every candidate by mean validation accuracy under the same fold
/// plan (identical `seed` substreams across candidates) and picks the best;
/// earlier candidates win ties. A trial that diverges scores 0.
GridResult grid_search(const Dataset& ds, const GraphProvider& graphs,
                       const std::vector<TrialConfig>& candidates, uint64_t seed,
                       const CvOptions& opt);

} // namespace sagpool
