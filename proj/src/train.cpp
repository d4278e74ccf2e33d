#include "sagpool/train.hpp"

#include "sagpool/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace sagpool {

GraphProvider dataset_provider(const Dataset& ds) {
    return [&ds](int i) -> const SparseGraph& {
        if (i < 0 || i >= ds.size()) throw ValueError("graph index out of range");
        return ds.graphs[static_cast<size_t>(i)];
    };
}

const std::vector<double> grid_lr = {1e-2, 5e-2, 1e-3, 5e-3, 1e-4, 5e-4};
const std::vector<int> grid_hidden = {16, 32, 64, 128};
const std::vector<double> grid_weight_decay = {1e-2, 1e-3, 1e-4, 1e-5};
const std::vector<double> grid_ratio = {0.5, 0.25};

namespace {

template <typename T>
bool on_axis(const std::vector<T>& axis, T v) {
    return std::find(axis.begin(), axis.end(), v) != axis.end();
}

} // namespace

void TrialConfig::validate() const {
    if (lr <= 0.0) throw ValueError("learning rate must be positive");
    if (weight_decay < 0.0) throw ValueError("weight decay must be non-negative");
    if (batch_size < 1) throw ValueError("batch size must be at least 1");
    if (patience < 0) throw ValueError("patience must be non-negative");
    if (max_epochs < 1) throw ValueError("max epochs must be at least 1");
    if (model.hidden < 1) throw ValueError("hidden dimension must be at least 1");
    if (model.pool.ratio <= 0.0 || model.pool.ratio > 1.0)
        throw ValueError("keep ratio must lie in (0, 1]");
    if (off_grid) return;
    if (!on_axis(grid_lr, lr)) throw ValueError("learning rate is outside the published grid");
    if (!on_axis(grid_hidden, model.hidden))
        throw ValueError("hidden dimension is outside the published grid");
    if (!on_axis(grid_weight_decay, weight_decay))
        throw ValueError("weight decay is outside the published grid");
    if (model.arch == ArchKind::hierarchical && !on_axis(grid_ratio, model.pool.ratio))
        throw ValueError("keep ratio is outside the published grid");
}

AdamState::AdamState(const std::vector<Tensor>& params, double lr_, double weight_decay_)
    : lr(lr_), weight_decay(weight_decay_) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Tensor& p : params) {
        m.emplace_back(p.rows(), p.cols());
        v.emplace_back(p.rows(), p.cols());
    }
}

void adam_step(AdamState& state, std::vector<Tensor>& params) {
    if (params.size() != state.m.size()) throw ValueError("optimizer state does not match parameters");
    ++state.step_count;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        const DenseMatrix& grad = params[i].grad();
        check_finite(grad, "gradient");
        DenseMatrix& theta = params[i].raw_value();
        DenseMatrix& mi = state.m[i];
        DenseMatrix& vi = state.v[i];
        for (size_t k = 0; k < theta.data.size(); ++k) {
            const double g = grad.data[k] + state.weight_decay * theta.data[k];
            mi.data[k] = state.beta1 * mi.data[k] + (1.0 - state.beta1) * g;
            vi.data[k] = state.beta2 * vi.data[k] + (1.0 - state.beta2) * g * g;
            theta.data[k] -= state.lr * (mi.data[k] / bc1) / (std::sqrt(vi.data[k] / bc2) + state.eps);
        }
        check_finite(theta, "parameter");
    }
}

namespace {

GraphBatch gather_batch(const GraphProvider& graphs, const std::vector<int>& idx, size_t begin,
                        size_t end) {
    std::vector<const SparseGraph*> ptrs;
    ptrs.reserve(end - begin);
    for (size_t i = begin; i < end; ++i) ptrs.push_back(&graphs(idx[i]));
    return make_batch(ptrs);
}

std::vector<Tensor> model_tensors(const Model& model) {
    std::vector<Tensor> out;
    for (const NamedParam& p : model.parameters()) out.push_back(p.tensor);
    return out;
}

std::vector<DenseMatrix> snapshot(const std::vector<Tensor>& params) {
    std::vector<DenseMatrix> out;
    out.reserve(params.size());
    for (const Tensor& p : params) out.push_back(p.value());
    return out;
}

void restore(std::vector<Tensor>& params, const std::vector<DenseMatrix>& snap) {
    for (size_t i = 0; i < params.size(); ++i) params[i].raw_value() = snap[i];
}

} // namespace

EvalResult evaluate(const Model& model, const GraphProvider& graphs,
                    const std::vector<int>& indices, int batch_size) {
    if (indices.empty()) throw ValueError("nothing to evaluate");
    if (batch_size < 1) throw ValueError("batch size must be at least 1");
    NoGradGuard ng;
    double loss_sum = 0.0;
    double correct_sum = 0.0;
    for (size_t begin = 0; begin < indices.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(indices.size(), begin + static_cast<size_t>(batch_size));
        GraphBatch batch = gather_batch(graphs, indices, begin, end);
        Tensor out = model.logits(batch);
        const double n = static_cast<double>(batch.num_graphs());
        loss_sum += cross_entropy(out, batch.labels).value().at(0, 0) * n;
        correct_sum += accuracy(out.value(), batch.labels) * n;
    }
    EvalResult r;
    r.loss = loss_sum / static_cast<double>(indices.size());
    r.accuracy = correct_sum / static_cast<double>(indices.size());
    return r;
}

TrainResult train_one(Model& model, const GraphProvider& graphs,
                      const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                      const TrialConfig& cfg, uint64_t seed) {
    cfg.validate();
    if (train_idx.empty()) throw ValueError("empty training split");
    if (val_idx.empty()) throw ValueError("empty validation split");

    std::vector<Tensor> params = model_tensors(model);
    AdamState opt(params, cfg.lr, cfg.weight_decay);

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<DenseMatrix> best = snapshot(params);
    int since_best = 0;

    std::vector<int> order = train_idx;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng shuffle_rng = substream(seed, "shuffle", static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
            GraphBatch batch = gather_batch(graphs, order, begin, end);
            for (Tensor& p : params) p.zero_grad();
            Tensor loss = cross_entropy(model.logits(batch), batch.labels);
            backward(loss);
            adam_step(opt, params);
            loss_sum += loss.value().at(0, 0) * static_cast<double>(batch.num_graphs());
        }

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(order.size());
        EvalResult val = evaluate(model, graphs, val_idx, cfg.batch_size);
        stats.val_loss = val.loss;
        stats.val_acc = val.accuracy;
        result.epochs.push_back(stats);

        if (val.loss < result.best_val_loss) {
            result.best_val_loss = val.loss;
            result.best_val_acc = val.accuracy;
            result.best_epoch = epoch;
            best = snapshot(params);
            since_best = 0;
        } else {
            ++since_best;
        }
        if (since_best >= cfg.patience) break;
    }

    restore(params, best);
    return result;
}

CvResult cross_validate(const Dataset& ds, const GraphProvider& graphs, const TrialConfig& cfg,
                        uint64_t seed, const CvOptions& opt) {
    cfg.validate();
    if (opt.num_folds < 2) throw ValueError("cross-validation needs at least 2 folds");
    if (opt.jobs < 1) throw ValueError("jobs must be at least 1");
    Rng fold_rng = substream(seed, "folds");
    const FoldPlan plan = make_folds(ds, opt.num_folds, fold_rng, opt.stratify);

    CvResult result;
    result.folds.resize(static_cast<size_t>(opt.num_folds));
    std::vector<std::exception_ptr> errors(static_cast<size_t>(opt.num_folds));

    auto run_fold = [&](int f) {
        const std::vector<int> test = plan.test_indices(f);
        const std::vector<int> rest = plan.train_indices(f);
        Rng split_rng = substream(seed, "val-split", static_cast<uint64_t>(f));
        const TrainValSplit tv = split_train_val(rest, split_rng);

        TrialConfig local = cfg;
        if (local.model.arch == ArchKind::global) {
            std::vector<int> sizes;
            sizes.reserve(rest.size());
            for (int i : rest) sizes.push_back(graphs(i).num_nodes);
            local.model.global_keep = global_keep_from_sizes(sizes);
        }

        auto model = build_model(local.model, ds.feature_dim(), ds.num_classes,
                                 substream_seed(seed, "model", static_cast<uint64_t>(f)));
        const TrainResult tr = train_one(*model, graphs, tv.train, tv.val, local,
                                         substream_seed(seed, "train", static_cast<uint64_t>(f)));
        const EvalResult test_eval = evaluate(*model, graphs, test, local.batch_size);

        FoldOutcome& out = result.folds[static_cast<size_t>(f)];
        out.fold = f;
        out.test_acc = test_eval.accuracy;
        out.val_acc = tr.best_val_acc;
        out.val_loss = tr.best_val_loss;
        out.best_epoch = tr.best_epoch;
        out.epochs_run = tr.epochs_run();
    };

    if (opt.jobs == 1) {
        for (int f = 0; f < opt.num_folds; ++f) run_fold(f);
    } else {
        std::atomic<int> next{0};
        auto worker = [&] {
            for (;;) {
                const int f = next.fetch_add(1);
                if (f >= opt.num_folds) return;
                try {
                    run_fold(f);
                } catch (...) {
                    errors[static_cast<size_t>(f)] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        const int nthreads = std::min(opt.jobs, opt.num_folds);
        pool.reserve(static_cast<size_t>(nthreads));
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
        for (const std::exception_ptr& e : errors)
            if (e) std::rethrow_exception(e);
    }

    double sum = 0.0, val_sum = 0.0;
    for (const FoldOutcome& f : result.folds) {
        sum += f.test_acc;
        val_sum += f.val_acc;
    }
    const double n = static_cast<double>(result.folds.size());
    result.mean_test_acc = sum / n;
    result.mean_val_acc = val_sum / n;
    double sq = 0.0;
    for (const FoldOutcome& f : result.folds) {
        const double d = f.test_acc - result.mean_test_acc;
        sq += d * d;
    }
    result.stdev_test_acc = result.folds.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
    return result;
}

std::vector<TrialConfig> published_grid(const TrialConfig& base) {
    std::vector<TrialConfig> out;
    const bool sweep_ratio = base.model.arch == ArchKind::hierarchical;
    for (double lr : grid_lr)
        for (int hidden : grid_hidden)
            for (double wd : grid_weight_decay) {
                TrialConfig cfg = base;
                cfg.lr = lr;
                cfg.model.hidden = hidden;
                cfg.weight_decay = wd;
                cfg.off_grid = false;
                if (sweep_ratio) {
                    for (double ratio : grid_ratio) {
                        cfg.model.pool.ratio = ratio;
                        out.push_back(cfg);
                    }
                } else {
                    out.push_back(cfg);
                }
            }
    return out;
}

GridResult grid_search(const Dataset& ds, const GraphProvider& graphs,
                       const std::vector<TrialConfig>& candidates, uint64_t seed,
                       const CvOptions& opt) {
    if (candidates.empty()) throw ValueError("empty candidate list");
    GridResult result;
    result.rows.reserve(candidates.size());
    for (const TrialConfig& cfg : candidates) {
        GridRow row;
        row.cfg = cfg;
        try {
            row.mean_val_acc = cross_validate(ds, graphs, cfg, seed, opt).mean_val_acc;
        } catch (const NumericError&) {
            row.mean_val_acc = 0.0;
            row.diverged = true;
        }
        if (result.best_index < 0 ||
            row.mean_val_acc > result.rows[static_cast<size_t>(result.best_index)].mean_val_acc)
            result.best_index = static_cast<int>(result.rows.size());
        result.rows.push_back(row);
    }
    return result;
}

} // namespace sagpool
