#include "CLI11.hpp"
#include "json.hpp"

#include "sagpool/bench.hpp"
#include "sagpool/dataset.hpp"
#include "sagpool/error.hpp"
#include "sagpool/gradcheck.hpp"
#include "sagpool/synthetic.hpp"
#include "sagpool/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

using namespace sagpool;
using json = nlohmann::ordered_json;

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string default_data_root() {
    const char* env = std::getenv("SAGPOOL_DATA_ROOT");
    return env && *env ? env : "data";
}

// Options shared across subcommands; each subcommand registers the subset it
// understands.
struct Opts {
    std::string dataset = "synthetic";
    std::string data_root = default_data_root();
    std::string arch = "hierarchical";
    std::string pooling = "sagpool";
    std::string variant = "base";
    int heads = 3;
    double ratio = 0.5;
    int hidden = 64;
    bool binarize = false;

    double lr = 5e-4;
    double weight_decay = 1e-4;
    int batch_size = 128;
    int patience = 50;
    int max_epochs = 1000;
    bool off_grid = false;

    uint64_t seed = 1;
    std::vector<uint64_t> seeds;
    int folds = 10;
    bool no_stratify = false;
    int jobs = 1;
    std::string out;
};

void add_data_flags(CLI::App* cmd, Opts& o) {
    cmd->add_option("--dataset", o.dataset,
                    "benchmark dataset name, or 'synthetic' for the built-in cycles-vs-stars set");
    cmd->add_option("--data-root", o.data_root,
                    "directory holding one subdirectory per dataset (default: $SAGPOOL_DATA_ROOT or ./data)");
}

void add_model_flags(CLI::App* cmd, Opts& o) {
    cmd->add_option("--arch", o.arch, "architecture")
        ->check(CLI::IsMember({"global", "hierarchical"}));
    cmd->add_option("--pooling", o.pooling, "pooling family")
        ->check(CLI::IsMember({"sagpool", "gpool"}));
    cmd->add_option("--variant", o.variant, "attention score variant")
        ->check(CLI::IsMember({"base", "augmentation", "serial", "parallel"}));
    cmd->add_option("--heads", o.heads, "independent score heads (parallel variant)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--ratio", o.ratio, "keep ratio per pooling layer (hierarchical)");
    cmd->add_flag("--binarize-augmented", o.binarize,
                  "clamp two-hop path counts to 1 (augmentation variant)");
}

void add_trial_flags(CLI::App* cmd, Opts& o) {
    cmd->add_option("--hidden", o.hidden, "hidden dimension")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", o.lr, "learning rate");
    cmd->add_option("--weight-decay", o.weight_decay, "weight decay");
    cmd->add_option("--batch-size", o.batch_size, "minibatch size")->check(CLI::PositiveNumber);
    cmd->add_option("--patience", o.patience, "early stopping patience (epochs)");
    cmd->add_option("--max-epochs", o.max_epochs, "epoch cap")->check(CLI::PositiveNumber);
    cmd->add_flag("--off-grid", o.off_grid, "allow hyperparameters outside the published grid");
}

void check_arch_conflicts(const CLI::App* cmd, const Opts& o) {
    if (o.arch == "global" && cmd->count("--ratio") > 0)
        throw ValueError("--ratio applies to the hierarchical architecture; "
                         "the global architecture derives its keep count from the training split");
}

PoolConfig pool_config(const Opts& o) {
    PoolConfig pc;
    pc.kind = o.pooling == "gpool" ? PoolKind::gpool : PoolKind::sagpool;
    if (o.variant == "augmentation") pc.variant = AttentionVariant::augmentation;
    else if (o.variant == "serial") pc.variant = AttentionVariant::serial;
    else if (o.variant == "parallel") pc.variant = AttentionVariant::parallel;
    else pc.variant = AttentionVariant::base;
    pc.heads = o.heads;
    pc.binarize_augmented = o.binarize;
    pc.ratio = o.ratio;
    return pc;
}

TrialConfig trial_config(const Opts& o) {
    TrialConfig cfg;
    cfg.model.arch = o.arch == "global" ? ArchKind::global : ArchKind::hierarchical;
    cfg.model.pool = pool_config(o);
    cfg.model.hidden = o.hidden;
    cfg.lr = o.lr;
    cfg.weight_decay = o.weight_decay;
    cfg.batch_size = o.batch_size;
    cfg.patience = o.patience;
    cfg.max_epochs = o.max_epochs;
    cfg.off_grid = o.off_grid;
    return cfg;
}

Dataset load_by_name(const Opts& o) {
    if (o.dataset == "synthetic")
        return synthetic_topology_dataset(200, 6, 20, substream_seed(o.seed, "synthetic"));
    return load_tudataset(o.data_root, o.dataset);
}

json config_json(const Opts& o, const TrialConfig& cfg) {
    json j;
    j["dataset"] = o.dataset;
    j["arch"] = o.arch;
    j["pooling"] = o.pooling;
    j["variant"] = o.variant;
    if (o.variant == "parallel") j["heads"] = o.heads;
    if (o.variant == "augmentation") j["binarize_augmented"] = o.binarize;
    if (cfg.model.arch == ArchKind::hierarchical) j["ratio"] = cfg.model.pool.ratio;
    j["hidden"] = cfg.model.hidden;
    j["lr"] = cfg.lr;
    j["weight_decay"] = cfg.weight_decay;
    j["batch_size"] = cfg.batch_size;
    j["patience"] = cfg.patience;
    j["max_epochs"] = cfg.max_epochs;
    return j;
}

void emit(const json& j, const std::string& out) {
    std::cout << j.dump(1) << "\n";
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw ValueError("cannot write " + out);
        f << j.dump(1) << "\n";
    }
}

json fold_json(const FoldOutcome& f) {
    json j;
    j["fold"] = f.fold;
    j["test_acc"] = f.test_acc;
    j["val_acc"] = f.val_acc;
    j["val_loss"] = f.val_loss;
    j["best_epoch"] = f.best_epoch;
    j["epochs_run"] = f.epochs_run;
    return j;
}

int cmd_train(const CLI::App* cmd, Opts& o, const std::string& checkpoint_out) {
    check_arch_conflicts(cmd, o);
    const double t0 = now_seconds();
    TrialConfig cfg = trial_config(o);
    cfg.validate();
    Dataset ds = load_by_name(o);
    GraphProvider graphs = dataset_provider(ds);

    // Fold 0 of the usual plan is the held-out test split; the remainder is
    // split into train and validation exactly as cross-validation would.
    Rng fold_rng = substream(o.seed, "folds");
    FoldPlan plan = make_folds(ds, o.folds, fold_rng, !o.no_stratify);
    const std::vector<int> test = plan.test_indices(0);
    const std::vector<int> rest = plan.train_indices(0);
    Rng split_rng = substream(o.seed, "val-split", 0);
    TrainValSplit tv = split_train_val(rest, split_rng);

    if (cfg.model.arch == ArchKind::global) {
        std::vector<int> sizes;
        for (int i : rest) sizes.push_back(graphs(i).num_nodes);
        cfg.model.global_keep = global_keep_from_sizes(sizes);
    }

    auto model = build_model(cfg.model, ds.feature_dim(), ds.num_classes,
                             substream_seed(o.seed, "model", 0));
    TrainResult r = train_one(*model, graphs, tv.train, tv.val, cfg,
                              substream_seed(o.seed, "train", 0));
    EvalResult test_eval = evaluate(*model, graphs, test, cfg.batch_size);

    if (!checkpoint_out.empty()) save_checkpoint(*model, checkpoint_out);

    json j;
    j["command"] = "train";
    j["config"] = config_json(o, cfg);
    j["seed"] = o.seed;
    j["splits"] = {{"train", tv.train.size()}, {"val", tv.val.size()}, {"test", test.size()}};
    j["epochs_run"] = r.epochs_run();
    j["best_epoch"] = r.best_epoch;
    j["best_val_loss"] = r.best_val_loss;
    j["best_val_acc"] = r.best_val_acc;
    j["test_loss"] = test_eval.loss;
    j["test_acc"] = test_eval.accuracy;
    if (!checkpoint_out.empty()) j["checkpoint"] = checkpoint_out;
    j["seconds"] = now_seconds() - t0;
    emit(j, "");
    return 0;
}

int cmd_cv(const CLI::App* cmd, Opts& o) {
    check_arch_conflicts(cmd, o);
    const double t0 = now_seconds();
    TrialConfig cfg = trial_config(o);
    cfg.validate();
    Dataset ds = load_by_name(o);
    GraphProvider graphs = dataset_provider(ds);

    CvOptions opt;
    opt.num_folds = o.folds;
    opt.stratify = !o.no_stratify;
    opt.jobs = o.jobs;

    std::vector<uint64_t> seeds = o.seeds.empty() ? std::vector<uint64_t>{o.seed} : o.seeds;
    json runs = json::array();
    double mean_sum = 0.0;
    for (uint64_t seed : seeds) {
        CvResult r = cross_validate(ds, graphs, cfg, seed, opt);
        json run;
        run["seed"] = seed;
        run["folds"] = json::array();
        for (const FoldOutcome& f : r.folds) run["folds"].push_back(fold_json(f));
        run["mean_test_acc"] = r.mean_test_acc;
        run["stdev_test_acc"] = r.stdev_test_acc;
        run["mean_val_acc"] = r.mean_val_acc;
        runs.push_back(run);
        mean_sum += r.mean_test_acc;
    }

    json j;
    j["command"] = "cv";
    j["config"] = config_json(o, cfg);
    j["folds"] = o.folds;
    j["stratified"] = opt.stratify;
    j["runs"] = runs;
    j["mean_test_acc"] = mean_sum / static_cast<double>(seeds.size());
    if (seeds.size() > 1) {
        double sq = 0.0;
        for (const json& run : runs) {
            const double d = run["mean_test_acc"].get<double>() - mean_sum / seeds.size();
            sq += d * d;
        }
        j["stdev_over_seeds"] = std::sqrt(sq / (static_cast<double>(seeds.size()) - 1.0));
    }
    j["seconds"] = now_seconds() - t0;
    emit(j, o.out);
    return 0;
}

int cmd_grid(Opts& o) {
    const double t0 = now_seconds();
    TrialConfig base = trial_config(o);
    base.lr = grid_lr[0];
    base.model.hidden = grid_hidden[0];
    base.weight_decay = grid_weight_decay[0];
    if (base.model.arch == ArchKind::hierarchical) base.model.pool.ratio = grid_ratio[0];
    Dataset ds = load_by_name(o);
    GraphProvider graphs = dataset_provider(ds);

    CvOptions opt;
    opt.num_folds = o.folds;
    opt.stratify = !o.no_stratify;
    opt.jobs = o.jobs;

    const std::vector<TrialConfig> candidates = published_grid(base);
    GridResult gr = grid_search(ds, graphs, candidates, o.seed, opt);
    const GridRow& best = gr.rows[static_cast<size_t>(gr.best_index)];

    if (!o.out.empty()) {
        std::ofstream f(o.out);
        if (!f) throw ValueError("cannot write " + o.out);
        f << "lr,hidden,weight_decay,ratio,mean_val_acc,diverged\n";
        for (const GridRow& row : gr.rows) {
            f << row.cfg.lr << ',' << row.cfg.model.hidden << ',' << row.cfg.weight_decay << ',';
            if (row.cfg.model.arch == ArchKind::hierarchical) f << row.cfg.model.pool.ratio;
            f << ',' << row.mean_val_acc << ',' << (row.diverged ? 1 : 0) << '\n';
        }
    }

    // Selection used validation accuracy only; the chosen trial's test score
    // comes from a fresh pass under the same fold plan.
    CvResult final = cross_validate(ds, graphs, best.cfg, o.seed, opt);

    json j;
    j["command"] = "grid";
    j["dataset"] = o.dataset;
    j["arch"] = o.arch;
    j["pooling"] = o.pooling;
    j["variant"] = o.variant;
    j["candidates"] = candidates.size();
    json bj;
    bj["lr"] = best.cfg.lr;
    bj["hidden"] = best.cfg.model.hidden;
    bj["weight_decay"] = best.cfg.weight_decay;
    if (best.cfg.model.arch == ArchKind::hierarchical) bj["ratio"] = best.cfg.model.pool.ratio;
    bj["mean_val_acc"] = best.mean_val_acc;
    j["best"] = bj;
    j["best_mean_test_acc"] = final.mean_test_acc;
    j["best_stdev_test_acc"] = final.stdev_test_acc;
    if (!o.out.empty()) j["table"] = o.out;
    j["seconds"] = now_seconds() - t0;
    emit(j, "");
    return 0;
}

int cmd_gradcheck(const CLI::App* cmd, Opts& o, int graphs_per_batch, int max_nodes,
                  int feature_dim, int classes, double tolerance) {
    check_arch_conflicts(cmd, o);
    const double t0 = now_seconds();
    ModelConfig mc;
    mc.arch = o.arch == "global" ? ArchKind::global : ArchKind::hierarchical;
    mc.pool = pool_config(o);
    mc.hidden = o.hidden;
    auto model = build_model(mc, feature_dim, classes, substream_seed(o.seed, "model"));

    Rng data_rng = substream(o.seed, "gradcheck-data");
    auto sample = [&] {
        std::vector<SparseGraph> gs;
        gs.reserve(static_cast<size_t>(graphs_per_batch));
        for (int i = 0; i < graphs_per_batch; ++i) {
            const int n = 3 + data_rng.uniform_int(std::max(1, max_nodes - 2));
            gs.push_back(random_simple_graph(n, 4.0, feature_dim, data_rng,
                                             data_rng.uniform_int(classes)));
        }
        return make_batch(gs);
    };

    GradcheckReport report = check_model_gradients(*model, sample, tolerance);
    json j;
    j["command"] = "gradcheck";
    j["arch"] = o.arch;
    j["pooling"] = o.pooling;
    j["variant"] = o.variant;
    j["hidden"] = o.hidden;
    j["graphs"] = graphs_per_batch;
    j["max_nodes"] = max_nodes;
    j["entries_checked"] = report.entries_checked;
    j["max_rel_error"] = report.max_rel_error;
    j["tolerance"] = report.tolerance;
    j["resamples"] = report.resamples;
    j["passed"] = report.passed;
    j["seconds"] = now_seconds() - t0;
    emit(j, o.out);
    return report.passed ? 0 : 1;
}

int cmd_inspect(Opts& o) {
    Dataset ds = load_by_name(o);
    DatasetSummary s = summarize(ds);
    std::printf("dataset: %s\n", ds.name.c_str());
    std::printf("graphs: %d\n", s.num_graphs);
    std::printf("classes: %d\n", s.num_classes);
    std::printf("avg nodes: %.2f\n", s.avg_nodes);
    std::printf("avg edges: %.2f\n", s.avg_edges);
    std::printf("feature dim: %d\n", s.feature_dim);
    std::printf("max nodes: %d\n", s.max_nodes);
    return 0;
}

int cmd_bench(Opts& o, std::vector<int>& sizes, double avg_degree, int feature_dim,
              bool no_dense, int max_dense_nodes) {
    const double t0 = now_seconds();
    auto points = run_pool_bench(sizes, avg_degree, feature_dim, o.ratio, o.seed, !no_dense,
                                 max_dense_nodes);
    const std::string csv = bench_csv(points);
    if (!o.out.empty()) {
        std::ofstream f(o.out);
        if (!f) throw ValueError("cannot write " + o.out);
        f << csv;
    }

    std::vector<double> edges, nodes, sparse_t, dense_n, dense_t;
    for (const BenchPoint& p : points) {
        edges.push_back(static_cast<double>(p.num_edges));
        nodes.push_back(static_cast<double>(p.num_nodes));
        sparse_t.push_back(p.sparse_seconds);
        if (p.dense_seconds >= 0.0) {
            dense_n.push_back(static_cast<double>(p.num_nodes));
            dense_t.push_back(p.dense_seconds);
        }
    }

    json j;
    j["command"] = "bench";
    j["avg_degree"] = avg_degree;
    j["feature_dim"] = feature_dim;
    j["ratio"] = o.ratio;
    j["points"] = json::array();
    for (const BenchPoint& p : points) {
        json pj;
        pj["nodes"] = p.num_nodes;
        pj["edges"] = p.num_edges;
        pj["spmm_ops"] = p.spmm_ops;
        pj["sparse_seconds"] = p.sparse_seconds;
        if (p.dense_seconds >= 0.0) pj["dense_seconds"] = p.dense_seconds;
        j["points"].push_back(pj);
    }
    j["sparse_slope_vs_edges"] = loglog_slope(edges, sparse_t);
    if (dense_n.size() >= 2) j["dense_slope_vs_nodes"] = loglog_slope(dense_n, dense_t);
    if (!o.out.empty()) j["csv"] = o.out;
    j["seconds"] = now_seconds() - t0;
    emit(j, "");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-attention graph pooling: training and analysis tool"};
    app.require_subcommand(1);
    Opts o;

    auto* train = app.add_subcommand("train", "train one model on a single train/val/test split");
    add_data_flags(train, o);
    add_model_flags(train, o);
    add_trial_flags(train, o);
    train->add_option("--seed", o.seed, "root seed");
    train->add_option("--folds", o.folds, "fold count used to carve the test split")
        ->check(CLI::PositiveNumber);
    train->add_flag("--no-stratify", o.no_stratify, "shuffle folds without class balancing");
    std::string checkpoint_out;
    train->add_option("--out", checkpoint_out, "write the trained model checkpoint here");

    auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
    add_data_flags(cv, o);
    add_model_flags(cv, o);
    add_trial_flags(cv, o);
    cv->add_option("--seed", o.seed, "root seed");
    cv->add_option("--seeds", o.seeds, "comma-separated list of seeds to average over")
        ->delimiter(',');
    cv->add_option("--folds", o.folds, "fold count")->check(CLI::PositiveNumber);
    cv->add_flag("--no-stratify", o.no_stratify, "shuffle folds without class balancing");
    cv->add_option("--jobs", o.jobs, "folds trained in parallel")->check(CLI::PositiveNumber);
    cv->add_option("--out", o.out, "also write the JSON report here");

    auto* grid = app.add_subcommand("grid", "search the published hyperparameter grid");
    add_data_flags(grid, o);
    add_model_flags(grid, o);
    grid->get_option("--ratio")->description("ignored: the keep ratio is a search axis");
    grid->add_option("--batch-size", o.batch_size, "minibatch size")->check(CLI::PositiveNumber);
    grid->add_option("--patience", o.patience, "early stopping patience (epochs)");
    grid->add_option("--max-epochs", o.max_epochs, "epoch cap")->check(CLI::PositiveNumber);
    grid->add_option("--seed", o.seed, "root seed");
    grid->add_option("--folds", o.folds, "fold count")->check(CLI::PositiveNumber);
    grid->add_flag("--no-stratify", o.no_stratify, "shuffle folds without class balancing");
    grid->add_option("--jobs", o.jobs, "folds trained in parallel")->check(CLI::PositiveNumber);
    grid->add_option("--out", o.out, "write the per-candidate table as CSV here");

    auto* gradcheck = app.add_subcommand("gradcheck",
                                         "finite-difference check of model gradients");
    add_model_flags(gradcheck, o);
    gradcheck->add_option("--hidden", o.hidden, "hidden dimension")->check(CLI::PositiveNumber);
    int gc_graphs = 20, gc_max_nodes = 15, gc_feature_dim = 3, gc_classes = 2;
    double gc_tolerance = 1e-4;
    gradcheck->add_option("--graphs", gc_graphs, "graphs per sampled batch")
        ->check(CLI::PositiveNumber);
    gradcheck->add_option("--max-nodes", gc_max_nodes, "largest sampled graph")
        ->check(CLI::PositiveNumber);
    gradcheck->add_option("--feature-dim", gc_feature_dim, "node feature dimension")
        ->check(CLI::PositiveNumber);
    gradcheck->add_option("--classes", gc_classes, "number of classes");
    gradcheck->add_option("--tolerance", gc_tolerance, "max relative error accepted");
    gradcheck->add_option("--seed", o.seed, "root seed");
    gradcheck->add_option("--out", o.out, "also write the JSON report here");

    auto* inspect = app.add_subcommand("inspect", "print dataset statistics");
    add_data_flags(inspect, o);
    inspect->add_option("--seed", o.seed, "root seed (synthetic dataset only)");

    auto* bench = app.add_subcommand("bench", "time sparse pooling against a dense reference");
    std::vector<int> bench_sizes = {256, 512, 1024, 2048, 4096, 8192};
    double bench_degree = 4.0;
    int bench_fdim = 8, bench_max_dense = 1 << 14;
    bool bench_no_dense = false;
    bench->add_option("--sizes", bench_sizes, "comma-separated node counts")->delimiter(',');
    bench->add_option("--avg-degree", bench_degree, "average node degree");
    bench->add_option("--feature-dim", bench_fdim, "node feature dimension")
        ->check(CLI::PositiveNumber);
    bench->add_option("--ratio", o.ratio, "keep ratio");
    bench->add_option("--seed", o.seed, "root seed");
    bench->add_flag("--no-dense", bench_no_dense, "skip the dense reference");
    bench->add_option("--max-dense-nodes", bench_max_dense,
                      "skip the dense reference above this size");
    bench->add_option("--out", o.out, "write the measurements as CSV here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (train->parsed()) return cmd_train(train, o, checkpoint_out);
        if (cv->parsed()) return cmd_cv(cv, o);
        if (grid->parsed()) return cmd_grid(o);
        if (gradcheck->parsed())
            return cmd_gradcheck(gradcheck, o, gc_graphs, gc_max_nodes, gc_feature_dim, gc_classes,
                                 gc_tolerance);
        if (inspect->parsed()) return cmd_inspect(o);
        if (bench->parsed())
            return cmd_bench(o, bench_sizes, bench_degree, bench_fdim, bench_no_dense,
                             bench_max_dense);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
