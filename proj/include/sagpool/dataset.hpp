#pragma once

#include "sagpool/graph.hpp"
#include "sagpool/rng.hpp"

#include <string>
#include <vector>

namespace sagpool {

/// A graph-classification dataset with contiguous 0-based labels.
struct Dataset {
    std::string name;
    std::vector<SparseGraph> graphs;
    int num_classes = 0;

    int size() const { return static_cast<int>(graphs.size()); }
    int feature_dim() const { return graphs.empty() ? 0 : graphs.front().feature_dim(); }
};

/// Aggregate statistics as reported by the `inspect` command.
struct DatasetSummary {
    int num_graphs = 0;
    int num_classes = 0;
    int feature_dim = 0;
    int max_nodes = 0;
    double avg_nodes = 0.0;
    double avg_edges = 0.0; // undirected edges per graph
};

DatasetSummary summarize(const Dataset& ds);

/// Loads the standard benchmark layout from `dir`: <name>_A.txt holds
/// comma-separated 1-based global node id pairs, <name>_graph_indicator.txt
/// maps nodes to 1-based graph ids (non-decreasing), <name>_graph_labels.txt
/// holds one class label per graph. Optional <name>_node_labels.txt becomes a
/// one-hot encoding over the sorted distinct values; optional
/// <name>_node_attributes.txt contributes raw real-valued columns appended
/// after the one-hot block. With neither file, every node gets the constant
/// feature 1.0. Graph labels are remapped to 0..C-1 in sorted value order.
Dataset load_tudataset(const std::string& dir, const std::string& name);

/// Writes `ds` back out in the same layout (each undirected edge appears in
/// both directions, features as node attributes). load(write(ds)) reproduces
/// the graphs exactly.
void write_tudataset(const Dataset& ds, const std::string& dir);

/// Cross-validation fold assignment over graph indices.
struct FoldPlan {
    std::vector<int> fold_of; // per graph
    int num_folds = 0;

    std::vector<int> test_indices(int fold) const;
    std::vector<int> train_indices(int fold) const;
};

/// Deals graphs into `num_folds` folds. With stratify, graphs are grouped by
/// class, each class is shuffled and dealt round-robin so every fold sees the
/// label distribution of the whole set; a class with fewer graphs than folds
/// is an error. Without stratify, a plain shuffle is dealt round-robin.
FoldPlan make_folds(const Dataset& ds, int num_folds, Rng& rng, bool stratify = true);

/// Splits training indices into train/validation, validation taking
/// ceil(10%) of the input, selected by shuffle.
struct TrainValSplit {
    std::vector<int> train;
    std::vector<int> val;
};

TrainValSplit split_train_val(const std::vector<int>& indices, Rng& rng);

} // namespace sagpool
