#include "sagpool/dataset.hpp"

#include "sagpool/error.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>

namespace sagpool {

namespace {

namespace fs = std::filesystem;

/// Line-oriented reader that tracks position for error reporting. Blank
/// lines and trailing carriage returns are tolerated; everything else about
/// the format is strict.
class LineReader {
public:
    explicit LineReader(std::string path) : path_(std::move(path)), in_(path_) {
        if (!in_) throw ParseError(path_, 0, "cannot open file");
    }

    bool next(std::string& line) {
        while (std::getline(in_, line)) {
            ++line_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.find_first_not_of(" \t") != std::string::npos) return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(path_, line_, msg); }

private:
    std::string path_;
    std::ifstream in_;
    long line_ = 0;
};

void skip_spaces(const char*& p) {
    while (*p == ' ' || *p == '\t') ++p;
}

long read_long(const char*& p, const LineReader& r) {
    skip_spaces(p);
    char* end = nullptr;
    errno = 0;
    const long v = std::strtol(p, &end, 10);
    if (end == p || errno == ERANGE) r.fail("expected an integer");
    p = end;
    return v;
}

double read_double(const char*& p, const LineReader& r) {
    skip_spaces(p);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(p, &end);
    if (end == p || errno == ERANGE) r.fail("expected a number");
    p = end;
    return v;
}

void expect_comma(const char*& p, const LineReader& r) {
    skip_spaces(p);
    if (*p != ',') r.fail("expected a comma");
    ++p;
}

void expect_end(const char* p, const LineReader& r) {
    skip_spaces(p);
    if (*p != '\0') r.fail("unexpected trailing characters");
}

std::vector<long> read_long_column(const std::string& path) {
    LineReader r(path);
    std::vector<long> out;
    std::string line;
    while (r.next(line)) {
        const char* p = line.c_str();
        out.push_back(read_long(p, r));
        expect_end(p, r);
    }
    return out;
}

/// Remaps arbitrary integer values to 0..K-1 in sorted value order.
std::map<long, int> value_index(const std::vector<long>& values) {
    std::map<long, int> index;
    for (long v : values) index.emplace(v, 0);
    int next = 0;
    for (auto& [value, id] : index) id = next++;
    return index;
}

} // namespace

DatasetSummary summarize(const Dataset& ds) {
    DatasetSummary s;
    s.num_graphs = ds.size();
    s.num_classes = ds.num_classes;
    s.feature_dim = ds.feature_dim();
    double nodes = 0.0;
    double edges = 0.0;
    for (const SparseGraph& g : ds.graphs) {
        s.max_nodes = std::max(s.max_nodes, g.num_nodes);
        nodes += g.num_nodes;
        edges += g.num_edges();
    }
    if (s.num_graphs > 0) {
        s.avg_nodes = nodes / s.num_graphs;
        s.avg_edges = edges / s.num_graphs;
    }
    return s;
}

Dataset load_tudataset(const std::string& dir, const std::string& name) {
    const fs::path base = fs::path(dir) / name / (name + "_");
    const std::string a_path = base.string() + "A.txt";
    const std::string ind_path = base.string() + "graph_indicator.txt";
    const std::string glab_path = base.string() + "graph_labels.txt";
    const std::string nlab_path = base.string() + "node_labels.txt";
    const std::string nattr_path = base.string() + "node_attributes.txt";

    // Graph membership. Node ids are consecutive within a graph and graph
    // ids are 1-based, contiguous and non-decreasing down the file.
    std::vector<int> node_graph;
    int num_graphs = 0;
    {
        LineReader r(ind_path);
        std::string line;
        long prev = 0;
        while (r.next(line)) {
            const char* p = line.c_str();
            const long g = read_long(p, r);
            expect_end(p, r);
            if (g < 1) r.fail("graph ids are 1-based");
            if (g < prev) r.fail("graph ids must be non-decreasing");
            if (g > prev + 1) r.fail("graph ids must be contiguous");
            node_graph.push_back(static_cast<int>(g) - 1);
            prev = g;
        }
        if (node_graph.empty()) r.fail("no nodes");
        num_graphs = static_cast<int>(prev);
    }
    const int num_nodes = static_cast<int>(node_graph.size());

    std::vector<int> offset(num_graphs + 1, 0);
    for (int g : node_graph) ++offset[g + 1];
    for (int g = 0; g < num_graphs; ++g) offset[g + 1] += offset[g];

    // Class labels, remapped to 0..C-1 in sorted value order.
    std::vector<long> raw_labels = read_long_column(glab_path);
    if (static_cast<int>(raw_labels.size()) != num_graphs)
        throw ParseError(glab_path, static_cast<long>(raw_labels.size()),
                         "expected " + std::to_string(num_graphs) + " labels, got " +
                             std::to_string(raw_labels.size()));
    const std::map<long, int> label_of = value_index(raw_labels);

    // Node features: one-hot labels, then raw attributes, else constant 1.
    std::vector<long> node_labels;
    std::map<long, int> node_label_of;
    if (fs::exists(nlab_path)) {
        node_labels = read_long_column(nlab_path);
        if (static_cast<int>(node_labels.size()) != num_nodes)
            throw ParseError(nlab_path, static_cast<long>(node_labels.size()),
                             "expected one label per node");
        node_label_of = value_index(node_labels);
    }
    std::vector<std::vector<double>> node_attrs;
    if (fs::exists(nattr_path)) {
        LineReader r(nattr_path);
        std::string line;
        while (r.next(line)) {
            const char* p = line.c_str();
            std::vector<double> row;
            row.push_back(read_double(p, r));
            skip_spaces(p);
            while (*p == ',') {
                ++p;
                row.push_back(read_double(p, r));
                skip_spaces(p);
            }
            expect_end(p, r);
            if (!node_attrs.empty() && row.size() != node_attrs.front().size())
                r.fail("inconsistent attribute count");
            node_attrs.push_back(std::move(row));
        }
        if (static_cast<int>(node_attrs.size()) != num_nodes)
            throw ParseError(nattr_path, static_cast<long>(node_attrs.size()),
                             "expected one attribute row per node");
    }

    const int onehot_dim = static_cast<int>(node_label_of.size());
    const int attr_dim = node_attrs.empty() ? 0 : static_cast<int>(node_attrs.front().size());
    const int feature_dim = std::max(onehot_dim + attr_dim, 1);

    DenseMatrix features(num_nodes, feature_dim);
    for (int i = 0; i < num_nodes; ++i) {
        if (onehot_dim + attr_dim == 0) {
            features.at(i, 0) = 1.0;
            continue;
        }
        if (onehot_dim > 0) features.at(i, node_label_of.at(node_labels[i])) = 1.0;
        for (int j = 0; j < attr_dim; ++j) features.at(i, onehot_dim + j) = node_attrs[i][j];
    }

    // Edges arrive as 1-based global node id pairs, one direction per line.
    std::vector<std::vector<std::pair<int, int>>> edges(num_graphs);
    {
        LineReader r(a_path);
        std::string line;
        while (r.next(line)) {
            const char* p = line.c_str();
            const long u = read_long(p, r);
            expect_comma(p, r);
            const long v = read_long(p, r);
            expect_end(p, r);
            if (u < 1 || u > num_nodes || v < 1 || v > num_nodes)
                r.fail("node id out of range");
            const int ui = static_cast<int>(u) - 1;
            const int vi = static_cast<int>(v) - 1;
            const int g = node_graph[ui];
            if (node_graph[vi] != g) r.fail("edge connects two different graphs");
            edges[g].push_back({ui - offset[g], vi - offset[g]});
        }
    }

    Dataset ds;
    ds.name = name;
    ds.num_classes = static_cast<int>(label_of.size());
    ds.graphs.reserve(num_graphs);
    for (int g = 0; g < num_graphs; ++g) {
        const int n = offset[g + 1] - offset[g];
        DenseMatrix feats(n, feature_dim);
        for (int i = 0; i < n; ++i)
            std::copy(features.row(offset[g] + i), features.row(offset[g] + i) + feature_dim,
                      feats.row(i));
        ds.graphs.push_back(
            make_graph(n, edges[g], std::move(feats), label_of.at(raw_labels[g])));
    }
    return ds;
}

void write_tudataset(const Dataset& ds, const std::string& dir) {
    for (const SparseGraph& g : ds.graphs)
        for (double v : g.adj.values)
            if (v != 1.0)
                throw ValueError("write_tudataset: only unit-weight graphs can be exported");

    const fs::path d = fs::path(dir) / ds.name;
    fs::create_directories(d);
    const std::string base = (d / (ds.name + "_")).string();

    std::ofstream a(base + "A.txt");
    std::ofstream ind(base + "graph_indicator.txt");
    std::ofstream glab(base + "graph_labels.txt");
    std::ofstream nattr(base + "node_attributes.txt");
    if (!a || !ind || !glab || !nattr)
        throw ValueError("write_tudataset: cannot create files under " + d.string());

    int offset = 0;
    char buf[64];
    for (int gi = 0; gi < ds.size(); ++gi) {
        const SparseGraph& g = ds.graphs[gi];
        glab << g.label << '\n';
        // Stored CSR entries already cover both edge directions.
        for (int i = 0; i < g.num_nodes; ++i)
            for (int e = g.adj.row_begin(i); e < g.adj.row_end(i); ++e)
                a << offset + i + 1 << ", " << offset + g.adj.indices[e] + 1 << '\n';
        for (int i = 0; i < g.num_nodes; ++i) {
            ind << gi + 1 << '\n';
            for (int j = 0; j < g.feature_dim(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", g.features.at(i, j));
                nattr << (j ? ", " : "") << buf;
            }
            nattr << '\n';
        }
        offset += g.num_nodes;
    }
}

std::vector<int> FoldPlan::test_indices(int fold) const {
    std::vector<int> out;
    for (size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] == fold) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> FoldPlan::train_indices(int fold) const {
    std::vector<int> out;
    for (size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] != fold) out.push_back(static_cast<int>(i));
    return out;
}

FoldPlan make_folds(const Dataset& ds, int num_folds, Rng& rng, bool stratify) {
    const int n = ds.size();
    if (num_folds < 2) throw ValueError("make_folds: need at least 2 folds");
    if (n < num_folds)
        throw ValueError("make_folds: " + std::to_string(n) + " graphs cannot fill " +
                         std::to_string(num_folds) + " folds");

    FoldPlan plan;
    plan.num_folds = num_folds;
    plan.fold_of.assign(n, -1);

    if (stratify) {
        std::vector<std::vector<int>> by_class(ds.num_classes);
        for (int i = 0; i < n; ++i) by_class.at(ds.graphs[i].label).push_back(i);
        for (int c = 0; c < ds.num_classes; ++c) {
            if (static_cast<int>(by_class[c].size()) < num_folds)
                throw ValueError("make_folds: class " + std::to_string(c) + " has only " +
                                 std::to_string(by_class[c].size()) + " graphs, fewer than " +
                                 std::to_string(num_folds) +
                                 " folds; disable stratification or reduce folds");
            rng.shuffle(by_class[c]);
            for (size_t p = 0; p < by_class[c].size(); ++p)
                plan.fold_of[by_class[c][p]] = static_cast<int>(p % num_folds);
        }
    } else {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        for (int p = 0; p < n; ++p) plan.fold_of[order[p]] = p % num_folds;
    }
    return plan;
}

TrainValSplit split_train_val(const std::vector<int>& indices, Rng& rng) {
    if (indices.size() < 2)
        throw ValueError("split_train_val: need at least 2 graphs to split");
    std::vector<int> shuffled = indices;
    rng.shuffle(shuffled);
    const size_t n_val = (shuffled.size() + 9) / 10; // ceil(10%)
    TrainValSplit s;
    s.val.assign(shuffled.begin(), shuffled.begin() + n_val);
    s.train.assign(shuffled.begin() + n_val, shuffled.end());
    return s;
}

} // namespace sagpool
