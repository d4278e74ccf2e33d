#include "doctest.h"

#include "helpers.hpp"
#include "oracle.hpp"
#include "sagpool/error.hpp"
#include "sagpool/layers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

using namespace sagpool;

namespace {

GraphBatch small_batch(Rng& rng, int graphs = 3, int max_nodes = 8, int feature_dim = 4) {
    std::vector<SparseGraph> gs;
    for (int i = 0; i < graphs; ++i) {
        const int n = 2 + rng.uniform_int(max_nodes - 1);
        gs.push_back(testgen::random_graph(n, 2 * n, feature_dim, rng, i % 2));
    }
    return make_batch(gs);
}

DenseMatrix column(std::vector<double> v) {
    DenseMatrix m(static_cast<int>(v.size()), 1);
    m.data = std::move(v);
    return m;
}

} // namespace

TEST_SUITE_BEGIN("layers");

TEST_CASE("glorot stays inside its bound and depends on the seed") {
    Rng a(3), b(3), c(4);
    Tensor ta = glorot(20, 30, a);
    Tensor tb = glorot(20, 30, b);
    Tensor tc = glorot(20, 30, c);
    const double bound = std::sqrt(6.0 / 50.0);
    for (double v : ta.value().data) CHECK(std::fabs(v) <= bound);
    CHECK(ta.value().data == tb.value().data);
    CHECK(ta.value().data != tc.value().data);
    CHECK(ta.requires_grad());
}

TEST_CASE("graph convolution matches the dense oracle") {
    Rng rng(201);
    GraphBatch batch = small_batch(rng);
    BatchState st = initial_state(batch);
    GcnLayer conv(4, 5, rng);

    Tensor out = conv.forward(st.norm, st.h);
    DenseMatrix want = oracle::elementwise_relu(oracle::matmul(
        oracle::normalize(batch.adj.to_dense()),
        oracle::matmul(batch.features, conv.parameters()[0].value())));
    CHECK(oracle::max_abs_diff(out.value(), want) <= 1e-12);

    Tensor raw = conv.forward(st.norm, st.h, false);
    for (size_t i = 0; i < raw.value().data.size(); ++i)
        CHECK(out.value().data[i] == std::max(0.0, raw.value().data[i]));
}

TEST_CASE("top_rank_count agrees with exact integer ceiling across ratios") {
    // Ratios as exact fractions; ceil(num * n / den) in integers.
    const std::pair<int, int> fracs[] = {{1, 10}, {1, 4}, {1, 2}, {1, 1}};
    const double ratios[] = {0.1, 0.25, 0.5, 1.0};
    for (int r = 0; r < 4; ++r) {
        for (int n = 1; n <= 30; ++n) {
            const int want =
                std::max(1, (fracs[r].first * n + fracs[r].second - 1) / fracs[r].second);
            CHECK(top_rank_count(ratios[r], n) == want);
        }
    }
    CHECK(top_rank_count(0.001, 500) == 1);
    CHECK_THROWS_AS(top_rank_count(0.0, 5), ValueError);
    CHECK_THROWS_AS(top_rank_count(1.5, 5), ValueError);
}

TEST_CASE("top_rank keeps the best-scoring nodes per graph in batch order") {
    // Two graphs: nodes 0-3 (graph 0) and 4-6 (graph 1).
    DenseMatrix scores = column({0.1, 0.9, 0.5, 0.9, -1.0, 0.0, -0.5});
    std::vector<int> ind = {0, 0, 0, 0, 1, 1, 1};

    auto half = [](int n) { return top_rank_count(0.5, n); };
    std::vector<int> kept = top_rank(scores, ind, 2, half);
    // Graph 0 keeps ceil(4/2) = 2: scores 0.9 (node 1) and 0.9 (node 3, tie
    // to lower index first). Graph 1 keeps ceil(3/2) = 2: 0.0 then -0.5.
    CHECK(kept == std::vector<int>{1, 3, 5, 6});

    KinkMargins m;
    set_active_margins(&m);
    (void)top_rank(scores, ind, 2, half);
    set_active_margins(nullptr);
    // Boundary gaps: graph 0 has 0.9 - 0.5 = 0.4, graph 1 has -0.5 - (-1.0) = 0.5.
    CHECK(m.topk == doctest::Approx(0.4));

    std::vector<int> all = top_rank(scores, ind, 2, [](int n) { return n; });
    CHECK(all.size() == 7);
    CHECK_THROWS_AS((void)top_rank(scores, ind, 2, [](int) { return 0; }), ValueError);
    CHECK_THROWS_AS((void)top_rank(scores, ind, 2, [](int n) { return n + 1; }), ValueError);
}

TEST_CASE("readout concatenates per-graph mean and max") {
    DenseMatrix h(3, 2);
    h.at(0, 0) = 1.0;
    h.at(0, 1) = -2.0;
    h.at(1, 0) = 3.0;
    h.at(1, 1) = 4.0;
    h.at(2, 0) = 5.0;
    h.at(2, 1) = 6.0;
    Tensor emb = readout(Tensor::from(h), {0, 0, 1}, 2);
    REQUIRE(emb.rows() == 2);
    REQUIRE(emb.cols() == 4);
    CHECK(emb.value().at(0, 0) == doctest::Approx(2.0));  // mean col 0
    CHECK(emb.value().at(0, 1) == doctest::Approx(1.0));  // mean col 1
    CHECK(emb.value().at(0, 2) == doctest::Approx(3.0));  // max col 0
    CHECK(emb.value().at(0, 3) == doctest::Approx(4.0));  // max col 1
    CHECK(emb.value().at(1, 0) == doctest::Approx(5.0));
    CHECK(emb.value().at(1, 3) == doctest::Approx(6.0));
}

TEST_CASE("selection and readout are bitwise permutation invariant given equal scores") {
    // Permuting node numbering permutes rows of h and the score column. With
    // identical score VALUES, top_rank emits survivors in descending-score
    // order either way, so the gathered rows and the readout are bitwise
    // identical. (End-to-end invariance of computed scores is checked at a
    // small tolerance elsewhere; this isolates the selection machinery.)
    Rng rng(202);
    const int n = 9;
    DenseMatrix h = testgen::random_features(n, 3, rng);
    std::vector<double> z(n);
    for (double& v : z) v = rng.uniform(-1.0, 1.0);

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm); // perm[new] = old

    DenseMatrix hp(n, 3);
    std::vector<double> zp(n);
    for (int i = 0; i < n; ++i) {
        std::copy(h.row(perm[i]), h.row(perm[i]) + 3, hp.row(i));
        zp[i] = z[perm[i]];
    }

    auto run = [](const DenseMatrix& feats, std::vector<double> scores) {
        const int rows = feats.rows;
        std::vector<int> ind(rows, 0);
        std::vector<int> kept =
            top_rank(column(scores), ind, 1, [](int m) { return top_rank_count(0.5, m); });
        Tensor masked = colwise_mul(gather_rows(Tensor::from(feats), kept),
                                    gather_rows(Tensor::from(column(scores)), kept));
        std::vector<int> kept_ind(kept.size(), 0);
        return readout(masked, kept_ind, 1).value();
    };

    DenseMatrix a = run(h, z);
    DenseMatrix b = run(hp, zp);
    CHECK(a.data == b.data); // bitwise
}

TEST_CASE("base attention pooling matches a dense reference end to end") {
    Rng rng(203);
    GraphBatch batch = small_batch(rng);
    BatchState st = initial_state(batch);
    PoolConfig cfg;
    cfg.ratio = 0.5;
    PoolingLayer pool(4, cfg, rng);

    auto r = pool.forward(st);

    const DenseMatrix adj = batch.adj.to_dense();
    const DenseMatrix zt = oracle::elementwise_tanh(oracle::matmul(
        oracle::normalize(adj), oracle::matmul(batch.features, pool.parameters()[0].value())));

    // Scores agree.
    auto s = pool.scores(st);
    CHECK(oracle::max_abs_diff(s.gate.value(), zt) <= 1e-12);

    // Survivors agree with an independent per-graph arg-sort of the oracle scores.
    for (int g = 0; g < batch.num_graphs(); ++g) {
        std::vector<int> nodes;
        for (int i = 0; i < batch.num_nodes(); ++i)
            if (batch.indicator[i] == g) nodes.push_back(i);
        std::sort(nodes.begin(), nodes.end(), [&](int a, int b) {
            if (zt.at(a, 0) != zt.at(b, 0)) return zt.at(a, 0) > zt.at(b, 0);
            return a < b;
        });
        const int k = (static_cast<int>(nodes.size()) + 1) / 2;
        std::vector<int> want(nodes.begin(), nodes.begin() + k);
        std::vector<int> got;
        for (size_t i = 0; i < r.kept.size(); ++i)
            if (batch.indicator[r.kept[i]] == g) got.push_back(r.kept[i]);
        CHECK(got == want);
    }

    // Masked features and induced adjacency agree.
    DenseMatrix want_h(static_cast<int>(r.kept.size()), 4);
    for (size_t i = 0; i < r.kept.size(); ++i)
        for (int j = 0; j < 4; ++j)
            want_h.at(static_cast<int>(i), j) =
                batch.features.at(r.kept[i], j) * zt.at(r.kept[i], 0);
    CHECK(oracle::max_abs_diff(r.state.h.value(), want_h) <= 1e-12);
    CHECK(oracle::max_abs_diff(r.state.adj.to_dense(), oracle::index2(adj, r.kept)) == 0.0);
    CHECK(oracle::max_abs_diff(r.state.norm.to_dense(),
                               oracle::normalize(oracle::index2(adj, r.kept))) <= 1e-12);

    // Survivors' graph membership is preserved.
    for (size_t i = 0; i < r.kept.size(); ++i)
        CHECK(r.state.indicator[i] == batch.indicator[r.kept[i]]);
}

TEST_CASE("augmentation variant scores on the two-hop graph but cuts the original") {
    Rng rng(204);
    GraphBatch batch = small_batch(rng, 2, 7);
    BatchState st = initial_state(batch);
    PoolConfig cfg;
    cfg.variant = AttentionVariant::augmentation;
    PoolingLayer pool(4, cfg, rng);

    const DenseMatrix adj = batch.adj.to_dense();
    const DenseMatrix want_scores = oracle::elementwise_tanh(oracle::matmul(
        oracle::normalize(oracle::two_hop(adj)),
        oracle::matmul(batch.features, pool.parameters()[0].value())));
    auto s = pool.scores(st);
    CHECK(oracle::max_abs_diff(s.gate.value(), want_scores) <= 1e-12);

    auto r = pool.forward(st);
    // The induced adjacency comes from the ORIGINAL graph: every surviving
    // edge must exist in A, not merely in A + A^2.
    CHECK(oracle::max_abs_diff(r.state.adj.to_dense(), oracle::index2(adj, r.kept)) == 0.0);
}

TEST_CASE("binarized augmentation clamps path counts to one") {
    Rng rng(205);
    GraphBatch batch = small_batch(rng, 2, 7);
    BatchState st = initial_state(batch);
    PoolConfig cfg;
    cfg.variant = AttentionVariant::augmentation;
    cfg.binarize_augmented = true;
    PoolingLayer pool(4, cfg, rng);

    const DenseMatrix want_scores = oracle::elementwise_tanh(oracle::matmul(
        oracle::normalize(oracle::two_hop(batch.adj.to_dense(), true)),
        oracle::matmul(batch.features, pool.parameters()[0].value())));
    CHECK(oracle::max_abs_diff(pool.scores(st).gate.value(), want_scores) <= 1e-12);
}

TEST_CASE("serial variant stacks two score convolutions") {
    Rng rng(206);
    GraphBatch batch = small_batch(rng, 2, 6);
    BatchState st = initial_state(batch);
    PoolConfig cfg;
    cfg.variant = AttentionVariant::serial;
    PoolingLayer pool(4, cfg, rng);

    const DenseMatrix norm = oracle::normalize(batch.adj.to_dense());
    const DenseMatrix inner = oracle::elementwise_tanh(
        oracle::matmul(norm, oracle::matmul(batch.features, pool.parameters()[0].value())));
    const DenseMatrix want = oracle::elementwise_tanh(
        oracle::matmul(norm, oracle::matmul(inner, pool.parameters()[1].value())));
    CHECK(oracle::max_abs_diff(pool.scores(st).gate.value(), want) <= 1e-12);
    CHECK(pool.param_count() == 4 * 4 + 4);
}

TEST_CASE("parallel variant averages independently parameterized scores") {
    Rng rng(207);
    GraphBatch batch = small_batch(rng, 2, 6);
    BatchState st = initial_state(batch);
    PoolConfig cfg;
    cfg.variant = AttentionVariant::parallel;
    cfg.heads = 3;
    PoolingLayer pool(4, cfg, rng);

    const DenseMatrix norm = oracle::normalize(batch.adj.to_dense());
    DenseMatrix want(batch.num_nodes(), 1);
    for (int m = 0; m < 3; ++m) {
        const DenseMatrix z = oracle::elementwise_tanh(
            oracle::matmul(norm, oracle::matmul(batch.features, pool.parameters()[m].value())));
        for (int i = 0; i < want.rows; ++i) want.at(i, 0) += z.at(i, 0) / 3.0;
    }
    CHECK(oracle::max_abs_diff(pool.scores(st).gate.value(), want) <= 1e-12);
    CHECK(pool.param_count() == 3 * 4);

    // Heads are initialized independently.
    CHECK(pool.parameters()[0].value().data != pool.parameters()[1].value().data);
    CHECK(pool.parameters()[1].value().data != pool.parameters()[2].value().data);
}

TEST_CASE("projection pooling is blind to topology; attention pooling is not") {
    Rng rng(208);
    DenseMatrix feats = testgen::random_features(6, 4, rng);
    SparseGraph sparse = make_graph(6, {{0, 1}, {2, 3}}, feats, 0);
    SparseGraph dense = make_graph(6, {{0, 1}, {0, 2}, {1, 3}, {2, 3}, {4, 5}, {1, 4}}, feats, 0);

    BatchState a = initial_state(make_batch({sparse}));
    BatchState b = initial_state(make_batch({dense}));

    PoolConfig gp;
    gp.kind = PoolKind::gpool;
    Rng r1(77);
    PoolingLayer gpool(4, gp, r1);
    auto sa = gpool.scores(a);
    auto sb = gpool.scores(b);
    CHECK(sa.rank_on.data == sb.rank_on.data); // bitwise equal across topologies

    // Ranking uses the raw projection, the gate is its tanh.
    for (int i = 0; i < 6; ++i)
        CHECK(sa.gate.value().at(i, 0) == doctest::Approx(std::tanh(sa.rank_on.at(i, 0))));

    // The raw projection matches X p / ||p||.
    const DenseMatrix& p = gpool.parameters()[0].value();
    double norm = 0.0;
    for (double v : p.data) norm += v * v;
    norm = std::sqrt(norm);
    for (int i = 0; i < 6; ++i) {
        double dot = 0.0;
        for (int j = 0; j < 4; ++j) dot += feats.at(i, j) * p.at(j, 0);
        CHECK(sa.rank_on.at(i, 0) == doctest::Approx(dot / norm));
    }

    Rng r2(77);
    PoolConfig sp;
    PoolingLayer att(4, sp, r2);
    CHECK(att.scores(a).gate.value().data != att.scores(b).gate.value().data);
}

TEST_CASE("pooling layer parameter counts") {
    Rng rng(209);
    PoolConfig cfg;
    CHECK(PoolingLayer(32, cfg, rng).param_count() == 32);
    cfg.variant = AttentionVariant::augmentation;
    CHECK(PoolingLayer(32, cfg, rng).param_count() == 32);
    cfg.variant = AttentionVariant::serial;
    CHECK(PoolingLayer(32, cfg, rng).param_count() == 32 * 32 + 32);
    cfg.variant = AttentionVariant::parallel;
    cfg.heads = 5;
    CHECK(PoolingLayer(32, cfg, rng).param_count() == 5 * 32);
    cfg.kind = PoolKind::gpool;
    CHECK(PoolingLayer(32, cfg, rng).param_count() == 32);
}

TEST_CASE("keep-ratio one preserves every node") {
    Rng rng(210);
    GraphBatch batch = small_batch(rng);
    BatchState st = initial_state(batch);
    PoolConfig cfg;
    cfg.ratio = 1.0;
    PoolingLayer pool(4, cfg, rng);
    auto r = pool.forward(st);
    CHECK(static_cast<int>(r.kept.size()) == batch.num_nodes());
    CHECK(r.state.adj.nnz() == batch.adj.nnz());
}

TEST_CASE("gradients flow through convolution, pooling and readout") {
    auto run = [](PoolConfig cfg, uint64_t first_seed) {
        for (uint64_t seed = first_seed;; ++seed) {
            REQUIRE(seed < first_seed + 40);
            Rng rng(seed);
            GraphBatch batch = small_batch(rng, 2, 6);
            BatchState st = initial_state(batch);
            GcnLayer conv(4, 3, rng);
            PoolingLayer pool(3, cfg, rng);

            auto f = [&] {
                BatchState s = st;
                s.h = conv.forward(st.norm, st.h);
                auto r = pool.forward(s);
                return sum_all(tanh(readout(r.state.h, r.state.indicator, r.state.num_graphs)));
            };

            KinkMargins margins;
            set_active_margins(&margins);
            (void)f();
            set_active_margins(nullptr);
            if (margins.min() < 1e-3) continue;

            std::vector<Tensor> leaves = {conv.parameters()[0]};
            for (const Tensor& p : pool.parameters()) leaves.push_back(p);

            for (Tensor& l : leaves) l.zero_grad();
            backward(f());
            std::vector<DenseMatrix> analytic;
            for (Tensor& l : leaves) analytic.push_back(l.grad());

            double worst = 0.0;
            const double h = 1e-5;
            for (size_t k = 0; k < leaves.size(); ++k) {
                DenseMatrix& v = leaves[k].raw_value();
                for (size_t i = 0; i < v.data.size(); ++i) {
                    const double keep = v.data[i];
                    double plus, minus;
                    {
                        NoGradGuard ng;
                        v.data[i] = keep + h;
                        plus = f().value().at(0, 0);
                        v.data[i] = keep - h;
                        minus = f().value().at(0, 0);
                    }
                    v.data[i] = keep;
                    const double fd = (plus - minus) / (2.0 * h);
                    const double a = analytic[k].data[i];
                    worst = std::max(worst,
                                     std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-6}));
                }
            }
            CHECK(worst <= 1e-5);
            return;
        }
    };

    SUBCASE("base attention") { run(PoolConfig{}, 300); }
    SUBCASE("augmentation") {
        PoolConfig cfg;
        cfg.variant = AttentionVariant::augmentation;
        run(cfg, 320);
    }
    SUBCASE("serial") {
        PoolConfig cfg;
        cfg.variant = AttentionVariant::serial;
        run(cfg, 340);
    }
    SUBCASE("parallel") {
        PoolConfig cfg;
        cfg.variant = AttentionVariant::parallel;
        cfg.heads = 2;
        run(cfg, 360);
    }
    SUBCASE("projection") {
        PoolConfig cfg;
        cfg.kind = PoolKind::gpool;
        run(cfg, 380);
    }
}

TEST_SUITE_END();
