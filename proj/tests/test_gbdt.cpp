#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "clsboost/gbdt.hpp"
#include "testutil.hpp"

using namespace clsboost;

namespace {

EmbeddingMatrix column(std::vector<float> v) {
    EmbeddingMatrix m;
    m.n_rows = v.size();
    m.dim = 1;
    m.values = std::move(v);
    return m;
}

// Random stump instance in the shape the split oracle expects: n <= 64
// samples over d <= 2 features with continuous gradients and positive
// hessians, low-cardinality features to force duplicate values into a bin.
struct StumpInstance {
    EmbeddingMatrix X;
    std::vector<double> g;
    std::vector<double> h;
    GBDTConfig cfg;
};

StumpInstance random_stump_instance(Rng& rng) {
    StumpInstance inst;
    const size_t n = 2 + rng.below(63);
    const size_t d = 1 + rng.below(2);
    inst.X = EmbeddingMatrix::zeros(n, d);
    const size_t cardinality = 1 + rng.below(8);  // few distinct values, many ties
    for (auto& v : inst.X.values)
        v = static_cast<float>(static_cast<double>(rng.below(cardinality)) - 3.0 +
                               (rng.below(2) ? 0.5 : 0.0));
    inst.g.resize(n);
    inst.h.resize(n);
    for (size_t i = 0; i < n; ++i) {
        inst.g[i] = rng.normal();
        inst.h[i] = 0.05 + 0.5 * std::abs(rng.normal());
    }
    inst.cfg.max_bins = 255;  // >= 64 distinct values: binning is lossless
    inst.cfg.lambda_l2 = rng.below(2) ? 1.0 : 0.1;
    inst.cfg.min_data_in_leaf = 1 + rng.below(4);
    return inst;
}

void check_stump_matches_oracle(const StumpInstance& inst) {
    const auto oracle = testutil::brute_force_stump(inst.X, inst.g, inst.h, inst.cfg);
    const Tree tree = testutil::grow_stump(inst.X, inst.g, inst.h, inst.cfg);
    if (!oracle.found) {
        REQUIRE(tree.nodes.size() == 1);
        return;
    }
    REQUIRE(tree.nodes.size() == 3);
    const TreeNode& root = tree.nodes[0];
    CHECK(root.feature == oracle.feature);
    CHECK(root.threshold == oracle.threshold);
    CHECK(tree.nodes[1].leaf_value == oracle.left_value);
    CHECK(tree.nodes[2].leaf_value == oracle.right_value);
}

}  // namespace

TEST_CASE("quantile binning puts thresholds at data values", "[gbdt]") {
    SECTION("few distinct values: one bin per value") {
        const auto X = column({3, 1, 2, 1, 3, 2});
        const auto mapper = fit_bins(X, 255);
        REQUIRE(mapper.thresholds[0] == std::vector<double>{1.0, 2.0});
        CHECK(mapper.n_bins(0) == 3);
        CHECK(mapper.bin_of(0, 0.5) == 0);
        CHECK(mapper.bin_of(0, 1.0) == 0);
        CHECK(mapper.bin_of(0, 1.5) == 1);
        CHECK(mapper.bin_of(0, 2.0) == 1);
        CHECK(mapper.bin_of(0, 99.0) == 2);
    }
    SECTION("more values than bins: thresholds still actual data values") {
        Rng rng(3);
        EmbeddingMatrix X = EmbeddingMatrix::zeros(500, 1);
        for (auto& v : X.values) v = static_cast<float>(rng.normal());
        const auto mapper = fit_bins(X, 16);
        const auto& t = mapper.thresholds[0];
        REQUIRE(!t.empty());
        CHECK(t.size() <= 15);
        for (size_t i = 1; i < t.size(); ++i) CHECK(t[i] > t[i - 1]);
        for (double cut : t) {
            const bool is_data_value =
                std::find(X.values.begin(), X.values.end(), static_cast<float>(cut)) !=
                X.values.end();
            CHECK(is_data_value);
        }
        // routing equivalence: bin_of(v) <= b exactly when v <= t[b]
        for (float v : X.values) {
            const auto b = mapper.bin_of(0, v);
            if (b > 0) CHECK(static_cast<double>(v) > t[b - 1]);
            if (b < t.size()) CHECK(static_cast<double>(v) <= t[b]);
        }
    }
    SECTION("constant feature has a single bin") {
        const auto mapper = fit_bins(column({5, 5, 5}), 255);
        CHECK(mapper.thresholds[0].empty());
        CHECK(mapper.n_bins(0) == 1);
    }
    SECTION("non-finite values rejected") {
        CHECK_THROWS_AS(fit_bins(column({1.0f, std::numeric_limits<float>::infinity()}), 255),
                        Error);
    }
}

TEST_CASE("bin_matrix codes agree with bin_of", "[gbdt]") {
    Rng rng(4);
    const auto X = testutil::random_matrix(40, 3, rng);
    const auto mapper = fit_bins(X, 8);
    const auto B = bin_matrix(X, mapper);
    for (size_t f = 0; f < 3; ++f)
        for (size_t r = 0; r < 40; ++r)
            CHECK(B.feature(f)[r] == mapper.bin_of(f, static_cast<double>(X.values[r * 3 + f])));
    CHECK_THROWS_AS(bin_matrix(testutil::random_matrix(4, 2, rng), mapper), Error);
}

TEST_CASE("logistic gradient and hessian", "[gbdt]") {
    const auto [g0, h0] = logistic_grad_hess(1, 0.0, 1.0);
    CHECK(g0 == Catch::Approx(-0.5).epsilon(1e-15));
    CHECK(h0 == Catch::Approx(0.25).epsilon(1e-15));
    const auto [g1, h1] = logistic_grad_hess(0, 0.0, 2.0);
    CHECK(g1 == Catch::Approx(1.0).epsilon(1e-15));
    CHECK(h1 == Catch::Approx(0.5).epsilon(1e-15));
    // gradient magnitude shrinks as the score agrees with the label
    const auto [g2, _] = logistic_grad_hess(1, 4.0, 1.0);
    CHECK(std::abs(g2) < std::abs(g0));
}

TEST_CASE("stump equals the exhaustive oracle on random instances", "[gbdt]") {
    Rng rng(20240818);
    for (int i = 0; i < 60; ++i) {
        INFO("instance " << i);
        check_stump_matches_oracle(random_stump_instance(rng));
    }
}

TEST_CASE("split ties resolve to the lower feature and lower bin", "[gbdt]") {
    SECTION("duplicated feature: lower index wins") {
        EmbeddingMatrix X = EmbeddingMatrix::zeros(4, 2);
        // identical columns
        X.values = {0, 0, 1, 1, 2, 2, 3, 3};
        const std::vector<double> g = {1.0, 1.0, -1.0, -1.0};
        const std::vector<double> h = {1.0, 1.0, 1.0, 1.0};
        GBDTConfig cfg;
        cfg.min_data_in_leaf = 1;
        const Tree tree = testutil::grow_stump(X, g, h, cfg);
        REQUIRE(tree.nodes.size() == 3);
        CHECK(tree.nodes[0].feature == 0);
        const auto oracle = testutil::brute_force_stump(X, g, h, cfg);
        CHECK(oracle.feature == 0);
        CHECK(tree.nodes[0].threshold == oracle.threshold);
    }
    SECTION("symmetric gains: lower bin wins") {
        // g = (+1, -1, -1, +1) over x = (0, 1, 2, 3): splitting after 0 and
        // after 2 give mirror-image partitions with equal gain.
        const auto X = column({0, 1, 2, 3});
        const std::vector<double> g = {1.0, -1.0, -1.0, 1.0};
        const std::vector<double> h = {1.0, 1.0, 1.0, 1.0};
        GBDTConfig cfg;
        cfg.min_data_in_leaf = 1;
        const auto oracle = testutil::brute_force_stump(X, g, h, cfg);
        REQUIRE(oracle.found);
        CHECK(oracle.threshold == 0.0);
        const Tree tree = testutil::grow_stump(X, g, h, cfg);
        REQUIRE(tree.nodes.size() == 3);
        CHECK(tree.nodes[0].threshold == 0.0);
        CHECK(tree.nodes[0].split_bin == 0);
    }
    SECTION("min_data_in_leaf blocks otherwise-best splits") {
        const auto X = column({0, 1, 2, 3, 4, 5});
        // the tempting split isolates row 0; with min_data_in_leaf=2 the
        // oracle and the grower must both pick a balanced cut instead
        const std::vector<double> g = {10.0, -1.0, -1.2, -0.8, -1.1, -0.9};
        const std::vector<double> h = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
        GBDTConfig cfg;
        cfg.min_data_in_leaf = 2;
        const auto oracle = testutil::brute_force_stump(X, g, h, cfg);
        REQUIRE(oracle.found);
        CHECK(oracle.threshold >= 1.0);  // row 0 cannot be alone
        const Tree tree = testutil::grow_stump(X, g, h, cfg);
        REQUIRE(tree.nodes.size() == 3);
        CHECK(tree.nodes[0].threshold == oracle.threshold);
        CHECK(tree.nodes[1].leaf_value == oracle.left_value);
    }
    SECTION("no positive gain: single leaf") {
        const auto X = column({1, 1, 1, 1});  // constant feature, nothing to split
        const std::vector<double> g = {1.0, -1.0, 1.0, -1.0};
        const std::vector<double> h = {1.0, 1.0, 1.0, 1.0};
        GBDTConfig cfg;
        cfg.min_data_in_leaf = 1;
        const Tree tree = testutil::grow_stump(X, g, h, cfg);
        CHECK(tree.nodes.size() == 1);
        CHECK(!testutil::brute_force_stump(X, g, h, cfg).found);
    }
}

TEST_CASE("leaf-wise growth respects num_leaves and partitions rows", "[gbdt]") {
    Rng rng(6);
    auto [X, y] = testutil::random_blobs(200, 4, rng);
    const auto mapper = fit_bins(X, 64);
    const auto B = bin_matrix(X, mapper);
    std::vector<double> g(200), h(200);
    for (size_t i = 0; i < 200; ++i) {
        const auto [gi, hi] = logistic_grad_hess(y[i], 0.0, 1.0);
        g[i] = gi;
        h[i] = hi;
    }
    std::vector<size_t> rows(200);
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    GBDTConfig cfg;
    cfg.num_leaves = 7;
    cfg.min_data_in_leaf = 5;
    Rng tree_rng(cfg.seed);
    const Tree tree = grow_tree(B, mapper, g, h, rows, cfg, tree_rng);
    CHECK(tree.n_leaves() <= 7);
    CHECK(tree.nodes.size() == 2 * tree.n_leaves() - 1);
    // raw-value routing agrees with binned routing on every training row
    for (size_t r = 0; r < 200; ++r)
        CHECK(tree.value_for(X.row(r)) == tree.value_for_binned(B, r));
    // internal nodes store the bin's upper-edge data value as threshold
    for (const auto& nd : tree.nodes)
        if (!nd.is_leaf())
            CHECK(nd.threshold == mapper.thresholds[nd.feature][nd.split_bin]);
}

TEST_CASE("training fits separable data deterministically", "[gbdt]") {
    Rng rng(7);
    auto [X, y] = testutil::random_blobs(400, 6, rng, 2.5);
    GBDTConfig cfg;
    cfg.n_trees = 30;
    cfg.num_leaves = 8;
    cfg.min_data_in_leaf = 5;

    const auto res = train_gbdt(X, y, cfg);
    REQUIRE(res.train_loss.size() == 30);
    CHECK(res.train_loss.back() < res.train_loss.front());
    CHECK(res.best_iteration == 30);
    const auto probs = predict_gbdt(res.model, X);
    std::vector<int> preds(probs.size());
    for (size_t i = 0; i < probs.size(); ++i) preds[i] = probs[i] > 0.5 ? 1 : 0;
    CHECK(f1(confusion(y, preds)) > 0.95);

    const auto res2 = train_gbdt(X, y, cfg);
    CHECK(res2.model == res.model);
    CHECK(res2.train_loss == res.train_loss);
}

TEST_CASE("base score is the clamped prior log-odds", "[gbdt]") {
    Rng rng(8);
    const auto X = testutil::random_matrix(10, 2, rng);
    std::vector<int> y = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
    GBDTConfig cfg;
    cfg.n_trees = 1;
    cfg.min_data_in_leaf = 1;
    const auto res = train_gbdt(X, y, cfg);
    CHECK(res.model.base_score == Catch::Approx(std::log(0.3 / 0.7)).epsilon(1e-12));

    SECTION("single-class corpus clamps instead of diverging") {
        std::vector<int> ones(10, 1);
        const auto r1 = train_gbdt(X, ones, cfg);
        CHECK(r1.model.base_score == std::log(1e6));
        std::vector<int> zeros(10, 0);
        const auto r0 = train_gbdt(X, zeros, cfg);
        CHECK(r0.model.base_score == -std::log(1e6));
    }
    SECTION("scale_pos_weight shifts the weighted prior") {
        cfg.scale_pos_weight = 7.0 / 3.0;  // balances 3 positives against 7 negatives
        const auto r = train_gbdt(X, y, cfg);
        CHECK(r.model.base_score == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("subsampling keeps determinism per seed", "[gbdt]") {
    Rng rng(9);
    auto [X, y] = testutil::random_blobs(300, 5, rng);
    GBDTConfig cfg;
    cfg.n_trees = 10;
    cfg.num_leaves = 6;
    cfg.min_data_in_leaf = 5;
    cfg.feature_fraction = 0.6;
    cfg.bagging_fraction = 0.7;
    cfg.seed = 21;
    const auto a = train_gbdt(X, y, cfg);
    const auto b = train_gbdt(X, y, cfg);
    CHECK(a.model == b.model);
    cfg.seed = 22;
    const auto c = train_gbdt(X, y, cfg);
    CHECK(!(a.model == c.model));
}

TEST_CASE("early stopping truncates to the best validation iteration", "[gbdt]") {
    Rng rng(10);
    auto [X, y] = testutil::random_blobs(300, 4, rng, 1.0);
    // tiny noisy validation set: best loss comes early, then overfits
    auto [Xval, yval] = testutil::random_blobs(40, 4, rng, 1.0);
    GBDTConfig cfg;
    cfg.n_trees = 80;
    cfg.num_leaves = 16;
    cfg.min_data_in_leaf = 2;
    cfg.learning_rate = 0.3;
    cfg.early_stopping_rounds = 5;
    const auto res = train_gbdt(X, y, cfg, &Xval, yval);
    REQUIRE(!res.val_loss.empty());
    const size_t best =
        static_cast<size_t>(std::min_element(res.val_loss.begin(), res.val_loss.end()) -
                            res.val_loss.begin()) + 1;
    CHECK(res.best_iteration == best);
    CHECK(res.model.trees.size() == best);
    CHECK(res.val_loss.size() <= 80);
    if (res.val_loss.size() < 80)  // stopped early: exactly patience rounds past the best
        CHECK(res.val_loss.size() == best + 5);
}

TEST_CASE("validation callback reports every iteration", "[gbdt]") {
    Rng rng(11);
    auto [X, y] = testutil::random_blobs(100, 3, rng);
    auto [Xval, yval] = testutil::random_blobs(30, 3, rng);
    GBDTConfig cfg;
    cfg.n_trees = 7;
    cfg.num_leaves = 4;
    cfg.min_data_in_leaf = 2;
    std::vector<size_t> iters;
    std::vector<double> losses;
    const auto res = train_gbdt(X, y, cfg, &Xval, yval, [&](size_t it, double vl) {
        iters.push_back(it);
        losses.push_back(vl);
    });
    CHECK(iters == std::vector<size_t>{0, 1, 2, 3, 4, 5, 6});
    CHECK(losses == res.val_loss);
}

TEST_CASE("monotone feature transforms leave predictions bit-identical", "[gbdt]") {
    Rng rng(12);
    auto [X, y] = testutil::random_blobs(250, 5, rng);
    auto [T, yt] = testutil::random_blobs(100, 5, rng);
    GBDTConfig cfg;
    cfg.n_trees = 15;
    cfg.num_leaves = 8;
    cfg.min_data_in_leaf = 5;

    const auto base_model = train_gbdt(X, y, cfg).model;
    const auto base_preds = predict_gbdt(base_model, T);

    for (size_t f : {size_t{0}, size_t{3}}) {
        EmbeddingMatrix Xc = X;
        EmbeddingMatrix Tc = T;
        for (size_t r = 0; r < Xc.n_rows; ++r) {
            float& v = Xc.values[r * Xc.dim + f];
            v = v * v * v;
        }
        for (size_t r = 0; r < Tc.n_rows; ++r) {
            float& v = Tc.values[r * Tc.dim + f];
            v = v * v * v;
        }
        const auto cubed_model = train_gbdt(Xc, y, cfg).model;
        const auto cubed_preds = predict_gbdt(cubed_model, Tc);
        REQUIRE(cubed_preds.size() == base_preds.size());
        for (size_t i = 0; i < base_preds.size(); ++i) {
            INFO("feature " << f << " row " << i);
            CHECK(cubed_preds[i] == base_preds[i]);
        }
    }
}

TEST_CASE("model file roundtrip", "[gbdt]") {
    Rng rng(13);
    auto [X, y] = testutil::random_blobs(150, 4, rng);
    GBDTConfig cfg;
    cfg.n_trees = 5;
    cfg.num_leaves = 6;
    cfg.min_data_in_leaf = 5;
    const auto model = train_gbdt(X, y, cfg).model;

    testutil::TempDir dir;
    const std::string path = dir.file("m.gbdt");
    save_gbdt(model, path);
    const auto loaded = load_gbdt(path);
    CHECK(loaded.config == model.config);
    CHECK(loaded.base_score == model.base_score);
    CHECK(loaded.mapper == model.mapper);
    REQUIRE(loaded.trees.size() == model.trees.size());
    // node ids are renumbered in pre-order on load; semantics must not change
    const auto a = predict_gbdt(model, X);
    const auto b = predict_gbdt(loaded, X);
    CHECK(a == b);
    // and the byte stream is stable across a save/load/save cycle
    save_gbdt(loaded, dir.file("m2.gbdt"));
    CHECK(testutil::slurp(dir.file("m2.gbdt")) == testutil::slurp(path));

    const std::string good = testutil::slurp(path);
    REQUIRE(good.substr(0, 4) == "GBDT");
    SECTION("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        write_file(path, bad);
        CHECK_THROWS_AS(load_gbdt(path), Error);
    }
    SECTION("truncated") {
        write_file(path, good.substr(0, good.size() / 2));
        CHECK_THROWS_AS(load_gbdt(path), Error);
    }
    SECTION("trailing bytes") {
        write_file(path, good + "??");
        CHECK_THROWS_AS(load_gbdt(path), Error);
    }
}

TEST_CASE("config and input validation", "[gbdt]") {
    GBDTConfig cfg;
    SECTION("bad num_leaves") {
        cfg.num_leaves = 1;
        CHECK_THROWS_AS(cfg.validate(), Error);
    }
    SECTION("bad fractions") {
        cfg.feature_fraction = 0.0;
        CHECK_THROWS_AS(cfg.validate(), Error);
    }
    SECTION("bad labels") {
        Rng rng(1);
        const auto X = testutil::random_matrix(4, 2, rng);
        std::vector<int> y = {0, 1, 2, 0};
        CHECK_THROWS_AS(train_gbdt(X, y, cfg), Error);
    }
    SECTION("empty training set") {
        CHECK_THROWS_AS(train_gbdt(EmbeddingMatrix{}, {}, cfg), Error);
    }
    SECTION("val dim mismatch") {
        Rng rng(1);
        const auto X = testutil::random_matrix(30, 2, rng);
        const auto Xv = testutil::random_matrix(5, 3, rng);
        std::vector<int> y(30, 0);
        y[0] = 1;
        std::vector<int> yv(5, 0);
        CHECK_THROWS_AS(train_gbdt(X, y, cfg, &Xv, yv), Error);
    }
}
