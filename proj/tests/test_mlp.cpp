#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "clsboost/mlp.hpp"
#include "testutil.hpp"

using namespace clsboost;

namespace {

// Small random network with inputs that keep probabilities away from the
// clamp boundaries.
MLPParams small_random_net(size_t d_in, size_t d_h, Rng& rng) {
    MLPParams p = MLPParams::zeros(d_in, d_h);
    for (auto& w : p.w1) w = rng.uniform(-1.0, 1.0);
    for (auto& b : p.b1) b = rng.uniform(-0.5, 0.5);
    for (auto& w : p.w2) w = rng.uniform(-1.0, 1.0);
    p.b2 = rng.uniform(-0.5, 0.5);
    return p;
}

}  // namespace

TEST_CASE("forward computes sigmoid(w2.relu(w1'x+b1)+b2)", "[mlp]") {
    // 2-in, 2-hidden net evaluated by hand.
    MLPParams p = MLPParams::zeros(2, 2);
    p.w1 = {1.0, -1.0,   // input 0 -> hidden 0, 1
            2.0, 0.5};   // input 1 -> hidden 0, 1
    p.b1 = {0.0, 0.25};
    p.w2 = {1.0, -2.0};
    p.b2 = 0.1;
    const std::vector<float> x = {1.0f, 0.5f};
    // z1 = (1*1 + 0.5*2, 1*(-1) + 0.5*0.5 + 0.25) = (2, -0.5) -> h = (2, 0)
    // z2 = 2*1 + 0*(-2) + 0.1 = 2.1
    const double want = sigmoid(2.1);
    CHECK(forward(p, std::span<const float>(x)) == Catch::Approx(want).epsilon(1e-15));

    const std::vector<float> bad = {1.0f};
    CHECK_THROWS_AS(forward(p, std::span<const float>(bad)), Error);
}

TEST_CASE("bce_loss on known points", "[mlp]") {
    CHECK(bce_loss(0.5, 1.0) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss(0.5, 0.0) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss(1.0, 1.0) == Catch::Approx(-std::log(1.0 - 1e-7)).epsilon(1e-9));
    CHECK(bce_loss(0.0, 1.0) == Catch::Approx(-std::log(1e-7)).epsilon(1e-9));
    CHECK(bce_loss(0.9, 1.0) < bce_loss(0.8, 1.0));
}

TEST_CASE("backward matches central finite differences", "[mlp]") {
    Rng rng(101);
    for (int trial = 0; trial < 8; ++trial) {
        const size_t d_in = 1 + rng.below(8);
        const size_t d_h = 1 + rng.below(4);
        const size_t batch = 16;
        const MLPParams p = small_random_net(d_in, d_h, rng);
        const auto X = testutil::random_matrix(batch, d_in, rng);
        std::vector<size_t> rows(batch);
        std::vector<double> targets(batch);
        for (size_t i = 0; i < batch; ++i) {
            rows[i] = i;
            targets[i] = static_cast<double>(rng.below(2));
        }
        const double err = testutil::max_grad_rel_error(p, X, rows, targets);
        INFO("trial " << trial << " d_in=" << d_in << " d_h=" << d_h);
        CHECK(err <= 1e-4);
    }
}

TEST_CASE("backward exposes the soft-target identity dL/db2 = mean(p - y)", "[mlp]") {
    Rng rng(7);
    const MLPParams p = small_random_net(3, 2, rng);
    const auto X = testutil::random_matrix(4, 3, rng);
    const std::vector<size_t> rows = {0, 1, 2, 3};
    const std::vector<double> soft = {0.3, 0.7, 0.0, 1.0};
    const auto res = backward(p, X, rows, soft);
    double want = 0.0;
    for (size_t i = 0; i < rows.size(); ++i)
        want += forward(p, X.row(rows[i])) - soft[i];
    want /= 4.0;
    CHECK(res.grads.b2 == Catch::Approx(want).epsilon(1e-12));
}

TEST_CASE("backward validates inputs", "[mlp]") {
    Rng rng(7);
    const MLPParams p = small_random_net(3, 2, rng);
    const auto X = testutil::random_matrix(4, 3, rng);
    const std::vector<size_t> rows = {0, 1};
    const std::vector<double> targets = {1.0};
    CHECK_THROWS_AS(backward(p, X, rows, targets), Error);
    CHECK_THROWS_AS(backward(p, X, {}, {}), Error);
    const auto Xbad = testutil::random_matrix(4, 2, rng);
    const std::vector<double> two = {1.0, 0.0};
    CHECK_THROWS_AS(backward(p, Xbad, rows, two), Error);
}

TEST_CASE("first adam step is approximately -alpha * sign(grad)", "[mlp]") {
    MLPParams p = MLPParams::zeros(2, 1);
    MLPParams g = MLPParams::zeros(2, 1);
    g.w1 = {0.5, -2.0};
    g.b1 = {1e-3};
    g.w2 = {0.0};
    g.b2 = -4.0;
    MLPConfig cfg;
    cfg.learning_rate = 0.1;
    AdamState s = AdamState::fresh(2, 1, cfg);
    adam_step(p, g, s);
    // With fresh moments, bias correction cancels exactly:
    // step = -alpha * g / (|g| + eps)
    auto want = [&](double grad) { return -0.1 * grad / (std::abs(grad) + cfg.eps); };
    CHECK(p.w1[0] == Catch::Approx(want(0.5)).epsilon(1e-12));
    CHECK(p.w1[1] == Catch::Approx(want(-2.0)).epsilon(1e-12));
    CHECK(p.b1[0] == Catch::Approx(want(1e-3)).epsilon(1e-9));
    CHECK(p.w2[0] == 0.0);  // zero grad, zero moments: no movement
    CHECK(p.b2 == Catch::Approx(want(-4.0)).epsilon(1e-12));
    CHECK(s.t == 1);
}

TEST_CASE("train_head fits separable blobs and records history", "[mlp]") {
    Rng rng(11);
    auto [X, y] = testutil::random_blobs(300, 8, rng, 3.0);
    auto [Xval, yval] = testutil::random_blobs(100, 8, rng, 3.0);
    MLPConfig cfg;
    cfg.d_hidden = 16;
    cfg.epochs = 8;
    cfg.learning_rate = 0.01;
    cfg.seed = 3;
    const auto res = train_head(X, y, Xval, yval, cfg);
    REQUIRE(res.history.train_loss.size() == 8);
    REQUIRE(res.history.val_f1.size() == 8);
    CHECK(res.history.train_loss.back() < res.history.train_loss.front());
    CHECK(res.history.val_f1.back() > 0.9);
    // returned params are the best-validation-F1 epoch's
    const double best = *std::max_element(res.history.val_f1.begin(), res.history.val_f1.end());
    CHECK(res.history.val_f1[res.best_epoch] == best);
    CHECK(res.best_epoch ==
          static_cast<size_t>(std::max_element(res.history.val_f1.begin(),
                                               res.history.val_f1.end()) -
                              res.history.val_f1.begin()));
}

TEST_CASE("train_head is deterministic in the seed", "[mlp]") {
    Rng rng(12);
    auto [X, y] = testutil::random_blobs(120, 6, rng, 2.0);
    MLPConfig cfg;
    cfg.d_hidden = 8;
    cfg.epochs = 3;
    cfg.seed = 99;
    const auto a = train_head(X, y, {}, {}, cfg);
    const auto b = train_head(X, y, {}, {}, cfg);
    CHECK(a.params == b.params);
    CHECK(a.history == b.history);
    cfg.seed = 100;
    const auto c = train_head(X, y, {}, {}, cfg);
    CHECK(a.params != c.params);
}

TEST_CASE("train_head edge cases", "[mlp]") {
    Rng rng(13);
    auto [X, y] = testutil::random_blobs(50, 4, rng);
    MLPConfig cfg;
    cfg.d_hidden = 4;

    SECTION("epochs=0 returns the seeded init, empty history") {
        cfg.epochs = 0;
        const auto res = train_head(X, y, {}, {}, cfg);
        CHECK(res.history.train_loss.empty());
        Rng init_rng(cfg.seed);
        CHECK(res.params == detail::he_uniform_init(X.dim, cfg.d_hidden, init_rng));
    }
    SECTION("no validation set keeps the final epoch") {
        cfg.epochs = 4;
        const auto res = train_head(X, y, {}, {}, cfg);
        CHECK(res.best_epoch == 3);
        for (double v : res.history.val_f1) CHECK(v == 0.0);
    }
    SECTION("bad labels rejected") {
        std::vector<int> bad = y;
        bad[3] = 7;
        CHECK_THROWS_AS(train_head(X, bad, {}, {}, cfg), Error);
    }
    SECTION("empty training set rejected") {
        CHECK_THROWS_AS(train_head(EmbeddingMatrix{}, {}, {}, {}, cfg), Error);
    }
    SECTION("val dim mismatch rejected") {
        auto [Xv, yv] = testutil::random_blobs(10, 5, rng);
        CHECK_THROWS_AS(train_head(X, y, Xv, yv, cfg), Error);
    }
}

TEST_CASE("predict_mlp equals per-row forward", "[mlp]") {
    Rng rng(14);
    const MLPParams p = small_random_net(5, 3, rng);
    const auto X = testutil::random_matrix(7, 5, rng);
    const auto probs = predict_mlp(p, X);
    REQUIRE(probs.size() == 7);
    for (size_t i = 0; i < 7; ++i) CHECK(probs[i] == forward(p, X.row(i)));
    const auto Xbad = testutil::random_matrix(2, 4, rng);
    CHECK_THROWS_AS(predict_mlp(p, Xbad), Error);
}

TEST_CASE("MLPH roundtrip stores float32 parameters", "[mlp]") {
    testutil::TempDir dir;
    const std::string path = dir.file("m.mlph");
    Rng rng(15);
    const MLPParams p = small_random_net(4, 3, rng);
    save_mlp(p, path);
    const MLPParams back = load_mlp(path);
    CHECK(back == quantize_to_file_precision(p));
    // quantized params roundtrip bit-exactly
    save_mlp(back, dir.file("m2.mlph"));
    CHECK(load_mlp(dir.file("m2.mlph")) == back);

    const std::string good = testutil::slurp(path);
    REQUIRE(good.substr(0, 4) == "MLPH");

    SECTION("bad magic") {
        std::string bad = good;
        bad[0] = 'Z';
        write_file(path, bad);
        CHECK_THROWS_AS(load_mlp(path), Error);
    }
    SECTION("bad version") {
        std::string bad = good;
        bad[4] = 9;
        write_file(path, bad);
        CHECK_THROWS_AS(load_mlp(path), Error);
    }
    SECTION("truncated") {
        write_file(path, good.substr(0, good.size() - 1));
        CHECK_THROWS_AS(load_mlp(path), Error);
    }
    SECTION("trailing bytes") {
        write_file(path, good + "!");
        CHECK_THROWS_AS(load_mlp(path), Error);
    }
}

TEST_CASE("config validation", "[mlp]") {
    MLPConfig cfg;
    cfg.validate();
    SECTION("d_hidden") { cfg.d_hidden = 0; CHECK_THROWS_AS(cfg.validate(), Error); }
    SECTION("batch") { cfg.batch_size = 0; CHECK_THROWS_AS(cfg.validate(), Error); }
    SECTION("lr") { cfg.learning_rate = 0.0; CHECK_THROWS_AS(cfg.validate(), Error); }
    SECTION("beta") { cfg.beta2 = 1.0; CHECK_THROWS_AS(cfg.validate(), Error); }
    SECTION("threshold") { cfg.val_threshold = 1.0; CHECK_THROWS_AS(cfg.validate(), Error); }
}
