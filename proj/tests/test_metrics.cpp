#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "clsboost/metrics.hpp"

using namespace clsboost;

TEST_CASE("confusion counts each quadrant", "[metrics]") {
    const std::vector<int> gold = {1, 1, 1, 0, 0, 0, 1, 0};
    const std::vector<int> pred = {1, 0, 1, 0, 1, 0, 1, 1};
    const Confusion c = confusion(gold, pred);
    CHECK(c.tp == 3);
    CHECK(c.fn == 1);
    CHECK(c.fp == 2);
    CHECK(c.tn == 2);
    CHECK(c.total() == 8);
}

TEST_CASE("confusion validates input", "[metrics]") {
    const std::vector<int> a = {1, 0};
    const std::vector<int> b = {1};
    CHECK_THROWS_AS(confusion(a, b), Error);
    const std::vector<int> bad = {1, 2};
    CHECK_THROWS_AS(confusion(a, bad), Error);
    CHECK_THROWS_AS(confusion(bad, a), Error);
    CHECK(confusion({}, {}) == Confusion{});
}

TEST_CASE("precision, recall, f1 from counts", "[metrics]") {
    Confusion c;
    c.tp = 6;
    c.fp = 2;
    c.fn = 4;
    c.tn = 8;
    CHECK(precision(c) == 0.75);
    CHECK(recall(c) == 0.6);
    CHECK(f1(c) == Catch::Approx(2.0 * 0.75 * 0.6 / 1.35).epsilon(1e-12));
}

TEST_CASE("degenerate ratios are zero by convention", "[metrics]") {
    Confusion none;  // all zero
    CHECK(precision(none) == 0.0);
    CHECK(recall(none) == 0.0);
    CHECK(f1(none) == 0.0);

    Confusion only_tn;
    only_tn.tn = 5;
    CHECK(precision(only_tn) == 0.0);
    CHECK(recall(only_tn) == 0.0);
    CHECK(f1(only_tn) == 0.0);

    CHECK(f1_from_pr(0.0, 0.0) == 0.0);
}

TEST_CASE("harmonic mean reproduces the published score pairs", "[metrics]") {
    CHECK(round3(f1_from_pr(0.949, 0.938)) == 0.943);
    CHECK(round3(f1_from_pr(0.756, 0.871)) == 0.809);
    // symmetric and bounded by min(p, r) from above only at p == r
    CHECK(f1_from_pr(0.3, 0.9) == f1_from_pr(0.9, 0.3));
    CHECK(f1_from_pr(0.8, 0.8) == Catch::Approx(0.8));
}

TEST_CASE("round3 rounds half up at the third decimal", "[metrics]") {
    CHECK(round3(0.9425) == 0.943);
    CHECK(round3(0.9424) == 0.942);
    CHECK(round3(0.0005) == 0.001);
    CHECK(round3(1.0) == 1.0);
    CHECK(round3(0.0) == 0.0);
}

TEST_CASE("eval line has a fixed field order", "[metrics]") {
    Confusion c;
    c.tp = 3;
    c.fp = 1;
    c.fn = 2;
    c.tn = 4;
    CHECK(format_eval_line(c) ==
          "precision=0.750 recall=0.600 f1=0.667 tp=3 fp=1 fn=2 tn=4");
}
