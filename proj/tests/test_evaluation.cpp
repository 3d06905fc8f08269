#include <doctest.h>

#include <cmath>

#include "diff2dist/evaluation.hpp"
#include "test_support.hpp"

using namespace d2d;
using namespace d2d::testing;

namespace {

DistanceMatrix make_dm(int m, const std::vector<int>& labels, const std::vector<Split>& split) {
    DistanceMatrix dm;
    dm.values = Matrix(m, m);
    dm.labels = labels;
    dm.split = split;
    for (int i = 0; i < m; ++i) dm.ids.push_back(std::to_string(i));
    return dm;
}

void set_dist(DistanceMatrix& dm, int a, int b, double v) {
    dm.values(a, b) = dm.values(b, a) = v;
}

// two tight clusters far apart, labels matching the clusters
DistanceMatrix separated_clusters(int per_cluster, int val_per_cluster) {
    const int m = 2 * per_cluster;
    std::vector<int> labels(m);
    std::vector<Split> split(m, Split::Train);
    for (int i = 0; i < m; ++i) labels[i] = i < per_cluster ? 0 : 1;
    for (int c = 0; c < 2; ++c)
        for (int v = 0; v < val_per_cluster; ++v) split[c * per_cluster + v] = Split::Validation;
    DistanceMatrix dm = make_dm(m, labels, split);
    Rng rng(123);
    for (int a = 0; a < m; ++a)
        for (int b = a + 1; b < m; ++b) {
            const bool same = labels[a] == labels[b];
            set_dist(dm, a, b, same ? rng.uniform(0.1, 0.2) : rng.uniform(10.0, 11.0));
        }
    return dm;
}

}  // namespace

TEST_CASE("perfectly separated clusters classify at 1.0 for any k") {
    const DistanceMatrix dm = separated_clusters(10, 2);
    for (int k : {1, 3, 7, 15}) CHECK(knn_classify(dm, k) == 1.0);
}

TEST_CASE("k equal to the training size votes the majority class") {
    // train: 3 of label 0, 2 of label 1; every validation point gets label 0
    DistanceMatrix dm = make_dm(9, {0, 0, 0, 1, 1, 0, 0, 1, 1},
                                {Split::Train, Split::Train, Split::Train, Split::Train,
                                 Split::Train, Split::Validation, Split::Validation,
                                 Split::Validation, Split::Validation});
    Rng rng(9);
    for (int a = 0; a < 9; ++a)
        for (int b = a + 1; b < 9; ++b) set_dist(dm, a, b, rng.uniform(1.0, 2.0));
    CHECK(knn_classify(dm, 5) == 0.5);  // half the validation set carries label 0
}

TEST_CASE("six-point matrix against hand enumeration") {
    // train 0..3 labels (0,0,1,1); validation 4 (label 0) and 5 (label 0)
    DistanceMatrix dm = make_dm(6, {0, 0, 1, 1, 0, 0},
                                {Split::Train, Split::Train, Split::Train, Split::Train,
                                 Split::Validation, Split::Validation});
    set_dist(dm, 4, 0, 1.0);
    set_dist(dm, 4, 1, 2.0);
    set_dist(dm, 4, 2, 3.0);
    set_dist(dm, 4, 3, 4.0);
    set_dist(dm, 5, 0, 5.0);
    set_dist(dm, 5, 1, 2.5);
    set_dist(dm, 5, 2, 1.5);
    set_dist(dm, 5, 3, 3.5);
    set_dist(dm, 4, 5, 0.5);
    // k=3: point 4 sees {0,1,2} -> labels {0,0,1} -> 0, correct;
    //      point 5 sees {2,1,3} -> labels {1,0,1} -> 1, wrong
    CHECK(knn_classify(dm, 3) == 0.5);
    // k=1: point 4 -> 0 correct; point 5 -> nearest is 2, label 1, wrong
    CHECK(knn_classify(dm, 1) == 0.5);
    // brute-force enumeration of every (val, k) agrees
    for (int k = 1; k <= 4; ++k) {
        int correct = 0;
        for (int v : {4, 5}) {
            std::vector<std::pair<double, int>> order;
            for (int t = 0; t < 4; ++t) order.push_back({dm.values(v, t), t});
            std::sort(order.begin(), order.end());
            int votes[2] = {0, 0};
            for (int i = 0; i < k; ++i) ++votes[dm.labels[order[i].second]];
            const int winner = votes[1] > votes[0] ? 1 : 0;
            if (winner == dm.labels[v]) ++correct;
        }
        CHECK(knn_classify(dm, k) == correct / 2.0);
    }
}

TEST_CASE("knn argument validation") {
    const DistanceMatrix dm = separated_clusters(5, 1);
    CHECK_THROWS(knn_classify(dm, 0));
    CHECK_THROWS(knn_classify(dm, 9));  // only 8 training points
    DistanceMatrix no_val = dm;
    std::fill(no_val.split.begin(), no_val.split.end(), Split::Train);
    CHECK_THROWS(knn_classify(no_val, 3));
}

TEST_CASE("sweep covers the inclusive range and finds the best") {
    const DistanceMatrix dm = separated_clusters(30, 3);  // 54 training points
    const KnnReport r = knn_sweep(dm);
    CHECK(r.ks.size() == 48);   // 3..50 inclusive
    CHECK(r.ks.front() == 3);
    CHECK(r.ks.back() == 50);
    CHECK(r.best_accuracy == 1.0);
    CHECK(r.best_accuracy >= r.accuracies.front());

    const KnnReport lit = knn_sweep(dm, 3, 50, true);
    CHECK(lit.ks.size() == 2);
    CHECK(lit.ks[0] == 3);
    CHECK(lit.ks[1] == 50);

    // k_max clamps to the training-set size
    const DistanceMatrix small = separated_clusters(5, 1);
    CHECK(knn_sweep(small).ks.back() == 8);
}

TEST_CASE("knn is invariant under a monotone distance transform") {
    DistanceMatrix dm = separated_clusters(8, 2);
    // spread intra/inter values around to make ranks nontrivial
    Rng rng(77);
    for (int a = 0; a < dm.values.rows(); ++a)
        for (int b = a + 1; b < dm.values.rows(); ++b)
            set_dist(dm, a, b, dm.values(a, b) + rng.uniform(0.0, 0.05));
    DistanceMatrix squared = dm;
    for (int a = 0; a < dm.values.rows(); ++a)
        for (int b = 0; b < dm.values.rows(); ++b)
            squared.values(a, b) = dm.values(a, b) * dm.values(a, b);
    for (int k : {1, 3, 5, 9})
        CHECK(knn_classify(dm, k) == knn_classify(squared, k));
}

TEST_CASE("isomap: three equidistant points give an equilateral triangle") {
    DistanceMatrix dm = make_dm(3, {0, 0, 0}, {Split::Train, Split::Train, Split::Train});
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b) set_dist(dm, a, b, 2.0);
    const Embedding2D emb = isomap_embed(dm, 15);
    std::vector<double> sides;
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b)
            sides.push_back(std::hypot(emb.coords[a].x - emb.coords[b].x,
                                       emb.coords[a].y - emb.coords[b].y));
    for (double s : sides) CHECK(rel_err(s, sides[0]) < 1e-6);
    CHECK(sides[0] > 0.1);
}

TEST_CASE("isomap recovers collinear points") {
    const int m = 8;
    std::vector<double> xs;
    for (int i = 0; i < m; ++i) xs.push_back(0.37 * i * i);   // distinct gaps
    DistanceMatrix dm = make_dm(m, std::vector<int>(m, 0),
                                std::vector<Split>(m, Split::Train));
    for (int a = 0; a < m; ++a)
        for (int b = a + 1; b < m; ++b) set_dist(dm, a, b, std::fabs(xs[a] - xs[b]));
    const Embedding2D emb = isomap_embed(dm, 15);
    double var1 = 0.0, var2 = 0.0;
    for (const Vec2& c : emb.coords) {
        var1 += c.x * c.x;
        var2 += c.y * c.y;
    }
    CHECK(var2 <= 1e-8 * var1);
    // embedded gaps reproduce the input spacing up to reflection
    std::vector<double> emb_x;
    for (const Vec2& c : emb.coords) emb_x.push_back(c.x);
    std::sort(emb_x.begin(), emb_x.end());
    std::vector<double> in_x = xs;
    std::sort(in_x.begin(), in_x.end());
    std::vector<double> gaps, expect;
    for (int i = 1; i < m; ++i) {
        gaps.push_back(emb_x[i] - emb_x[i - 1]);
        expect.push_back(in_x[i] - in_x[i - 1]);
    }
    if (rel_err(gaps.front(), expect.front()) > 1e-6)
        std::reverse(gaps.begin(), gaps.end());   // mirrored solution
    for (int i = 0; i < m - 1; ++i) CHECK(rel_err(gaps[i], expect[i]) < 1e-6);
}

TEST_CASE("doubling all distances doubles the embedding") {
    DistanceMatrix dm = separated_clusters(6, 1);
    DistanceMatrix doubled = dm;
    for (int a = 0; a < dm.values.rows(); ++a)
        for (int b = 0; b < dm.values.rows(); ++b) doubled.values(a, b) = 2.0 * dm.values(a, b);
    const Embedding2D e1 = isomap_embed(dm, 5);
    const Embedding2D e2 = isomap_embed(doubled, 5);
    for (int a = 0; a < dm.values.rows(); ++a)
        for (int b = a + 1; b < dm.values.rows(); ++b) {
            const double d1 = std::hypot(e1.coords[a].x - e1.coords[b].x,
                                         e1.coords[a].y - e1.coords[b].y);
            const double d2 = std::hypot(e2.coords[a].x - e2.coords[b].x,
                                         e2.coords[a].y - e2.coords[b].y);
            if (d1 > 1e-12) CHECK(rel_err(d2, 2.0 * d1) < 1e-9);
        }
}

TEST_CASE("isomap output is centered and finite, even when bridging") {
    // two clusters of 20 with a huge gap: 15-NN graphs stay intra-cluster
    const DistanceMatrix dm = separated_clusters(20, 2);
    const Embedding2D emb = isomap_embed(dm, 15);
    double mx = 0.0, my = 0.0, scale = 0.0;
    for (const Vec2& c : emb.coords) {
        REQUIRE(std::isfinite(c.x));
        REQUIRE(std::isfinite(c.y));
        mx += c.x;
        my += c.y;
        scale = std::max({scale, std::fabs(c.x), std::fabs(c.y)});
    }
    CHECK(std::fabs(mx / emb.coords.size()) <= 1e-9 * scale);
    CHECK(std::fabs(my / emb.coords.size()) <= 1e-9 * scale);
    CHECK_THROWS(isomap_embed(make_dm(2, {0, 0}, {Split::Train, Split::Train}), 15));
}

TEST_CASE("isomap is deterministic across thread counts") {
    const DistanceMatrix dm = separated_clusters(10, 2);
    const Embedding2D a = isomap_embed(dm, 7, 1);
    const Embedding2D b = isomap_embed(dm, 7, 4);
    for (size_t i = 0; i < a.coords.size(); ++i) {
        CHECK(a.coords[i].x == b.coords[i].x);
        CHECK(a.coords[i].y == b.coords[i].y);
    }
}

TEST_CASE("report and embedding csv formats") {
    const DistanceMatrix dm = separated_clusters(5, 1);
    const KnnReport r = knn_sweep(dm, 3, 8);
    const std::string csv = knn_report_to_csv(r, 11, "feed");
    CHECK(csv.find("K,accuracy") != std::string::npos);
    CHECK(csv.find("# seed=11") != std::string::npos);

    const Embedding2D emb = isomap_embed(dm, 5);
    const std::string ecsv = embedding_to_csv(emb, dm, 11, "feed");
    CHECK(ecsv.find("id,x,y,label,split") != std::string::npos);
    // 3 provenance lines, 1 header, one row per point
    int rows = 0;
    for (char c : ecsv)
        if (c == '\n') ++rows;
    CHECK(rows == 3 + 1 + 10);
}
