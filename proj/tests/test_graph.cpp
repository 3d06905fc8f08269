#include <doctest.h>

#include <cmath>
#include <numbers>
#include <map>
#include <set>

#include "diff2dist/graph.hpp"
#include "diff2dist/spectral.hpp"
#include "test_support.hpp"

using namespace d2d;
using namespace d2d::testing;

namespace {

AttributedGraph two_node_graph() {
    AttributedGraph g;
    g.n = 2;
    g.positions = {{0.0, 0.0}, {1.0, 0.0}};
    g.edges = {{0, 1, {1.0, 0.0, 1.0}}};
    return g;
}

// det(L - x I) for 3x3, used by the characteristic-polynomial oracle
double char_poly3(const Matrix& L, double x) {
    const double a = L(0, 0) - x, b = L(0, 1), c = L(0, 2);
    const double d = L(1, 0), e = L(1, 1) - x, f = L(1, 2);
    const double g = L(2, 0), h = L(2, 1), i = L(2, 2) - x;
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
}

// brute-force roots by sign-change bisection over [lo, hi]
std::vector<double> cubic_roots_by_bisection(const Matrix& L, double lo, double hi) {
    std::vector<double> roots;
    const int grid = 20000;
    double prev_x = lo, prev_f = char_poly3(L, lo);
    for (int k = 1; k <= grid; ++k) {
        const double x = lo + (hi - lo) * k / grid;
        const double f = char_poly3(L, x);
        if (prev_f == 0.0) roots.push_back(prev_x);
        if (prev_f * f < 0.0) {
            double a = prev_x, b = x;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (a + b);
                if (char_poly3(L, a) * char_poly3(L, mid) <= 0.0)
                    b = mid;
                else
                    a = mid;
            }
            roots.push_back(0.5 * (a + b));
        }
        prev_x = x;
        prev_f = f;
    }
    return roots;
}

}  // namespace

TEST_CASE("laplacian of the smallest graph") {
    const AttributedGraph g = two_node_graph();
    const WeightedLaplacian L = build_laplacian(g, std::vector<double>{1.0});
    CHECK(L.m(0, 0) == 1.0);
    CHECK(L.m(0, 1) == -1.0);
    CHECK(L.m(1, 0) == -1.0);
    CHECK(L.m(1, 1) == 1.0);
}

TEST_CASE("triangle laplacian and its spectrum") {
    AttributedGraph g;
    g.n = 3;
    g.positions = {{0, 0}, {1, 0}, {0, 1}};
    g.edges = {{0, 1, {1, 0, 1}}, {0, 2, {1, 0, 1}}, {1, 2, {1, 0, 1}}};
    const WeightedLaplacian L = build_laplacian(g, std::vector<double>{1, 1, 1});
    for (int i = 0; i < 3; ++i) CHECK(L.m(i, i) == 2.0);
    CHECK(L.m(0, 1) == -1.0);
    CHECK(L.m(1, 2) == -1.0);

    const Spectrum s = eigh(L);
    CHECK(std::fabs(s.eigenvalues[0] - 0.0) < 1e-9);
    CHECK(std::fabs(s.eigenvalues[1] - 3.0) < 1e-9);
    CHECK(std::fabs(s.eigenvalues[2] - 3.0) < 1e-9);
}

TEST_CASE("path laplacian spectrum matches the characteristic-cubic oracle") {
    AttributedGraph g;
    g.n = 3;
    g.positions = {{0, 0}, {1, 0}, {2, 0}};
    g.edges = {{0, 1, {1, 0, 1}}, {1, 2, {1, 0, 1}}};
    const WeightedLaplacian L = build_laplacian(g, std::vector<double>{2.0, 3.0});

    const std::vector<double> roots = cubic_roots_by_bisection(L.m, -1.0, 11.0);
    REQUIRE(roots.size() == 3);
    const Spectrum s = eigh(L);
    for (int k = 0; k < 3; ++k) CHECK(std::fabs(s.eigenvalues[k] - roots[k]) < 1e-8);
    // and the closed-form factorization lambda (lambda^2 - 10 lambda + 18)
    CHECK(std::fabs(roots[0]) < 1e-8);
    CHECK(std::fabs(roots[1] - (5.0 - std::sqrt(7.0))) < 1e-8);
    CHECK(std::fabs(roots[2] - (5.0 + std::sqrt(7.0))) < 1e-8);
}

TEST_CASE("laplacian rejects bad weights with the edge index") {
    const AttributedGraph g = two_node_graph();
    CHECK_THROWS_WITH_AS(build_laplacian(g, std::vector<double>{-0.5}),
                         doctest::Contains("edge 0"), std::runtime_error);
    CHECK_THROWS(build_laplacian(g, std::vector<double>{std::nan("")}));
    CHECK_THROWS(build_laplacian(g, std::vector<double>{1.0, 2.0}));  // count mismatch
}

TEST_CASE("graph invariants are enforced") {
    AttributedGraph g = two_node_graph();
    g.edges[0].i = g.edges[0].j = 1;
    CHECK_THROWS_WITH_AS(validate_graph(g), doctest::Contains("self-loop"), std::runtime_error);

    g = two_node_graph();
    g.edges.push_back(g.edges[0]);
    CHECK_THROWS_WITH_AS(validate_graph(g), doctest::Contains("duplicate"), std::runtime_error);

    g = two_node_graph();
    g.edges[0].attr[0] = 0.0;
    CHECK_THROWS_WITH_AS(validate_graph(g), doctest::Contains("boundary"), std::runtime_error);

    g = two_node_graph();
    g.edges[0].attr[1] = std::numbers::pi;  // folds outside [-pi/2, pi/2)
    CHECK_THROWS_WITH_AS(validate_graph(g), doctest::Contains("angle"), std::runtime_error);
}

TEST_CASE("angle folding is orientation-free") {
    CHECK(fold_angle(0.0) == 0.0);
    CHECK(std::fabs(fold_angle(std::numbers::pi / 2.0) - (-std::numbers::pi / 2.0)) < 1e-15);
    CHECK(std::fabs(fold_angle(2.1) - (2.1 - std::numbers::pi)) < 1e-15);
    for (double a : {-1.2, 0.3, 1.1}) {
        CHECK(std::fabs(fold_angle(a + std::numbers::pi) - fold_angle(a)) < 1e-12);
        CHECK(fold_angle(a) >= -std::numbers::pi / 2.0);
        CHECK(fold_angle(a) < std::numbers::pi / 2.0);
    }
}

TEST_CASE("relabeling conjugates the laplacian and preserves the spectrum") {
    for (uint64_t seed : {11u, 12u, 13u}) {
        const AttributedGraph g = random_graph(10, 0.3, seed);
        const std::vector<double> w = random_weights(g.edges.size(), seed + 100);
        const std::vector<int> perm = random_permutation(10, seed + 200);

        const AttributedGraph pg = permute_graph(g, perm);
        std::vector<double> pw(w.size());
        // permuted graph keeps its edges in the original order
        for (size_t e = 0; e < w.size(); ++e) pw[e] = w[e];

        const WeightedLaplacian L = build_laplacian(g, w);
        const WeightedLaplacian PL = build_laplacian(pg, pw);
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j)
                CHECK(std::fabs(PL.m(perm[i], perm[j]) - L.m(i, j)) <= 1e-12);

        const Spectrum s = eigh(L);
        const Spectrum ps = eigh(PL);
        for (int k = 0; k < 10; ++k)
            CHECK(std::fabs(s.eigenvalues[k] - ps.eigenvalues[k]) <= 1e-10);
    }
}

TEST_CASE("eigenvalue sum equals trace equals twice the weight sum") {
    const AttributedGraph g = random_graph(16, 0.4, 77);
    const std::vector<double> w = random_weights(g.edges.size(), 78);
    const WeightedLaplacian L = build_laplacian(g, w);

    double wsum = 0.0;
    for (double x : w) wsum += x;
    double trace = 0.0;
    for (int i = 0; i < 16; ++i) trace += L.m(i, i);
    CHECK(rel_err(trace, 2.0 * wsum, 1e-12) < 1e-9);

    const Spectrum s = eigh(L);
    double lsum = 0.0;
    for (double x : s.eigenvalues) lsum += x;
    CHECK(rel_err(lsum, trace, 1e-12) < 1e-9);
}

TEST_CASE("laplacian invariants: row sums, sign pattern, psd") {
    const AttributedGraph g = random_graph(20, 0.3, 5);
    const std::vector<double> w = random_weights(g.edges.size(), 6);
    const WeightedLaplacian L = build_laplacian(g, w);
    double max_entry = 0.0;
    for (int i = 0; i < L.n; ++i)
        for (int j = 0; j < L.n; ++j) max_entry = std::max(max_entry, std::fabs(L.m(i, j)));
    for (int i = 0; i < L.n; ++i) {
        double row = 0.0;
        for (int j = 0; j < L.n; ++j) {
            row += L.m(i, j);
            if (i != j) CHECK(L.m(i, j) <= 0.0);
            CHECK(L.m(i, j) == L.m(j, i));
        }
        CHECK(std::fabs(row) <= 1e-12 * max_entry);
    }
    const Spectrum s = eigh(L);
    CHECK(s.eigenvalues.front() >= -1e-10 * s.eigenvalues.back());
}

TEST_CASE("stratified split hits the 17/3 protocol on 20 graphs") {
    Dataset d;
    for (int i = 0; i < 20; ++i) d.graphs.push_back(random_graph(6, 0.3, 1000 + i, i < 10 ? 0 : 1));

    const Dataset split = split_dataset(d, 0.85, 99);
    int train = 0;
    int per_class_train[2] = {0, 0};
    for (size_t i = 0; i < split.graphs.size(); ++i)
        if (split.split[i] == Split::Train) {
            ++train;
            ++per_class_train[split.graphs[i].label];
        }
    CHECK(train == 17);
    for (int c = 0; c < 2; ++c) {
        CHECK(per_class_train[c] >= 8);
        CHECK(per_class_train[c] <= 9);
    }

    // deterministic given the seed
    const Dataset again = split_dataset(d, 0.85, 99);
    CHECK(again.split == split.split);
    const Dataset other = split_dataset(d, 0.85, 100);
    CHECK(other.split != split.split);
}

TEST_CASE("single-class dataset still splits, unstratified") {
    Dataset d;
    for (int i = 0; i < 10; ++i) d.graphs.push_back(random_graph(5, 0.3, 2000 + i, 0));
    const Dataset split = split_dataset(d, 0.8, 1);
    int train = 0;
    for (Split s : split.split)
        if (s == Split::Train) ++train;
    CHECK(train == 8);
}

TEST_CASE("group-by-source keeps sources on one side") {
    Dataset d;
    for (int i = 0; i < 24; ++i) {
        AttributedGraph g = random_graph(5, 0.3, 3000 + i, i % 2);
        g.source_id = "img" + std::to_string(i / 4);  // 4 graphs per image
        d.graphs.push_back(std::move(g));
    }
    const Dataset split = split_dataset(d, 0.75, 5, true);
    std::map<std::string, std::set<Split>> sides;
    for (size_t i = 0; i < split.graphs.size(); ++i)
        sides[split.graphs[i].source_id].insert(split.split[i]);
    for (const auto& [source, side] : sides) CHECK(side.size() == 1);
}

TEST_CASE("dataset json round trip is exact") {
    Dataset d;
    for (int i = 0; i < 4; ++i) d.graphs.push_back(random_graph(7, 0.4, 4000 + i, i % 2));
    const std::string text = dataset_to_json(d, 42, "cafe");
    const Dataset back = dataset_from_json(text);
    REQUIRE(back.graphs.size() == d.graphs.size());
    for (size_t i = 0; i < d.graphs.size(); ++i) {
        CHECK(back.graphs[i].label == d.graphs[i].label);
        CHECK(back.graphs[i].source_id == d.graphs[i].source_id);
        REQUIRE(back.graphs[i].edges.size() == d.graphs[i].edges.size());
        for (size_t e = 0; e < d.graphs[i].edges.size(); ++e) {
            CHECK(back.graphs[i].edges[e].i == d.graphs[i].edges[e].i);
            CHECK(back.graphs[i].edges[e].j == d.graphs[i].edges[e].j);
            for (int c = 0; c < 3; ++c)
                CHECK(back.graphs[i].edges[e].attr[c] == d.graphs[i].edges[e].attr[c]);
        }
        for (int v = 0; v < d.graphs[i].n; ++v) {
            CHECK(back.graphs[i].positions[v].x == d.graphs[i].positions[v].x);
            CHECK(back.graphs[i].positions[v].y == d.graphs[i].positions[v].y);
        }
    }
}
