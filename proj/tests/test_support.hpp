#pragma once

// Shared helpers for the test suites: seeded graph generators, permutation
// tools and the finite-difference oracle used by every gradient check.

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "diff2dist/graph.hpp"
#include "diff2dist/rng.hpp"

namespace d2d::testing {

// Connected-ish random graph: a Hamiltonian path plus extra random edges,
// positions in a unit box, attributes in sane ranges.
inline AttributedGraph random_graph(int n, double extra_edge_prob, uint64_t seed, int label = 0) {
    Rng rng(seed);
    AttributedGraph g;
    g.n = n;
    g.label = label;
    g.source_id = "rand" + std::to_string(seed);
    for (int i = 0; i < n; ++i) g.positions.push_back({rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0)});
    const auto add_edge = [&](int i, int j) {
        Edge e;
        e.i = i;
        e.j = j;
        e.attr = {rng.uniform(0.5, 2.0), fold_angle(rng.uniform(-3.0, 3.0)), rng.uniform(0.5, 2.0)};
        g.edges.push_back(e);
    };
    for (int i = 0; i + 1 < n; ++i) add_edge(i, i + 1);
    for (int i = 0; i < n; ++i)
        for (int j = i + 2; j < n; ++j)
            if (rng.uniform() < extra_edge_prob) add_edge(i, j);
    return g;
}

inline std::vector<double> random_weights(size_t count, uint64_t seed, double lo = 0.1,
                                          double hi = 2.0) {
    Rng rng(seed);
    std::vector<double> w(count);
    for (double& x : w) x = rng.uniform(lo, hi);
    return w;
}

// node relabeling: node i of the input becomes node perm[i]
inline AttributedGraph permute_graph(const AttributedGraph& g, const std::vector<int>& perm) {
    AttributedGraph out;
    out.n = g.n;
    out.label = g.label;
    out.source_id = g.source_id;
    out.positions.resize(g.n);
    for (int i = 0; i < g.n; ++i) out.positions[perm[i]] = g.positions[i];
    for (const Edge& e : g.edges) {
        Edge pe = e;
        pe.i = std::min(perm[e.i], perm[e.j]);
        pe.j = std::max(perm[e.i], perm[e.j]);
        out.edges.push_back(pe);
    }
    return out;
}

inline std::vector<int> random_permutation(int n, uint64_t seed) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    rng.shuffle(perm);
    return perm;
}

inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// relative error with an absolute floor: values below the floor compare in
// absolute terms, everything else relatively
inline double rel_err(double a, double b, double floor_ = 1e-6) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor_});
}

}  // namespace d2d::testing
