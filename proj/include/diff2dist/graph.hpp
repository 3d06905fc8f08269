#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "diff2dist/matrix.hpp"

namespace d2d {

// One undirected edge, stored once with i < j. attr = (shared boundary
// length, angle from horizontal in [-pi/2, pi/2), edge length), all in the
// source image/simulation units.
struct Edge {
    int i = 0;
    int j = 0;
    std::array<double, 3> attr{};
};

struct AttributedGraph {
    int n = 64;
    std::vector<Vec2> positions;
    std::vector<Edge> edges;
    int label = 0;
    std::string source_id;
};

// Throws std::runtime_error naming the offending edge/field on violation.
void validate_graph(const AttributedGraph& g);

// Folds an arbitrary angle into [-pi/2, pi/2); an undirected edge's angle
// from horizontal is the same for either endpoint order.
double fold_angle(double theta);

// Symmetric, zero row sums, off-diagonal <= 0, PSD.
struct WeightedLaplacian {
    int n = 0;
    Matrix m;
};

// w carries one finite nonnegative weight per edge of g, in edge order.
WeightedLaplacian build_laplacian(const AttributedGraph& g, std::span<const double> w);

enum class Split : uint8_t { Train = 0, Validation = 1 };

struct Dataset {
    std::vector<AttributedGraph> graphs;
    std::vector<Split> split;   // empty until split_dataset has run

    int node_count() const { return graphs.empty() ? 0 : graphs.front().n; }
    bool has_split() const { return split.size() == graphs.size(); }
    std::vector<int> indices_of(Split s) const;
    std::vector<int> labels() const;
};

// All graphs must share one fixed node count.
void validate_dataset(const Dataset& d);

// Stratified by class label, largest-remainder apportionment of the train
// quota, deterministic per seed. Single-class input falls back to an
// unstratified split with a warning. group_by_source keeps all graphs with
// one source_id on the same side of the split.
Dataset split_dataset(const Dataset& d, double ratio, uint64_t seed,
                      bool group_by_source = false);

// Dataset file, one JSON document:
//   {"n": int, "graphs": [{"label": int, "source_id": str,
//     "positions": [[x, y], ...],
//     "edges": [{"i": int, "j": int, "attr": [b, theta, len]}]}]}
std::string dataset_to_json(const Dataset& d, uint64_t seed, const std::string& config_hash);
Dataset dataset_from_json(const std::string& text);

}  // namespace d2d
