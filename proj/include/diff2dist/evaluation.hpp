#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diff2dist/distance.hpp"
#include "diff2dist/matrix.hpp"

namespace d2d {

// Validation accuracy of a majority-vote kNN classifier over the learned
// distances. Neighbors are training points only; distance ties break toward
// the smaller training index, vote ties toward the smaller label id.
double knn_classify(const DistanceMatrix& dm, int k);

struct KnnReport {
    std::vector<int> ks;
    std::vector<double> accuracies;  // aligned with ks
    int best_k = 0;
    double best_accuracy = 0.0;
};

// Every integer K in [k_min, k_max] (clamped to the training-set size);
// set literal_pair to evaluate only the two endpoints instead.
KnnReport knn_sweep(const DistanceMatrix& dm, int k_min = 3, int k_max = 50,
                    bool literal_pair = false);

struct Embedding2D {
    std::vector<Vec2> coords;   // aligned with DistanceMatrix indices
};

// Symmetric kNN graph -> all-pairs geodesics -> classical MDS, top two
// eigenpairs. A disconnected neighbor graph is bridged by the smallest
// inter-component distance edge (with a warning) rather than erroring.
Embedding2D isomap_embed(const DistanceMatrix& dm, int neighbors = 15, int threads = 1);

std::string knn_report_to_csv(const KnnReport& r, uint64_t seed, const std::string& config_hash);
std::string embedding_to_csv(const Embedding2D& emb, const DistanceMatrix& dm, uint64_t seed,
                             const std::string& config_hash);

}  // namespace d2d
