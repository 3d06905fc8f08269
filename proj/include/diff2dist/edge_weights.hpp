#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "diff2dist/graph.hpp"
#include "diff2dist/matrix.hpp"

namespace d2d {

double logistic(double x);
double softplus(double x);
double inv_softplus(double y);
double silu(double x);
double silu_deriv(double x);

enum class WeightKind { Unit, Gaussian, Mlp };

// w_ij = exp(-d_ij / (2 sigma^2)) with d_ij the Euclidean node distance.
// squared_distance switches the exponent to the conventional d_ij^2 form.
// sigma is kept positive through sigma = softplus(sigma_raw).
struct GaussianKernel {
    double sigma_raw = 0.0;
    bool squared_distance = false;

    double sigma() const { return softplus(sigma_raw); }
    static GaussianKernel with_sigma(double sigma, bool squared = false);
};

// Seven dense layers with output sizes {3,128,32,32,32,32,1}, SiLU after
// layers 1-6 and identity after layer 7. The per-edge input is the z-scored
// 3-attribute vector; the scalar output passes through softplus so the edge
// weight stays nonnegative (identity available as the literal mode, in which
// case Laplacian PSD is no longer guaranteed).
struct MlpNet {
    static constexpr int kInputSize = 3;
    static constexpr std::array<int, 7> kLayerSizes{3, 128, 32, 32, 32, 32, 1};

    std::vector<Matrix> weights;              // [layer], out x in
    std::vector<std::vector<double>> biases;  // [layer]
    std::array<double, 3> attr_mean{0.0, 0.0, 0.0};
    std::array<double, 3> attr_std{1.0, 1.0, 1.0};
    bool softplus_output = true;

    // uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases
    static MlpNet seeded(uint64_t seed);
    int parameter_count() const;
};

struct EdgeWeightModel {
    WeightKind kind = WeightKind::Unit;
    GaussianKernel gauss;
    MlpNet mlp;
};

// Forward result; everything the backward pass needs is cached here.
struct EdgeWeightCache {
    WeightKind kind = WeightKind::Unit;
    std::vector<double> weights;               // one per edge
    std::vector<double> node_dist;             // Gaussian: d_ij (or d_ij^2)
    std::vector<std::vector<double>> preacts;  // Mlp: per edge, z of all layers concatenated
    std::vector<std::array<double, 3>> inputs; // Mlp: standardized attributes
};

EdgeWeightCache weigh_edges(const EdgeWeightModel& f, const AttributedGraph& g);

struct EdgeWeightGrads {
    double sigma_raw = 0.0;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
};

EdgeWeightGrads zero_grads_like(const EdgeWeightModel& f);

// gbar holds dLoss/dw per edge; parameter gradients accumulate into grads.
// Requires the cache produced by weigh_edges for the same model and graph.
void weigh_edges_backward(const EdgeWeightModel& f, const AttributedGraph& g,
                          const EdgeWeightCache& cache, std::span<const double> gbar,
                          EdgeWeightGrads& grads);

}  // namespace d2d
