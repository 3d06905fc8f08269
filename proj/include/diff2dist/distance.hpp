#pragma once

#include <span>
#include <string>
#include <vector>

#include "diff2dist/edge_weights.hpp"
#include "diff2dist/graph.hpp"
#include "diff2dist/spectral.hpp"

namespace d2d {

std::vector<double> softmax(std::span<const double> logits);

// Trainable state of the spectral distance: p diffusion times kept inside
// [t_min, t_max] by a logistic reparameterization, and per-eigenvalue
// weights beta = softmax(beta_logits). negative_exponent selects the bounded
// e^{-t lambda} map; the positive form is available behind the flag and is
// guarded against overflow instead of saturating silently.
struct DistanceParams {
    std::vector<double> t_raw;
    std::vector<double> beta_logits;
    double t_min = 1e-3;
    double t_max = 10.0;
    bool negative_exponent = true;

    std::vector<double> times() const;
    std::vector<double> beta() const;
    double time_of(double raw) const;
    double dtime_draw(double raw) const;

    // p times log-spaced over [0.01, 3.16], uniform beta over n eigenvalues
    static DistanceParams init(int n, int p = 10);
};

// Everything the backward pass needs, captured at the achieving t.
struct PairContext {
    int argmax_t = 0;
    double t = 0.0;
    double d = 0.0;
    double dt_draw = 0.0;
    bool negative_exponent = true;
    std::vector<double> beta;
    std::vector<double> e1, e2;      // exponential map values at the argmax t
    std::vector<double> lam1, lam2;
};

struct PairResult {
    double distance = 0.0;
    int argmax_t = 0;
    PairContext ctx;
};

// d = max_m sqrt(sum_j beta_j (E(t_m lam1_j) - E(t_m lam2_j))^2), ties going
// to the smallest t index so subgradients are deterministic.
PairResult gdd_pair(const Spectrum& s1, const Spectrum& s2, const DistanceParams& params);

struct PairGrads {
    std::vector<double> lam1, lam2;
    std::vector<double> beta_logits;
    std::vector<double> t_raw;   // only the argmax entry is nonzero
};

// Subgradient of the max: gradients flow only through the achieving t.
// d == 0 yields all-zero gradients.
PairGrads gdd_pair_backward(const PairContext& ctx, const DistanceParams& params, double dbar);

struct DistanceMatrix {
    Matrix values;                 // symmetric, zero diagonal
    std::vector<int> labels;
    std::vector<Split> split;
    std::vector<std::string> ids;  // dataset indices as strings
};

// Spectra are computed once per graph and shared; unordered pairs may be
// evaluated concurrently, each writing its own slot, so results are
// independent of evaluation order.
DistanceMatrix distance_matrix(const Dataset& d, const EdgeWeightModel& f,
                               const DistanceParams& params, int threads = 1);

std::string distance_matrix_to_csv(const DistanceMatrix& dm, uint64_t seed,
                                   const std::string& config_hash);
std::string labels_to_csv(const DistanceMatrix& dm, uint64_t seed,
                          const std::string& config_hash);

}  // namespace d2d
