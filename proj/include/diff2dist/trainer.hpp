#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "diff2dist/distance.hpp"
#include "diff2dist/edge_weights.hpp"
#include "diff2dist/graph.hpp"
#include "diff2dist/rng.hpp"

namespace d2d {

struct ContrastiveConfig {
    double rho_lower = 0.001;
    double rho_upper = 0.33;
    int epochs = 600;
    int batch_pairs = 256;
    int pairs_per_epoch = 0;     // 0: one batch per epoch
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    int t_count = 10;
    double sigma_init = 0.0;     // <= 0: from the mean training node distance
    bool squared_distance = false;
    bool mlp_identity_output = false;
    bool positive_exponent = false;
    int threads = 1;
};

// The four-method ladder. Each variant trains exactly its own parameter set:
//   1 nothing, 2 {t, beta}, 3 {t, beta, sigma}, 4 {t, beta, mlp}.
enum class Method {
    UnweightedGdd = 1,
    GaussianFixedSigma = 2,
    GaussianTuned = 3,
    AnnWeights = 4,
};

Method method_from_int(int m);

struct LossGrad {
    double loss = 0.0;
    double grad = 0.0;   // dloss/dd
};

// L = 1/2 [ y max(0, d - rho_lower)^2 + (1-y) max(0, rho_upper - d)^2 ]
LossGrad contrastive_loss(double d, bool same_label, const ContrastiveConfig& cfg);

struct PairSample {
    int a = 0;
    int b = 0;
    bool same = false;
};

// k unordered pairs, half positive / half negative when both exist;
// repeated calls advance the generator state.
std::vector<PairSample> sample_pair_batch(std::span<const int> train_indices,
                                          std::span<const int> labels, int k, Rng& rng);

struct ModelState {
    Method method = Method::UnweightedGdd;
    DistanceParams dist;
    EdgeWeightModel edge;
};

// Flat parameter vector in a fixed order (t_raw, beta_logits, then sigma or
// the MLP depending on method); the single code path that Adam, checkpoints
// and finite differences all share.
size_t trainable_count(const ModelState& s);
std::vector<double> flatten_params(const ModelState& s);
void unflatten_params(ModelState& s, std::span<const double> v);

struct AdamState {
    std::vector<double> m, v;
    int step = 0;

    explicit AdamState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Standard Adam with bias correction; epsilon added after the square root.
void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& st,
               const ContrastiveConfig& cfg);

struct BatchEval {
    double mean_loss = 0.0;
    std::vector<double> grad;   // aligned with flatten_params; empty if not requested
};

// Mean contrastive loss over the batch and its gradient through the full
// chain (distance -> spectra -> edge weights). Pairs are reduced in
// canonical (a, b) order, so the result does not depend on batch order or
// thread count.
BatchEval batch_loss_and_grad(const Dataset& d, std::span<const PairSample> batch,
                              const ModelState& s, const ContrastiveConfig& cfg,
                              bool want_grad);

ModelState init_state(const Dataset& d, Method method, const ContrastiveConfig& cfg);

struct TrainResult {
    ModelState state;
    std::vector<double> epoch_mean_loss;
};

TrainResult train(const Dataset& d, Method method, const ContrastiveConfig& cfg);

std::string checkpoint_to_json(const ModelState& s, uint64_t seed,
                               const std::string& config_hash);
ModelState checkpoint_from_json(const std::string& text);

std::string loss_history_to_csv(std::span<const double> history, uint64_t seed,
                                const std::string& config_hash);

}  // namespace d2d
