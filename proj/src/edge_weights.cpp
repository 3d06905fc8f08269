#include "diff2dist/edge_weights.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "diff2dist/rng.hpp"

namespace d2d {

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double inv_softplus(double y) {
    if (!(y > 0.0)) throw std::runtime_error("inv_softplus requires a positive argument");
    if (y > 30.0) return y;  // softplus(y) == y to double precision
    return std::log(std::expm1(y));
}

double silu(double x) { return x * logistic(x); }

double silu_deriv(double x) {
    const double s = logistic(x);
    return s * (1.0 + x * (1.0 - s));
}

GaussianKernel GaussianKernel::with_sigma(double sigma, bool squared) {
    GaussianKernel k;
    k.sigma_raw = inv_softplus(sigma);
    k.squared_distance = squared;
    return k;
}

MlpNet MlpNet::seeded(uint64_t seed) {
    MlpNet net;
    Rng rng(mix_seed(seed, 23));
    int fan_in = kInputSize;
    for (int out : kLayerSizes) {
        const double bound = std::sqrt(6.0 / (fan_in + out));
        Matrix w(out, fan_in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(out, 0.0);
        fan_in = out;
    }
    return net;
}

int MlpNet::parameter_count() const {
    int total = 0;
    for (size_t l = 0; l < weights.size(); ++l)
        total += weights[l].rows() * weights[l].cols() + static_cast<int>(biases[l].size());
    return total;
}

namespace {

void check_mlp_shapes(const MlpNet& net) {
    if (net.weights.size() != MlpNet::kLayerSizes.size() ||
        net.biases.size() != MlpNet::kLayerSizes.size())
        throw std::runtime_error("mlp: expected 7 layers");
    int fan_in = MlpNet::kInputSize;
    for (size_t l = 0; l < net.weights.size(); ++l) {
        const int out = MlpNet::kLayerSizes[l];
        if (net.weights[l].rows() != out || net.weights[l].cols() != fan_in ||
            static_cast<int>(net.biases[l].size()) != out)
            throw std::runtime_error("mlp: layer " + std::to_string(l) + " has wrong shape");
        fan_in = out;
    }
}

int total_units() {
    return std::accumulate(MlpNet::kLayerSizes.begin(), MlpNet::kLayerSizes.end(), 0);
}

}  // namespace

EdgeWeightCache weigh_edges(const EdgeWeightModel& f, const AttributedGraph& g) {
    EdgeWeightCache cache;
    cache.kind = f.kind;
    const size_t m = g.edges.size();
    cache.weights.resize(m);

    switch (f.kind) {
        case WeightKind::Unit: {
            std::fill(cache.weights.begin(), cache.weights.end(), 1.0);
            break;
        }
        case WeightKind::Gaussian: {
            const double sigma = f.gauss.sigma();
            const double denom = 2.0 * sigma * sigma;
            cache.node_dist.resize(m);
            for (size_t e = 0; e < m; ++e) {
                const Edge& ed = g.edges[e];
                double d = dist2d(g.positions[ed.i], g.positions[ed.j]);
                if (!std::isfinite(d))
                    throw std::runtime_error("edge " + std::to_string(e) +
                                             ": non-finite node distance");
                if (f.gauss.squared_distance) d *= d;
                cache.node_dist[e] = d;
                cache.weights[e] = std::exp(-d / denom);
            }
            break;
        }
        case WeightKind::Mlp: {
            check_mlp_shapes(f.mlp);
            cache.preacts.resize(m);
            cache.inputs.resize(m);
            const int zlen = total_units();
            std::vector<double> act;
            for (size_t e = 0; e < m; ++e) {
                const Edge& ed = g.edges[e];
                std::array<double, 3> x;
                for (int c = 0; c < 3; ++c) {
                    if (!std::isfinite(ed.attr[c]))
                        throw std::runtime_error("edge " + std::to_string(e) +
                                                 ": non-finite attribute " + std::to_string(c));
                    x[c] = (ed.attr[c] - f.mlp.attr_mean[c]) / f.mlp.attr_std[c];
                }
                cache.inputs[e] = x;
                std::vector<double>& z = cache.preacts[e];
                z.resize(zlen);
                act.assign(x.begin(), x.end());
                int zoff = 0;
                for (size_t l = 0; l < f.mlp.weights.size(); ++l) {
                    const Matrix& w = f.mlp.weights[l];
                    const int out = w.rows();
                    const int in = w.cols();
                    for (int r = 0; r < out; ++r) {
                        double acc = f.mlp.biases[l][r];
                        for (int c = 0; c < in; ++c) acc += w(r, c) * act[c];
                        z[zoff + r] = acc;
                    }
                    const bool last = (l + 1 == f.mlp.weights.size());
                    act.resize(out);
                    for (int r = 0; r < out; ++r)
                        act[r] = last ? z[zoff + r] : silu(z[zoff + r]);
                    zoff += out;
                }
                const double y = act[0];
                cache.weights[e] = f.mlp.softplus_output ? softplus(y) : y;
            }
            break;
        }
    }
    return cache;
}

EdgeWeightGrads zero_grads_like(const EdgeWeightModel& f) {
    EdgeWeightGrads g;
    if (f.kind == WeightKind::Mlp) {
        for (size_t l = 0; l < f.mlp.weights.size(); ++l) {
            g.weights.emplace_back(f.mlp.weights[l].rows(), f.mlp.weights[l].cols());
            g.biases.emplace_back(f.mlp.biases[l].size(), 0.0);
        }
    }
    return g;
}

void weigh_edges_backward(const EdgeWeightModel& f, const AttributedGraph& g,
                          const EdgeWeightCache& cache, std::span<const double> gbar,
                          EdgeWeightGrads& grads) {
    const size_t m = g.edges.size();
    if (cache.kind != f.kind || cache.weights.size() != m)
        throw std::runtime_error("weigh_edges_backward: cache does not match this model/graph");
    if (gbar.size() != m)
        throw std::runtime_error("weigh_edges_backward: expected " + std::to_string(m) +
                                 " weight gradients, got " + std::to_string(gbar.size()));

    switch (f.kind) {
        case WeightKind::Unit:
            break;  // nothing trainable
        case WeightKind::Gaussian: {
            if (cache.node_dist.size() != m)
                throw std::runtime_error("weigh_edges_backward: missing cached distances");
            const double sigma = f.gauss.sigma();
            double dsigma = 0.0;
            // dw/dsigma = w * d / sigma^3 (d already squared in that mode)
            for (size_t e = 0; e < m; ++e)
                dsigma += gbar[e] * cache.weights[e] * cache.node_dist[e] / (sigma * sigma * sigma);
            grads.sigma_raw += dsigma * logistic(f.gauss.sigma_raw);
            break;
        }
        case WeightKind::Mlp: {
            if (cache.preacts.size() != m || cache.inputs.size() != m)
                throw std::runtime_error("weigh_edges_backward: missing cached activations");
            check_mlp_shapes(f.mlp);
            if (grads.weights.size() != f.mlp.weights.size())
                throw std::runtime_error("weigh_edges_backward: gradient shapes not initialized");
            const int layers = static_cast<int>(f.mlp.weights.size());
            std::vector<int> zoffs(layers);
            int off = 0;
            for (int l = 0; l < layers; ++l) {
                zoffs[l] = off;
                off += MlpNet::kLayerSizes[l];
            }
            std::vector<double> delta, prev_delta, act;
            for (size_t e = 0; e < m; ++e) {
                if (gbar[e] == 0.0) continue;
                const std::vector<double>& z = cache.preacts[e];
                const double y = z[zoffs[layers - 1]];
                double dy = gbar[e];
                if (f.mlp.softplus_output) dy *= logistic(y);
                delta.assign(1, dy);
                for (int l = layers - 1; l >= 0; --l) {
                    const Matrix& w = f.mlp.weights[l];
                    const int out = w.rows();
                    const int in = w.cols();
                    // activation feeding layer l
                    if (l == 0) {
                        act.assign(cache.inputs[e].begin(), cache.inputs[e].end());
                    } else {
                        act.resize(in);
                        for (int c = 0; c < in; ++c) act[c] = silu(z[zoffs[l - 1] + c]);
                    }
                    Matrix& gw = grads.weights[l];
                    std::vector<double>& gb = grads.biases[l];
                    for (int r = 0; r < out; ++r) {
                        const double dr = delta[r];
                        if (dr == 0.0) continue;
                        gb[r] += dr;
                        for (int c = 0; c < in; ++c) gw(r, c) += dr * act[c];
                    }
                    if (l == 0) break;
                    prev_delta.assign(in, 0.0);
                    for (int r = 0; r < out; ++r) {
                        const double dr = delta[r];
                        if (dr == 0.0) continue;
                        for (int c = 0; c < in; ++c) prev_delta[c] += w(r, c) * dr;
                    }
                    for (int c = 0; c < in; ++c)
                        prev_delta[c] *= silu_deriv(z[zoffs[l - 1] + c]);
                    delta.swap(prev_delta);
                }
            }
            break;
        }
    }
}

}  // namespace d2d
