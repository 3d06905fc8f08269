#include "diff2dist/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "diff2dist/io.hpp"
#include "diff2dist/parallel.hpp"
#include "diff2dist/spectral.hpp"

namespace d2d {

Method method_from_int(int m) {
    if (m < 1 || m > 4) throw std::runtime_error("method must be 1, 2, 3 or 4");
    return static_cast<Method>(m);
}

LossGrad contrastive_loss(double d, bool same_label, const ContrastiveConfig& cfg) {
    LossGrad out;
    if (same_label) {
        const double excess = std::max(0.0, d - cfg.rho_lower);
        out.loss = 0.5 * excess * excess;
        out.grad = excess;
    } else {
        const double shortfall = std::max(0.0, cfg.rho_upper - d);
        out.loss = 0.5 * shortfall * shortfall;
        out.grad = -shortfall;
    }
    return out;
}

std::vector<PairSample> sample_pair_batch(std::span<const int> train_indices,
                                          std::span<const int> labels, int k, Rng& rng) {
    if (train_indices.size() < 2)
        throw std::runtime_error("sample_pair_batch: need at least 2 training graphs");
    if (k < 1) throw std::runtime_error("sample_pair_batch: need k >= 1");

    // group training indices by label
    std::map<int, std::vector<int>> by_class;
    for (int i : train_indices) by_class[labels[i]].push_back(i);

    bool has_positive = false;
    for (const auto& [label, members] : by_class)
        if (members.size() >= 2) has_positive = true;
    const bool has_negative = by_class.size() >= 2;

    if (!has_negative)
        std::cerr << "warning: no negative pairs available, batch is all-positive\n";
    if (!has_positive)
        std::cerr << "warning: no positive pairs available, batch is all-negative\n";

    std::vector<std::vector<int>> pos_classes;
    for (const auto& [label, members] : by_class)
        if (members.size() >= 2) pos_classes.push_back(members);

    const auto draw_positive = [&]() -> PairSample {
        const auto& cls = pos_classes[rng.below(pos_classes.size())];
        const int a = static_cast<int>(rng.below(cls.size()));
        int b = static_cast<int>(rng.below(cls.size() - 1));
        if (b >= a) ++b;
        PairSample p{std::min(cls[a], cls[b]), std::max(cls[a], cls[b]), true};
        return p;
    };
    const auto draw_negative = [&]() -> PairSample {
        // rejection on labels keeps the two draws uniform over the train set
        while (true) {
            const int a = train_indices[rng.below(train_indices.size())];
            const int b = train_indices[rng.below(train_indices.size())];
            if (a != b && labels[a] != labels[b])
                return PairSample{std::min(a, b), std::max(a, b), false};
        }
    };

    std::vector<PairSample> out;
    out.reserve(k);
    const int positives = !has_negative ? k : (!has_positive ? 0 : k / 2);
    for (int i = 0; i < positives; ++i) out.push_back(draw_positive());
    for (int i = positives; i < k; ++i) out.push_back(draw_negative());
    return out;
}

size_t trainable_count(const ModelState& s) {
    switch (s.method) {
        case Method::UnweightedGdd:
            return 0;
        case Method::GaussianFixedSigma:
            return s.dist.t_raw.size() + s.dist.beta_logits.size();
        case Method::GaussianTuned:
            return s.dist.t_raw.size() + s.dist.beta_logits.size() + 1;
        case Method::AnnWeights:
            return s.dist.t_raw.size() + s.dist.beta_logits.size() +
                   static_cast<size_t>(s.edge.mlp.parameter_count());
    }
    return 0;
}

std::vector<double> flatten_params(const ModelState& s) {
    std::vector<double> out;
    out.reserve(trainable_count(s));
    if (s.method == Method::UnweightedGdd) return out;
    out.insert(out.end(), s.dist.t_raw.begin(), s.dist.t_raw.end());
    out.insert(out.end(), s.dist.beta_logits.begin(), s.dist.beta_logits.end());
    if (s.method == Method::GaussianTuned) out.push_back(s.edge.gauss.sigma_raw);
    if (s.method == Method::AnnWeights) {
        for (size_t l = 0; l < s.edge.mlp.weights.size(); ++l) {
            const Matrix& w = s.edge.mlp.weights[l];
            out.insert(out.end(), w.data(), w.data() + w.rows() * w.cols());
            out.insert(out.end(), s.edge.mlp.biases[l].begin(), s.edge.mlp.biases[l].end());
        }
    }
    return out;
}

void unflatten_params(ModelState& s, std::span<const double> v) {
    if (v.size() != trainable_count(s))
        throw std::runtime_error("unflatten_params: expected " +
                                 std::to_string(trainable_count(s)) + " values, got " +
                                 std::to_string(v.size()));
    if (s.method == Method::UnweightedGdd) return;
    size_t at = 0;
    for (double& x : s.dist.t_raw) x = v[at++];
    for (double& x : s.dist.beta_logits) x = v[at++];
    if (s.method == Method::GaussianTuned) s.edge.gauss.sigma_raw = v[at++];
    if (s.method == Method::AnnWeights) {
        for (size_t l = 0; l < s.edge.mlp.weights.size(); ++l) {
            Matrix& w = s.edge.mlp.weights[l];
            for (int i = 0; i < w.rows() * w.cols(); ++i) w.data()[i] = v[at++];
            for (double& b : s.edge.mlp.biases[l]) b = v[at++];
        }
    }
}

void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& st,
               const ContrastiveConfig& cfg) {
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw std::runtime_error("adam_step: parameter/gradient/state size mismatch");
    ++st.step;
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, st.step);
    const double corr2 = 1.0 - std::pow(b2, st.step);
    for (size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        st.m[i] = b1 * st.m[i] + (1.0 - b1) * g;
        st.v[i] = b2 * st.v[i] + (1.0 - b2) * g * g;
        const double mhat = st.m[i] / corr1;
        const double vhat = st.v[i] / corr2;
        params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
}

namespace {

// gradient of the loss w.r.t. one edge weight, given G = dLoss/dL:
// L(i,j) = L(j,i) = -w, L(i,i) += w, L(j,j) += w
double edge_weight_grad(const Matrix& G, int i, int j) {
    return G(i, i) + G(j, j) - 2.0 * G(i, j);
}

struct GraphForward {
    EdgeWeightCache cache;
    Spectrum spectrum;
};

}  // namespace

BatchEval batch_loss_and_grad(const Dataset& d, std::span<const PairSample> batch,
                              const ModelState& s, const ContrastiveConfig& cfg,
                              bool want_grad) {
    if (batch.empty()) throw std::runtime_error("batch_loss_and_grad: empty batch");

    // canonical processing order: sums come out identical for any
    // permutation of the incoming batch
    std::vector<PairSample> pairs(batch.begin(), batch.end());
    std::stable_sort(pairs.begin(), pairs.end(), [](const PairSample& x, const PairSample& y) {
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });

    // unique graphs appearing in the batch
    std::vector<int> gidx;
    for (const auto& p : pairs) {
        gidx.push_back(p.a);
        gidx.push_back(p.b);
    }
    std::sort(gidx.begin(), gidx.end());
    gidx.erase(std::unique(gidx.begin(), gidx.end()), gidx.end());
    std::map<int, int> slot;
    for (size_t i = 0; i < gidx.size(); ++i) slot[gidx[i]] = static_cast<int>(i);

    const int ng = static_cast<int>(gidx.size());
    std::vector<GraphForward> fwd(ng);
    parallel_for(ng, cfg.threads, [&](int i) {
        const AttributedGraph& g = d.graphs[gidx[i]];
        fwd[i].cache = weigh_edges(s.edge, g);
        fwd[i].spectrum = eigh(build_laplacian(g, fwd[i].cache.weights));
    });

    const int np = static_cast<int>(pairs.size());
    const double inv_np = 1.0 / np;
    std::vector<double> pair_loss(np);
    std::vector<PairGrads> pair_grads(want_grad ? np : 0);
    parallel_for(np, cfg.threads, [&](int k) {
        const PairSample& p = pairs[k];
        const PairResult r = gdd_pair(fwd[slot.at(p.a)].spectrum, fwd[slot.at(p.b)].spectrum,
                                      s.dist);
        const LossGrad lg = contrastive_loss(r.distance, p.same, cfg);
        if (!std::isfinite(lg.loss))
            throw std::runtime_error("non-finite loss at pair (" + std::to_string(p.a) + "," +
                                     std::to_string(p.b) + ")");
        pair_loss[k] = lg.loss;
        if (want_grad)
            pair_grads[k] = gdd_pair_backward(r.ctx, s.dist, lg.grad * inv_np);
    });

    BatchEval out;
    double total = 0.0;
    for (int k = 0; k < np; ++k) total += pair_loss[k];
    out.mean_loss = total * inv_np;
    if (!want_grad) return out;

    const size_t n = static_cast<size_t>(d.node_count());
    std::vector<double> t_grad(s.dist.t_raw.size(), 0.0);
    std::vector<double> beta_grad(s.dist.beta_logits.size(), 0.0);
    std::vector<std::vector<double>> lam_grad(ng, std::vector<double>(n, 0.0));
    for (int k = 0; k < np; ++k) {
        const PairSample& p = pairs[k];
        const PairGrads& pg = pair_grads[k];
        for (size_t i = 0; i < t_grad.size(); ++i) t_grad[i] += pg.t_raw[i];
        for (size_t i = 0; i < beta_grad.size(); ++i) beta_grad[i] += pg.beta_logits[i];
        std::vector<double>& la = lam_grad[slot.at(p.a)];
        std::vector<double>& lb = lam_grad[slot.at(p.b)];
        for (size_t i = 0; i < n; ++i) {
            la[i] += pg.lam1[i];
            lb[i] += pg.lam2[i];
        }
    }

    // per-graph backward: eigenvalue grads -> Laplacian -> edge weights -> parameters
    std::vector<EdgeWeightGrads> per_graph(ng);
    parallel_for(ng, cfg.threads, [&](int i) {
        per_graph[i] = zero_grads_like(s.edge);
        if (s.method == Method::UnweightedGdd || s.method == Method::GaussianFixedSigma)
            return;  // no edge-function parameters to train
        bool any = false;
        for (double x : lam_grad[i])
            if (x != 0.0) any = true;
        if (!any) return;
        const AttributedGraph& g = d.graphs[gidx[i]];
        const Matrix G = loss_grad_wrt_laplacian(fwd[i].spectrum, lam_grad[i]);
        std::vector<double> gbar(g.edges.size());
        for (size_t e = 0; e < g.edges.size(); ++e)
            gbar[e] = edge_weight_grad(G, g.edges[e].i, g.edges[e].j);
        weigh_edges_backward(s.edge, g, fwd[i].cache, gbar, per_graph[i]);
    });

    ModelState grads_holder = s;  // reuse the flatten layout for the gradient vector
    grads_holder.dist.t_raw = t_grad;
    grads_holder.dist.beta_logits = beta_grad;
    if (s.method == Method::GaussianTuned) {
        double sg = 0.0;
        for (int i = 0; i < ng; ++i) sg += per_graph[i].sigma_raw;
        grads_holder.edge.gauss.sigma_raw = sg;
    }
    if (s.method == Method::AnnWeights) {
        for (size_t l = 0; l < grads_holder.edge.mlp.weights.size(); ++l) {
            Matrix& w = grads_holder.edge.mlp.weights[l];
            std::fill(w.data(), w.data() + w.rows() * w.cols(), 0.0);
            std::fill(grads_holder.edge.mlp.biases[l].begin(),
                      grads_holder.edge.mlp.biases[l].end(), 0.0);
        }
        for (int i = 0; i < ng; ++i) {
            if (per_graph[i].weights.empty()) continue;
            for (size_t l = 0; l < grads_holder.edge.mlp.weights.size(); ++l) {
                Matrix& w = grads_holder.edge.mlp.weights[l];
                const Matrix& pw = per_graph[i].weights[l];
                for (int x = 0; x < w.rows() * w.cols(); ++x) w.data()[x] += pw.data()[x];
                for (size_t x = 0; x < grads_holder.edge.mlp.biases[l].size(); ++x)
                    grads_holder.edge.mlp.biases[l][x] += per_graph[i].biases[l][x];
            }
        }
    }
    out.grad = flatten_params(grads_holder);
    for (double g : out.grad)
        if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient in batch");
    return out;
}

namespace {

// mean node distance over training-set edges, the default Gaussian scale
double mean_train_metric(const Dataset& d, bool squared) {
    double sum = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < d.graphs.size(); ++i) {
        if (d.split[i] != Split::Train) continue;
        const AttributedGraph& g = d.graphs[i];
        for (const Edge& e : g.edges) {
            double dist = dist2d(g.positions[e.i], g.positions[e.j]);
            if (squared) dist *= dist;
            sum += dist;
            ++count;
        }
    }
    if (count == 0) return 1.0;
    return sum / static_cast<double>(count);
}

void standardize_from_train(MlpNet& net, const Dataset& d) {
    std::array<double, 3> sum{0, 0, 0}, sq{0, 0, 0};
    size_t count = 0;
    for (size_t i = 0; i < d.graphs.size(); ++i) {
        if (d.split[i] != Split::Train) continue;
        for (const Edge& e : d.graphs[i].edges) {
            for (int c = 0; c < 3; ++c) {
                sum[c] += e.attr[c];
                sq[c] += e.attr[c] * e.attr[c];
            }
            ++count;
        }
    }
    if (count == 0) return;
    for (int c = 0; c < 3; ++c) {
        net.attr_mean[c] = sum[c] / count;
        const double var = std::max(0.0, sq[c] / count - net.attr_mean[c] * net.attr_mean[c]);
        net.attr_std[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
}

}  // namespace

ModelState init_state(const Dataset& d, Method method, const ContrastiveConfig& cfg) {
    validate_dataset(d);
    if (!d.has_split()) throw std::runtime_error("init_state: dataset has no split yet");
    ModelState s;
    s.method = method;
    s.dist = DistanceParams::init(d.node_count(), cfg.t_count);
    s.dist.negative_exponent = !cfg.positive_exponent;
    switch (method) {
        case Method::UnweightedGdd:
            s.edge.kind = WeightKind::Unit;
            break;
        case Method::GaussianFixedSigma:
        case Method::GaussianTuned: {
            s.edge.kind = WeightKind::Gaussian;
            double sigma = cfg.sigma_init;
            if (!(sigma > 0.0))
                sigma = std::sqrt(std::max(1e-12, mean_train_metric(d, cfg.squared_distance) / 2.0));
            s.edge.gauss = GaussianKernel::with_sigma(sigma, cfg.squared_distance);
            break;
        }
        case Method::AnnWeights: {
            s.edge.kind = WeightKind::Mlp;
            s.edge.mlp = MlpNet::seeded(cfg.seed);
            s.edge.mlp.softplus_output = !cfg.mlp_identity_output;
            standardize_from_train(s.edge.mlp, d);
            break;
        }
    }
    return s;
}

TrainResult train(const Dataset& d, Method method, const ContrastiveConfig& cfg) {
    TrainResult result;
    result.state = init_state(d, method, cfg);
    if (method == Method::UnweightedGdd) return result;  // nothing trainable

    const std::vector<int> train_idx = d.indices_of(Split::Train);
    const std::vector<int> labels = d.labels();
    if (train_idx.size() < 2) throw std::runtime_error("train: need at least 2 training graphs");

    std::vector<double> params = flatten_params(result.state);
    AdamState adam(params.size());
    Rng rng(mix_seed(cfg.seed, 101));

    const int steps_per_epoch =
        std::max(1, (std::max(cfg.pairs_per_epoch, 1) + cfg.batch_pairs - 1) / cfg.batch_pairs);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            const std::vector<PairSample> batch =
                sample_pair_batch(train_idx, labels, cfg.batch_pairs, rng);
            BatchEval ev;
            try {
                ev = batch_loss_and_grad(d, batch, result.state, cfg, true);
            } catch (const std::exception& e) {
                throw std::runtime_error("training aborted at epoch " + std::to_string(epoch) +
                                         " step " + std::to_string(step) + ": " + e.what());
            }
            adam_step(params, ev.grad, adam, cfg);
            unflatten_params(result.state, params);
            epoch_loss += ev.mean_loss;
        }
        result.epoch_mean_loss.push_back(epoch_loss / steps_per_epoch);
    }
    return result;
}

std::string checkpoint_to_json(const ModelState& s, uint64_t seed,
                               const std::string& config_hash) {
    nlohmann::json j;
    j["version"] = kToolVersion;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["method"] = static_cast<int>(s.method);
    j["t_raw"] = s.dist.t_raw;
    j["t_min"] = s.dist.t_min;
    j["t_max"] = s.dist.t_max;
    j["beta_logits"] = s.dist.beta_logits;
    j["exponent"] = s.dist.negative_exponent ? "negative" : "positive";
    if (s.edge.kind == WeightKind::Gaussian) {
        j["gaussian"] = {{"sigma_raw", s.edge.gauss.sigma_raw},
                         {"squared_distance", s.edge.gauss.squared_distance}};
    }
    if (s.edge.kind == WeightKind::Mlp) {
        nlohmann::json m;
        m["layer_sizes"] = MlpNet::kLayerSizes;
        m["input_size"] = MlpNet::kInputSize;
        m["attr_mean"] = s.edge.mlp.attr_mean;
        m["attr_std"] = s.edge.mlp.attr_std;
        m["output"] = s.edge.mlp.softplus_output ? "softplus" : "identity";
        nlohmann::json weights = nlohmann::json::array();
        nlohmann::json biases = nlohmann::json::array();
        for (size_t l = 0; l < s.edge.mlp.weights.size(); ++l) {
            const Matrix& w = s.edge.mlp.weights[l];
            weights.push_back(std::vector<double>(w.data(), w.data() + w.rows() * w.cols()));
            biases.push_back(s.edge.mlp.biases[l]);
        }
        m["weights"] = std::move(weights);
        m["biases"] = std::move(biases);
        j["mlp"] = std::move(m);
    }
    return j.dump(1) + "\n";
}

ModelState checkpoint_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    ModelState s;
    s.method = method_from_int(j.at("method").get<int>());
    s.dist.t_raw = j.at("t_raw").get<std::vector<double>>();
    s.dist.t_min = j.at("t_min").get<double>();
    s.dist.t_max = j.at("t_max").get<double>();
    s.dist.beta_logits = j.at("beta_logits").get<std::vector<double>>();
    s.dist.negative_exponent = j.at("exponent").get<std::string>() == "negative";
    s.edge.kind = WeightKind::Unit;
    if (j.contains("gaussian")) {
        s.edge.kind = WeightKind::Gaussian;
        s.edge.gauss.sigma_raw = j["gaussian"].at("sigma_raw").get<double>();
        s.edge.gauss.squared_distance = j["gaussian"].at("squared_distance").get<bool>();
    }
    if (j.contains("mlp")) {
        s.edge.kind = WeightKind::Mlp;
        const auto& m = j["mlp"];
        MlpNet& net = s.edge.mlp;
        net.weights.clear();
        net.biases.clear();
        int fan_in = MlpNet::kInputSize;
        const auto weights = m.at("weights");
        const auto biases = m.at("biases");
        if (weights.size() != MlpNet::kLayerSizes.size())
            throw std::runtime_error("checkpoint mlp has wrong layer count");
        for (size_t l = 0; l < MlpNet::kLayerSizes.size(); ++l) {
            const int out = MlpNet::kLayerSizes[l];
            const auto flat = weights[l].get<std::vector<double>>();
            if (static_cast<int>(flat.size()) != out * fan_in)
                throw std::runtime_error("checkpoint mlp layer " + std::to_string(l) +
                                         " has wrong weight count");
            Matrix w(out, fan_in);
            std::copy(flat.begin(), flat.end(), w.data());
            net.weights.push_back(std::move(w));
            net.biases.push_back(biases[l].get<std::vector<double>>());
            if (static_cast<int>(net.biases.back().size()) != out)
                throw std::runtime_error("checkpoint mlp layer " + std::to_string(l) +
                                         " has wrong bias count");
            fan_in = out;
        }
        const auto mean = m.at("attr_mean").get<std::vector<double>>();
        const auto sd = m.at("attr_std").get<std::vector<double>>();
        for (int c = 0; c < 3; ++c) {
            net.attr_mean[c] = mean.at(c);
            net.attr_std[c] = sd.at(c);
        }
        net.softplus_output = m.at("output").get<std::string>() == "softplus";
    }
    return s;
}

std::string loss_history_to_csv(std::span<const double> history, uint64_t seed,
                                const std::string& config_hash) {
    std::ostringstream ss;
    ss << csv_provenance(seed, config_hash);
    ss << "epoch,mean_loss\n";
    for (size_t i = 0; i < history.size(); ++i)
        ss << i << "," << format_sig(history[i], 12) << "\n";
    return ss.str();
}

}  // namespace d2d
