#include "diff2dist/distance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "diff2dist/io.hpp"
#include "diff2dist/parallel.hpp"

namespace d2d {

std::vector<double> softmax(std::span<const double> logits) {
    // max subtraction makes softmax(x + c) bitwise equal to softmax(x)
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

double DistanceParams::time_of(double raw) const {
    return t_min + (t_max - t_min) * logistic(raw);
}

double DistanceParams::dtime_draw(double raw) const {
    const double s = logistic(raw);
    return (t_max - t_min) * s * (1.0 - s);
}

std::vector<double> DistanceParams::times() const {
    std::vector<double> out(t_raw.size());
    for (size_t i = 0; i < t_raw.size(); ++i) out[i] = time_of(t_raw[i]);
    return out;
}

std::vector<double> DistanceParams::beta() const { return softmax(beta_logits); }

DistanceParams DistanceParams::init(int n, int p) {
    if (n < 1 || p < 1) throw std::runtime_error("DistanceParams::init: need n >= 1, p >= 1");
    DistanceParams out;
    out.beta_logits.assign(n, 0.0);
    out.t_raw.resize(p);
    const double lo = -2.0, hi = 0.5;  // log10 of 0.01 .. 3.16
    for (int i = 0; i < p; ++i) {
        const double ex = (p == 1) ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (p - 1);
        const double t = std::pow(10.0, ex);
        const double frac = (t - out.t_min) / (out.t_max - out.t_min);
        out.t_raw[i] = std::log(frac / (1.0 - frac));
    }
    return out;
}

namespace {

double exp_map(double t, double lambda, bool negative) {
    const double arg = negative ? -t * lambda : t * lambda;
    if (arg > 709.0)
        throw std::runtime_error(
            "exponential overflow at t*lambda = " + std::to_string(arg) +
            "; tighten the t bounds (t_min/t_max) or use the negative-exponent convention");
    return std::exp(arg);
}

}  // namespace

PairResult gdd_pair(const Spectrum& s1, const Spectrum& s2, const DistanceParams& params) {
    const size_t n = s1.eigenvalues.size();
    if (s2.eigenvalues.size() != n)
        throw std::runtime_error("gdd_pair: spectra have different sizes (" +
                                 std::to_string(n) + " vs " +
                                 std::to_string(s2.eigenvalues.size()) + ")");
    if (params.beta_logits.size() != n)
        throw std::runtime_error("gdd_pair: beta has " +
                                 std::to_string(params.beta_logits.size()) +
                                 " entries for " + std::to_string(n) + " eigenvalues");

    const std::vector<double> beta = params.beta();
    const std::vector<double> ts = params.times();
    const bool neg = params.negative_exponent;

    double best = -1.0;
    int best_m = 0;
    std::vector<double> e1(n), e2(n), best_e1, best_e2;
    for (size_t m = 0; m < ts.size(); ++m) {
        double s = 0.0;
        for (size_t j = 0; j < n; ++j) {
            e1[j] = exp_map(ts[m], s1.eigenvalues[j], neg);
            e2[j] = exp_map(ts[m], s2.eigenvalues[j], neg);
            const double diff = e1[j] - e2[j];
            s += beta[j] * diff * diff;
        }
        const double d = std::sqrt(s);
        if (d > best) {  // strict: ties keep the smallest t index
            best = d;
            best_m = static_cast<int>(m);
            best_e1 = e1;
            best_e2 = e2;
        }
    }

    PairResult out;
    out.distance = best;
    out.argmax_t = best_m;
    out.ctx.argmax_t = best_m;
    out.ctx.t = ts[best_m];
    out.ctx.d = best;
    out.ctx.dt_draw = params.dtime_draw(params.t_raw[best_m]);
    out.ctx.negative_exponent = neg;
    out.ctx.beta = beta;
    out.ctx.e1 = std::move(best_e1);
    out.ctx.e2 = std::move(best_e2);
    out.ctx.lam1 = s1.eigenvalues;
    out.ctx.lam2 = s2.eigenvalues;
    return out;
}

PairGrads gdd_pair_backward(const PairContext& ctx, const DistanceParams& params, double dbar) {
    const size_t n = ctx.beta.size();
    PairGrads g;
    g.lam1.assign(n, 0.0);
    g.lam2.assign(n, 0.0);
    g.beta_logits.assign(n, 0.0);
    g.t_raw.assign(params.t_raw.size(), 0.0);
    if (dbar == 0.0 || ctx.d == 0.0) return g;

    const double t = ctx.t;
    const double inv_d = 1.0 / ctx.d;
    const double sign = ctx.negative_exponent ? -1.0 : 1.0;

    // u_j = dd/dbeta_j before the softmax chain; also accumulate dd/dt
    double ddt = 0.0;
    double ubar = 0.0;  // sum_j beta_j u_j
    std::vector<double> u(n);
    for (size_t j = 0; j < n; ++j) {
        const double diff = ctx.e1[j] - ctx.e2[j];
        const double common = ctx.beta[j] * diff * inv_d;
        g.lam1[j] = dbar * common * sign * t * ctx.e1[j];
        g.lam2[j] = -dbar * common * sign * t * ctx.e2[j];
        ddt += common * sign * (ctx.lam1[j] * ctx.e1[j] - ctx.lam2[j] * ctx.e2[j]);
        u[j] = 0.5 * diff * diff * inv_d;
        ubar += ctx.beta[j] * u[j];
    }
    for (size_t j = 0; j < n; ++j)
        g.beta_logits[j] = dbar * ctx.beta[j] * (u[j] - ubar);
    g.t_raw[ctx.argmax_t] = dbar * ddt * ctx.dt_draw;
    return g;
}

DistanceMatrix distance_matrix(const Dataset& d, const EdgeWeightModel& f,
                               const DistanceParams& params, int threads) {
    validate_dataset(d);
    const int m = static_cast<int>(d.graphs.size());

    std::vector<Spectrum> spectra(m);
    parallel_for(m, threads, [&](int i) {
        const EdgeWeightCache cache = weigh_edges(f, d.graphs[i]);
        spectra[i] = eigh(build_laplacian(d.graphs[i], cache.weights));
    });

    DistanceMatrix out;
    out.values = Matrix(m, m);
    out.labels = d.labels();
    out.split = d.has_split() ? d.split : std::vector<Split>(m, Split::Train);
    for (int i = 0; i < m; ++i) out.ids.push_back(std::to_string(i));

    // one computation per unordered pair, mirrored on write
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<size_t>(m) * (m - 1) / 2);
    for (int a = 0; a < m; ++a)
        for (int b = a + 1; b < m; ++b) pairs.push_back({a, b});

    parallel_for(static_cast<int>(pairs.size()), threads, [&](int k) {
        const auto [a, b] = pairs[k];
        double dist;
        try {
            dist = gdd_pair(spectra[a], spectra[b], params).distance;
        } catch (const std::exception& e) {
            throw std::runtime_error("pair (" + std::to_string(a) + "," + std::to_string(b) +
                                     "): " + e.what());
        }
        out.values(a, b) = out.values(b, a) = dist;
    });
    return out;
}

std::string distance_matrix_to_csv(const DistanceMatrix& dm, uint64_t seed,
                                   const std::string& config_hash) {
    std::ostringstream ss;
    ss << csv_provenance(seed, config_hash);
    ss << "id";
    for (const auto& id : dm.ids) ss << "," << id;
    ss << "\n";
    const int m = dm.values.rows();
    for (int a = 0; a < m; ++a) {
        ss << dm.ids[a];
        for (int b = 0; b < m; ++b) ss << "," << format_sig(dm.values(a, b), 12);
        ss << "\n";
    }
    return ss.str();
}

std::string labels_to_csv(const DistanceMatrix& dm, uint64_t seed,
                          const std::string& config_hash) {
    std::ostringstream ss;
    ss << csv_provenance(seed, config_hash);
    ss << "id,label,split\n";
    for (size_t i = 0; i < dm.ids.size(); ++i)
        ss << dm.ids[i] << "," << dm.labels[i] << ","
           << (dm.split[i] == Split::Train ? "train" : "validation") << "\n";
    return ss.str();
}

}  // namespace d2d
