#include "diff2dist/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "diff2dist/io.hpp"
#include "diff2dist/parallel.hpp"
#include "diff2dist/spectral.hpp"

namespace d2d {

double knn_classify(const DistanceMatrix& dm, int k) {
    std::vector<int> train, val;
    for (size_t i = 0; i < dm.split.size(); ++i)
        (dm.split[i] == Split::Train ? train : val).push_back(static_cast<int>(i));
    if (val.empty()) throw std::runtime_error("knn_classify: empty validation set");
    if (k <= 0) throw std::runtime_error("knn_classify: k must be positive");
    if (k > static_cast<int>(train.size()))
        throw std::runtime_error("knn_classify: k=" + std::to_string(k) + " exceeds " +
                                 std::to_string(train.size()) + " training points");

    int correct = 0;
    std::vector<int> order(train.size());
    for (int v : val) {
        for (size_t i = 0; i < train.size(); ++i) order[i] = train[i];
        std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int x, int y) {
            const double dx = dm.values(v, x);
            const double dy = dm.values(v, y);
            if (dx != dy) return dx < dy;
            return x < y;   // distance ties: smaller training index
        });
        std::map<int, int> votes;
        for (int i = 0; i < k; ++i) ++votes[dm.labels[order[i]]];
        int best_label = votes.begin()->first;
        int best_count = votes.begin()->second;
        for (const auto& [label, count] : votes)
            if (count > best_count) {   // vote ties: smaller label id wins
                best_label = label;
                best_count = count;
            }
        if (best_label == dm.labels[v]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(val.size());
}

KnnReport knn_sweep(const DistanceMatrix& dm, int k_min, int k_max, bool literal_pair) {
    int n_train = 0;
    for (Split s : dm.split)
        if (s == Split::Train) ++n_train;
    k_max = std::min(k_max, n_train);
    if (k_min > k_max) throw std::runtime_error("knn_sweep: empty K range");

    KnnReport report;
    if (literal_pair) {
        report.ks = {k_min, k_max};
    } else {
        for (int k = k_min; k <= k_max; ++k) report.ks.push_back(k);
    }
    report.best_accuracy = -1.0;
    for (int k : report.ks) {
        const double acc = knn_classify(dm, k);
        report.accuracies.push_back(acc);
        if (acc > report.best_accuracy) {
            report.best_accuracy = acc;
            report.best_k = k;
        }
    }
    return report;
}

namespace {

struct NeighborGraph {
    // adjacency list with edge lengths
    std::vector<std::vector<std::pair<int, double>>> adj;
};

std::vector<int> components_of(const NeighborGraph& g) {
    const int m = static_cast<int>(g.adj.size());
    std::vector<int> comp(m, -1);
    int next = 0;
    std::vector<int> stack;
    for (int s = 0; s < m; ++s) {
        if (comp[s] >= 0) continue;
        comp[s] = next;
        stack.push_back(s);
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (const auto& [v, w] : g.adj[u])
                if (comp[v] < 0) {
                    comp[v] = next;
                    stack.push_back(v);
                }
        }
        ++next;
    }
    return comp;
}

}  // namespace

Embedding2D isomap_embed(const DistanceMatrix& dm, int neighbors, int threads) {
    const int m = dm.values.rows();
    if (m < 3) throw std::runtime_error("isomap_embed: need at least 3 points");
    const int k = std::min(neighbors, m - 1);
    if (k < 1) throw std::runtime_error("isomap_embed: need at least 1 neighbor");

    // symmetric kNN graph on the given distances
    NeighborGraph g;
    g.adj.resize(m);
    std::vector<std::vector<char>> linked(m, std::vector<char>(m, 0));
    std::vector<int> order;
    for (int i = 0; i < m; ++i) {
        order.clear();
        for (int j = 0; j < m; ++j)
            if (j != i) order.push_back(j);
        std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int x, int y) {
            const double dx = dm.values(i, x);
            const double dy = dm.values(i, y);
            if (dx != dy) return dx < dy;
            return x < y;
        });
        for (int t = 0; t < k; ++t) {
            const int j = order[t];
            const int a = std::min(i, j);
            const int b = std::max(i, j);
            if (!linked[a][b]) {
                linked[a][b] = 1;
                g.adj[a].push_back({b, dm.values(a, b)});
                g.adj[b].push_back({a, dm.values(a, b)});
            }
        }
    }

    // bridge disconnected components by the single smallest crossing distance
    std::vector<int> comp = components_of(g);
    while (*std::max_element(comp.begin(), comp.end()) > 0) {
        std::cerr << "warning: isomap neighbor graph disconnected, bridging\n";
        double best = std::numeric_limits<double>::infinity();
        int ba = -1, bb = -1;
        for (int a = 0; a < m; ++a)
            for (int b = a + 1; b < m; ++b) {
                if (comp[a] == comp[b]) continue;
                if (dm.values(a, b) < best) {
                    best = dm.values(a, b);
                    ba = a;
                    bb = b;
                }
            }
        g.adj[ba].push_back({bb, best});
        g.adj[bb].push_back({ba, best});
        comp = components_of(g);
    }

    // geodesics: Dijkstra per source (order-independent, safe to parallelize)
    Matrix geo(m, m);
    parallel_for(m, threads, [&](int s) {
        std::vector<double> dist(m, std::numeric_limits<double>::infinity());
        dist[s] = 0.0;
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
        heap.push({0.0, s});
        while (!heap.empty()) {
            const auto [du, u] = heap.top();
            heap.pop();
            if (du > dist[u]) continue;
            for (const auto& [v, w] : g.adj[u]) {
                const double cand = du + w;
                if (cand < dist[v]) {
                    dist[v] = cand;
                    heap.push({cand, v});
                }
            }
        }
        for (int t = 0; t < m; ++t) geo(s, t) = dist[t];
    });
    // enforce exact symmetry against roundoff asymmetries in path sums
    for (int a = 0; a < m; ++a)
        for (int b = a + 1; b < m; ++b) {
            const double v = std::min(geo(a, b), geo(b, a));
            geo(a, b) = geo(b, a) = v;
        }

    // classical MDS: B = -1/2 J D^2 J, top two eigenpairs
    Matrix b(m, m);
    std::vector<double> row_mean(m, 0.0);
    double grand = 0.0;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            const double sq = geo(i, j) * geo(i, j);
            b(i, j) = sq;
            row_mean[i] += sq;
        }
        row_mean[i] /= m;
        grand += row_mean[i];
    }
    grand /= m;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            b(i, j) = -0.5 * (b(i, j) - row_mean[i] - row_mean[j] + grand);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            const double v = 0.5 * (b(i, j) + b(j, i));
            b(i, j) = b(j, i) = v;
        }

    const Spectrum spec = eigh_sym(b);
    Embedding2D emb;
    emb.coords.resize(m);
    const int top1 = m - 1, top2 = m - 2;
    const double s1 = std::sqrt(std::max(0.0, spec.eigenvalues[top1]));
    const double s2 = std::sqrt(std::max(0.0, spec.eigenvalues[top2]));
    for (int i = 0; i < m; ++i) {
        emb.coords[i].x = s1 * spec.eigenvectors(i, top1);
        emb.coords[i].y = s2 * spec.eigenvectors(i, top2);
    }
    // exact centering
    double mx = 0.0, my = 0.0;
    for (const auto& c : emb.coords) {
        mx += c.x;
        my += c.y;
    }
    mx /= m;
    my /= m;
    for (auto& c : emb.coords) {
        c.x -= mx;
        c.y -= my;
    }
    return emb;
}

std::string knn_report_to_csv(const KnnReport& r, uint64_t seed, const std::string& config_hash) {
    std::ostringstream ss;
    ss << csv_provenance(seed, config_hash);
    ss << "K,accuracy\n";
    for (size_t i = 0; i < r.accuracies.size(); ++i)
        ss << r.ks[i] << "," << format_sig(r.accuracies[i], 12) << "\n";
    ss << "# best_k=" << r.best_k << " best_accuracy=" << format_sig(r.best_accuracy, 12) << "\n";
    return ss.str();
}

std::string embedding_to_csv(const Embedding2D& emb, const DistanceMatrix& dm, uint64_t seed,
                             const std::string& config_hash) {
    std::ostringstream ss;
    ss << csv_provenance(seed, config_hash);
    ss << "id,x,y,label,split\n";
    for (size_t i = 0; i < emb.coords.size(); ++i)
        ss << dm.ids[i] << "," << format_sig(emb.coords[i].x, 12) << ","
           << format_sig(emb.coords[i].y, 12) << "," << dm.labels[i] << ","
           << (dm.split[i] == Split::Train ? "train" : "validation") << "\n";
    return ss.str();
}

}  // namespace d2d
