#include "diff2dist/graph.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "diff2dist/io.hpp"
#include "diff2dist/rng.hpp"

namespace d2d {

double fold_angle(double theta) {
    const double pi = std::numbers::pi;
    double a = std::fmod(theta, pi);
    if (a < -pi / 2.0) a += pi;
    if (a >= pi / 2.0) a -= pi;
    return a;
}

void validate_graph(const AttributedGraph& g) {
    if (g.n <= 0) throw std::runtime_error("graph node count must be positive");
    if (static_cast<int>(g.positions.size()) != g.n)
        throw std::runtime_error("graph has " + std::to_string(g.positions.size()) +
                                 " positions for n=" + std::to_string(g.n));
    std::set<std::pair<int, int>> seen;
    for (size_t e = 0; e < g.edges.size(); ++e) {
        const Edge& ed = g.edges[e];
        const std::string where = "edge " + std::to_string(e) + " (" +
                                  std::to_string(ed.i) + "," + std::to_string(ed.j) + ")";
        if (ed.i == ed.j) throw std::runtime_error(where + ": self-loop");
        if (!(ed.i >= 0 && ed.j < g.n && ed.i < ed.j))
            throw std::runtime_error(where + ": endpoints must satisfy 0 <= i < j < n");
        if (!seen.insert({ed.i, ed.j}).second)
            throw std::runtime_error(where + ": duplicate edge");
        for (double a : ed.attr)
            if (!std::isfinite(a)) throw std::runtime_error(where + ": non-finite attribute");
        if (!(ed.attr[0] > 0.0)) throw std::runtime_error(where + ": boundary length must be > 0");
        if (!(ed.attr[2] > 0.0)) throw std::runtime_error(where + ": edge length must be > 0");
        const double half_pi = std::numbers::pi / 2.0;
        if (!(ed.attr[1] >= -half_pi && ed.attr[1] < half_pi))
            throw std::runtime_error(where + ": angle outside [-pi/2, pi/2)");
    }
}

WeightedLaplacian build_laplacian(const AttributedGraph& g, std::span<const double> w) {
    if (w.size() != g.edges.size())
        throw std::runtime_error("expected " + std::to_string(g.edges.size()) +
                                 " edge weights, got " + std::to_string(w.size()));
    WeightedLaplacian L;
    L.n = g.n;
    L.m = Matrix(g.n, g.n);
    for (size_t e = 0; e < g.edges.size(); ++e) {
        const double we = w[e];
        if (!std::isfinite(we) || we < 0.0)
            throw std::runtime_error("edge " + std::to_string(e) +
                                     ": weight must be finite and nonnegative, got " +
                                     std::to_string(we));
        const int i = g.edges[e].i;
        const int j = g.edges[e].j;
        L.m(i, j) = L.m(j, i) = -we;
        L.m(i, i) += we;
        L.m(j, j) += we;
    }
    return L;
}

std::vector<int> Dataset::indices_of(Split s) const {
    std::vector<int> out;
    for (size_t i = 0; i < split.size(); ++i)
        if (split[i] == s) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> Dataset::labels() const {
    std::vector<int> out;
    out.reserve(graphs.size());
    for (const auto& g : graphs) out.push_back(g.label);
    return out;
}

void validate_dataset(const Dataset& d) {
    if (d.graphs.empty()) throw std::runtime_error("dataset is empty");
    const int n = d.graphs.front().n;
    for (size_t i = 0; i < d.graphs.size(); ++i) {
        if (d.graphs[i].n != n)
            throw std::runtime_error("graph " + std::to_string(i) + " has n=" +
                                     std::to_string(d.graphs[i].n) +
                                     ", dataset requires fixed n=" + std::to_string(n));
        validate_graph(d.graphs[i]);
    }
    if (!d.split.empty() && d.split.size() != d.graphs.size())
        throw std::runtime_error("split flag count does not match graph count");
}

namespace {

// Largest-remainder apportionment of the total train quota across classes:
// every class lands within one graph of ratio * class_size.
std::vector<int> train_quota_per_class(const std::vector<int>& class_sizes, double ratio) {
    const int total = std::accumulate(class_sizes.begin(), class_sizes.end(), 0);
    int want = static_cast<int>(std::llround(ratio * total));
    want = std::clamp(want, 0, total);
    std::vector<int> quota(class_sizes.size());
    std::vector<std::pair<double, int>> remainders;
    int assigned = 0;
    for (size_t c = 0; c < class_sizes.size(); ++c) {
        const double exact = ratio * class_sizes[c];
        quota[c] = static_cast<int>(std::floor(exact));
        assigned += quota[c];
        remainders.push_back({exact - quota[c], static_cast<int>(c)});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int i = 0; assigned < want && i < static_cast<int>(remainders.size()); ++i) {
        const int c = remainders[i].second;
        if (quota[c] < class_sizes[c]) {
            ++quota[c];
            ++assigned;
        }
    }
    return quota;
}

}  // namespace

Dataset split_dataset(const Dataset& d, double ratio, uint64_t seed, bool group_by_source) {
    validate_dataset(d);
    if (!(ratio > 0.0 && ratio < 1.0)) throw std::runtime_error("split ratio must be in (0,1)");

    // class label -> graph indices
    std::map<int, std::vector<int>> by_class;
    for (size_t i = 0; i < d.graphs.size(); ++i)
        by_class[d.graphs[i].label].push_back(static_cast<int>(i));
    if (by_class.size() == 1)
        std::cerr << "warning: single-class dataset, split is unstratified\n";
    for (const auto& [label, idx] : by_class)
        if (idx.size() < 2)
            throw std::runtime_error("class " + std::to_string(label) +
                                     " has fewer than 2 graphs");

    std::vector<int> class_sizes;
    for (const auto& [label, idx] : by_class) class_sizes.push_back(static_cast<int>(idx.size()));
    const std::vector<int> quota = train_quota_per_class(class_sizes, ratio);

    Dataset out = d;
    out.split.assign(d.graphs.size(), Split::Validation);
    Rng rng(mix_seed(seed, 17));

    if (!group_by_source) {
        size_t c = 0;
        for (const auto& [label, idx] : by_class) {
            std::vector<int> order = idx;
            rng.shuffle(order);
            for (int k = 0; k < quota[c]; ++k) out.split[order[k]] = Split::Train;
            ++c;
        }
        return out;
    }

    // whole source groups stay on one side; each group counts toward the
    // quota of its first member's class, so stratification is approximate
    std::map<std::string, std::vector<int>> groups;
    for (size_t i = 0; i < d.graphs.size(); ++i)
        groups[d.graphs[i].source_id].push_back(static_cast<int>(i));
    std::vector<std::string> names;
    for (const auto& [name, members] : groups) names.push_back(name);
    rng.shuffle(names);

    std::map<int, int> assigned;
    std::map<int, int> class_quota;
    size_t c = 0;
    for (const auto& [label, idx] : by_class) class_quota[label] = quota[c++];
    for (const auto& name : names) {
        const std::vector<int>& members = groups[name];
        const int label = d.graphs[members.front()].label;
        if (assigned[label] >= class_quota[label]) continue;
        for (int i : members) out.split[i] = Split::Train;
        assigned[label] += static_cast<int>(members.size());
    }
    return out;
}

std::string dataset_to_json(const Dataset& d, uint64_t seed, const std::string& config_hash) {
    nlohmann::json j;
    j["version"] = kToolVersion;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["n"] = d.node_count();
    nlohmann::json graphs = nlohmann::json::array();
    for (const auto& g : d.graphs) {
        nlohmann::json jg;
        jg["label"] = g.label;
        jg["source_id"] = g.source_id;
        nlohmann::json pos = nlohmann::json::array();
        for (const auto& p : g.positions) pos.push_back({p.x, p.y});
        jg["positions"] = std::move(pos);
        nlohmann::json edges = nlohmann::json::array();
        for (const auto& e : g.edges)
            edges.push_back({{"i", e.i}, {"j", e.j}, {"attr", {e.attr[0], e.attr[1], e.attr[2]}}});
        jg["edges"] = std::move(edges);
        graphs.push_back(std::move(jg));
    }
    j["graphs"] = std::move(graphs);
    return j.dump(1) + "\n";
}

Dataset dataset_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("dataset file is not valid JSON: ") + e.what());
    }
    Dataset d;
    const int n = j.at("n").get<int>();
    for (const auto& jg : j.at("graphs")) {
        AttributedGraph g;
        g.n = n;
        g.label = jg.at("label").get<int>();
        g.source_id = jg.value("source_id", std::string());
        for (const auto& p : jg.at("positions"))
            g.positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        for (const auto& je : jg.at("edges")) {
            Edge e;
            e.i = je.at("i").get<int>();
            e.j = je.at("j").get<int>();
            const auto& a = je.at("attr");
            e.attr = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
            g.edges.push_back(e);
        }
        d.graphs.push_back(std::move(g));
    }
    validate_dataset(d);
    return d;
}

}  // namespace d2d
