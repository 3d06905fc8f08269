#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "diff2dist/morpho_sim.hpp"
#include "test_support.hpp"

using namespace d2d;
using namespace d2d::testing;

namespace {

// axis-aligned unit-square grid of side x side cells, a known ground truth
// for extraction
Tessellation square_grid(int side) {
    Tessellation t;
    const int vs = side + 1;
    for (int r = 0; r < vs; ++r)
        for (int c = 0; c < vs; ++c) t.vertices.push_back({double(c), double(r)});
    const auto vid = [&](int r, int c) { return r * vs + c; };
    std::set<std::pair<int, int>> seen;
    const auto add_wall = [&](int a, int b) {
        const auto key = std::minmax(a, b);
        if (seen.insert(key).second) t.walls.push_back({key.first, key.second, 1.0});
    };
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
            CellPoly cell;
            cell.verts = {vid(r, c), vid(r, c + 1), vid(r + 1, c + 1), vid(r + 1, c)};
            for (int k = 0; k < 4; ++k)
                add_wall(cell.verts[k], cell.verts[(k + 1) % 4]);
            t.cells.push_back(std::move(cell));
        }
    validate_tessellation(t);
    return t;
}

}  // namespace

TEST_CASE("hex patch has the closed-form cell count and requested areas") {
    for (int rings : {0, 1, 3}) {
        const Tessellation t = hex_patch(rings, 2.0);
        CHECK(static_cast<int>(t.cells.size()) == 1 + 3 * rings * (rings + 1));
        for (size_t c = 0; c < t.cells.size(); ++c)
            CHECK(rel_err(cell_area(t, static_cast<int>(c)), 2.0) < 1e-9);
    }
    // interior vertices are shared: 3-ring patch has 96 vertices, not 37*6
    CHECK(hex_patch(3).vertices.size() == 96);
}

TEST_CASE("no trigger means no change") {
    SimulationConfig cfg;
    cfg.steps = 50;
    cfg.growth_rate = 0.0;   // areas stay at 25 relative units, below both thresholds
    cfg.r_div = 0.0;
    cfg.seed = 1;
    const Tessellation init = hex_patch(2);
    const Tessellation out = simulate(cfg, init);
    REQUIRE(out.cells.size() == init.cells.size());
    for (size_t v = 0; v < init.vertices.size(); ++v) {
        CHECK(out.vertices[v].x == init.vertices[v].x);
        CHECK(out.vertices[v].y == init.vertices[v].y);
    }
}

TEST_CASE("a division keeps the total area and splits one cell in two") {
    SimulationConfig cfg;
    cfg.steps = 1;
    cfg.growth_rate = 0.7;   // 25 -> 42.5 units in one step, over the divide threshold
    cfg.seed = 2;
    SimStats st;
    const Tessellation out = simulate(cfg, hex_patch(0, 1.0), &st);
    CHECK(st.divisions == 1);
    CHECK(out.cells.size() == 2);
    CHECK(rel_err(total_area(out), 1.7) < 1e-9);
    CHECK(cell_area(out, 0) > 0.0);
    CHECK(cell_area(out, 1) > 0.0);
    validate_tessellation(out);
}

TEST_CASE("per-step area accounting: growth is the only source") {
    SimulationConfig cfg;
    cfg.growth_rate = 0.01;
    cfg.seed = 3;
    cfg.r_div = 0.0001;
    cfg.r_angle = 0.3;
    Tessellation t = hex_patch(2);
    for (int step = 0; step < 120; ++step) {
        const double before = total_area(t);
        SimulationConfig one = cfg;
        one.steps = 1;
        one.seed = mix_seed(cfg.seed, step);
        t = simulate(one, std::move(t));
        CHECK(rel_err(total_area(t), before * (1.0 + cfg.growth_rate)) < 1e-6);
    }
    validate_tessellation(t);
}

TEST_CASE("cell count never decreases along a run") {
    SimulationConfig cfg;
    cfg.growth_rate = 0.004;
    cfg.seed = 4;
    cfg.r_angle = 0.5;
    cfg.r_div = 0.0001;
    size_t prev = 0;
    for (int steps : {0, 100, 200, 300, 400}) {
        SimulationConfig c = cfg;
        c.steps = steps;   // same seed: longer runs share the shorter prefix
        const Tessellation t = simulate(c, hex_patch(2));
        CHECK(t.cells.size() >= prev);
        prev = t.cells.size();
    }
}

TEST_CASE("random division planes are uniform on [0, pi)") {
    SimulationConfig cfg;
    cfg.r_angle = 1.0;
    cfg.vertex_exclusion = 0.1;
    cfg.growth_rate = 0.004;
    cfg.steps = 800;
    cfg.seed = 5;
    SimStats st;
    simulate(cfg, hex_patch(3), &st);
    REQUIRE(st.divisions >= 500);
    std::vector<double> angles(st.division_angles.begin(),
                               st.division_angles.begin() + 500);
    std::sort(angles.begin(), angles.end());
    double ks = 0.0;
    const double n = static_cast<double>(angles.size());
    for (size_t i = 0; i < angles.size(); ++i) {
        const double f = angles[i] / std::numbers::pi;
        ks = std::max(ks, std::fabs((i + 1) / n - f));
        ks = std::max(ks, std::fabs(f - i / n));
    }
    CHECK(ks <= 1.358 / std::sqrt(n));   // 5% Kolmogorov-Smirnov
}

TEST_CASE("determinism per seed, distinct angle streams per seed") {
    SimulationConfig cfg;
    cfg.r_angle = 0.8;
    cfg.growth_rate = 0.004;
    cfg.steps = 150;
    cfg.seed = 6;
    SimStats a, b, c;
    const Tessellation ta = simulate(cfg, hex_patch(2), &a);
    const Tessellation tb = simulate(cfg, hex_patch(2), &b);
    CHECK(a.division_angles == b.division_angles);
    REQUIRE(ta.vertices.size() == tb.vertices.size());
    for (size_t v = 0; v < ta.vertices.size(); ++v) {
        CHECK(ta.vertices[v].x == tb.vertices[v].x);
        CHECK(ta.vertices[v].y == tb.vertices[v].y);
    }
    cfg.seed = 7;
    simulate(cfg, hex_patch(2), &c);
    CHECK(a.division_angles != c.division_angles);
}

TEST_CASE("square-grid extraction reproduces 4-adjacency exactly") {
    const Tessellation t = square_grid(5);
    ExtractionConfig cfg;
    cfg.neighborhood = 25;
    cfg.boundary_min = 0.5;        // below the unit cell side
    cfg.central_radius = 100.0;    // every cell is central
    const std::vector<AttributedGraph> graphs = extract_graphs(t, cfg, 1, "grid");
    REQUIRE(graphs.size() == 25);

    const AttributedGraph& g = graphs.front();
    CHECK(g.n == 25);
    CHECK(g.edges.size() == 2 * 5 * 4);   // 40 interior contacts
    for (const Edge& e : g.edges) {
        const Vec2& a = g.positions[e.i];
        const Vec2& b = g.positions[e.j];
        const double dx = std::fabs(a.x - b.x);
        const double dy = std::fabs(a.y - b.y);
        // neighbors differ by exactly one unit step in one axis
        CHECK(rel_err(dx + dy, 1.0) < 1e-9);
        CHECK(std::fabs(e.attr[0] - 1.0) < 1e-9);   // shared boundary = cell side
        CHECK(std::fabs(e.attr[2] - 1.0) < 1e-9);   // centroid distance
        if (dx > dy)
            CHECK(std::fabs(e.attr[1]) < 1e-9);     // horizontal pair: angle 0
        else
            CHECK(std::fabs(e.attr[1] + std::numbers::pi / 2.0) < 1e-9);
    }
}

TEST_CASE("infinite boundary threshold gives edgeless graphs") {
    const Tessellation t = square_grid(4);
    ExtractionConfig cfg;
    cfg.neighborhood = 16;
    cfg.boundary_min = std::numeric_limits<double>::infinity();
    cfg.central_radius = 100.0;
    const auto graphs = extract_graphs(t, cfg, 0, "grid");
    REQUIRE(graphs.size() == 16);
    for (const auto& g : graphs) CHECK(g.edges.empty());
}

TEST_CASE("too few central cells yields an empty list") {
    const Tessellation t = square_grid(3);
    ExtractionConfig cfg;
    cfg.neighborhood = 64;
    CHECK(extract_graphs(t, cfg, 0, "grid").empty());
}

TEST_CASE("extracted graphs satisfy every attributed-graph invariant") {
    SimulationConfig cfg;
    cfg.growth_rate = 0.004;
    cfg.steps = 400;
    cfg.seed = 8;
    cfg.r_angle = 0.4;
    const Tessellation t = simulate(cfg, hex_patch(3));
    ExtractionConfig ext;
    ext.neighborhood = 16;
    const auto graphs = extract_graphs(t, ext, 0, "sim");
    REQUIRE(!graphs.empty());
    for (const auto& g : graphs) validate_graph(g);   // throws on violation
}

TEST_CASE("sweep grid is exactly the 288 documented combinations") {
    const std::vector<SimulationConfig> grid = enumerate_sweep_grid(500, 99);
    REQUIRE(grid.size() == 288);
    std::set<std::array<double, 4>> distinct;
    for (const auto& cfg : grid) {
        CHECK(std::count(kSweepSpring.begin(), kSweepSpring.end(), cfg.spring_constant) == 1);
        CHECK(std::count(kSweepExclusion.begin(), kSweepExclusion.end(),
                         cfg.vertex_exclusion) == 1);
        CHECK(std::count(kSweepRdiv.begin(), kSweepRdiv.end(), cfg.r_div) == 1);
        CHECK(std::count(kSweepRangle.begin(), kSweepRangle.end(), cfg.r_angle) == 1);
        CHECK(cfg.steps == 500);
        distinct.insert(config_params(cfg));
    }
    CHECK(distinct.size() == 288);
}

TEST_CASE("attribution: one config is returned exactly, k=1 matches a naive scan") {
    // simulation graphs from two configs
    std::vector<SimGraphs> sims(2);
    sims[0].config.spring_constant = 0.1;
    sims[0].config.vertex_exclusion = 0.3;
    sims[0].config.r_div = 0.00001;
    sims[0].config.r_angle = 0.01;
    sims[1].config.spring_constant = 3.0;
    sims[1].config.vertex_exclusion = 0.6;
    sims[1].config.r_div = 0.0001;
    sims[1].config.r_angle = 0.5;
    for (int i = 0; i < 6; ++i) {
        sims[0].graphs.push_back(random_graph(8, 0.3, 500 + i));
        sims[1].graphs.push_back(random_graph(8, 0.6, 600 + i));
    }
    Dataset bio;
    for (int i = 0; i < 4; ++i) bio.graphs.push_back(random_graph(8, 0.4, 700 + i));

    ContrastiveConfig tcfg;
    tcfg.seed = 12;
    Dataset split_bio = bio;
    split_bio.split.assign(bio.graphs.size(), Split::Train);
    const ModelState model = init_state(split_bio, Method::AnnWeights, tcfg);

    // all graphs from one config: the attribution is that config, exactly
    const std::vector<SimGraphs> single{sims[0]};
    for (const auto& row : attribute_parameters(bio, single, model, 100)) {
        CHECK(row[0] == 0.1);
        CHECK(row[1] == 0.3);
        CHECK(row[2] == 0.00001);
        CHECK(row[3] == 0.01);
    }

    // mixed configs: componentwise containment in the grid's range
    const auto rows = attribute_parameters(bio, sims, model, 5);
    for (const auto& row : rows) {
        CHECK(row[0] >= 0.1);
        CHECK(row[0] <= 3.0);
        CHECK(row[3] >= 0.01);
        CHECK(row[3] <= 0.5);
    }

    // k=1 equals an independent nearest-neighbor scan, bit for bit
    const auto k1 = attribute_parameters(bio, sims, model, 1);
    for (size_t i = 0; i < bio.graphs.size(); ++i) {
        const EdgeWeightCache cb = weigh_edges(model.edge, bio.graphs[i]);
        const Spectrum sb = eigh(build_laplacian(bio.graphs[i], cb.weights));
        double best = std::numeric_limits<double>::infinity();
        std::array<double, 4> best_params{};
        for (const auto& sim : sims)
            for (const auto& g : sim.graphs) {
                const EdgeWeightCache cg = weigh_edges(model.edge, g);
                const Spectrum sg = eigh(build_laplacian(g, cg.weights));
                const double dist = gdd_pair(sb, sg, model.dist).distance;
                if (dist < best) {
                    best = dist;
                    best_params = config_params(sim.config);
                }
            }
        CHECK(k1[i] == best_params);
    }
}

TEST_CASE("mesh json round trip") {
    const Tessellation t = hex_patch(2);
    const Tessellation back = tessellation_from_json(tessellation_to_json(t, 3, "dead"));
    REQUIRE(back.vertices.size() == t.vertices.size());
    REQUIRE(back.walls.size() == t.walls.size());
    REQUIRE(back.cells.size() == t.cells.size());
    for (size_t v = 0; v < t.vertices.size(); ++v) {
        CHECK(back.vertices[v].x == t.vertices[v].x);
        CHECK(back.vertices[v].y == t.vertices[v].y);
    }
    for (size_t w = 0; w < t.walls.size(); ++w) CHECK(back.walls[w].rest == t.walls[w].rest);
}

TEST_CASE("attr-only dataset: identical geometry, one discriminative channel") {
    AttrOnlyOptions opt;
    opt.per_class = 5;
    opt.nodes = 16;
    opt.seed = 13;
    const Dataset d = generate_attr_only_dataset(opt);
    REQUIRE(d.graphs.size() == 10);
    const AttributedGraph& first = d.graphs.front();
    for (const auto& g : d.graphs) {
        CHECK(g.n == 16);
        REQUIRE(g.edges.size() == first.edges.size());
        for (int v = 0; v < 16; ++v) {
            CHECK(g.positions[v].x == first.positions[v].x);
            CHECK(g.positions[v].y == first.positions[v].y);
        }
        for (size_t e = 0; e < g.edges.size(); ++e) {
            CHECK(g.edges[e].i == first.edges[e].i);
            CHECK(g.edges[e].j == first.edges[e].j);
            CHECK(g.edges[e].attr[1] == first.edges[e].attr[1]);   // untouched channels
            CHECK(g.edges[e].attr[2] == first.edges[e].attr[2]);
        }
    }
    // unit weights then see identical Laplacians: distance exactly zero
    const Spectrum s0 = eigh(build_laplacian(d.graphs[0], std::vector<double>(first.edges.size(), 1.0)));
    const Spectrum s9 = eigh(build_laplacian(d.graphs[9], std::vector<double>(first.edges.size(), 1.0)));
    CHECK(gdd_pair(s0, s9, DistanceParams::init(16, 10)).distance == 0.0);
    CHECK_THROWS(generate_attr_only_dataset([] {
        AttrOnlyOptions bad;
        bad.nodes = 15;   // not a perfect square
        return bad;
    }()));
}

TEST_CASE("two-class generator produces the requested corpus") {
    TwoClassOptions opt;
    opt.per_class = 8;
    opt.rings = 2;
    opt.base.steps = 250;
    opt.base.growth_rate = 0.005;
    opt.extraction.neighborhood = 8;
    opt.seed = 14;
    const Dataset d = generate_two_class_dataset(opt);
    REQUIRE(d.graphs.size() == 16);
    int labels[2] = {0, 0};
    for (const auto& g : d.graphs) ++labels[g.label];
    CHECK(labels[0] == 8);
    CHECK(labels[1] == 8);
    validate_dataset(d);
}
