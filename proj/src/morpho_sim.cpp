#include "diff2dist/morpho_sim.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "diff2dist/io.hpp"
#include "diff2dist/parallel.hpp"
#include "diff2dist/rng.hpp"

namespace d2d {

const std::array<double, 4> kSweepSpring{0.1, 0.3, 1.0, 3.0};
const std::array<double, 3> kSweepExclusion{0.1, 0.3, 0.6};
const std::array<double, 4> kSweepRdiv{0.0, 0.00001, 0.00003, 0.0001};
const std::array<double, 6> kSweepRangle{0.0, 0.01, 0.03, 0.1, 0.5, 1.0};

double cell_area(const Tessellation& t, int cell) {
    const auto& poly = t.cells[cell].verts;
    double a = 0.0;
    for (size_t i = 0; i < poly.size(); ++i) {
        const Vec2& p = t.vertices[poly[i]];
        const Vec2& q = t.vertices[poly[(i + 1) % poly.size()]];
        a += p.x * q.y - q.x * p.y;
    }
    return 0.5 * a;
}

Vec2 cell_centroid(const Tessellation& t, int cell) {
    const auto& poly = t.cells[cell].verts;
    double a = 0.0, cx = 0.0, cy = 0.0;
    for (size_t i = 0; i < poly.size(); ++i) {
        const Vec2& p = t.vertices[poly[i]];
        const Vec2& q = t.vertices[poly[(i + 1) % poly.size()]];
        const double cross = p.x * q.y - q.x * p.y;
        a += cross;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    a *= 0.5;
    if (std::fabs(a) < 1e-300) {
        // degenerate; fall back to the vertex mean
        Vec2 m{0, 0};
        for (int v : poly) {
            m.x += t.vertices[v].x;
            m.y += t.vertices[v].y;
        }
        m.x /= poly.size();
        m.y /= poly.size();
        return m;
    }
    return {cx / (6.0 * a), cy / (6.0 * a)};
}

double total_area(const Tessellation& t) {
    double a = 0.0;
    for (size_t c = 0; c < t.cells.size(); ++c) a += cell_area(t, static_cast<int>(c));
    return a;
}

namespace {

std::pair<int, int> wall_key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

std::map<std::pair<int, int>, int> build_wall_map(const Tessellation& t) {
    std::map<std::pair<int, int>, int> m;
    for (size_t w = 0; w < t.walls.size(); ++w)
        m[wall_key(t.walls[w].a, t.walls[w].b)] = static_cast<int>(w);
    return m;
}

double wall_length(const Tessellation& t, const Wall& w) {
    return dist2d(t.vertices[w.a], t.vertices[w.b]);
}

}  // namespace

void validate_tessellation(const Tessellation& t) {
    for (const Vec2& v : t.vertices)
        if (!std::isfinite(v.x) || !std::isfinite(v.y))
            throw std::runtime_error("tessellation has a non-finite vertex");
    const auto wall_map = build_wall_map(t);
    std::map<int, int> walls_use;
    for (size_t c = 0; c < t.cells.size(); ++c) {
        const auto& poly = t.cells[c].verts;
        if (poly.size() < 3)
            throw std::runtime_error("cell " + std::to_string(c) + " has fewer than 3 vertices");
        if (!(cell_area(t, static_cast<int>(c)) > 0.0))
            throw std::runtime_error("cell " + std::to_string(c) +
                                     " is not counterclockwise with positive area");
        for (size_t i = 0; i < poly.size(); ++i) {
            const int a = poly[i];
            const int b = poly[(i + 1) % poly.size()];
            if (a == b) throw std::runtime_error("cell " + std::to_string(c) +
                                                 " repeats a vertex consecutively");
            const auto it = wall_map.find(wall_key(a, b));
            if (it == wall_map.end())
                throw std::runtime_error("cell " + std::to_string(c) +
                                         " uses a boundary segment with no wall");
            ++walls_use[it->second];
        }
    }
    for (const auto& [w, uses] : walls_use)
        if (uses > 2)
            throw std::runtime_error("wall " + std::to_string(w) +
                                     " borders more than 2 cells");
}

Tessellation hex_patch(int rings, double cell_area_target) {
    if (rings < 0) throw std::runtime_error("hex_patch: rings must be >= 0");
    if (!(cell_area_target > 0.0)) throw std::runtime_error("hex_patch: cell area must be > 0");
    const double a = std::sqrt(2.0 * cell_area_target / (3.0 * std::numbers::sqrt3));
    const double quantum = a * 1e-6;

    Tessellation t;
    std::map<std::pair<long long, long long>, int> vertex_of;
    const auto vertex_id = [&](double x, double y) {
        const std::pair<long long, long long> key{std::llround(x / quantum),
                                                  std::llround(y / quantum)};
        const auto it = vertex_of.find(key);
        if (it != vertex_of.end()) return it->second;
        const int id = static_cast<int>(t.vertices.size());
        t.vertices.push_back({x, y});
        vertex_of[key] = id;
        return id;
    };
    std::map<std::pair<int, int>, int> wall_of;

    for (int q = -rings; q <= rings; ++q) {
        const int rlo = std::max(-rings, -q - rings);
        const int rhi = std::min(rings, -q + rings);
        for (int r = rlo; r <= rhi; ++r) {
            const double cx = std::numbers::sqrt3 * a * (q + 0.5 * r);
            const double cy = 1.5 * a * r;
            CellPoly cell;
            for (int k = 0; k < 6; ++k) {
                const double ang = std::numbers::pi / 6.0 + k * std::numbers::pi / 3.0;
                cell.verts.push_back(vertex_id(cx + a * std::cos(ang), cy + a * std::sin(ang)));
            }
            for (int k = 0; k < 6; ++k) {
                const int va = cell.verts[k];
                const int vb = cell.verts[(k + 1) % 6];
                const auto key = wall_key(va, vb);
                if (!wall_of.count(key)) {
                    wall_of[key] = static_cast<int>(t.walls.size());
                    t.walls.push_back({key.first, key.second,
                                       dist2d(t.vertices[va], t.vertices[vb])});
                }
            }
            t.cells.push_back(std::move(cell));
        }
    }
    validate_tessellation(t);
    return t;
}

namespace {

struct Chord {
    double theta = 0.0;
    int edge_hi = 0, edge_lo = 0;   // polygon edge indices hit on each side
    double s_hi = 0.0, s_lo = 0.0;  // position along those edges
    Vec2 p_hi, p_lo;
    double length = 0.0;
};

// Chord of the cell through its centroid in direction theta. Valid when it
// crosses two non-adjacent polygon edges, both crossing points sit outside
// the exclusion envelopes (radius = exclusion * half the wall length around
// each endpoint), and the chord is not degenerate.
bool chord_at(const Tessellation& t, int cell, const Vec2& centroid, double theta,
              double exclusion, Chord& out) {
    const auto& poly = t.cells[cell].verts;
    const int m = static_cast<int>(poly.size());
    const double ux = std::cos(theta);
    const double uy = std::sin(theta);

    double t_hi = std::numeric_limits<double>::infinity();
    double t_lo = -std::numeric_limits<double>::infinity();
    int e_hi = -1, e_lo = -1;
    double s_hi = 0, s_lo = 0;
    for (int k = 0; k < m; ++k) {
        const Vec2& p = t.vertices[poly[k]];
        const Vec2& q = t.vertices[poly[(k + 1) % m]];
        const double ex = q.x - p.x;
        const double ey = q.y - p.y;
        const double det = ux * ey - uy * ex;
        const double elen = std::sqrt(ex * ex + ey * ey);
        if (std::fabs(det) < 1e-14 * elen) continue;  // parallel
        // centroid + tc*u == p + sc*e
        const double rx = p.x - centroid.x;
        const double ry = p.y - centroid.y;
        const double tc = (rx * ey - ry * ex) / det;
        const double sc = (rx * uy - ry * ux) / det;
        if (sc < 0.0 || sc >= 1.0) continue;  // half-open: shared corners count once
        if (tc > 1e-12 && tc < t_hi) {
            t_hi = tc;
            e_hi = k;
            s_hi = sc;
        } else if (tc < -1e-12 && tc > t_lo) {
            t_lo = tc;
            e_lo = k;
            s_lo = sc;
        }
    }
    if (e_hi < 0 || e_lo < 0) return false;
    // the two cut walls must not share a vertex
    const int diff = std::abs(e_hi - e_lo);
    if (diff == 0 || diff == 1 || diff == m - 1) return false;
    // exclusion envelope around existing vertices
    const double half = 0.5 * exclusion;
    if (s_hi < half || s_hi > 1.0 - half) return false;
    if (s_lo < half || s_lo > 1.0 - half) return false;
    const double len = t_hi - t_lo;
    if (!(len > 1e-9)) return false;  // degenerate proposed wall

    out.theta = theta;
    out.edge_hi = e_hi;
    out.edge_lo = e_lo;
    out.s_hi = s_hi;
    out.s_lo = s_lo;
    out.p_hi = {centroid.x + t_hi * ux, centroid.y + t_hi * uy};
    out.p_lo = {centroid.x + t_lo * ux, centroid.y + t_lo * uy};
    out.length = len;
    return true;
}

// Mutable simulation state: the tessellation plus a wall lookup kept in sync.
struct SimWorld {
    Tessellation t;
    std::map<std::pair<int, int>, int> wall_of;

    explicit SimWorld(Tessellation init) : t(std::move(init)), wall_of(build_wall_map(t)) {}

    // Splits wall (a, b) at a new vertex placed at p; rest length divides
    // proportionally to the geometric pieces. Returns the new vertex id.
    int split_wall(int a, int b, const Vec2& p) {
        const auto it = wall_of.find(wall_key(a, b));
        if (it == wall_of.end()) throw std::runtime_error("split_wall: no such wall");
        const int w = it->second;
        const int nv = static_cast<int>(t.vertices.size());
        t.vertices.push_back(p);

        const double la = dist2d(t.vertices[a], p);
        const double lb = dist2d(t.vertices[b], p);
        const double rest = t.walls[w].rest;
        const double frac = (la + lb) > 0.0 ? la / (la + lb) : 0.5;

        wall_of.erase(it);
        t.walls[w] = {std::min(a, nv), std::max(a, nv), rest * frac};
        wall_of[wall_key(a, nv)] = w;
        const int w2 = static_cast<int>(t.walls.size());
        t.walls.push_back({std::min(nv, b), std::max(nv, b), rest * (1.0 - frac)});
        wall_of[wall_key(nv, b)] = w2;

        // every cell bordering the old wall gains the new vertex in its cycle
        for (auto& cell : t.cells) {
            auto& poly = cell.verts;
            const int mm = static_cast<int>(poly.size());
            for (int i = 0; i < mm; ++i) {
                const int x = poly[i];
                const int y = poly[(i + 1) % mm];
                if ((x == a && y == b) || (x == b && y == a)) {
                    poly.insert(poly.begin() + i + 1, nv);
                    break;
                }
            }
        }
        return nv;
    }

    void add_wall(int a, int b, double rest) {
        wall_of[wall_key(a, b)] = static_cast<int>(t.walls.size());
        t.walls.push_back({std::min(a, b), std::max(a, b), rest});
    }

    // Damped spring relaxation; the stiffness scales the per-iteration
    // displacement, so it shapes where the cap/tolerance stops the motion.
    void relax(const SimulationConfig& cfg) {
        const int nv = static_cast<int>(t.vertices.size());
        std::vector<Vec2> force(nv);
        for (int iter = 0; iter < cfg.relax_max_iter; ++iter) {
            for (auto& f : force) f = {0.0, 0.0};
            for (const Wall& w : t.walls) {
                const double dx = t.vertices[w.b].x - t.vertices[w.a].x;
                const double dy = t.vertices[w.b].y - t.vertices[w.a].y;
                const double len = std::sqrt(dx * dx + dy * dy);
                if (len < 1e-12) continue;
                const double f0 = cfg.spring_constant * (len - w.rest) / len;
                force[w.a].x += f0 * dx;
                force[w.a].y += f0 * dy;
                force[w.b].x -= f0 * dx;
                force[w.b].y -= f0 * dy;
            }
            double max_disp = 0.0;
            for (int v = 0; v < nv; ++v) {
                const double mx = cfg.relax_dt * force[v].x;
                const double my = cfg.relax_dt * force[v].y;
                t.vertices[v].x += mx;
                t.vertices[v].y += my;
                max_disp = std::max(max_disp, std::max(std::fabs(mx), std::fabs(my)));
            }
            if (max_disp < cfg.relax_tol) break;
        }
    }

    // Relaxation moves vertices; rescaling restores the pre-relaxation total
    // area so divisions never create or destroy area.
    void rescale_area_to(double target) {
        const double now = total_area(t);
        if (!(now > 0.0) || !(target > 0.0)) return;
        const double f = std::sqrt(target / now);
        Vec2 c{0.0, 0.0};
        for (const Vec2& v : t.vertices) {
            c.x += v.x;
            c.y += v.y;
        }
        c.x /= t.vertices.size();
        c.y /= t.vertices.size();
        for (Vec2& v : t.vertices) {
            v.x = c.x + (v.x - c.x) * f;
            v.y = c.y + (v.y - c.y) * f;
        }
        for (Wall& w : t.walls) w.rest *= f;
    }

    void cut(int cell, const Chord& chord, const SimulationConfig& cfg) {
        auto& polyref = t.cells[cell].verts;
        const int m = static_cast<int>(polyref.size());
        const int a1 = polyref[chord.edge_hi];
        const int b1 = polyref[(chord.edge_hi + 1) % m];
        const int a2 = polyref[chord.edge_lo];
        const int b2 = polyref[(chord.edge_lo + 1) % m];

        const double before = total_area(t);
        const int n1 = split_wall(a1, b1, chord.p_hi);
        const int n2 = split_wall(a2, b2, chord.p_lo);
        add_wall(n1, n2, chord.length * cfg.new_wall_rest_factor);

        // split the (now larger) cycle at the two new vertices
        const std::vector<int> cycle = t.cells[cell].verts;
        const int mm = static_cast<int>(cycle.size());
        int i1 = -1, i2 = -1;
        for (int i = 0; i < mm; ++i) {
            if (cycle[i] == n1) i1 = i;
            if (cycle[i] == n2) i2 = i;
        }
        if (i1 < 0 || i2 < 0) throw std::runtime_error("cut: lost a division vertex");
        CellPoly child1, child2;
        for (int i = i1;; i = (i + 1) % mm) {
            child1.verts.push_back(cycle[i]);
            if (i == i2) break;
        }
        for (int i = i2;; i = (i + 1) % mm) {
            child2.verts.push_back(cycle[i]);
            if (i == i1) break;
        }
        t.cells[cell] = std::move(child1);
        t.cells.push_back(std::move(child2));

        relax(cfg);
        rescale_area_to(before);
    }
};

}  // namespace

Tessellation simulate(const SimulationConfig& cfg, Tessellation init, SimStats* stats) {
    validate_tessellation(init);
    if (!(cfg.r_div >= 0.0 && cfg.r_div <= 1.0 && cfg.r_angle >= 0.0 && cfg.r_angle <= 1.0))
        throw std::runtime_error("simulate: probabilities must lie in [0,1]");

    SimWorld world(std::move(init));
    Rng rng(mix_seed(cfg.seed, 7));
    SimStats local;
    SimStats& st = stats ? *stats : local;

    const double mean_area0 = total_area(world.t) / world.t.cells.size();
    const double unit = mean_area0 / 25.0;   // mean initial cell = 25 relative units
    const double area_div = cfg.area_divide * unit;
    const double area_rand = cfg.area_random_min * unit;
    const double growth_scale = std::sqrt(1.0 + cfg.growth_rate);

    const auto try_divide = [&](int c) {
        const auto& poly = world.t.cells[c].verts;
        if (poly.size() < 4) {
            ++st.skipped;   // all walls of a triangle are pairwise adjacent
            return;
        }
        const Vec2 centroid = cell_centroid(world.t, c);
        const bool random_dir = cfg.r_angle > 0.0 && rng.uniform() < cfg.r_angle;
        Chord chord;
        bool found = false;
        if (!random_dir) {
            // shortest valid chord through the centroid, 1-degree scan
            const int kAngles = 180;
            Chord cand;
            for (int i = 0; i < kAngles; ++i) {
                const double theta = std::numbers::pi * (i + 0.5) / kAngles;
                if (chord_at(world.t, c, centroid, theta, cfg.vertex_exclusion, cand))
                    if (!found || cand.length < chord.length) {
                        chord = cand;
                        found = true;
                    }
            }
        }
        if (!found) {
            // random orientation (or fallback when no scanned angle is valid)
            for (int attempt = 0; attempt < 20 && !found; ++attempt) {
                const double theta = rng.uniform() * std::numbers::pi;
                found = chord_at(world.t, c, centroid, theta, cfg.vertex_exclusion, chord);
            }
        }
        if (!found) {
            ++st.skipped;
            std::cerr << "warning: skipping division of cell " << c
                      << " after 20 resamples\n";
            return;
        }
        world.cut(c, chord, cfg);
        ++st.divisions;
        double ang = std::fmod(chord.theta, std::numbers::pi);
        if (ang < 0.0) ang += std::numbers::pi;
        st.division_angles.push_back(ang);
    };

    for (int step = 0; step < cfg.steps; ++step) {
        if (cfg.growth_rate != 0.0) {
            for (Vec2& v : world.t.vertices) {
                v.x *= growth_scale;
                v.y *= growth_scale;
            }
            for (Wall& w : world.t.walls) w.rest *= growth_scale;
        }
        const int nc = static_cast<int>(world.t.cells.size());
        for (int c = 0; c < nc; ++c) {
            const double area = cell_area(world.t, c);
            if (area >= area_div) {
                try_divide(c);
            } else if (cfg.r_div > 0.0 && area >= area_rand && rng.uniform() < cfg.r_div) {
                try_divide(c);
            }
        }
    }
    return std::move(world.t);
}

std::vector<AttributedGraph> extract_graphs(const Tessellation& t, const ExtractionConfig& cfg,
                                            int label, const std::string& source_prefix) {
    validate_tessellation(t);
    const int nc = static_cast<int>(t.cells.size());
    if (cfg.neighborhood < 2) throw std::runtime_error("extract_graphs: neighborhood too small");

    std::vector<Vec2> centroids(nc);
    std::vector<double> areas(nc);
    for (int c = 0; c < nc; ++c) {
        centroids[c] = cell_centroid(t, c);
        areas[c] = cell_area(t, c);
    }
    double mean_diam = 0.0;
    for (int c = 0; c < nc; ++c) mean_diam += 2.0 * std::sqrt(areas[c] / std::numbers::pi);
    mean_diam /= nc;
    const double boundary_min =
        cfg.boundary_min > 0.0 ? cfg.boundary_min : 0.2 * mean_diam;

    Vec2 center{0.0, 0.0};
    for (const Vec2& c : centroids) {
        center.x += c.x;
        center.y += c.y;
    }
    center.x /= nc;
    center.y /= nc;
    double patch_radius = 0.0;
    for (const Vec2& c : centroids) patch_radius = std::max(patch_radius, dist2d(c, center));
    const double central_radius =
        cfg.central_radius > 0.0 ? cfg.central_radius : 0.6 * patch_radius;

    std::vector<int> central;
    for (int c = 0; c < nc; ++c)
        if (dist2d(centroids[c], center) <= central_radius) central.push_back(c);
    if (static_cast<int>(central.size()) < cfg.neighborhood) {
        std::cerr << "warning: only " << central.size() << " cells in the central region, need "
                  << cfg.neighborhood << "; no graphs extracted\n";
        return {};
    }

    // shared boundary length per adjacent cell pair (a wall pair may repeat
    // after splits, so lengths accumulate)
    const auto wall_map = build_wall_map(t);
    std::vector<std::array<int, 2>> wall_cells(t.walls.size(), {-1, -1});
    for (int c = 0; c < nc; ++c) {
        const auto& poly = t.cells[c].verts;
        for (size_t i = 0; i < poly.size(); ++i) {
            const int w = wall_map.at(wall_key(poly[i], poly[(i + 1) % poly.size()]));
            if (wall_cells[w][0] < 0)
                wall_cells[w][0] = c;
            else
                wall_cells[w][1] = c;
        }
    }
    std::map<std::pair<int, int>, double> shared;
    for (size_t w = 0; w < t.walls.size(); ++w)
        if (wall_cells[w][1] >= 0)
            shared[wall_key(wall_cells[w][0], wall_cells[w][1])] += wall_length(t, t.walls[w]);

    std::vector<AttributedGraph> out;
    std::vector<int> order(nc);
    for (int centre : central) {
        for (int c = 0; c < nc; ++c) order[c] = c;
        std::partial_sort(order.begin(), order.begin() + cfg.neighborhood, order.end(),
                          [&](int x, int y) {
                              const double dx = dist2d(centroids[x], centroids[centre]);
                              const double dy = dist2d(centroids[y], centroids[centre]);
                              if (dx != dy) return dx < dy;
                              return x < y;
                          });
        AttributedGraph g;
        g.n = cfg.neighborhood;
        g.label = label;
        g.source_id = source_prefix + "/c" + std::to_string(centre);
        std::map<int, int> local;
        for (int i = 0; i < cfg.neighborhood; ++i) {
            local[order[i]] = i;
            g.positions.push_back(centroids[order[i]]);
        }
        for (int u = 0; u < cfg.neighborhood; ++u)
            for (int v = u + 1; v < cfg.neighborhood; ++v) {
                const auto it = shared.find(wall_key(order[u], order[v]));
                if (it == shared.end() || it->second < boundary_min) continue;
                const Vec2& pu = g.positions[u];
                const Vec2& pv = g.positions[v];
                Edge e;
                e.i = u;
                e.j = v;
                e.attr = {it->second, fold_angle(std::atan2(pv.y - pu.y, pv.x - pu.x)),
                          dist2d(pu, pv)};
                g.edges.push_back(e);
            }
        validate_graph(g);
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<SimulationConfig> enumerate_sweep_grid(int steps, uint64_t base_seed) {
    std::vector<SimulationConfig> out;
    out.reserve(288);
    int id = 0;
    for (double spring : kSweepSpring)
        for (double excl : kSweepExclusion)
            for (double rdiv : kSweepRdiv)
                for (double rangle : kSweepRangle) {
                    SimulationConfig cfg;
                    cfg.spring_constant = spring;
                    cfg.vertex_exclusion = excl;
                    cfg.r_div = rdiv;
                    cfg.r_angle = rangle;
                    cfg.steps = steps;
                    cfg.seed = mix_seed(base_seed, 5000 + id);
                    out.push_back(cfg);
                    ++id;
                }
    return out;
}

std::array<double, 4> config_params(const SimulationConfig& c) {
    return {c.spring_constant, c.vertex_exclusion, c.r_div, c.r_angle};
}

namespace {

// exact for a constant column, plain mean otherwise
double mean_of(const std::vector<double>& v) {
    bool constant = true;
    for (double x : v)
        if (x != v.front()) constant = false;
    if (constant) return v.front();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

std::vector<std::array<double, 4>> attribute_parameters(const Dataset& bio,
                                                        const std::vector<SimGraphs>& sims,
                                                        const ModelState& model, int k,
                                                        int threads) {
    validate_dataset(bio);
    if (k < 1) throw std::runtime_error("attribute_parameters: k must be >= 1");

    std::vector<const AttributedGraph*> sim_graphs;
    std::vector<std::array<double, 4>> sim_params;
    for (const auto& s : sims)
        for (const auto& g : s.graphs) {
            sim_graphs.push_back(&g);
            sim_params.push_back(config_params(s.config));
        }
    if (sim_graphs.empty()) throw std::runtime_error("attribute_parameters: no simulation graphs");
    const int n = bio.node_count();
    for (const auto* g : sim_graphs)
        if (g->n != n)
            throw std::runtime_error("attribute_parameters: simulation graphs have n=" +
                                     std::to_string(g->n) + ", observed graphs n=" +
                                     std::to_string(n));

    const int nsim = static_cast<int>(sim_graphs.size());
    const int kk = std::min(k, nsim);
    if (kk < k)
        std::cerr << "warning: only " << nsim << " simulation graphs for k=" << k
                  << ", using all of them\n";

    std::vector<Spectrum> sim_spec(nsim);
    parallel_for(nsim, threads, [&](int i) {
        const EdgeWeightCache cache = weigh_edges(model.edge, *sim_graphs[i]);
        sim_spec[i] = eigh(build_laplacian(*sim_graphs[i], cache.weights));
    });
    const int nbio = static_cast<int>(bio.graphs.size());
    std::vector<Spectrum> bio_spec(nbio);
    parallel_for(nbio, threads, [&](int i) {
        const EdgeWeightCache cache = weigh_edges(model.edge, bio.graphs[i]);
        bio_spec[i] = eigh(build_laplacian(bio.graphs[i], cache.weights));
    });

    std::vector<std::array<double, 4>> out(nbio);
    parallel_for(nbio, threads, [&](int i) {
        std::vector<std::pair<double, int>> dist(nsim);
        for (int j = 0; j < nsim; ++j)
            dist[j] = {gdd_pair(bio_spec[i], sim_spec[j], model.dist).distance, j};
        std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
        for (int c = 0; c < 4; ++c) {
            std::vector<double> vals(kk);
            for (int j = 0; j < kk; ++j) vals[j] = sim_params[dist[j].second][c];
            out[i][c] = mean_of(vals);
        }
    });
    return out;
}

std::string tessellation_to_json(const Tessellation& t, uint64_t seed,
                                 const std::string& config_hash) {
    nlohmann::json j;
    j["version"] = kToolVersion;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    nlohmann::json verts = nlohmann::json::array();
    for (const Vec2& v : t.vertices) verts.push_back({v.x, v.y});
    j["vertices"] = std::move(verts);
    nlohmann::json walls = nlohmann::json::array();
    for (const Wall& w : t.walls) walls.push_back({{"a", w.a}, {"b", w.b}, {"rest", w.rest}});
    j["walls"] = std::move(walls);
    nlohmann::json cells = nlohmann::json::array();
    for (const CellPoly& c : t.cells) cells.push_back(c.verts);
    j["cells"] = std::move(cells);
    return j.dump(1) + "\n";
}

Tessellation tessellation_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("mesh file is not valid JSON: ") + e.what());
    }
    Tessellation t;
    for (const auto& v : j.at("vertices"))
        t.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    for (const auto& w : j.at("walls"))
        t.walls.push_back({w.at("a").get<int>(), w.at("b").get<int>(), w.at("rest").get<double>()});
    for (const auto& c : j.at("cells")) {
        CellPoly poly;
        poly.verts = c.get<std::vector<int>>();
        t.cells.push_back(std::move(poly));
    }
    validate_tessellation(t);
    return t;
}

Dataset generate_two_class_dataset(const TwoClassOptions& opt) {
    Dataset out;
    for (int cls = 0; cls < 2; ++cls) {
        const double r_angle = cls == 0 ? opt.r_angle_low : opt.r_angle_high;
        int collected = 0;
        for (int sim_i = 0; collected < opt.per_class; ++sim_i) {
            if (sim_i >= opt.max_sims_per_class)
                throw std::runtime_error(
                    "generate_two_class_dataset: ran out of simulations before collecting " +
                    std::to_string(opt.per_class) + " graphs for class " + std::to_string(cls));
            SimulationConfig cfg = opt.base;
            cfg.r_angle = r_angle;
            cfg.seed = mix_seed(opt.seed, 1000 * (cls + 1) + sim_i);
            const Tessellation tess = simulate(cfg, hex_patch(opt.rings));
            const std::string prefix = "sim" + std::to_string(cls) + "_" + std::to_string(sim_i);
            int from_this_sim = 0;
            for (auto& g : extract_graphs(tess, opt.extraction, cls, prefix)) {
                if (collected >= opt.per_class) break;
                if (opt.graphs_per_sim > 0 && from_this_sim >= opt.graphs_per_sim) break;
                out.graphs.push_back(std::move(g));
                ++collected;
                ++from_this_sim;
            }
        }
    }
    validate_dataset(out);
    return out;
}

Dataset generate_attr_only_dataset(const AttrOnlyOptions& opt) {
    if (opt.channel != 0 && opt.channel != 2)
        throw std::runtime_error(
            "generate_attr_only_dataset: channel must be 0 (boundary) or 2 (length)");
    const int side = static_cast<int>(std::llround(std::sqrt(static_cast<double>(opt.nodes))));
    if (side * side != opt.nodes)
        throw std::runtime_error("generate_attr_only_dataset: nodes must be a perfect square");
    if (!(opt.mu_low > 0.0 && opt.mu_high > 0.0 && opt.jitter >= 0.0 && opt.jitter < 1.0))
        throw std::runtime_error("generate_attr_only_dataset: need positive means, jitter in [0,1)");

    // shared topology and positions: a side x side grid with 4-adjacency
    AttributedGraph base;
    base.n = opt.nodes;
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) base.positions.push_back({double(c), double(r)});
    const double vertical_angle = fold_angle(std::numbers::pi / 2.0);
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
            const int id = r * side + c;
            if (c + 1 < side) base.edges.push_back({id, id + 1, {1.0, 0.0, 1.0}});
            if (r + 1 < side) base.edges.push_back({id, id + side, {1.0, vertical_angle, 1.0}});
        }

    Dataset out;
    Rng rng(mix_seed(opt.seed, 37));
    for (int cls = 0; cls < 2; ++cls) {
        const double mu = cls == 0 ? opt.mu_low : opt.mu_high;
        for (int i = 0; i < opt.per_class; ++i) {
            AttributedGraph g = base;
            g.label = cls;
            g.source_id = "attr" + std::to_string(cls) + "_" + std::to_string(i);
            for (Edge& e : g.edges)
                e.attr[opt.channel] = mu * (1.0 + opt.jitter * (2.0 * rng.uniform() - 1.0));
            out.graphs.push_back(std::move(g));
        }
    }
    validate_dataset(out);
    return out;
}

std::string sweep_manifest_csv(const std::vector<SimGraphs>& sims,
                               const std::vector<std::string>& output_paths, uint64_t seed,
                               const std::string& config_hash) {
    std::ostringstream ss;
    ss << csv_provenance(seed, config_hash);
    ss << "config_id,spring_constant,vertex_exclusion,r_div,r_angle,seed,output_path\n";
    for (size_t i = 0; i < sims.size(); ++i) {
        const SimulationConfig& c = sims[i].config;
        ss << i << "," << format_sig(c.spring_constant, 12) << ","
           << format_sig(c.vertex_exclusion, 12) << "," << format_sig(c.r_div, 12) << ","
           << format_sig(c.r_angle, 12) << "," << c.seed << ","
           << (i < output_paths.size() ? output_paths[i] : std::string()) << "\n";
    }
    return ss.str();
}

std::string attribution_to_csv(const std::vector<std::array<double, 4>>& rows, uint64_t seed,
                               const std::string& config_hash) {
    std::ostringstream ss;
    ss << csv_provenance(seed, config_hash);
    ss << "id,mean_spring_constant,mean_vertex_exclusion,mean_r_div,mean_r_angle\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        ss << i;
        for (int c = 0; c < 4; ++c) ss << "," << format_sig(rows[i][c], 12);
        ss << "\n";
    }
    return ss.str();
}

}  // namespace d2d
