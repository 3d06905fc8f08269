#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "diff2dist/graph.hpp"
#include "diff2dist/matrix.hpp"
#include "diff2dist/trainer.hpp"

namespace d2d {

// Simplified 2-D polygonal cell-division model. The four swept parameters
// map onto analogous mechanisms of the full vertex-model simulators this
// stands in for: spring_constant drives the damped relaxation after each
// division, vertex_exclusion keeps new wall endpoints away from existing
// junctions, r_div adds random divisions above the lower area threshold,
// and r_angle replaces the shortest division plane with a uniformly random
// orientation.
struct SimulationConfig {
    double spring_constant = 1.0;
    double vertex_exclusion = 0.3;
    double r_div = 0.0;
    double r_angle = 0.0;
    int steps = 10000;
    uint64_t seed = 0;

    // mechanics of the simplified model
    double growth_rate = 0.002;        // per-step relative area growth
    double area_divide = 40.0;         // in relative area units (mean initial cell = 25)
    double area_random_min = 20.0;
    double new_wall_rest_factor = 0.8; // fresh walls start under tension
    double relax_dt = 0.05;
    double relax_tol = 1e-4;
    int relax_max_iter = 200;
};

struct Wall {
    int a = 0;
    int b = 0;
    double rest = 0.0;
};

struct CellPoly {
    std::vector<int> verts;   // counterclockwise cycle
};

struct Tessellation {
    std::vector<Vec2> vertices;
    std::vector<Wall> walls;
    std::vector<CellPoly> cells;
};

// Regular hexagonal patch with `rings` rings around a central cell
// (1 + 3R(R+1) cells), every cell of the requested area.
Tessellation hex_patch(int rings, double cell_area = 1.0);

double cell_area(const Tessellation& t, int cell);
Vec2 cell_centroid(const Tessellation& t, int cell);
double total_area(const Tessellation& t);
void validate_tessellation(const Tessellation& t);

struct SimStats {
    int divisions = 0;
    int skipped = 0;
    std::vector<double> division_angles;  // in [0, pi)
};

Tessellation simulate(const SimulationConfig& cfg, Tessellation init, SimStats* stats = nullptr);

struct ExtractionConfig {
    int neighborhood = 64;       // cells per graph
    double boundary_min = 0.0;   // <= 0: 0.2 x mean cell diameter
    double central_radius = 0.0; // <= 0: 0.6 x patch radius
};

// One graph per eligible center cell: the cell plus its (neighborhood - 1)
// nearest neighbors by centroid distance; edges where the shared wall length
// reaches boundary_min; attributes (shared boundary, angle from horizontal,
// centroid distance). Returns empty (with a warning) when the central region
// holds fewer than `neighborhood` cells.
std::vector<AttributedGraph> extract_graphs(const Tessellation& t, const ExtractionConfig& cfg,
                                            int label, const std::string& source_prefix);

// The full Table of swept values: 4 x 3 x 4 x 6 = 288 configurations.
extern const std::array<double, 4> kSweepSpring;
extern const std::array<double, 3> kSweepExclusion;
extern const std::array<double, 4> kSweepRdiv;
extern const std::array<double, 6> kSweepRangle;

std::vector<SimulationConfig> enumerate_sweep_grid(int steps, uint64_t base_seed);

std::array<double, 4> config_params(const SimulationConfig& c);

struct SimGraphs {
    SimulationConfig config;
    std::vector<AttributedGraph> graphs;
};

// For each observed graph: mean of the 4 simulation parameters over the k
// closest simulation graphs under the trained distance. Distance ties break
// toward the smaller simulation-graph index; a constant parameter column
// averages to exactly that constant.
std::vector<std::array<double, 4>> attribute_parameters(const Dataset& bio,
                                                        const std::vector<SimGraphs>& sims,
                                                        const ModelState& model, int k = 100,
                                                        int threads = 1);

std::string tessellation_to_json(const Tessellation& t, uint64_t seed,
                                 const std::string& config_hash);
Tessellation tessellation_from_json(const std::string& text);

// Synthetic dataset generators backing the CLI.
struct TwoClassOptions {
    double r_angle_low = 0.01;   // label 0
    double r_angle_high = 0.5;   // label 1
    int per_class = 100;
    int rings = 3;
    SimulationConfig base;       // r_angle overridden per class
    ExtractionConfig extraction;
    int max_sims_per_class = 256;
    int graphs_per_sim = 0;      // cap per simulation; 0: take all eligible
    uint64_t seed = 0;
};
Dataset generate_two_class_dataset(const TwoClassOptions& opt);

// Both classes share one topology and identical node positions; one
// attribute channel carries the only class signal, so unweighted spectra
// coincide exactly.
struct AttrOnlyOptions {
    int per_class = 30;
    int nodes = 16;              // laid out as a square grid
    int channel = 0;             // 0 = boundary length, 2 = edge length
    double mu_low = 1.0;         // label 0 channel mean
    double mu_high = 2.0;        // label 1 channel mean
    double jitter = 0.1;         // relative uniform jitter
    uint64_t seed = 0;
};
Dataset generate_attr_only_dataset(const AttrOnlyOptions& opt);

std::string sweep_manifest_csv(const std::vector<SimGraphs>& sims,
                               const std::vector<std::string>& output_paths, uint64_t seed,
                               const std::string& config_hash);
std::string attribution_to_csv(const std::vector<std::array<double, 4>>& rows, uint64_t seed,
                               const std::string& config_hash);

}  // namespace d2d
