// Command-line front end: generate -> train -> dist/eval/embed -> sweep ->
// attribute. Every output embeds the seed, a hash of the effective
// configuration and the tool version, and is written atomically, so reruns
// with identical inputs are byte-identical and failures leave no partial
// files.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diff2dist/distance.hpp"
#include "diff2dist/evaluation.hpp"
#include "diff2dist/graph.hpp"
#include "diff2dist/io.hpp"
#include "diff2dist/morpho_sim.hpp"
#include "diff2dist/parallel.hpp"
#include "diff2dist/trainer.hpp"

namespace {

using namespace d2d;

struct CommonOpts {
    uint64_t seed = 0;
    int threads = 0;   // 0: all cores
    std::string out = "out";
    double ratio = 0.85;
    bool group_by_source = false;
};

int effective_threads(const CommonOpts& c) {
    return c.threads > 0 ? c.threads : default_thread_count();
}

std::string out_path(const CommonOpts& c, const std::string& name) {
    return (std::filesystem::path(c.out) / name).string();
}

// hash of the semantically meaningful option set, embedded in every output;
// filesystem paths stay out so identical runs hash identically wherever
// their inputs and outputs live
std::string config_hash(const std::map<std::string, std::string>& kv) {
    std::ostringstream ss;
    for (const auto& [k, v] : kv) ss << k << "=" << v << ";";
    return hash_hex(fnv1a64(ss.str()));
}

std::string fmt(double v) { return format_sig(v, 17); }

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--seed", c.seed, "master seed recorded in all outputs");
    cmd->add_option("--threads", c.threads, "worker threads (0 = all cores)");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--ratio", c.ratio, "train fraction of the split");
    cmd->add_flag("--group-by-source", c.group_by_source,
                  "keep graphs sharing a source_id on one side of the split");
}

ContrastiveConfig make_train_config(const CommonOpts& common) {
    ContrastiveConfig cfg;
    cfg.seed = common.seed;
    cfg.threads = effective_threads(common);
    return cfg;
}

Dataset load_split_dataset(const std::string& path, const CommonOpts& common) {
    Dataset d = dataset_from_json(read_file(path));
    return split_dataset(d, common.ratio, common.seed, common.group_by_source);
}

ModelState state_for_eval(const Dataset& d, const std::string& checkpoint_path, int method,
                          const ContrastiveConfig& cfg) {
    if (!checkpoint_path.empty()) return checkpoint_from_json(read_file(checkpoint_path));
    return init_state(d, method_from_int(method), cfg);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"learned spectral graph distances on cell-morphology graphs"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value configuration file; flags override it");

    // ---- generate ----
    CommonOpts gen_common;
    std::string gen_mode = "classes";
    TwoClassOptions two;
    AttrOnlyOptions attr;
    int gen_steps = 500;
    double gen_growth = 0.003;
    auto* gen = app.add_subcommand("generate", "synthesize a labelled graph dataset");
    add_common(gen, gen_common);
    gen->add_option("--mode", gen_mode, "classes | attr")
        ->check(CLI::IsMember({"classes", "attr"}));
    gen->add_option("--per-class", two.per_class, "graphs per class");
    gen->add_option("--nodes", two.extraction.neighborhood, "nodes per graph");
    gen->add_option("--rings", two.rings, "initial hexagon rings");
    gen->add_option("--steps", gen_steps, "simulation steps");
    gen->add_option("--growth", gen_growth, "per-step relative area growth");
    gen->add_option("--r-angle-low", two.r_angle_low, "class-0 random-plane probability");
    gen->add_option("--r-angle-high", two.r_angle_high, "class-1 random-plane probability");
    gen->add_option("--spring", two.base.spring_constant, "wall stiffness");
    gen->add_option("--exclusion", two.base.vertex_exclusion, "vertex exclusion fraction");
    gen->add_option("--r-div", two.base.r_div, "random division probability");
    gen->add_option("--boundary-min", two.extraction.boundary_min,
                    "minimum shared boundary (<=0: 0.2 x mean cell diameter)");
    gen->add_option("--central-radius", two.extraction.central_radius,
                    "central region radius (<=0: 0.6 x patch radius)");
    gen->add_option("--channel", attr.channel, "attr mode: attribute channel (0 or 2)");
    gen->add_option("--mu-low", attr.mu_low, "attr mode: class-0 channel mean");
    gen->add_option("--mu-high", attr.mu_high, "attr mode: class-1 channel mean");
    gen->add_option("--jitter", attr.jitter, "attr mode: relative uniform jitter");

    // ---- train ----
    CommonOpts train_common;
    std::string train_dataset;
    int train_method = 4;
    ContrastiveConfig tcfg;
    auto* tr = app.add_subcommand("train", "contrastive training of a distance model");
    add_common(tr, train_common);
    tr->add_option("--dataset", train_dataset, "dataset JSON")->required();
    tr->add_option("--method", train_method, "1 unweighted | 2 gaussian | 3 gaussian+sigma | 4 mlp")
        ->check(CLI::Range(1, 4));
    tr->add_option("--epochs", tcfg.epochs, "training epochs");
    tr->add_option("--batch", tcfg.batch_pairs, "pairs per batch");
    tr->add_option("--pairs-per-epoch", tcfg.pairs_per_epoch, "pairs sampled per epoch (0: one batch)");
    tr->add_option("--lr", tcfg.learning_rate, "Adam learning rate");
    tr->add_option("--rho-lower", tcfg.rho_lower, "attract margin");
    tr->add_option("--rho-upper", tcfg.rho_upper, "repel margin");
    tr->add_option("--t-count", tcfg.t_count, "number of diffusion times");
    tr->add_option("--sigma-init", tcfg.sigma_init, "initial Gaussian sigma (<=0: auto)");
    tr->add_flag("--squared-distance", tcfg.squared_distance,
                 "Gaussian kernel on squared node distance");
    tr->add_flag("--mlp-identity-output", tcfg.mlp_identity_output,
                 "no squashing on the MLP output (PSD no longer guaranteed)");
    tr->add_flag("--positive-exponent", tcfg.positive_exponent,
                 "literal e^{+t lambda} map (overflow-guarded)");

    // ---- dist / eval / embed ----
    CommonOpts eval_common;
    std::string eval_dataset, eval_checkpoint;
    int eval_method = 1;
    int knn_min = 3, knn_max = 50;
    bool knn_literal = false;
    int embed_neighbors = 15;
    auto* di = app.add_subcommand("dist", "write the pairwise distance matrix");
    auto* ev = app.add_subcommand("eval", "kNN accuracy sweep on the learned distances");
    auto* em = app.add_subcommand("embed", "2-D Isomap embedding of the learned distances");
    for (CLI::App* cmd : {di, ev, em}) {
        add_common(cmd, eval_common);
        cmd->add_option("--dataset", eval_dataset, "dataset JSON")->required();
        cmd->add_option("--checkpoint", eval_checkpoint, "trained checkpoint JSON");
        cmd->add_option("--method", eval_method, "method for untrained parameters")
            ->check(CLI::Range(1, 4));
    }
    ev->add_option("--k-min", knn_min, "smallest K");
    ev->add_option("--k-max", knn_max, "largest K");
    ev->add_flag("--k-literal-pair", knn_literal, "evaluate only K in {k-min, k-max}");
    em->add_option("--neighbors", embed_neighbors, "Isomap neighbor count");

    // ---- sweep ----
    CommonOpts sweep_common;
    int sweep_steps = 500;
    int sweep_rings = 4;
    int sweep_neighborhood = 16;
    int sweep_cap = 8;
    double sweep_growth = 0.003;
    bool sweep_meshes = false;
    auto* sw = app.add_subcommand("sweep", "run the full 288-point simulation parameter grid");
    add_common(sw, sweep_common);
    sw->add_option("--steps", sweep_steps, "steps per simulation");
    sw->add_option("--rings", sweep_rings, "initial hexagon rings");
    sw->add_option("--nodes", sweep_neighborhood, "nodes per extracted graph");
    sw->add_option("--per-config-cap", sweep_cap, "max graphs kept per configuration");
    sw->add_option("--growth", sweep_growth, "per-step relative area growth");
    sw->add_flag("--write-meshes", sweep_meshes, "also write one mesh JSON per configuration");

    // ---- attribute ----
    CommonOpts attr_common;
    std::string attr_bio, attr_sim, attr_manifest, attr_checkpoint;
    int attr_k = 100;
    auto* at = app.add_subcommand("attribute",
                                  "mean simulation parameters of the k nearest sim graphs");
    add_common(at, attr_common);
    at->add_option("--bio", attr_bio, "observed dataset JSON")->required();
    at->add_option("--sim", attr_sim, "sweep dataset JSON")->required();
    at->add_option("--manifest", attr_manifest, "sweep manifest CSV")->required();
    at->add_option("--checkpoint", attr_checkpoint, "trained checkpoint JSON")->required();
    at->add_option("--k", attr_k, "nearest simulation graphs to average");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            std::map<std::string, std::string> kv{
                {"cmd", "generate"},   {"mode", gen_mode},
                {"seed", std::to_string(gen_common.seed)},
                {"per_class", std::to_string(two.per_class)},
            };
            Dataset d;
            if (gen_mode == "classes") {
                two.seed = gen_common.seed;
                two.base.steps = gen_steps;
                two.base.growth_rate = gen_growth;
                kv["nodes"] = std::to_string(two.extraction.neighborhood);
                kv["steps"] = std::to_string(gen_steps);
                kv["growth"] = fmt(gen_growth);
                kv["r_angle_low"] = fmt(two.r_angle_low);
                kv["r_angle_high"] = fmt(two.r_angle_high);
                kv["spring"] = fmt(two.base.spring_constant);
                kv["exclusion"] = fmt(two.base.vertex_exclusion);
                kv["r_div"] = fmt(two.base.r_div);
                d = generate_two_class_dataset(two);
            } else {
                attr.seed = gen_common.seed;
                attr.per_class = two.per_class;
                attr.nodes = two.extraction.neighborhood;
                kv["nodes"] = std::to_string(attr.nodes);
                kv["channel"] = std::to_string(attr.channel);
                kv["mu_low"] = fmt(attr.mu_low);
                kv["mu_high"] = fmt(attr.mu_high);
                kv["jitter"] = fmt(attr.jitter);
                d = generate_attr_only_dataset(attr);
            }
            const std::string hash = config_hash(kv);
            write_file_atomic(out_path(gen_common, "dataset.json"),
                              dataset_to_json(d, gen_common.seed, hash));
            std::cout << "wrote " << out_path(gen_common, "dataset.json") << " ("
                      << d.graphs.size() << " graphs of " << d.node_count() << " nodes)\n";
        }

        if (tr->parsed()) {
            tcfg.seed = train_common.seed;
            tcfg.threads = effective_threads(train_common);
            const Dataset d = load_split_dataset(train_dataset, train_common);
            const std::map<std::string, std::string> kv{
                {"cmd", "train"},
                {"method", std::to_string(train_method)},
                {"seed", std::to_string(tcfg.seed)},
                {"ratio", fmt(train_common.ratio)},
                {"epochs", std::to_string(tcfg.epochs)},
                {"batch", std::to_string(tcfg.batch_pairs)},
                {"lr", fmt(tcfg.learning_rate)},
                {"rho_lower", fmt(tcfg.rho_lower)},
                {"rho_upper", fmt(tcfg.rho_upper)},
                {"t_count", std::to_string(tcfg.t_count)},
            };
            const std::string hash = config_hash(kv);
            const TrainResult result = train(d, method_from_int(train_method), tcfg);
            write_file_atomic(out_path(train_common, "checkpoint.json"),
                              checkpoint_to_json(result.state, tcfg.seed, hash));
            write_file_atomic(out_path(train_common, "loss_history.csv"),
                              loss_history_to_csv(result.epoch_mean_loss, tcfg.seed, hash));
            std::cout << "wrote " << out_path(train_common, "checkpoint.json");
            if (!result.epoch_mean_loss.empty())
                std::cout << " (final epoch mean loss "
                          << format_sig(result.epoch_mean_loss.back(), 6) << ")";
            std::cout << "\n";
        }

        if (di->parsed() || ev->parsed() || em->parsed()) {
            const Dataset d = load_split_dataset(eval_dataset, eval_common);
            ContrastiveConfig cfg = make_train_config(eval_common);
            const ModelState state = state_for_eval(d, eval_checkpoint, eval_method, cfg);
            const std::map<std::string, std::string> kv{
                {"cmd", di->parsed() ? "dist" : (ev->parsed() ? "eval" : "embed")},
                {"method", std::to_string(static_cast<int>(state.method))},
                {"seed", std::to_string(eval_common.seed)},
                {"ratio", fmt(eval_common.ratio)},
            };
            const std::string hash = config_hash(kv);
            const DistanceMatrix dm =
                distance_matrix(d, state.edge, state.dist, effective_threads(eval_common));
            if (di->parsed()) {
                write_file_atomic(out_path(eval_common, "distances.csv"),
                                  distance_matrix_to_csv(dm, eval_common.seed, hash));
                write_file_atomic(out_path(eval_common, "labels.csv"),
                                  labels_to_csv(dm, eval_common.seed, hash));
                std::cout << "wrote " << out_path(eval_common, "distances.csv") << "\n";
            } else if (ev->parsed()) {
                const KnnReport report = knn_sweep(dm, knn_min, knn_max, knn_literal);
                write_file_atomic(out_path(eval_common, "knn_report.csv"),
                                  knn_report_to_csv(report, eval_common.seed, hash));
                std::cout << "best K=" << report.best_k << " accuracy="
                          << format_sig(report.best_accuracy, 6) << "\n";
            } else {
                const Embedding2D emb =
                    isomap_embed(dm, embed_neighbors, effective_threads(eval_common));
                write_file_atomic(out_path(eval_common, "embedding.csv"),
                                  embedding_to_csv(emb, dm, eval_common.seed, hash));
                std::cout << "wrote " << out_path(eval_common, "embedding.csv") << " ("
                          << emb.coords.size() << " rows)\n";
            }
        }

        if (sw->parsed()) {
            const std::map<std::string, std::string> kv{
                {"cmd", "sweep"},
                {"seed", std::to_string(sweep_common.seed)},
                {"steps", std::to_string(sweep_steps)},
                {"rings", std::to_string(sweep_rings)},
                {"nodes", std::to_string(sweep_neighborhood)},
                {"cap", std::to_string(sweep_cap)},
                {"growth", fmt(sweep_growth)},
            };
            const std::string hash = config_hash(kv);
            std::vector<SimulationConfig> grid =
                enumerate_sweep_grid(sweep_steps, sweep_common.seed);
            for (auto& c : grid) c.growth_rate = sweep_growth;
            std::vector<SimGraphs> sims(grid.size());
            std::vector<Tessellation> meshes(grid.size());
            ExtractionConfig ext;
            ext.neighborhood = sweep_neighborhood;
            parallel_for(static_cast<int>(grid.size()), effective_threads(sweep_common),
                         [&](int i) {
                             sims[i].config = grid[i];
                             Tessellation t = simulate(grid[i], hex_patch(sweep_rings));
                             std::vector<AttributedGraph> graphs = extract_graphs(
                                 t, ext, i, "cfg" + std::to_string(i));
                             if (static_cast<int>(graphs.size()) > sweep_cap)
                                 graphs.resize(sweep_cap);
                             sims[i].graphs = std::move(graphs);
                             if (sweep_meshes) meshes[i] = std::move(t);
                         });
            Dataset sim_dataset;
            std::vector<std::string> mesh_paths(grid.size());
            for (size_t i = 0; i < sims.size(); ++i) {
                for (const auto& g : sims[i].graphs) sim_dataset.graphs.push_back(g);
                if (sweep_meshes) {
                    const std::string rel = "meshes/cfg" + std::to_string(i) + ".json";
                    write_file_atomic(out_path(sweep_common, rel),
                                      tessellation_to_json(meshes[i], grid[i].seed, hash));
                    mesh_paths[i] = rel;
                }
            }
            write_file_atomic(out_path(sweep_common, "sweep_manifest.csv"),
                              sweep_manifest_csv(sims, mesh_paths, sweep_common.seed, hash));
            write_file_atomic(out_path(sweep_common, "sim_dataset.json"),
                              dataset_to_json(sim_dataset, sweep_common.seed, hash));
            std::cout << "wrote " << out_path(sweep_common, "sweep_manifest.csv") << " ("
                      << grid.size() << " configurations, " << sim_dataset.graphs.size()
                      << " graphs)\n";
        }

        if (at->parsed()) {
            const Dataset bio = dataset_from_json(read_file(attr_bio));
            const Dataset sim = dataset_from_json(read_file(attr_sim));
            const ModelState model = checkpoint_from_json(read_file(attr_checkpoint));

            // manifest rows keyed by config id; source_id prefix "cfg<N>/..."
            // maps each simulation graph back to its configuration
            std::map<int, SimulationConfig> configs;
            std::istringstream manifest(read_file(attr_manifest));
            std::string line;
            while (std::getline(manifest, line)) {
                if (line.empty() || line[0] == '#' || line.rfind("config_id", 0) == 0) continue;
                std::istringstream row(line);
                std::string field;
                std::vector<std::string> fields;
                while (std::getline(row, field, ',')) fields.push_back(field);
                if (fields.size() < 6) throw std::runtime_error("corrupt manifest row: " + line);
                SimulationConfig c;
                c.spring_constant = std::stod(fields[1]);
                c.vertex_exclusion = std::stod(fields[2]);
                c.r_div = std::stod(fields[3]);
                c.r_angle = std::stod(fields[4]);
                c.seed = std::stoull(fields[5]);
                configs[std::stoi(fields[0])] = c;
            }
            std::map<int, SimGraphs> grouped;
            for (const auto& g : sim.graphs) {
                const size_t slash = g.source_id.find('/');
                if (g.source_id.rfind("cfg", 0) != 0 || slash == std::string::npos)
                    throw std::runtime_error("simulation graph source_id '" + g.source_id +
                                             "' does not name its configuration");
                const int id = std::stoi(g.source_id.substr(3, slash - 3));
                const auto it = configs.find(id);
                if (it == configs.end())
                    throw std::runtime_error("configuration " + std::to_string(id) +
                                             " missing from the manifest");
                grouped[id].config = it->second;
                grouped[id].graphs.push_back(g);
            }
            std::vector<SimGraphs> sims;
            for (auto& [id, s] : grouped) sims.push_back(std::move(s));

            const std::map<std::string, std::string> kv{
                {"cmd", "attribute"},
                {"k", std::to_string(attr_k)},
                {"seed", std::to_string(attr_common.seed)},
            };
            const std::string hash = config_hash(kv);
            const auto rows =
                attribute_parameters(bio, sims, model, attr_k, effective_threads(attr_common));
            write_file_atomic(out_path(attr_common, "attribution.csv"),
                              attribution_to_csv(rows, attr_common.seed, hash));
            std::cout << "wrote " << out_path(attr_common, "attribution.csv") << " ("
                      << rows.size() << " rows)\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
