#pragma once

// Command-line entry point: gen, train, match, eval, sweep, gradcheck.
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
// Train/sweep configuration resolves flag > config-file value > default.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "canmatch/checkpoint.hpp"
#include "canmatch/dataset.hpp"
#include "canmatch/eval.hpp"
#include "canmatch/gradcheck_suite.hpp"
#include "canmatch/shape_io.hpp"
#include "canmatch/train.hpp"

namespace canmatch::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

namespace detail_cli {

inline nlohmann::json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path + "'");
    try {
        nlohmann::json j;
        in >> j;
        if (!j.is_object()) throw DataError("config file '" + path + "' must hold a JSON object");
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed config file '" + path + "': " + e.what());
    }
}

// Flat config keys mirror the flag names; anything else is rejected.
inline void merge_config_json(TrainConfig& cfg, std::string& mode, const nlohmann::json& j) {
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "k")
                value.get_to(cfg.k);
            else if (key == "points")
                value.get_to(cfg.points_per_shape);
            else if (key == "batch")
                value.get_to(cfg.batch_size);
            else if (key == "lr")
                value.get_to(cfg.learning_rate);
            else if (key == "epochs")
                value.get_to(cfg.epochs);
            else if (key == "lambda")
                value.get_to(cfg.lambda);
            else if (key == "gamma")
                value.get_to(cfg.gamma);
            else if (key == "eps")
                value.get_to(cfg.eps);
            else if (key == "seed")
                cfg.seed = value.get<std::uint64_t>();
            else if (key == "pairs")
                value.get_to(cfg.dataset_size);
            else if (key == "partial")
                cfg.partial_mode = partiality_from_string(value.get<std::string>());
            else if (key == "mode")
                value.get_to(mode);
            else
                throw DataError("unknown config key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw DataError("bad value for config key '" + key + "': " + e.what());
        }
    }
}

// Bound flag storage for train-like commands plus the CLI11 options needed to
// tell whether a flag was given explicitly.
struct TrainOptions {
    TrainConfig flags = TrainConfig::desk_defaults();
    std::string mode = "full";
    std::string config_path;
    CLI::Option *o_k = nullptr, *o_points = nullptr, *o_batch = nullptr, *o_lr = nullptr,
                *o_epochs = nullptr, *o_lambda = nullptr, *o_gamma = nullptr, *o_eps = nullptr,
                *o_seed = nullptr, *o_mode = nullptr, *o_partial = nullptr, *o_pairs = nullptr;
    std::string partial = "none";

    void attach(CLI::App* cmd) {
        o_k = cmd->add_option("--k", flags.k, "embedding dimension (desk default 24, full scale 50)");
        o_points = cmd->add_option("--points", flags.points_per_shape,
                                   "points sampled per shape each iteration (desk 256, full scale 3000)");
        o_batch = cmd->add_option("--batch", flags.batch_size, "batch size (desk 8, full scale 20)");
        o_lr = cmd->add_option("--lr", flags.learning_rate, "Adam learning rate");
        o_epochs = cmd->add_option("--epochs", flags.epochs, "training epochs");
        o_lambda = cmd->add_option("--lambda", flags.lambda, "weight of the linearly invariant loss");
        o_gamma = cmd->add_option("--gamma", flags.gamma, "weight of the commutativity loss");
        o_eps = cmd->add_option("--eps", flags.eps, "ridge regularizer of the symmetry-map solve");
        o_seed = cmd->add_option("--seed", flags.seed, "master seed");
        o_mode = cmd->add_option("--mode", mode, "loss-weight regime: full (lambda=gamma=5) or partial (1, 0.1)")
                     ->check(CLI::IsMember({"full", "partial"}));
        cmd->add_option("--config", config_path, "JSON config file; flags override file values");
    }

    void attach_generation(CLI::App* cmd) {
        o_partial = cmd->add_option("--partial", partial, "partiality of generated data: none|cut|hole")
                        ->check(CLI::IsMember({"none", "cut", "hole"}));
        o_pairs = cmd->add_option("--pairs", flags.dataset_size, "training pairs generated per run");
    }

    TrainConfig resolve() const {
        TrainConfig cfg = TrainConfig::desk_defaults();
        nlohmann::json file;
        if (!config_path.empty()) file = read_config_file(config_path);

        // mode decides the default loss weights before any explicit values land
        std::string m = "full";
        if (file.contains("mode")) m = file.at("mode").get<std::string>();
        if (o_mode && o_mode->count()) m = mode;
        if (m == "partial") {
            cfg.lambda = LossWeights::partial_matching().lambda;
            cfg.gamma = LossWeights::partial_matching().gamma;
        } else if (m != "full") {
            throw ConfigError("unknown mode '" + m + "' (expected full|partial)");
        }

        std::string mode_sink = m;
        merge_config_json(cfg, mode_sink, file);

        if (o_k->count()) cfg.k = flags.k;
        if (o_points->count()) cfg.points_per_shape = flags.points_per_shape;
        if (o_batch->count()) cfg.batch_size = flags.batch_size;
        if (o_lr->count()) cfg.learning_rate = flags.learning_rate;
        if (o_epochs->count()) cfg.epochs = flags.epochs;
        if (o_lambda->count()) cfg.lambda = flags.lambda;
        if (o_gamma->count()) cfg.gamma = flags.gamma;
        if (o_eps->count()) cfg.eps = flags.eps;
        if (o_seed->count()) cfg.seed = flags.seed;
        if (o_partial && o_partial->count()) cfg.partial_mode = partiality_from_string(partial);
        if (o_pairs && o_pairs->count()) cfg.dataset_size = flags.dataset_size;
        cfg.validate();
        return cfg;
    }
};

inline std::string default_log_path(const std::string& ckpt_path) {
    std::filesystem::path p(ckpt_path);
    if (p.extension() == ".json") p.replace_extension();
    return p.string() + ".log.csv";
}

}  // namespace detail_cli

inline int run(int argc, const char* const* argv) {
    CLI::App app{"canmatch: canonical point embeddings for non-rigid shape matching"};
    app.require_subcommand(1);

    // ---- gen ------------------------------------------------------------
    auto* gen = app.add_subcommand("gen", "generate a synthetic shape-pair dataset");
    struct {
        std::string out;
        int pairs = 8;
        int points = 1024;
        std::string partial = "none";
        std::uint64_t seed = 1;
    } g;
    gen->add_option("--out", g.out, "output directory")->required();
    gen->add_option("--pairs", g.pairs, "number of shape pairs")->check(CLI::PositiveNumber);
    gen->add_option("--points", g.points, "points per generated cloud (even)")->check(CLI::PositiveNumber);
    gen->add_option("--partial", g.partial, "partiality: none|cut|hole")
        ->check(CLI::IsMember({"none", "cut", "hole"}));
    gen->add_option("--seed", g.seed, "dataset seed");
    gen->callback([&]() {
        DatasetManifest m = write_dataset(g.out, g.pairs, g.points, partiality_from_string(g.partial), g.seed);
        std::cout << "wrote " << m.pairs.size() << " pairs to " << g.out << "\n";
    });

    // ---- train ----------------------------------------------------------
    auto* train = app.add_subcommand("train", "train an encoder on a generated dataset");
    struct {
        std::string data, out, log;
        bool timing = false;
    } t;
    detail_cli::TrainOptions topts;
    train->add_option("--data", t.data, "dataset directory (from `gen`)")->required();
    train->add_option("--out", t.out, "checkpoint path (JSON manifest; layer files land beside it)")
        ->required();
    train->add_option("--log", t.log, "training-log CSV path (default: <out>.log.csv)");
    train->add_flag("--timing", t.timing, "record wall-clock ms per iteration (off keeps logs bit-reproducible)");
    topts.attach(train);
    train->callback([&]() {
        TrainConfig cfg = topts.resolve();
        auto dataset = load_dataset(t.data);
        cfg.dataset_size = static_cast<int>(dataset.size());
        std::string log_path = t.log.empty() ? detail_cli::default_log_path(t.out) : t.log;
        std::ofstream log(log_path);
        if (!log) throw DataError("cannot open '" + log_path + "' for writing");
        log << kTrainLogHeader << '\n';
        Checkpoint ckpt = fit(cfg, dataset, [&](const TrainLogRow& r) { append_log_row(log, r); }, t.timing);
        save_checkpoint(t.out, ckpt);
        std::cout << "trained " << ckpt.iteration << " iterations; checkpoint " << t.out << ", log "
                  << log_path << "\n";
    });

    // ---- match ----------------------------------------------------------
    auto* match = app.add_subcommand("match", "match a source cloud to a target cloud");
    struct {
        std::string ckpt, source, target, out;
        int k = 0;
    } mt;
    match->add_option("--ckpt", mt.ckpt, "checkpoint path")->required();
    match->add_option("--source", mt.source, "source cloud (xyz/off)")->required();
    match->add_option("--target", mt.target, "target cloud (xyz/off)")->required();
    match->add_option("--out", mt.out, "output map path")->required();
    match->add_option("--k", mt.k, "expected embedding dimension (checked against the checkpoint)");
    match->callback([&]() {
        Checkpoint ckpt = load_checkpoint(mt.ckpt);
        if (mt.k > 0 && mt.k != ckpt.params.k)
            throw DataError("checkpoint embeds with k=" + std::to_string(ckpt.params.k) +
                            " but k=" + std::to_string(mt.k) + " was requested");
        PointCloud src = load_cloud(mt.source);
        PointCloud dst = load_cloud(mt.target);
        Embedder emb = Embedder::from_checkpoint(ckpt);
        IndexMap pred = nn_correspondence(emb.embed(src), emb.embed(dst));
        save_map(mt.out, pred);
        std::cout << "matched " << pred.src_size << " points -> " << mt.out << "\n";
    });

    // ---- eval -----------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "evaluate correspondences on a dataset");
    struct {
        std::string ckpt, data, out;
        std::string baseline = "none";
        int k = 24;
        std::uint64_t seed = 1;
        bool save_maps = false;
    } ev;
    eval->add_option("--ckpt", ev.ckpt, "checkpoint path (omit when using --baseline)");
    eval->add_option("--data", ev.data, "dataset directory")->required();
    eval->add_option("--out", ev.out, "report stem; writes <stem>.json and <stem>.csv")->required();
    eval->add_option("--baseline", ev.baseline, "none|coords|untrained")
        ->check(CLI::IsMember({"none", "coords", "untrained"}));
    eval->add_option("--k", ev.k, "embedding dimension for --baseline untrained, or a checkpoint check");
    eval->add_option("--seed", ev.seed, "init seed for --baseline untrained");
    eval->add_flag("--save-maps", ev.save_maps, "also write predicted maps next to the report");
    eval->callback([&]() {
        Embedder emb = Embedder::raw_coords();
        if (ev.baseline == "none") {
            if (ev.ckpt.empty()) throw ConfigError("eval: --ckpt is required unless --baseline is given");
            Checkpoint ckpt = load_checkpoint(ev.ckpt);
            if (eval->get_option("--k")->count() && ev.k != ckpt.params.k)
                throw DataError("checkpoint embeds with k=" + std::to_string(ckpt.params.k) +
                                " but k=" + std::to_string(ev.k) + " was requested");
            emb = Embedder::from_checkpoint(ckpt);
        } else if (ev.baseline == "untrained") {
            emb = Embedder::from_params(init_encoder(ev.k, ev.seed), "untrained");
        }
        auto dataset = load_dataset(ev.data);
        std::vector<IndexMap> predicted;
        SuiteReport rep = evaluate_suite(emb, dataset, ev.data, &predicted);
        save_report_json(ev.out + ".json", rep);
        save_report_csv(ev.out + ".csv", rep);
        if (ev.save_maps) {
            DatasetManifest manifest = load_manifest(ev.data);
            for (std::size_t i = 0; i < predicted.size(); ++i)
                save_map(ev.out + "." + manifest.pairs[i].id + ".map", predicted[i]);
        }
        std::cout << "mean_x100 " << rep.mean_x100 << " over " << rep.pair_means_x100.size()
                  << " pairs -> " << ev.out << ".{json,csv}\n";
    });

    // ---- sweep ----------------------------------------------------------
    auto* sw = app.add_subcommand("sweep", "sensitivity sweep over embedding or training-set size");
    struct {
        std::string axis = "embedding_size";
        std::vector<int> values;
        std::string out;
        int eval_pairs = 10;
        std::uint64_t eval_seed = 9090;
        int gen_points = 1024;
    } sv;
    detail_cli::TrainOptions sopts;
    sw->add_option("--axis", sv.axis, "embedding_size|train_size")
        ->check(CLI::IsMember({"embedding_size", "train_size"}));
    sw->add_option("--values", sv.values, "axis values (comma separated)")->required()->delimiter(',');
    sw->add_option("--out", sv.out, "output CSV path")->required();
    sw->add_option("--eval-pairs", sv.eval_pairs, "held-out pairs to evaluate on");
    sw->add_option("--eval-seed", sv.eval_seed, "seed of the held-out suite");
    sw->add_option("--gen-points", sv.gen_points, "points per generated cloud");
    sopts.attach(sw);
    sopts.attach_generation(sw);
    sw->callback([&]() {
        TrainConfig cfg = sopts.resolve();
        SweepAxis axis = sweep_axis_from_string(sv.axis);
        auto held_out = samples_of(
            generate_dataset(sv.eval_pairs, sv.gen_points, cfg.partial_mode, sv.eval_seed));
        auto rows = sweep(axis, sv.values, cfg, sv.gen_points, held_out);
        save_sweep_csv(sv.out, axis, rows);
        for (const auto& r : rows)
            std::cout << to_string(axis) << "=" << r.value << " mean_x100=" << r.mean_x100 << "\n";
    });

    // ---- gradcheck --------------------------------------------------------
    auto* gc = app.add_subcommand("gradcheck", "run the finite-difference gradient suite");
    struct {
        int reps = 20;
    } gv;
    gc->add_option("--reps", gv.reps, "repetitions per op")->check(CLI::PositiveNumber);
    gc->callback([&]() {
        GradSuiteResult r = run_gradcheck_suite(gv.reps, std::cout);
        std::cout << r.checks - r.failures << "/" << r.checks << " gradient checks passed\n";
        if (!r.pass()) throw NumericalError("gradient checks failed");
    });

    try {
        app.parse(argc, argv);
        return kExitOk;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}

}  // namespace canmatch::cli
