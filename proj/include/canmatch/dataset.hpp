#pragma once

// Dataset generation and the on-disk layout: a manifest.json listing per-pair
// files (clouds as XYZ, maps in the map format), seeds, and generator
// parameters.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "canmatch/generator.hpp"
#include "canmatch/rng.hpp"
#include "canmatch/shape_io.hpp"

namespace canmatch {

inline constexpr int kDatasetVersion = 1;

struct PairRecord {
    std::string id;
    std::string x_file, y_file, map_file, sym_x_file, sym_y_file;
    std::uint64_t template_seed = 0, pose_seed_x = 0, pose_seed_y = 0, pair_seed = 0;
    std::string partial = "none";
    double removed_fraction = 0.0;
};

inline void to_json(nlohmann::json& j, const PairRecord& r) {
    j = nlohmann::json{{"id", r.id},
                       {"x", r.x_file},
                       {"y", r.y_file},
                       {"map_xy", r.map_file},
                       {"sym_x", r.sym_x_file},
                       {"sym_y", r.sym_y_file},
                       {"template_seed", r.template_seed},
                       {"pose_seed_x", r.pose_seed_x},
                       {"pose_seed_y", r.pose_seed_y},
                       {"pair_seed", r.pair_seed},
                       {"partial", r.partial},
                       {"removed_fraction", r.removed_fraction}};
}

inline void from_json(const nlohmann::json& j, PairRecord& r) {
    j.at("id").get_to(r.id);
    j.at("x").get_to(r.x_file);
    j.at("y").get_to(r.y_file);
    j.at("map_xy").get_to(r.map_file);
    j.at("sym_x").get_to(r.sym_x_file);
    j.at("sym_y").get_to(r.sym_y_file);
    j.at("template_seed").get_to(r.template_seed);
    j.at("pose_seed_x").get_to(r.pose_seed_x);
    j.at("pose_seed_y").get_to(r.pose_seed_y);
    j.at("pair_seed").get_to(r.pair_seed);
    j.at("partial").get_to(r.partial);
    j.at("removed_fraction").get_to(r.removed_fraction);
}

struct DatasetManifest {
    int version = kDatasetVersion;
    std::uint64_t seed = 0;
    int points = 0;
    std::string partial = "none";
    std::vector<PairRecord> pairs;
};

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
    j = nlohmann::json{{"version", m.version},
                       {"kind", "canmatch-dataset"},
                       {"seed", m.seed},
                       {"points", m.points},
                       {"partial", m.partial},
                       {"pairs", m.pairs}};
}

inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
    j.at("version").get_to(m.version);
    j.at("seed").get_to(m.seed);
    j.at("points").get_to(m.points);
    j.at("partial").get_to(m.partial);
    j.at("pairs").get_to(m.pairs);
}

namespace detail_dataset {

inline std::uint64_t nonzero(std::uint64_t s) { return s == 0 ? 1 : s; }

}  // namespace detail_dataset

// Seeds for the i-th pair of a dataset. Pose seeds are kept nonzero because
// pose seed 0 means the rest pose.
struct PairSeeds {
    std::uint64_t template_seed, pose_x, pose_y, pair_seed;

    static PairSeeds for_index(std::uint64_t dataset_seed, std::size_t i) {
        auto u = static_cast<std::uint64_t>(i);
        return PairSeeds{mix_seed(dataset_seed, u, 1), detail_dataset::nonzero(mix_seed(dataset_seed, u, 2)),
                         detail_dataset::nonzero(mix_seed(dataset_seed, u, 3)), mix_seed(dataset_seed, u, 4)};
    }
};

// In-memory dataset generation (shared by training runs and the CLI).
inline std::vector<PairGenResult> generate_dataset(int pairs, int points, Partiality partial,
                                                   std::uint64_t seed) {
    std::vector<PairGenResult> out;
    out.reserve(static_cast<std::size_t>(pairs));
    for (int i = 0; i < pairs; ++i) {
        PairSeeds s = PairSeeds::for_index(seed, static_cast<std::size_t>(i));
        out.push_back(gen_pair(s.template_seed, s.pose_x, s.pose_y, points, partial, s.pair_seed));
    }
    return out;
}

inline std::vector<ShapePairSample> samples_of(std::vector<PairGenResult> generated) {
    std::vector<ShapePairSample> out;
    out.reserve(generated.size());
    for (auto& g : generated) out.push_back(std::move(g.sample));
    return out;
}

// Generates and writes a dataset directory; returns the manifest.
inline DatasetManifest write_dataset(const std::string& dir, int pairs, int points, Partiality partial,
                                     std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    DatasetManifest manifest;
    manifest.seed = seed;
    manifest.points = points;
    manifest.partial = to_string(partial);
    for (int i = 0; i < pairs; ++i) {
        PairSeeds s = PairSeeds::for_index(seed, static_cast<std::size_t>(i));
        PairGenResult pg = gen_pair(s.template_seed, s.pose_x, s.pose_y, points, partial, s.pair_seed);

        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "pair_%04d", i);
        PairRecord rec;
        rec.id = idbuf;
        rec.x_file = rec.id + "_x.xyz";
        rec.y_file = rec.id + "_y.xyz";
        rec.map_file = rec.id + "_map_xy.map";
        rec.sym_x_file = rec.id + "_sym_x.map";
        rec.sym_y_file = rec.id + "_sym_y.map";
        rec.template_seed = s.template_seed;
        rec.pose_seed_x = s.pose_x;
        rec.pose_seed_y = s.pose_y;
        rec.pair_seed = s.pair_seed;
        rec.partial = to_string(partial);
        rec.removed_fraction = pg.removed_fraction;

        save_cloud((fs::path(dir) / rec.x_file).string(), pg.sample.x);
        save_cloud((fs::path(dir) / rec.y_file).string(), pg.sample.y);
        save_map((fs::path(dir) / rec.map_file).string(), pg.sample.map_xy);
        save_map((fs::path(dir) / rec.sym_x_file).string(), pg.sample.sym_x);
        save_map((fs::path(dir) / rec.sym_y_file).string(), pg.sample.sym_y);
        manifest.pairs.push_back(std::move(rec));
    }
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw DataError("cannot write manifest in '" + dir + "'");
    out << nlohmann::json(manifest).dump(2) << '\n';
    return manifest;
}

inline DatasetManifest load_manifest(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw DataError("no manifest.json in '" + dir + "'");
    nlohmann::json j;
    try {
        in >> j;
        auto m = j.get<DatasetManifest>();
        if (m.version != kDatasetVersion) throw DataError("dataset version mismatch in '" + dir + "'");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed manifest.json in '" + dir + "': " + e.what());
    }
}

inline std::vector<ShapePairSample> load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    DatasetManifest manifest = load_manifest(dir);
    std::vector<ShapePairSample> out;
    out.reserve(manifest.pairs.size());
    for (const auto& rec : manifest.pairs) {
        ShapePairSample s;
        s.x = load_cloud((fs::path(dir) / rec.x_file).string());
        s.x.label = rec.id + "_x";
        s.y = load_cloud((fs::path(dir) / rec.y_file).string());
        s.y.label = rec.id + "_y";
        s.map_xy = load_map((fs::path(dir) / rec.map_file).string());
        s.sym_x = load_map((fs::path(dir) / rec.sym_x_file).string());
        s.sym_y = load_map((fs::path(dir) / rec.sym_y_file).string());
        validate(s);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace canmatch
