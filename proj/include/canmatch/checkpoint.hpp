#pragma once

// Checkpoint format: a JSON manifest (version, config, layer shapes) next to
// one raw little-endian 64-bit float file per parameter array, named by layer
// index. Arrays are written in row-major scan order, so the round-trip is
// bitwise exact.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "canmatch/errors.hpp"
#include "canmatch/net.hpp"
#include "canmatch/train.hpp"

namespace canmatch {

inline constexpr int kCheckpointVersion = 1;

namespace detail_ckpt {

inline std::string layer_file_name(const std::string& stem, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), ".layer%02d.bin", index);
    return stem + buf;
}

inline std::string manifest_stem(const std::string& path) {
    std::filesystem::path p(path);
    if (p.extension() == ".json") p.replace_extension();
    return p.string();
}

inline void write_array(const std::string& path, const Mat& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(static_cast<std::size_t>(m.size()) * sizeof(double)));
}

inline Mat read_array(const std::string& path, Eigen::Index rows, Eigen::Index cols) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    auto bytes = static_cast<std::size_t>(in.tellg());
    std::size_t expected = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * sizeof(double);
    if (bytes != expected)
        throw ParseError("layer file '" + path + "' holds " + std::to_string(bytes) + " bytes, expected " +
                         std::to_string(expected));
    in.seekg(0);
    Mat m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(expected));
    if (!in) throw ParseError("layer file '" + path + "' is truncated");
    return m;
}

}  // namespace detail_ckpt

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    ckpt.params.validate();
    std::string stem = detail_ckpt::manifest_stem(path);
    std::vector<Mat> flat = flatten_params(ckpt.params);

    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < flat.size(); ++i) {
        std::string file = detail_ckpt::layer_file_name(stem, static_cast<int>(i));
        detail_ckpt::write_array(file, flat[i]);
        layers.push_back({{"index", i},
                          {"rows", flat[i].rows()},
                          {"cols", flat[i].cols()},
                          {"file", std::filesystem::path(file).filename().string()}});
    }
    nlohmann::json j{{"version", kCheckpointVersion},
                     {"kind", "canmatch-checkpoint"},
                     {"k", ckpt.params.k},
                     {"config", ckpt.config},
                     {"iteration", ckpt.iteration},
                     {"rng_digest", ckpt.rng_digest},
                     {"layers", layers}};
    std::ofstream out(stem + ".json");
    if (!out) throw DataError("cannot open '" + stem + ".json' for writing");
    out << j.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::string stem = detail_ckpt::manifest_stem(path);
    std::ifstream in(stem + ".json");
    if (!in) throw DataError("cannot open checkpoint manifest '" + stem + ".json'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed checkpoint manifest: ") + e.what());
    }
    try {
        if (!j.contains("version") || j.at("version").get<int>() != kCheckpointVersion)
            throw DataError("checkpoint version mismatch: expected " + std::to_string(kCheckpointVersion));
        Checkpoint ckpt;
        ckpt.config = j.at("config").get<TrainConfig>();
        ckpt.iteration = j.at("iteration").get<long>();
        ckpt.rng_digest = j.at("rng_digest").get<std::string>();
        int k = j.at("k").get<int>();

        std::filesystem::path dir = std::filesystem::path(stem).parent_path();
        std::vector<Mat> flat;
        for (const auto& layer : j.at("layers")) {
            auto file = (dir / layer.at("file").get<std::string>()).string();
            flat.push_back(detail_ckpt::read_array(file, layer.at("rows").get<Eigen::Index>(),
                                                   layer.at("cols").get<Eigen::Index>()));
        }
        ckpt.params = unflatten_params(k, flat);
        if (digest_params(ckpt.params, ckpt.config.seed, ckpt.iteration) != ckpt.rng_digest)
            throw DataError("checkpoint digest mismatch: layer files do not match the manifest");
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid checkpoint manifest: ") + e.what());
    }
}

}  // namespace canmatch
