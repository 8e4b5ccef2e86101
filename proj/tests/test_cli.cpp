#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "canmatch/checkpoint.hpp"
#include "canmatch/cli.hpp"

using namespace canmatch;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
    std::vector<std::string> storage{"canmatch"};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : storage) argv.push_back(s.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

fs::path fresh_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / "canmatch_cli_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("gen writes the documented files and is byte-deterministic") {
    auto d1 = fresh_dir("gen1");
    auto d2 = fresh_dir("gen2");
    CHECK(run_cli({"gen", "--out", d1.string(), "--pairs", "1", "--points", "64", "--seed", "5"}) == 0);
    CHECK(run_cli({"gen", "--out", d2.string(), "--pairs", "1", "--points", "64", "--seed", "5"}) == 0);

    // exactly 2 clouds + 3 maps + manifest per pair
    int clouds = 0, maps = 0, manifests = 0;
    for (const auto& e : fs::directory_iterator(d1)) {
        auto ext = e.path().extension().string();
        if (ext == ".xyz") ++clouds;
        if (ext == ".map") ++maps;
        if (e.path().filename() == "manifest.json") ++manifests;
    }
    CHECK(clouds == 2);
    CHECK(maps == 3);
    CHECK(manifests == 1);

    for (const auto& e : fs::directory_iterator(d1)) {
        auto other = d2 / e.path().filename();
        CHECK(slurp(e.path()) == slurp(other));
    }
}

TEST_CASE("gen cut mode records the removal fraction in range") {
    auto d = fresh_dir("gencut");
    CHECK(run_cli({"gen", "--out", d.string(), "--pairs", "3", "--points", "128", "--partial", "cut",
                   "--seed", "3"}) == 0);
    DatasetManifest m = load_manifest(d.string());
    REQUIRE(m.pairs.size() == 3);
    for (const auto& r : m.pairs) {
        CHECK(r.partial == "cut");
        CHECK(r.removed_fraction >= 0.25);
        CHECK(r.removed_fraction <= 0.45);
    }
}

TEST_CASE("usage errors exit with code 2") {
    CHECK(run_cli({"gen"}) == 2);                        // missing --out
    CHECK(run_cli({"bogus"}) == 2);                      // unknown subcommand
    CHECK(run_cli({"gen", "--out", "x", "--nope"}) == 2);  // unknown flag
    CHECK(run_cli({"--help"}) == 0);
}

TEST_CASE("train produces a checkpoint and a log; identical seeds are bitwise identical") {
    auto data = fresh_dir("traindata");
    CHECK(run_cli({"gen", "--out", data.string(), "--pairs", "4", "--points", "32", "--seed", "7"}) == 0);

    auto out1 = fresh_dir("train1") / "model.json";
    auto out2 = fresh_dir("train2") / "model.json";
    auto args = [&](const fs::path& out) {
        return std::vector<std::string>{
            "train", "--data", data.string(), "--out", out.string(), "--k", "6", "--points", "24",
            "--batch", "2", "--epochs", "2", "--seed", "13"};
    };
    CHECK(run_cli(args(out1)) == 0);
    CHECK(run_cli(args(out2)) == 0);

    CHECK(fs::exists(out1));
    auto log1 = out1.parent_path() / "model.log.csv";
    auto log2 = out2.parent_path() / "model.log.csv";
    REQUIRE(fs::exists(log1));

    // training-log rows: 4 samples / batch 2 * 2 epochs = 4 iterations + header
    std::ifstream log(log1);
    std::string line;
    std::getline(log, line);
    CHECK(line == kTrainLogHeader);
    int rows = 0;
    while (std::getline(log, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4);

    CHECK(slurp(log1) == slurp(log2));
    CHECK(slurp(out1) == slurp(out2));
    for (int i = 0; i < 8; ++i) {
        char layer[32];
        std::snprintf(layer, sizeof(layer), "model.layer%02d.bin", i);
        CHECK(slurp(out1.parent_path() / layer) == slurp(out2.parent_path() / layer));
    }
}

TEST_CASE("epochs 0 writes an init-only checkpoint") {
    auto data = fresh_dir("traindata0");
    CHECK(run_cli({"gen", "--out", data.string(), "--pairs", "2", "--points", "24", "--seed", "7"}) == 0);
    auto out = fresh_dir("train0") / "model.json";
    CHECK(run_cli({"train", "--data", data.string(), "--out", out.string(), "--k", "5", "--points",
                   "24", "--epochs", "0", "--seed", "21"}) == 0);
    Checkpoint ck = load_checkpoint(out.string());
    CHECK(ck.iteration == 0);
    EncoderParams init = init_encoder(5, 21);
    auto fa = flatten_params(ck.params), fb = flatten_params(init);
    for (std::size_t i = 0; i < fa.size(); ++i) CHECK((fa[i] - fb[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("config file merges under flags") {
    auto d = fresh_dir("cfg");
    auto data = d / "data";
    CHECK(run_cli({"gen", "--out", data.string(), "--pairs", "2", "--points", "24", "--seed", "2"}) == 0);

    auto cfg_path = d / "config.json";
    std::ofstream(cfg_path) << R"({"k": 5, "epochs": 0, "lambda": 2.5, "seed": 77})";

    auto out = d / "model.json";
    // --k on the command line beats the file; epochs/lambda/seed come from the file
    CHECK(run_cli({"train", "--data", data.string(), "--out", out.string(), "--config",
                   cfg_path.string(), "--k", "6", "--points", "24"}) == 0);
    Checkpoint ck = load_checkpoint(out.string());
    CHECK(ck.params.k == 6);
    CHECK(ck.config.lambda == 2.5);
    CHECK(ck.config.seed == 77);
    CHECK(ck.iteration == 0);

    // unknown config keys are rejected
    std::ofstream(cfg_path) << R"({"zap": 1})";
    CHECK(run_cli({"train", "--data", data.string(), "--out", out.string(), "--config",
                   cfg_path.string()}) == 3);
}

TEST_CASE("mode picks the documented loss-weight defaults") {
    auto d = fresh_dir("mode");
    auto data = d / "data";
    CHECK(run_cli({"gen", "--out", data.string(), "--pairs", "2", "--points", "24", "--seed", "2"}) == 0);

    auto out_full = d / "full.json";
    CHECK(run_cli({"train", "--data", data.string(), "--out", out_full.string(), "--k", "5", "--points",
                   "24", "--epochs", "0", "--mode", "full"}) == 0);
    Checkpoint full = load_checkpoint(out_full.string());
    CHECK(full.config.lambda == 5.0);
    CHECK(full.config.gamma == 5.0);

    auto out_partial = d / "partial.json";
    CHECK(run_cli({"train", "--data", data.string(), "--out", out_partial.string(), "--k", "5",
                   "--points", "24", "--epochs", "0", "--mode", "partial"}) == 0);
    Checkpoint part = load_checkpoint(out_partial.string());
    CHECK(part.config.lambda == 1.0);
    CHECK(part.config.gamma == 0.1);

    auto out_override = d / "override.json";
    CHECK(run_cli({"train", "--data", data.string(), "--out", out_override.string(), "--k", "5",
                   "--points", "24", "--epochs", "0", "--mode", "partial", "--gamma", "0.7"}) == 0);
    CHECK(load_checkpoint(out_override.string()).config.gamma == 0.7);
}

TEST_CASE("match of a cloud to itself is the identity map") {
    auto d = fresh_dir("match");
    auto data = d / "data";
    CHECK(run_cli({"gen", "--out", data.string(), "--pairs", "1", "--points", "32", "--seed", "4"}) == 0);
    auto ckpt = d / "model.json";
    CHECK(run_cli({"train", "--data", data.string(), "--out", ckpt.string(), "--k", "5", "--points",
                   "24", "--epochs", "0"}) == 0);

    auto cloud = data / "pair_0000_x.xyz";
    auto out_map = d / "self.map";
    CHECK(run_cli({"match", "--ckpt", ckpt.string(), "--source", cloud.string(), "--target",
                   cloud.string(), "--out", out_map.string()}) == 0);
    IndexMap m = load_map(out_map.string());
    CHECK(m.targets == identity_map(32).targets);

    // k mismatch is an incompatibility error (data exit code)
    CHECK(run_cli({"match", "--ckpt", ckpt.string(), "--source", cloud.string(), "--target",
                   cloud.string(), "--out", out_map.string(), "--k", "9"}) == 3);
}

TEST_CASE("eval writes matching JSON and CSV summaries") {
    auto d = fresh_dir("eval");
    auto data = d / "data";
    CHECK(run_cli({"gen", "--out", data.string(), "--pairs", "2", "--points", "128", "--seed", "6"}) == 0);

    auto stem = (d / "report").string();
    CHECK(run_cli({"eval", "--data", data.string(), "--out", stem, "--baseline", "coords",
                   "--save-maps"}) == 0);

    std::ifstream jin(stem + ".json");
    nlohmann::json j;
    jin >> j;
    double jmean = j.at("mean_x100").get<double>();

    std::ifstream cin(stem + ".csv");
    std::string line, last;
    while (std::getline(cin, line))
        if (!line.empty()) last = line;
    REQUIRE(last.rfind("mean_x100,", 0) == 0);
    double cmean = std::stod(last.substr(last.find(',') + 1));
    CHECK(jmean == doctest::Approx(cmean).epsilon(1e-15));

    CHECK(fs::exists(stem + ".pair_0000.map"));
    CHECK(fs::exists(stem + ".pair_0001.map"));

    // a predicted map read back restricts to valid indices
    IndexMap m = load_map(stem + ".pair_0000.map");
    CHECK(m.src_size == 128);

    // missing --ckpt without a baseline is a usage error
    CHECK(run_cli({"eval", "--data", data.string(), "--out", stem}) == 2);
}

TEST_CASE("sweep emits one row per value") {
    auto d = fresh_dir("sweep");
    auto out = (d / "sweep.csv").string();
    CHECK(run_cli({"sweep", "--axis", "embedding_size", "--values", "5,6", "--out", out, "--points",
                   "24", "--epochs", "1", "--k", "5", "--batch", "2", "--gen-points", "32",
                   "--eval-pairs", "2", "--eval-seed", "11", "--seed", "3", "--pairs", "3"}) == 0);
    std::ifstream in(out);
    std::string line;
    std::getline(in, line);
    CHECK(line == "axis,value,mean_x100");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
}

TEST_CASE("sweep config handling rejects a bad axis") {
    CHECK(run_cli({"sweep", "--axis", "nope", "--values", "4", "--out", "x.csv"}) == 2);
}

TEST_CASE("gradcheck subcommand passes on a correct build") {
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    int rc = run_cli({"gradcheck", "--reps", "2"});
    std::cout.rdbuf(old);
    CHECK(rc == 0);
    CHECK(sink.str().find("FAIL") == std::string::npos);
}
