#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mocap/pipeline.hpp"

using namespace mocap;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("mocap_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_config(const std::string& path, const std::string& body) {
    std::ofstream os(path);
    os << body;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("pipeline: synth, triangulate, tiny train, complete, eval") {
    TempDir dir;
    const std::string out = dir.file("out");
    write_config(dir.file("cfg.json"), R"({
  "seed": 5,
  "out_dir": ")" + out + R"(",
  "paths": {
    "calibration": ")" + out + R"(/calibration.json",
    "detections": ")" + out + R"(/detections.jsonl",
    "appearance": ")" + out + R"(/appearance.jsonl",
    "ground_truth": ")" + out + R"(/gt_motion.json",
    "motion": ")" + out + R"(/motion.json",
    "completed": ")" + out + R"(/completed_motion.json",
    "checkpoint": ")" + out + R"(/model.ckpt"
  },
  "synth": {"actors": 2, "cameras": 5, "frames": 40, "fps": 15,
            "noise": {"pixel_sigma": 0.5, "occlusion_rate": 0.1}},
  "model": {"window": 10, "encoder_depth": 1, "encoder_width": 16, "encoder_heads": 2,
            "decoder_depth": 1, "decoder_width": 8, "decoder_heads": 1, "dropout": 0.0},
  "train": {"epochs": 1, "batch": 8, "base_lr": 1e-4, "max_windows": 24}
})");

    CHECK(pipeline::run("synth", dir.file("cfg.json"), "", "") == 0);
    CHECK(fs::exists(out + "/calibration.json"));
    CHECK(fs::exists(out + "/detections.jsonl"));
    CHECK(fs::exists(out + "/gt_motion.json"));

    CHECK(pipeline::run("triangulate", dir.file("cfg.json"), "", "") == 0);
    CHECK(fs::exists(out + "/motion.json"));
    CHECK(fs::exists(out + "/missing_map.json"));

    CHECK(pipeline::run("train", dir.file("cfg.json"), "", "") == 0);
    CHECK(fs::exists(out + "/model.ckpt"));
    CHECK(fs::exists(out + "/train_loss.csv"));

    CHECK(pipeline::run("complete", dir.file("cfg.json"), "", "") == 0);
    CHECK(fs::exists(out + "/completed_motion.json"));

    CHECK(pipeline::run("eval", dir.file("cfg.json"), "", "") == 0);
    const std::string csv = slurp(out + "/eval.csv");
    CHECK(csv.find("# config=") == 0);
    CHECK(csv.find("aggregate") != std::string::npos);
    CHECK(fs::exists(out + "/eval_limbs.csv"));
    CHECK(fs::exists(out + "/trajectory_id0.svg"));

    // completed motion leaves no missing joints when every window sees data
    auto completed = load_motion(out + "/completed_motion.json");
    long long missing = 0;
    for (const auto& mf : completed.frames)
        for (const auto& ap : mf.actors)
            for (uint8_t m : ap.missing) missing += m;
    CHECK(missing == 0);

    // byte-identical rerun of eval
    const std::string before = slurp(out + "/eval.csv");
    CHECK(pipeline::run("eval", dir.file("cfg.json"), "", "") == 0);
    CHECK(slurp(out + "/eval.csv") == before);
}

TEST_CASE("pipeline exit codes") {
    TempDir dir;
    CHECK(pipeline::run("synth", dir.file("nope.json"), "", "") == 2);

    write_config(dir.file("bad.json"), "{ not json");
    CHECK(pipeline::run("synth", dir.file("bad.json"), "", "") == 2);

    write_config(dir.file("badfield.json"), R"({"synth": {"actors": "three"}})");
    CHECK(pipeline::run("synth", dir.file("badfield.json"), "", "") == 2);

    write_config(dir.file("badrate.json"),
                 R"({"out_dir": ")" + dir.file("o") + R"(", "synth": {"noise": {"occlusion_rate": 1.5}}})");
    CHECK(pipeline::run("synth", dir.file("badrate.json"), "", "") == 2);  // named config field

    write_config(dir.file("missingdata.json"), R"({
  "out_dir": ")" + dir.file("o2") + R"(",
  "paths": {"calibration": "does_not_exist.json", "detections": "also_missing.jsonl"}})");
    CHECK(pipeline::run("triangulate", dir.file("missingdata.json"), "", "") == 3);

    CHECK(pipeline::run("fly", dir.file("badfield.json"), "", "") == 2);
    CHECK(pipeline::run("synth", dir.file("badfield.json"), "12x", "") == 2);
}

TEST_CASE("th_v above the camera count leaves everything missing but exits 0") {
    TempDir dir;
    const std::string out = dir.file("out");
    write_config(dir.file("cfg.json"), R"({
  "seed": 3,
  "out_dir": ")" + out + R"(",
  "paths": {
    "calibration": ")" + out + R"(/calibration.json",
    "detections": ")" + out + R"(/detections.jsonl",
    "ground_truth": ")" + out + R"(/gt_motion.json"
  },
  "synth": {"actors": 1, "cameras": 3, "frames": 6},
  "association": {"th_v": 9}
})");
    REQUIRE(pipeline::run("synth", dir.file("cfg.json"), "", "") == 0);
    CHECK(pipeline::run("triangulate", dir.file("cfg.json"), "", "") == 0);
    auto seq = load_motion(out + "/motion.json");
    for (const auto& mf : seq.frames) CHECK(mf.actors.empty());
}

TEST_CASE("seed override changes outputs and reruns are byte-identical") {
    TempDir dir;
    const std::string out = dir.file("out");
    write_config(dir.file("cfg.json"), R"({
  "seed": 11,
  "out_dir": ")" + out + R"(",
  "synth": {"actors": 1, "cameras": 3, "frames": 5,
            "noise": {"pixel_sigma": 2.0}}
})");
    REQUIRE(pipeline::run("synth", dir.file("cfg.json"), "", "") == 0);
    const std::string first = slurp(out + "/detections.jsonl");
    REQUIRE(pipeline::run("synth", dir.file("cfg.json"), "", "") == 0);
    CHECK(slurp(out + "/detections.jsonl") == first);
    REQUIRE(pipeline::run("synth", dir.file("cfg.json"), "77", "") == 0);
    CHECK(slurp(out + "/detections.jsonl") != first);
}
