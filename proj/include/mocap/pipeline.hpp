#pragma once

#include <string>
#include <vector>

#include "mocap/association.hpp"
#include "mocap/dmae.hpp"
#include "mocap/fusion.hpp"
#include "mocap/metrics.hpp"
#include "mocap/synth.hpp"

namespace mocap::pipeline {

// One JSON config file drives every subcommand; flags only override the
// seed and the output directory.
struct PipelineConfig {
    uint64_t seed = 42;
    std::string out_dir = "out";

    // paths (read or written depending on the subcommand)
    std::string calibration;
    std::string detections;
    std::string appearance;
    std::string ground_truth;
    std::string motion;      // triangulated/observed motion with gaps
    std::string completed;   // completion output
    std::string checkpoint;
    std::string checkpoint_out;
    std::string mapping;
    std::string skeleton = "basic15";

    synth::SceneConfig scene;
    assoc::AssociationConfig association;
    dmae::ModelConfig model;
    dmae::MaskSpec mask;
    dmae::TrainConfig train;
    int max_windows = 2000;
    int finetune_epochs = 500;
    double finetune_source_ratio = 0.3;

    metrics::EvalOptions eval;
    bool write_svg = true;
    std::vector<std::vector<int>> camera_sweep;  // eval: camera subsets
    std::string sweep_checkpoint;                // optional completion model

    // ablate
    std::string ablate_test_ground_truth;
    int ablate_test_windows = 200;
    std::vector<std::string> ablate_variants{"full", "no_joint", "no_time", "none"};

    uint64_t config_hash = 0;  // FNV-1a of the canonical config dump
};

PipelineConfig load_config(const std::string& path);

// per-window masked-cell completion benchmark against the linear
// interpolation oracle
struct CompletionBenchmark {
    double model_mpjpe_mm = 0;
    double interp_mpjpe_mm = 0;
    long long cells = 0;
    long long skipped_cells = 0;  // masked cells the oracle could not fill
};

CompletionBenchmark benchmark_completion(dmae::DmaeModel& model,
                                         const std::vector<dmae::MotionWindow>& test_windows,
                                         const dmae::MaskSpec& mask, uint64_t seed);

// subcommand drivers; every artifact lands under cfg.out_dir
void run_synth(const PipelineConfig& cfg);
void run_triangulate(const PipelineConfig& cfg);
void run_train(const PipelineConfig& cfg);
void run_complete(const PipelineConfig& cfg);
void run_finetune(const PipelineConfig& cfg);
void run_eval(const PipelineConfig& cfg);
void run_ablate(const PipelineConfig& cfg);

// `mocap <subcommand> --config ...` entry; returns the process exit code
// (0 ok, 2 config, 3 data, 4 numerical).
int run(const std::string& subcommand, const std::string& config_path,
        const std::string& seed_override, const std::string& out_override);

}  // namespace mocap::pipeline
