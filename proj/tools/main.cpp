#include <CLI11.hpp>

#include "mocap/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"multi-view multi-person motion capture with masked-transformer completion"};
    app.require_subcommand(1);

    std::string config_path, seed_override, out_override;
    const char* names[] = {"synth",    "triangulate", "train", "complete",
                           "finetune", "eval",        "ablate"};
    const char* blurbs[] = {
        "generate a synthetic scene: calibration, detections, ground truth",
        "reconstruct identity-labeled 3D skeletons from 2D detections",
        "train the completion model on complete motion windows",
        "fill missing joints of a reconstructed sequence",
        "pose-fusion fine-tune onto a second skeleton definition",
        "score a sequence against ground truth (CSV + SVG reports)",
        "train the encoding-ablation variants and compare them"};
    for (size_t i = 0; i < std::size(names); i++) {
        auto* sub = app.add_subcommand(names[i], blurbs[i]);
        sub->add_option("--config", config_path, "pipeline config (JSON)")->required();
        sub->add_option("--seed", seed_override, "override the config seed");
        sub->add_option("--out", out_override, "override the output directory");
    }

    CLI11_PARSE(app, argc, argv);
    return mocap::pipeline::run(app.get_subcommands().front()->get_name(), config_path,
                                seed_override, out_override);
}
