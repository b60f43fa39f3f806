#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "mocap/dmae.hpp"
#include "mocap/motion_io.hpp"
#include "mocap/skeleton.hpp"

namespace mocap::fusion {

// Linear joint interpolation between two skeleton definitions. Column j of W
// holds target joint j's source weights; columns are non-negative and sum
// to one.
struct SkeletonMapping {
    std::string src;
    std::string tar;
    Eigen::MatrixXd W;  // J_src x J_tar

    int source_joints() const { return static_cast<int>(W.rows()); }
    int target_joints() const { return static_cast<int>(W.cols()); }
    void validate() const;
};

SkeletonMapping load_mapping(const std::string& path);
void save_mapping(const std::string& path, const SkeletonMapping& mapping);
const SkeletonMapping& mapping_basic15_to_compact10();

// Weighted sum per target joint; a target joint is invalid when any source
// joint with nonzero weight is missing. Invalidity is data, not failure.
void interpolate_skeleton(const std::vector<geom::Vec3>& src,
                          const std::vector<uint8_t>& src_missing, const SkeletonMapping& mapping,
                          std::vector<geom::Vec3>& tar, std::vector<uint8_t>& tar_missing);

Track interpolate_track(const Track& src, const SkeletonMapping& mapping);

// Concatenates the two windows' joint rows per frame (source first). Windows
// must share T; the fused window keeps the source anchor.
dmae::MotionWindow fuse_windows(const dmae::MotionWindow& src, const dmae::MotionWindow& tar);
std::pair<dmae::MotionWindow, dmae::MotionWindow> defuse_window(const dmae::MotionWindow& fused,
                                                                int src_joints);

struct FinetuneConfig {
    dmae::TrainConfig schedule;      // epochs default 500 set by callers
    double source_mask_ratio = 0.3;  // r_ft
};

// Pose-fusion fine-tune: every step masks the entire target rows plus a
// random source fraction; only target cells are supervised. The model's
// context index range is extended to the fused joint axis; encoding bases
// stay frozen.
dmae::LossCurve finetune(dmae::DmaeModel& model,
                         const std::vector<std::pair<dmae::MotionWindow, dmae::MotionWindow>>& pairs,
                         const FinetuneConfig& cfg);

// Inference: complete the target joints from a partially observed source
// window using a fused (fine-tuned) model. Returns world-frame positions for
// every (frame, target joint).
std::vector<geom::Vec3> predict_target_window(dmae::DmaeModel& model,
                                              const std::vector<std::vector<geom::Vec3>>& src_raw,
                                              const std::vector<std::vector<uint8_t>>& src_missing,
                                              int src_joints, int tar_joints);

}  // namespace mocap::fusion
