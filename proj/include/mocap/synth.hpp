#pragma once

#include <string>
#include <vector>

#include "mocap/detections.hpp"
#include "mocap/geometry.hpp"
#include "mocap/motion_io.hpp"
#include "mocap/skeleton.hpp"

namespace mocap::synth {

// Periodic joint-angle motion driven through forward kinematics over a fixed
// bone hierarchy, so bone lengths stay constant by construction.
struct ActorMotionConfig {
    std::string family = "walk_cycle";  // walk_cycle | arm_wave | crossing_paths
    double amplitude = 1.0;             // scales every joint-angle curve
    double period = 1.0;                // gait period, seconds
    double speed = 1.1;                 // m/s along the path
    double phase = 0.0;                 // gait phase offset, radians
    double path_radius = 1.4;           // walk_cycle circle radius
    double lateral_offset = 0.0;        // crossing_paths lane offset, meters
    double heading = 0.0;               // crossing_paths direction, radians
};

struct NoiseConfig {
    double pixel_sigma = 0.0;       // Gaussian pixel noise
    double confidence_decay = 5.0;  // p = exp(-pixel_error / decay)
    double occlusion_rate = 0.0;    // random per-joint dropout
    double swap_rate = 0.0;         // per view-frame identity swap probability
    double occlusion_radius = 0.22; // torso proximity that hides a joint, meters
    double swap_distance = 180.0;   // max projected mid-hip distance for a swap, pixels
};

struct SceneConfig {
    int actors = 3;
    std::string skeleton = "basic15";
    std::vector<ActorMotionConfig> motions;  // per actor, last entry repeats
    int cameras = 5;
    double camera_radius = 4.5;
    double camera_height = 2.2;
    int image_width = 1920;
    int image_height = 1080;
    double focal = 1100.0;
    NoiseConfig noise;
    uint64_t seed = 0;
    int frames = 300;
    double fps = 30.0;
    int patch_radius = 5;
    int crossing_frame = -1;  // crossing_paths meeting frame; -1 = frames/2

    void validate() const;
    ActorMotionConfig motion_for(int actor) const;
};

struct GroundTruth {
    MotionSequence motion;  // complete poses, ids 0..actors-1
};

GroundTruth generate_motion(const SceneConfig& cfg);

std::vector<geom::CameraView> scene_cameras(const SceneConfig& cfg);

// Projects ground truth into every view and corrupts it: pixel noise with
// error-driven confidences, random dropout, geometric occlusion by other
// actors' torsos, identity swaps between nearby actors, and per-actor flat
// color patches. Candidate order is shuffled per view.
std::vector<assoc::FrameDetections> render_detections(const GroundTruth& gt,
                                                      const std::vector<geom::CameraView>& cams,
                                                      const SceneConfig& cfg);

}  // namespace mocap::synth
