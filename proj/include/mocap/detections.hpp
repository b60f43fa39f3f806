#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mocap/geometry.hpp"

namespace mocap::assoc {

struct Joint2D {
    geom::Vec2 px = geom::Vec2::Zero();
    double confidence = 0.0;
    bool valid = false;
};

// Small RGB block around a candidate's mid-hip, channels in [0,1].
struct AppearancePatch {
    int radius = 0;
    std::vector<double> rgb;  // (2r+1)^2 x 3, pixel-major

    Eigen::Vector3d channel_median() const;
};

struct Candidate2D {
    std::vector<Joint2D> joints;
    std::optional<AppearancePatch> patch;
};

struct ViewDetections {
    int view = 0;
    std::vector<Candidate2D> candidates;
};

struct FrameDetections {
    int frame = 0;
    std::vector<ViewDetections> views;
};

// JSON Lines, one frame per record:
//   {"t": int, "views": [{"v": int, "candidates": [{"joints": [[x,y,p] x J]}]}]}
// Absent joints carry p = 0.
std::vector<FrameDetections> load_detections(const std::string& path);
void save_detections(const std::string& path, const std::vector<FrameDetections>& frames);

// Optional sidecar keyed by (t, v, candidate):
//   {"t": int, "v": int, "c": int, "radius": int, "rgb": [floats]}
void attach_appearance(std::vector<FrameDetections>& frames, const std::string& path);
void save_appearance(const std::string& path, const std::vector<FrameDetections>& frames);

}  // namespace mocap::assoc
