#pragma once

#include <string>
#include <vector>

#include "mocap/geometry.hpp"

namespace mocap {

struct ActorPose {
    int id = -1;
    std::vector<geom::Vec3> joints;
    std::vector<uint8_t> missing;  // 1 = missing
};

struct MotionFrame {
    int t = 0;
    std::vector<ActorPose> actors;
};

// A motion file: frames x actors x joints with validity, plus provenance.
struct MotionSequence {
    std::string skeleton;
    double fps = 30.0;
    uint64_t config_hash = 0;
    uint64_t seed = 0;
    std::vector<MotionFrame> frames;

    int joint_count() const;
};

// One identity's joints over a contiguous frame range (absent frames are
// all-missing rows).
struct Track {
    int identity = -1;
    int start_frame = 0;
    std::vector<std::vector<geom::Vec3>> pos;      // [frame][joint]
    std::vector<std::vector<uint8_t>> missing;     // [frame][joint]

    int length() const { return static_cast<int>(pos.size()); }
};

MotionSequence load_motion(const std::string& path);
void save_motion(const std::string& path, const MotionSequence& seq);

std::vector<Track> extract_tracks(const MotionSequence& seq);
MotionSequence tracks_to_motion(const std::vector<Track>& tracks, const std::string& skeleton,
                                double fps);

}  // namespace mocap
