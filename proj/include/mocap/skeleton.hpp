#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mocap/common.hpp"

namespace mocap {

// Named joint layout plus the limb list used for PCP and rendering.
struct SkeletonDefinition {
    std::string name;
    std::vector<std::string> joints;
    std::vector<std::pair<int, int>> limbs;
    std::vector<std::string> limb_names;  // optional; defaults to "a-b"
    int midhip = 0;

    int joint_count() const { return static_cast<int>(joints.size()); }
    std::string limb_name(size_t i) const;
    void validate() const;
};

SkeletonDefinition load_skeleton(const std::string& path);
void save_skeleton(const std::string& path, const SkeletonDefinition& def);

// Built-in definitions: the 15-joint capture skeleton and a 10-joint compact
// variant used by the pose-fusion path.
const SkeletonDefinition& skeleton_basic15();
const SkeletonDefinition& skeleton_compact10();
const SkeletonDefinition* find_builtin_skeleton(const std::string& name);

}  // namespace mocap
