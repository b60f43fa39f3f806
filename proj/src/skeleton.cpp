#include "mocap/skeleton.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace mocap {

std::string SkeletonDefinition::limb_name(size_t i) const {
    if (i < limb_names.size() && !limb_names[i].empty()) return limb_names[i];
    return joints[limbs[i].first] + "-" + joints[limbs[i].second];
}

void SkeletonDefinition::validate() const {
    if (joints.empty()) throw DataError("skeleton '" + name + "': no joints");
    std::set<std::string> seen(joints.begin(), joints.end());
    if (seen.size() != joints.size())
        throw DataError("skeleton '" + name + "': joint names not unique");
    for (const auto& [a, b] : limbs)
        if (a < 0 || b < 0 || a >= joint_count() || b >= joint_count())
            throw DataError("skeleton '" + name + "': limb index out of range");
    if (midhip < 0 || midhip >= joint_count())
        throw DataError("skeleton '" + name + "': midhip index out of range");
}

SkeletonDefinition load_skeleton(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("skeleton: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
        SkeletonDefinition def;
        def.name = j.at("name").get<std::string>();
        def.joints = j.at("joints").get<std::vector<std::string>>();
        for (const auto& l : j.at("limbs")) def.limbs.emplace_back(l.at(0), l.at(1));
        def.midhip = j.at("midhip").get<int>();
        if (j.contains("limb_names"))
            def.limb_names = j["limb_names"].get<std::vector<std::string>>();
        def.validate();
        return def;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("skeleton: malformed " + path + ": " + e.what());
    }
}

void save_skeleton(const std::string& path, const SkeletonDefinition& def) {
    nlohmann::json j;
    j["name"] = def.name;
    j["joints"] = def.joints;
    j["limbs"] = nlohmann::json::array();
    for (const auto& [a, b] : def.limbs) j["limbs"].push_back({a, b});
    j["midhip"] = def.midhip;
    if (!def.limb_names.empty()) j["limb_names"] = def.limb_names;
    std::ofstream os(path);
    if (!os) throw DataError("skeleton: cannot open " + path + " for writing");
    os << j.dump(1) << "\n";
}

const SkeletonDefinition& skeleton_basic15() {
    static const SkeletonDefinition def = [] {
        SkeletonDefinition d;
        d.name = "basic15";
        d.joints = {"midhip",     "neck",       "head",    "l_shoulder", "l_elbow",
                    "l_wrist",    "r_shoulder", "r_elbow", "r_wrist",    "l_hip",
                    "l_knee",     "l_ankle",    "r_hip",   "r_knee",     "r_ankle"};
        d.limbs = {{3, 4}, {4, 5}, {6, 7}, {7, 8}, {9, 10}, {10, 11}, {12, 13}, {13, 14}, {1, 2}, {0, 1}};
        d.limb_names = {"Left Upper Arm", "Left Lower Arm",  "Right Upper Arm", "Right Lower Arm",
                        "Left Upper Leg", "Left Lower Leg",  "Right Upper Leg", "Right Lower Leg",
                        "Head",           "Torso"};
        d.midhip = 0;
        d.validate();
        return d;
    }();
    return def;
}

const SkeletonDefinition& skeleton_compact10() {
    static const SkeletonDefinition def = [] {
        SkeletonDefinition d;
        d.name = "compact10";
        d.joints = {"pelvis", "neck",  "head",  "l_arm", "l_hand",
                    "r_arm",  "r_hand", "l_leg", "r_leg", "spine"};
        d.limbs = {{0, 9}, {9, 1}, {1, 2}, {1, 3}, {3, 4}, {1, 5}, {5, 6}, {0, 7}, {0, 8}};
        d.midhip = 0;
        d.validate();
        return d;
    }();
    return def;
}

const SkeletonDefinition* find_builtin_skeleton(const std::string& name) {
    if (name == "basic15") return &skeleton_basic15();
    if (name == "compact10") return &skeleton_compact10();
    return nullptr;
}

}  // namespace mocap
