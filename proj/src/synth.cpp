#include "mocap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mocap::synth {

using geom::Vec2;
using geom::Vec3;

void SceneConfig::validate() const {
    if (actors < 1) throw ConfigError("synth.actors: must be >= 1");
    if (cameras < 2) throw ConfigError("synth.cameras: must be >= 2");
    if (frames < 1) throw ConfigError("synth.frames: must be >= 1");
    if (fps <= 0) throw ConfigError("synth.fps: must be positive");
    auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!rate_ok(noise.occlusion_rate)) throw ConfigError("synth.noise.occlusion_rate: outside [0,1]");
    if (!rate_ok(noise.swap_rate)) throw ConfigError("synth.noise.swap_rate: outside [0,1]");
    if (noise.pixel_sigma < 0) throw ConfigError("synth.noise.pixel_sigma: negative");
    if (find_builtin_skeleton(skeleton) == nullptr)
        throw ConfigError("synth.skeleton: unknown definition '" + skeleton + "'");
    for (const auto& m : motions)
        if (m.family != "walk_cycle" && m.family != "arm_wave" && m.family != "crossing_paths")
            throw ConfigError("synth.motions: unknown family '" + m.family + "'");
}

ActorMotionConfig SceneConfig::motion_for(int actor) const {
    if (motions.empty()) return ActorMotionConfig{};
    return motions[std::min<size_t>(actor, motions.size() - 1)];
}

namespace {

// bone lengths, meters
constexpr double kTrunk = 0.55;
constexpr double kHead = 0.25;
constexpr double kShoulderHalf = 0.22;
constexpr double kUpperArm = 0.30;
constexpr double kForearm = 0.28;
constexpr double kHipHalf = 0.11;
constexpr double kThigh = 0.44;
constexpr double kShank = 0.42;
constexpr double kHipHeight = 0.95;

struct BodyFrame {
    Vec3 root;     // mid-hip
    Vec3 fwd;      // walking direction, horizontal unit
    Vec3 left;     // body left, horizontal unit
};

// basic15 pose from gait angles; every segment has fixed length.
std::vector<Vec3> pose_from_angles(const BodyFrame& bf, double leg_l, double knee_l,
                                   double leg_r, double knee_r, double arm_l, double elbow_l,
                                   double arm_r, double elbow_r, double wave_l, double wave_r) {
    const Vec3 up = Vec3::UnitZ();
    auto sagittal = [&](double a) { return std::sin(a) * bf.fwd - std::cos(a) * up; };
    // arms can additionally abduct sideways (waving)
    auto arm_dir = [&](double swing, double wave, double side) {
        const Vec3 s = sagittal(swing);
        return (std::cos(wave) * s + std::sin(wave) * (side * bf.left)).normalized();
    };

    std::vector<Vec3> j(15);
    j[0] = bf.root;
    const Vec3 neck = bf.root + kTrunk * up;
    j[1] = neck;
    j[2] = neck + kHead * up;
    j[3] = neck + kShoulderHalf * bf.left;                   // l_shoulder
    j[6] = neck - kShoulderHalf * bf.left;                   // r_shoulder
    const Vec3 ua_l = arm_dir(arm_l, wave_l, +1.0);
    const Vec3 ua_r = arm_dir(arm_r, wave_r, -1.0);
    j[4] = j[3] + kUpperArm * ua_l;                          // l_elbow
    j[7] = j[6] + kUpperArm * ua_r;                          // r_elbow
    j[5] = j[4] + kForearm * arm_dir(arm_l + elbow_l, wave_l, +1.0);  // l_wrist
    j[8] = j[7] + kForearm * arm_dir(arm_r + elbow_r, wave_r, -1.0);  // r_wrist
    j[9] = bf.root + kHipHalf * bf.left;                     // l_hip
    j[12] = bf.root - kHipHalf * bf.left;                    // r_hip
    j[10] = j[9] + kThigh * sagittal(leg_l);                 // l_knee
    j[13] = j[12] + kThigh * sagittal(leg_r);                // r_knee
    j[11] = j[10] + kShank * sagittal(leg_l - knee_l);       // l_ankle
    j[14] = j[13] + kShank * sagittal(leg_r - knee_r);       // r_ankle
    return j;
}

std::vector<Vec3> actor_pose(const SceneConfig& cfg, int actor, double time) {
    const ActorMotionConfig m = cfg.motion_for(actor);
    const double theta = 2.0 * M_PI * time / m.period + m.phase + actor * 1.7;
    const double a = m.amplitude;

    BodyFrame bf;
    double gait = a;  // walking families swing limbs, arm_wave stands still
    if (m.family == "walk_cycle") {
        const double omega = m.speed / m.path_radius;
        const double alpha = 2.0 * M_PI * actor / std::max(cfg.actors, 1) + omega * time;
        bf.root = Vec3(m.path_radius * std::cos(alpha), m.path_radius * std::sin(alpha),
                       kHipHeight + 0.025 * a * std::sin(2 * theta));
        bf.fwd = Vec3(-std::sin(alpha), std::cos(alpha), 0);
    } else if (m.family == "crossing_paths") {
        const int cross_frame = cfg.crossing_frame >= 0 ? cfg.crossing_frame : cfg.frames / 2;
        const double t_cross = cross_frame / cfg.fps;
        const double heading = m.heading + (actor % 2) * M_PI;  // opposite lanes
        bf.fwd = Vec3(std::cos(heading), std::sin(heading), 0);
        const Vec3 lateral(-bf.fwd.y(), bf.fwd.x(), 0);
        // same relative lane side, so world offsets are opposite at the crossing
        const double lane = m.lateral_offset != 0.0 ? m.lateral_offset : 0.22;
        bf.root = lane * lateral + bf.fwd * m.speed * (time - t_cross);
        bf.root.z() = kHipHeight + 0.025 * a * std::sin(2 * theta);
    } else {  // arm_wave: stand in a loose line, face +x
        bf.root = Vec3(-0.3, -0.8 + 0.8 * actor, kHipHeight);
        bf.fwd = Vec3(1, 0, 0);
        gait = 0.15 * a;  // little residual sway
    }
    bf.left = Vec3(-bf.fwd.y(), bf.fwd.x(), 0);

    const double leg_l = 0.50 * gait * std::sin(theta);
    const double leg_r = 0.50 * gait * std::sin(theta + M_PI);
    const double knee_l = 0.55 * gait * 0.5 * (1 + std::sin(theta - M_PI / 2));
    const double knee_r = 0.55 * gait * 0.5 * (1 + std::sin(theta + M_PI / 2));
    double arm_l = 0.40 * gait * std::sin(theta + M_PI);
    double arm_r = 0.40 * gait * std::sin(theta);
    double elbow_l = 0.30 + 0.20 * gait * 0.5 * (1 + std::sin(theta + M_PI));
    double elbow_r = 0.30 + 0.20 * gait * 0.5 * (1 + std::sin(theta));
    double wave_l = 0, wave_r = 0;
    if (m.family == "arm_wave") {
        const double beta = 0.9 + 0.55 * a * std::sin(2.0 * M_PI * time / m.period + m.phase);
        wave_l = beta;
        wave_r = beta * 0.8;
        arm_l = arm_r = M_PI * 0.45;  // raised
        elbow_l = 0.25 + 0.3 * a * std::sin(2.0 * M_PI * time / (0.5 * m.period));
        elbow_r = 0.25 + 0.3 * a * std::cos(2.0 * M_PI * time / (0.5 * m.period));
    }
    return pose_from_angles(bf, leg_l, knee_l, leg_r, knee_r, arm_l, elbow_l, arm_r, elbow_r,
                            wave_l, wave_r);
}

}  // namespace

GroundTruth generate_motion(const SceneConfig& cfg) {
    cfg.validate();
    GroundTruth gt;
    gt.motion.skeleton = cfg.skeleton;
    gt.motion.fps = cfg.fps;
    gt.motion.seed = cfg.seed;
    const int J = find_builtin_skeleton(cfg.skeleton)->joint_count();
    for (int t = 0; t < cfg.frames; t++) {
        MotionFrame mf;
        mf.t = t;
        for (int a = 0; a < cfg.actors; a++) {
            ActorPose ap;
            ap.id = a;
            ap.joints = actor_pose(cfg, a, t / cfg.fps);
            ap.joints.resize(J, Vec3::Zero());
            ap.missing.assign(J, 0);
            mf.actors.push_back(std::move(ap));
        }
        gt.motion.frames.push_back(std::move(mf));
    }
    return gt;
}

std::vector<geom::CameraView> scene_cameras(const SceneConfig& cfg) {
    cfg.validate();
    std::vector<geom::CameraView> cams;
    const Vec3 target(0, 0, 1.0);
    for (int i = 0; i < cfg.cameras; i++) {
        const double a = 2.0 * M_PI * i / cfg.cameras;
        const Vec3 pos(cfg.camera_radius * std::cos(a), cfg.camera_radius * std::sin(a),
                       cfg.camera_height);
        geom::CameraView cam;
        cam.K << cfg.focal, 0, cfg.image_width / 2.0, 0, cfg.focal, cfg.image_height / 2.0, 0, 0,
            1;
        cam.width = cfg.image_width;
        cam.height = cfg.image_height;
        const Vec3 z = (target - pos).normalized();
        const Vec3 up = Vec3::UnitZ();
        const Vec3 x = up.cross(z).normalized();
        const Vec3 y = z.cross(x);
        cam.R.row(0) = x;
        cam.R.row(1) = y;
        cam.R.row(2) = z;
        cam.t = -cam.R * pos;
        cam.validate("synth camera " + std::to_string(i));
        cams.push_back(cam);
    }
    return cams;
}

namespace {

// distance between the segment [a,b] and the ray origin+s*dir with s in
// [0, s_max]; used for torso occlusion tests
double segment_ray_distance(const Vec3& a, const Vec3& b, const Vec3& origin, const Vec3& dir,
                            double s_max) {
    const Vec3 u = b - a;
    const Vec3 w0 = a - origin;
    const double aa = u.dot(u), bb = u.dot(dir), cc = dir.dot(dir);
    const double dd = u.dot(w0), ee = dir.dot(w0);
    const double denom = aa * cc - bb * bb;
    double sc = 0.0;
    if (denom > 1e-12) sc = (bb * ee - cc * dd) / denom;
    sc = std::clamp(sc, 0.0, 1.0);
    double tc = aa > 1e-12 ? (bb * sc + ee) / cc : ee / cc;
    tc = std::clamp(tc, 0.0, s_max);
    // one re-projection pass after clamping
    const Vec3 p_ray = origin + tc * dir;
    double sc2 = aa > 1e-12 ? std::clamp((p_ray - a).dot(u) / aa, 0.0, 1.0) : 0.0;
    return ((a + sc2 * u) - p_ray).norm();
}

Vec3 actor_color(int actor) {
    // well-separated hues
    const double h = std::fmod(0.13 + 0.61803398875 * actor, 1.0) * 6.0;
    const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h)) {
        case 0: r = 1; g = x; break;
        case 1: r = x; g = 1; break;
        case 2: g = 1; b = x; break;
        case 3: g = x; b = 1; break;
        case 4: r = x; b = 1; break;
        default: r = 1; b = x; break;
    }
    return {0.15 + 0.7 * r, 0.15 + 0.7 * g, 0.15 + 0.7 * b};
}

}  // namespace

std::vector<assoc::FrameDetections> render_detections(const GroundTruth& gt,
                                                      const std::vector<geom::CameraView>& cams,
                                                      const SceneConfig& cfg) {
    cfg.validate();
    const int J = gt.motion.joint_count();
    const auto& def = *find_builtin_skeleton(cfg.skeleton);
    const int hip = def.midhip;
    const int neck_joint = std::min(1, J - 1);

    std::vector<assoc::FrameDetections> out;
    out.reserve(gt.motion.frames.size());
    for (const auto& mf : gt.motion.frames) {
        assoc::FrameDetections fd;
        fd.frame = mf.t;
        for (size_t v = 0; v < cams.size(); v++) {
            auto rng = make_rng(cfg.seed, 0x9e00 + mf.t * 1315423911ull + v * 2654435761ull);
            std::normal_distribution<double> gauss(0.0, 1.0);
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            const auto& cam = cams[v];

            assoc::ViewDetections vd;
            vd.view = static_cast<int>(v);
            std::vector<int> actor_of_candidate;
            for (size_t a = 0; a < mf.actors.size(); a++) {
                const auto& truth = mf.actors[a];
                assoc::Candidate2D cand;
                cand.joints.resize(J);
                for (int j = 0; j < J; j++) {
                    auto& det = cand.joints[j];
                    det.valid = false;
                    Vec2 px;
                    try {
                        px = geom::project(cam, truth.joints[j]);
                    } catch (const BehindCameraError&) {
                        continue;
                    }
                    if (px.x() < 0 || px.x() >= cam.width || px.y() < 0 || px.y() >= cam.height)
                        continue;
                    // occlusion model, entirely off at rate zero: random
                    // dropout plus another actor's torso blocking the ray
                    if (cfg.noise.occlusion_rate > 0) {
                        const Vec3 cam_center = cam.center();
                        Vec3 ray = truth.joints[j] - cam_center;
                        const double depth = ray.norm();
                        ray /= depth;
                        bool occluded = false;
                        for (size_t b = 0; b < mf.actors.size() && !occluded; b++) {
                            if (b == a) continue;
                            const auto& other = mf.actors[b];
                            const double d = segment_ray_distance(other.joints[hip],
                                                                  other.joints[neck_joint],
                                                                  cam_center, ray, depth - 0.05);
                            occluded = d < cfg.noise.occlusion_radius;
                        }
                        if (occluded) continue;
                        if (uni(rng) < cfg.noise.occlusion_rate) continue;
                    }

                    Vec2 noise = Vec2::Zero();
                    if (cfg.noise.pixel_sigma > 0)
                        noise = cfg.noise.pixel_sigma * Vec2(gauss(rng), gauss(rng));
                    det.px = px + noise;
                    det.confidence = std::exp(-noise.norm() / cfg.noise.confidence_decay);
                    det.valid = true;
                }
                const Vec3 color = actor_color(static_cast<int>(a));
                assoc::AppearancePatch patch;
                patch.radius = cfg.patch_radius;
                const int side = 2 * cfg.patch_radius + 1;
                patch.rgb.reserve(side * side * 3);
                for (int pxl = 0; pxl < side * side; pxl++)
                    for (int c = 0; c < 3; c++)
                        patch.rgb.push_back(std::clamp(
                            color[c] + (cfg.noise.pixel_sigma > 0 ? 0.03 * gauss(rng) : 0.0),
                            0.0, 1.0));
                cand.patch = std::move(patch);
                vd.candidates.push_back(std::move(cand));
                actor_of_candidate.push_back(static_cast<int>(a));
            }

            // identity swap: joints of two nearby actors trade places while
            // the appearance stays put
            if (vd.candidates.size() >= 2 && uni(rng) < cfg.noise.swap_rate) {
                int best_a = -1, best_b = -1;
                double best_d = cfg.noise.swap_distance;
                for (size_t a = 0; a < vd.candidates.size(); a++)
                    for (size_t b = a + 1; b < vd.candidates.size(); b++) {
                        const auto& ha = vd.candidates[a].joints[hip];
                        const auto& hb = vd.candidates[b].joints[hip];
                        if (!ha.valid || !hb.valid) continue;
                        const double d = (ha.px - hb.px).norm();
                        if (d < best_d) {
                            best_d = d;
                            best_a = static_cast<int>(a);
                            best_b = static_cast<int>(b);
                        }
                    }
                if (best_a >= 0) std::swap(vd.candidates[best_a].joints,
                                           vd.candidates[best_b].joints);
            }

            // shuffle candidate order so identity is never positional
            std::vector<int> order(vd.candidates.size());
            for (size_t i = 0; i < order.size(); i++) order[i] = static_cast<int>(i);
            std::shuffle(order.begin(), order.end(), rng);
            assoc::ViewDetections shuffled;
            shuffled.view = vd.view;
            for (int idx : order) shuffled.candidates.push_back(std::move(vd.candidates[idx]));
            fd.views.push_back(std::move(shuffled));
        }
        out.push_back(std::move(fd));
    }
    return out;
}

}  // namespace mocap::synth
