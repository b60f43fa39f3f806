#pragma once

// Hand-rolled camera rigs and detection frames for association tests.

#include <vector>

#include "mocap/association.hpp"
#include "mocap/geometry.hpp"

namespace scenes {

using mocap::geom::CameraView;
using mocap::geom::Mat3;
using mocap::geom::Vec2;
using mocap::geom::Vec3;

inline CameraView look_at_camera(const Vec3& pos, const Vec3& target, double f = 1100) {
    CameraView cam;
    cam.K << f, 0, 960, 0, f, 540, 0, 0, 1;
    cam.width = 1920;
    cam.height = 1080;
    const Vec3 z = (target - pos).normalized();
    Vec3 up = std::abs(z.z()) > 0.95 ? Vec3::UnitY() : Vec3::UnitZ();
    const Vec3 x = up.cross(z).normalized();
    const Vec3 y = z.cross(x);
    Mat3 R;
    R.row(0) = x;
    R.row(1) = y;
    R.row(2) = z;
    cam.R = R;
    cam.t = -R * pos;
    return cam;
}

inline std::vector<CameraView> camera_ring(int count, double radius = 4.5, double height = 2.2,
                                           const Vec3& target = {0, 0, 1.0}) {
    std::vector<CameraView> cams;
    for (int i = 0; i < count; i++) {
        const double a = 2.0 * M_PI * i / count;
        cams.push_back(look_at_camera({radius * std::cos(a), radius * std::sin(a), height},
                                      target));
    }
    return cams;
}

// Projects per-actor joint sets into every camera; joints behind a camera or
// outside the image become invalid. Candidate order equals actor order.
inline mocap::assoc::FrameDetections project_actors(
    const std::vector<std::vector<Vec3>>& actors, const std::vector<CameraView>& cams,
    int frame = 0, double confidence = 1.0) {
    mocap::assoc::FrameDetections fd;
    fd.frame = frame;
    for (size_t v = 0; v < cams.size(); v++) {
        mocap::assoc::ViewDetections vd;
        vd.view = static_cast<int>(v);
        for (const auto& joints : actors) {
            mocap::assoc::Candidate2D cand;
            for (const auto& p : joints) {
                mocap::assoc::Joint2D j;
                try {
                    j.px = mocap::geom::project(cams[v], p);
                    j.valid = j.px.x() >= 0 && j.px.x() < cams[v].width && j.px.y() >= 0 &&
                              j.px.y() < cams[v].height;
                    j.confidence = j.valid ? confidence : 0.0;
                } catch (const mocap::BehindCameraError&) {
                    j.valid = false;
                }
                cand.joints.push_back(j);
            }
            vd.candidates.push_back(std::move(cand));
        }
        fd.views.push_back(std::move(vd));
    }
    return fd;
}

inline mocap::assoc::AppearancePatch flat_patch(double r, double g, double b, int radius = 2) {
    mocap::assoc::AppearancePatch p;
    p.radius = radius;
    const int side = 2 * radius + 1;
    for (int i = 0; i < side * side; i++) {
        p.rgb.push_back(r);
        p.rgb.push_back(g);
        p.rgb.push_back(b);
    }
    return p;
}

// Four joints per actor: hip plus three offsets; enough structure for
// triangulation and anchoring.
inline std::vector<Vec3> toy_actor(const Vec3& hip) {
    return {hip, hip + Vec3(0, 0, 0.5), hip + Vec3(0.2, 0, 0.3), hip + Vec3(-0.2, 0, 0.3)};
}

}  // namespace scenes
