#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "mocap/geometry.hpp"
#include "oracles.hpp"

using namespace mocap;
using namespace mocap::geom;

namespace {

CameraView axis_camera() {
    CameraView cam;
    cam.K << 1000, 0, 500, 0, 1000, 500, 0, 0, 1;
    cam.width = 1000;
    cam.height = 1000;
    return cam;
}

// Random camera on a sphere around the origin, looking at a point near the
// origin so that test targets stay in view.
CameraView random_camera(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    CameraView cam = axis_camera();
    Vec3 pos;
    do {
        pos = Vec3(u(rng), u(rng), u(rng));
    } while (pos.norm() < 0.3);
    pos = pos.normalized() * (3.0 + u(rng));
    const Vec3 target(0.2 * u(rng), 0.2 * u(rng), 0.2 * u(rng));
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

Vec3 random_point_near_origin(std::mt19937_64& rng, double radius = 0.8) {
    std::uniform_real_distribution<double> u(-radius, radius);
    return {u(rng), u(rng), u(rng)};
}

// Gauss-Newton reprojection refinement, used as the accuracy yardstick for
// the noisy-DLT comparison. Test-only.
Vec3 refine_reprojection(const std::vector<Observation>& obs, Vec3 x) {
    for (int it = 0; it < 30; it++) {
        Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
        Vec3 g = Vec3::Zero();
        for (const auto& o : obs) {
            const Vec3 pc = o.camera->R * x + o.camera->t;
            if (pc.z() <= 1e-9) continue;
            const double fx = o.camera->K(0, 0), fy = o.camera->K(1, 1);
            const Vec2 pred(fx * pc.x() / pc.z() + o.camera->K(0, 2),
                            fy * pc.y() / pc.z() + o.camera->K(1, 2));
            Eigen::Matrix<double, 2, 3> J;
            J.row(0) = fx / pc.z() * (o.camera->R.row(0) - pc.x() / pc.z() * o.camera->R.row(2));
            J.row(1) = fy / pc.z() * (o.camera->R.row(1) - pc.y() / pc.z() * o.camera->R.row(2));
            const Vec2 r = pred - o.pixel;
            const double w = o.confidence * o.confidence;
            H += w * J.transpose() * J;
            g += w * J.transpose() * r;
        }
        const Vec3 step = (H + 1e-9 * Eigen::Matrix3d::Identity()).ldlt().solve(g);
        x -= step;
        if (step.norm() < 1e-12) break;
    }
    return x;
}

}  // namespace

TEST_CASE("projection on the optical axis hits the principal point") {
    CameraView cam = axis_camera();
    Vec2 px = project(cam, {0, 0, 2});
    CHECK(px.x() == doctest::Approx(500.0));
    CHECK(px.y() == doctest::Approx(500.0));
}

TEST_CASE("projection follows similar triangles") {
    CameraView cam = axis_camera();
    Vec2 px = project(cam, {0.001, 0, 1});
    CHECK(px.x() == doctest::Approx(501.0));
    CHECK(px.y() == doctest::Approx(500.0));
}

TEST_CASE("projection rejects points behind the camera") {
    CameraView cam = axis_camera();
    CHECK_THROWS_AS(project(cam, {0, 0, -1}), BehindCameraError);
    CHECK_THROWS_AS(project(cam, {0, 0, 0}), BehindCameraError);
}

TEST_CASE("principal-point ray is the optical axis") {
    auto rng = make_rng(11);
    for (int i = 0; i < 20; i++) {
        CameraView cam = random_camera(rng);
        Ray r = pixel_ray(cam, {cam.K(0, 2), cam.K(1, 2)});
        CHECK((r.direction - cam.optical_axis()).norm() < 1e-12);
        CHECK((r.origin - cam.center()).norm() < 1e-12);
    }
}

TEST_CASE("project then pixel_ray passes through the point") {
    auto rng = make_rng(12);
    for (int i = 0; i < 200; i++) {
        CameraView cam = random_camera(rng);
        Vec3 p = random_point_near_origin(rng);
        Ray r = pixel_ray(cam, project(cam, p));
        const Vec3 d = p - r.origin;
        const double off_ray = (d - d.dot(r.direction) * r.direction).norm();
        CHECK(off_ray < 1e-9);
    }
}

TEST_CASE("rays from two views of one point meet") {
    auto rng = make_rng(13);
    for (int i = 0; i < 100; i++) {
        CameraView a = random_camera(rng), b = random_camera(rng);
        Vec3 p = random_point_near_origin(rng);
        CHECK(line_distance(pixel_ray(a, project(a, p)), pixel_ray(b, project(b, p))) < 1e-9);
    }
}

TEST_CASE("line distance of parallel offset lines") {
    Ray a{{0, 0, 0}, {1, 0, 0}};
    Ray b{{0, 1, 0}, {1, 0, 0}};
    CHECK(line_distance(a, b) == doctest::Approx(1.0));
}

TEST_CASE("line distance of intersecting lines is zero") {
    Ray a{{0, 0, 0}, {1, 0, 0}};
    Ray b{{1, 0, 0}, Vec3(0, 1, 1).normalized()};
    CHECK(line_distance(a, b) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("line distance matches the grid-search oracle") {
    auto rng = make_rng(14);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 40; i++) {
        Ray a{{u(rng), u(rng), u(rng)}, Vec3(u(rng), u(rng), u(rng)).normalized()};
        Ray b{{u(rng), u(rng), u(rng)}, Vec3(u(rng), u(rng), u(rng)).normalized()};
        const double expect = oracles::line_distance_grid(
            {a.origin.x(), a.origin.y(), a.origin.z()},
            {a.direction.x(), a.direction.y(), a.direction.z()},
            {b.origin.x(), b.origin.y(), b.origin.z()},
            {b.direction.x(), b.direction.y(), b.direction.z()});
        CHECK(std::abs(line_distance(a, b) - expect) < 1e-8);
    }
}

TEST_CASE("line distance is symmetric") {
    auto rng = make_rng(15);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 100; i++) {
        Ray a{{u(rng), u(rng), u(rng)}, Vec3(u(rng), u(rng), u(rng)).normalized()};
        Ray b{{u(rng), u(rng), u(rng)}, Vec3(u(rng), u(rng), u(rng)).normalized()};
        CHECK(line_distance(a, b) == line_distance(b, a));
    }
}

TEST_CASE("two-camera noiseless triangulation is exact") {
    CameraView a = axis_camera();
    CameraView b = axis_camera();
    b.t = Vec3(-1, 0, 0);  // 1 m baseline
    const Vec3 p(0.3, 0.1, 2.0);
    std::vector<Observation> obs{{&a, project(a, p), 1.0}, {&b, project(b, p), 1.0}};
    CHECK((triangulate_dlt(obs) - p).norm() < 1e-9);
}

TEST_CASE("triangulation requires two observations") {
    CameraView a = axis_camera();
    std::vector<Observation> obs{{&a, {500, 500}, 1.0}};
    CHECK_THROWS_AS(triangulate_dlt(obs), InsufficientViewsError);
    CHECK_THROWS_AS(triangulate_dlt({}), InsufficientViewsError);
}

TEST_CASE("coincident cameras are rejected as degenerate") {
    CameraView a = axis_camera();
    std::vector<Observation> obs{{&a, {500, 500}, 1.0}, {&a, {500, 500}, 1.0}};
    CHECK_THROWS_AS(triangulate_dlt(obs), DegenerateGeometryError);
}

TEST_CASE("noiseless multi-view triangulation recovers random points") {
    auto rng = make_rng(16);
    for (int trial = 0; trial < 200; trial++) {
        std::vector<CameraView> cams;
        for (int v = 0; v < 4; v++) cams.push_back(random_camera(rng));
        const Vec3 p = random_point_near_origin(rng);
        std::vector<Observation> obs;
        for (const auto& c : cams) obs.push_back({&c, project(c, p), 1.0});
        const Vec3 rec = triangulate_dlt(obs);
        CHECK((rec - p).norm() / std::max(p.norm(), 1.0) < 1e-6);
    }
}

TEST_CASE("noisy DLT stays within 2x of the reprojection refiner") {
    auto rng = make_rng(17);
    std::normal_distribution<double> px_noise(0.0, 1.0);
    double dlt_total = 0, refined_total = 0;
    for (int trial = 0; trial < 200; trial++) {
        std::vector<CameraView> cams;
        for (int v = 0; v < 5; v++) cams.push_back(random_camera(rng));
        const Vec3 p = random_point_near_origin(rng);
        std::vector<Observation> obs;
        for (const auto& c : cams) {
            Vec2 noisy = project(c, p) + Vec2(px_noise(rng), px_noise(rng));
            obs.push_back({&c, noisy, 1.0});
        }
        const Vec3 dlt = triangulate_dlt(obs);
        const Vec3 refined = refine_reprojection(obs, dlt);
        dlt_total += (dlt - p).norm();
        refined_total += (refined - p).norm();
    }
    CHECK(dlt_total <= 2.0 * refined_total);
}

TEST_CASE("confidence weights pull the solution toward trusted views") {
    // two exact views plus one wildly wrong low-confidence view
    auto rng = make_rng(18);
    CameraView a = random_camera(rng), b = random_camera(rng), c = random_camera(rng);
    const Vec3 p(0.1, -0.2, 0.3);
    std::vector<Observation> low{{&a, project(a, p), 1.0},
                                 {&b, project(b, p), 1.0},
                                 {&c, project(c, p) + Vec2(80, -60), 0.05}};
    std::vector<Observation> high{{&a, project(a, p), 1.0},
                                  {&b, project(b, p), 1.0},
                                  {&c, project(c, p) + Vec2(80, -60), 1.0}};
    CHECK((triangulate_dlt(low) - p).norm() < (triangulate_dlt(high) - p).norm());
}

TEST_CASE("calibration file round trip and validation") {
    auto rng = make_rng(19);
    std::vector<CameraView> cams{random_camera(rng), random_camera(rng)};
    const std::string path = "calib_test.json";
    save_calibration(path, cams);
    auto loaded = load_calibration(path);
    REQUIRE(loaded.size() == 2);
    for (size_t i = 0; i < 2; i++) {
        CHECK((loaded[i].K - cams[i].K).cwiseAbs().maxCoeff() == 0.0);
        CHECK((loaded[i].R - cams[i].R).cwiseAbs().maxCoeff() == 0.0);
        CHECK((loaded[i].t - cams[i].t).cwiseAbs().maxCoeff() == 0.0);
    }
    std::remove(path.c_str());

    {
        std::ofstream os(path);
        os << "[{\"K\":[1000,0,500,0,1000,500,0,0,1],\"R\":[1,0,0,0,1,0,0,0,2],"
              "\"t\":[0,0,0],\"size\":[1000,1000]}]";
    }
    CHECK_THROWS_AS(load_calibration(path), DataError);  // R not a rotation
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_calibration("does_not_exist.json"), DataError);
}
