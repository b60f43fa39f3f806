#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "mocap/common.hpp"

namespace mocap::geom {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Calibrated pinhole camera, no lens distortion. R/t map world to camera.
struct CameraView {
    Mat3 K = Mat3::Identity();
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();
    int width = 0;
    int height = 0;

    Vec3 center() const { return -R.transpose() * t; }
    Vec3 optical_axis() const { return R.row(2).transpose(); }
    double image_diagonal() const { return std::sqrt(double(width) * width + double(height) * height); }
    Eigen::Matrix<double, 3, 4> projection_matrix() const;

    // Throws DataError unless R is a proper rotation (within 1e-9), focal
    // lengths are positive and the principal point lies inside the image.
    void validate(const std::string& what = "camera") const;
};

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ();  // unit length
};

struct Observation {
    const CameraView* camera = nullptr;
    Vec2 pixel = Vec2::Zero();
    double confidence = 1.0;
};

// Pinhole projection; throws BehindCameraError when the point has
// non-positive depth in the camera frame.
Vec2 project(const CameraView& cam, const Vec3& point);

// Camera-center ray through a pixel, in world coordinates.
Ray pixel_ray(const CameraView& cam, const Vec2& pixel);

// Minimum distance between the infinite lines carrying the two rays;
// parallel lines fall back to point-to-line distance.
double line_distance(const Ray& a, const Ray& b);

// Confidence-weighted homogeneous DLT. Throws InsufficientViewsError for
// fewer than two observations and DegenerateGeometryError when the design
// matrix is rank deficient (sigma_min/sigma_max < 1e-12).
Vec3 triangulate_dlt(const std::vector<Observation>& observations);

std::vector<CameraView> load_calibration(const std::string& path);
void save_calibration(const std::string& path, const std::vector<CameraView>& cameras);

}  // namespace mocap::geom
