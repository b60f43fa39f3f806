#include "mocap/geometry.hpp"

#include <json.hpp>

#include <fstream>

namespace mocap::geom {

Eigen::Matrix<double, 3, 4> CameraView::projection_matrix() const {
    Eigen::Matrix<double, 3, 4> Rt;
    Rt.leftCols<3>() = R;
    Rt.col(3) = t;
    return K * Rt;
}

void CameraView::validate(const std::string& what) const {
    const double ortho = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-9 || std::abs(R.determinant() - 1.0) > 1e-9)
        throw DataError(what + ": rotation is not orthonormal with determinant +1");
    if (K(0, 0) <= 0 || K(1, 1) <= 0)
        throw DataError(what + ": focal lengths must be positive");
    if (K(0, 2) < 0 || K(0, 2) > width || K(1, 2) < 0 || K(1, 2) > height)
        throw DataError(what + ": principal point outside image bounds");
}

Vec2 project(const CameraView& cam, const Vec3& point) {
    const Vec3 pc = cam.R * point + cam.t;
    if (pc.z() <= 0)
        throw BehindCameraError("project: point has depth " + std::to_string(pc.z()));
    return {cam.K(0, 0) * pc.x() / pc.z() + cam.K(0, 2),
            cam.K(1, 1) * pc.y() / pc.z() + cam.K(1, 2)};
}

Ray pixel_ray(const CameraView& cam, const Vec2& pixel) {
    if (!pixel.allFinite()) throw ContractError("pixel_ray: non-finite pixel");
    const Vec3 dir_cam{(pixel.x() - cam.K(0, 2)) / cam.K(0, 0),
                       (pixel.y() - cam.K(1, 2)) / cam.K(1, 1), 1.0};
    Ray r;
    r.origin = cam.center();
    r.direction = (cam.R.transpose() * dir_cam).normalized();
    return r;
}

namespace {

bool ray_less(const Ray& a, const Ray& b) {
    for (int i = 0; i < 3; i++) {
        if (a.origin[i] != b.origin[i]) return a.origin[i] < b.origin[i];
    }
    for (int i = 0; i < 3; i++) {
        if (a.direction[i] != b.direction[i]) return a.direction[i] < b.direction[i];
    }
    return false;
}

}  // namespace

double line_distance(const Ray& a, const Ray& b) {
    // evaluate in a canonical argument order so the result is
    // bit-identical under swap
    const Ray& lo = ray_less(b, a) ? b : a;
    const Ray& hi = ray_less(b, a) ? a : b;
    const Vec3 n = lo.direction.cross(hi.direction);
    const Vec3 d = hi.origin - lo.origin;
    const double nn = n.norm();
    if (nn < 1e-12) {
        // parallel: distance from hi.origin to the line carrying lo
        return (d - d.dot(lo.direction) * lo.direction).norm();
    }
    return std::abs(d.dot(n)) / nn;
}

Vec3 triangulate_dlt(const std::vector<Observation>& observations) {
    if (observations.size() < 2)
        throw InsufficientViewsError("triangulate: need at least 2 observations, got " +
                                     std::to_string(observations.size()));
    Eigen::MatrixXd A(2 * observations.size(), 4);
    for (size_t i = 0; i < observations.size(); i++) {
        const auto& obs = observations[i];
        const auto P = obs.camera->projection_matrix();
        const double w = obs.confidence;
        A.row(2 * i) = w * (obs.pixel.x() * P.row(2) - P.row(0));
        A.row(2 * i + 1) = w * (obs.pixel.y() * P.row(2) - P.row(1));
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (!(sv(0) > 0)) throw DegenerateGeometryError("triangulate: zero design matrix");
    // The smallest singular value is ~0 by construction (it carries the
    // solution); ambiguity shows up in the second smallest.
    if (sv(2) / sv(0) < 1e-12)
        throw DegenerateGeometryError("triangulate: rank-deficient system, sigma2/sigma0 = " +
                                      std::to_string(sv(2) / sv(0)));
    const Eigen::Vector4d X = svd.matrixV().col(3);
    if (std::abs(X(3)) < 1e-12 * X.head<3>().norm())
        throw DegenerateGeometryError("triangulate: point at infinity");
    return X.head<3>() / X(3);
}

std::vector<CameraView> load_calibration(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("calibration: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("calibration: invalid JSON in " + path + ": " + e.what());
    }
    if (!j.is_array()) throw DataError("calibration: expected a top-level array in " + path);
    std::vector<CameraView> cams;
    for (size_t i = 0; i < j.size(); i++) {
        const auto& c = j[i];
        try {
            CameraView cam;
            const auto K = c.at("K").get<std::vector<double>>();
            const auto R = c.at("R").get<std::vector<double>>();
            const auto t = c.at("t").get<std::vector<double>>();
            const auto size = c.at("size").get<std::vector<int>>();
            if (K.size() != 9 || R.size() != 9 || t.size() != 3 || size.size() != 2)
                throw DataError("calibration: wrong array lengths for camera " +
                                std::to_string(i));
            for (int r = 0; r < 3; r++)
                for (int k = 0; k < 3; k++) {
                    cam.K(r, k) = K[3 * r + k];
                    cam.R(r, k) = R[3 * r + k];
                }
            cam.t = Vec3(t[0], t[1], t[2]);
            cam.width = size[0];
            cam.height = size[1];
            cam.validate("calibration camera " + std::to_string(i));
            cams.push_back(cam);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("calibration: camera " + std::to_string(i) + " malformed: " +
                            e.what());
        }
    }
    return cams;
}

void save_calibration(const std::string& path, const std::vector<CameraView>& cameras) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& cam : cameras) {
        nlohmann::json c;
        std::vector<double> K(9), R(9);
        for (int r = 0; r < 3; r++)
            for (int k = 0; k < 3; k++) {
                K[3 * r + k] = cam.K(r, k);
                R[3 * r + k] = cam.R(r, k);
            }
        c["K"] = K;
        c["R"] = R;
        c["t"] = {cam.t.x(), cam.t.y(), cam.t.z()};
        c["size"] = {cam.width, cam.height};
        j.push_back(c);
    }
    std::ofstream os(path);
    if (!os) throw DataError("calibration: cannot open " + path + " for writing");
    os << j.dump(1) << "\n";
}

}  // namespace mocap::geom
