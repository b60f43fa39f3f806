#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mocap/detections.hpp"
#include "mocap/geometry.hpp"

namespace mocap::assoc {

struct AssociationConfig {
    double th_p = 0.2;   // joint confidence threshold
    int th_v = 3;        // minimum visible-camera count
    double th_d = 0.02;  // identity propagation distance, pixel dist / image diagonal
    double psi = 0.2;    // geometry affinity normalizer, meters
    double phi = 0.25;   // appearance affinity normalizer, squared intensity
    int patch_radius = 5;
    double match_floor = 0.5;  // pairs with G + F below this are dropped
    int midhip = 0;            // anchor joint index
};

struct Skeleton3D {
    int identity = -1;
    std::vector<geom::Vec3> joints;
    std::vector<uint8_t> missing;  // 1 = missing; joints[j] meaningful iff missing[j] == 0

    int present_count() const;
    // mid-hip when present, else centroid of present joints
    std::optional<geom::Vec3> anchor(int midhip) const;
};

// Per view, candidate index -> identity (-1 unlabeled).
using ViewLabels = std::vector<std::vector<int>>;

// Pairwise affinities between two views' candidates; entries are clamped to
// [0,1] where defined(i,j) != 0 and zero elsewhere.
struct AffinityMatrices {
    Eigen::MatrixXd G;  // geometry (mid-hip epipolar distance)
    Eigen::MatrixXd F;  // appearance (median-color MSE)
    Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> defined;
};

// Drops joints under th_p, then invalidates any joint index seen by fewer
// than th_v views in every view.
void filter_joints(FrameDetections& frame, const AssociationConfig& cfg);

// Projects previous skeletons into every view and relays identities to
// candidates whose mid-hip lies within th_d (normalized); nearest wins, one
// candidate per identity per view.
ViewLabels propagate_identity(const std::vector<Skeleton3D>& prev, const FrameDetections& frame,
                              const std::vector<geom::CameraView>& cameras,
                              const AssociationConfig& cfg);

// G = clamp(1 - d/psi, 0, 1) on the mid-hip rays; empty when either mid-hip
// is invalid.
std::optional<double> geometry_affinity(const FrameDetections& frame, int view_a, int cand_a,
                                        int view_b, int cand_b,
                                        const std::vector<geom::CameraView>& cameras,
                                        const AssociationConfig& cfg);

// F = clamp(1 - MSE(median_a, median_b)/phi, 0, 1); empty when either patch
// is missing (pair falls back to geometry-only scoring).
std::optional<double> appearance_affinity(const FrameDetections& frame, int view_a, int cand_a,
                                          int view_b, int cand_b, const AssociationConfig& cfg);

AffinityMatrices build_affinities(const FrameDetections& frame, int view_a, int view_b,
                                  const std::vector<geom::CameraView>& cameras,
                                  const AssociationConfig& cfg);

// Anchor-view identity matching: the view with the most candidates anchors,
// every other view is matched to it with the Hungarian algorithm over
// G + F; propagated labels are fixed beforehand, pairs under match_floor are
// dropped, and unlabeled anchor clusters confirmed in >= th_v views receive
// fresh identities starting at *next_identity.
ViewLabels match_identities(const FrameDetections& frame,
                            const std::vector<geom::CameraView>& cameras,
                            const AssociationConfig& cfg, const ViewLabels& propagated,
                            int* next_identity);

// Algorithm: filter -> propagate -> match -> triangulate joints seen by at
// least two views -> label the rest missing. Stateful across frames.
class FrameReconstructor {
   public:
    FrameReconstructor(std::vector<geom::CameraView> cameras, AssociationConfig cfg,
                       int joint_count);

    std::vector<Skeleton3D> reconstruct(const FrameDetections& frame);

    const std::vector<Skeleton3D>& previous() const { return m_prev; }
    void reset();

   private:
    std::vector<geom::CameraView> m_cams;
    AssociationConfig m_cfg;
    int m_joint_count;
    int m_next_identity = 0;
    std::vector<Skeleton3D> m_prev;
};

}  // namespace mocap::assoc
