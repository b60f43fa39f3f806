#include "mocap/association.hpp"

#include <algorithm>
#include <map>

#include "mocap/hungarian.hpp"

namespace mocap::assoc {

int Skeleton3D::present_count() const {
    int n = 0;
    for (uint8_t m : missing) n += m == 0;
    return n;
}

std::optional<geom::Vec3> Skeleton3D::anchor(int midhip) const {
    if (midhip >= 0 && midhip < static_cast<int>(missing.size()) && !missing[midhip])
        return joints[midhip];
    geom::Vec3 c = geom::Vec3::Zero();
    int n = 0;
    for (size_t j = 0; j < joints.size(); j++) {
        if (missing[j]) continue;
        c += joints[j];
        n++;
    }
    if (n == 0) return std::nullopt;
    return c / n;
}

void filter_joints(FrameDetections& frame, const AssociationConfig& cfg) {
    size_t joint_count = 0;
    for (auto& vd : frame.views) {
        for (auto& cand : vd.candidates) {
            joint_count = std::max(joint_count, cand.joints.size());
            for (auto& j : cand.joints)
                if (j.valid && j.confidence < cfg.th_p) j.valid = false;
        }
    }
    // visibility census per joint index: in how many views does anyone still
    // carry it
    std::vector<int> views_seeing(joint_count, 0);
    for (const auto& vd : frame.views) {
        std::vector<char> seen(joint_count, 0);
        for (const auto& cand : vd.candidates)
            for (size_t j = 0; j < cand.joints.size(); j++)
                if (cand.joints[j].valid) seen[j] = 1;
        for (size_t j = 0; j < joint_count; j++) views_seeing[j] += seen[j];
    }
    for (auto& vd : frame.views)
        for (auto& cand : vd.candidates)
            for (size_t j = 0; j < cand.joints.size(); j++)
                if (views_seeing[j] < cfg.th_v) cand.joints[j].valid = false;
}

ViewLabels propagate_identity(const std::vector<Skeleton3D>& prev, const FrameDetections& frame,
                              const std::vector<geom::CameraView>& cameras,
                              const AssociationConfig& cfg) {
    ViewLabels labels(frame.views.size());
    for (size_t v = 0; v < frame.views.size(); v++)
        labels[v].assign(frame.views[v].candidates.size(), -1);

    for (size_t vi = 0; vi < frame.views.size(); vi++) {
        const auto& vd = frame.views[vi];
        if (vd.view < 0 || vd.view >= static_cast<int>(cameras.size())) continue;
        const auto& cam = cameras[vd.view];
        const double diag = cam.image_diagonal();

        // candidate pairs (identity, candidate) ordered by distance; greedy
        // nearest-wins with both sides exclusive
        struct Entry {
            double dist;
            int skel;
            int cand;
        };
        std::vector<Entry> entries;
        for (size_t s = 0; s < prev.size(); s++) {
            auto anchor = prev[s].anchor(cfg.midhip);
            if (!anchor) continue;
            geom::Vec2 proj;
            try {
                proj = geom::project(cam, *anchor);
            } catch (const BehindCameraError&) {
                continue;
            }
            for (size_t c = 0; c < vd.candidates.size(); c++) {
                const auto& hip = vd.candidates[c].joints;
                if (cfg.midhip >= static_cast<int>(hip.size()) || !hip[cfg.midhip].valid)
                    continue;
                const double dist = (hip[cfg.midhip].px - proj).norm() / diag;
                if (dist < cfg.th_d) entries.push_back({dist, static_cast<int>(s),
                                                        static_cast<int>(c)});
            }
        }
        std::stable_sort(entries.begin(), entries.end(),
                         [](const Entry& a, const Entry& b) { return a.dist < b.dist; });
        std::vector<char> skel_used(prev.size(), 0), cand_used(vd.candidates.size(), 0);
        for (const auto& e : entries) {
            if (skel_used[e.skel] || cand_used[e.cand]) continue;
            skel_used[e.skel] = 1;
            cand_used[e.cand] = 1;
            labels[vi][e.cand] = prev[e.skel].identity;
        }
    }
    return labels;
}

std::optional<double> geometry_affinity(const FrameDetections& frame, int view_a, int cand_a,
                                        int view_b, int cand_b,
                                        const std::vector<geom::CameraView>& cameras,
                                        const AssociationConfig& cfg) {
    const auto& a = frame.views[view_a];
    const auto& b = frame.views[view_b];
    const auto& ja = a.candidates[cand_a].joints;
    const auto& jb = b.candidates[cand_b].joints;
    if (cfg.midhip >= static_cast<int>(ja.size()) || !ja[cfg.midhip].valid) return std::nullopt;
    if (cfg.midhip >= static_cast<int>(jb.size()) || !jb[cfg.midhip].valid) return std::nullopt;
    const auto ray_a = geom::pixel_ray(cameras[a.view], ja[cfg.midhip].px);
    const auto ray_b = geom::pixel_ray(cameras[b.view], jb[cfg.midhip].px);
    const double d = geom::line_distance(ray_a, ray_b);
    return std::clamp(1.0 - d / cfg.psi, 0.0, 1.0);
}

std::optional<double> appearance_affinity(const FrameDetections& frame, int view_a, int cand_a,
                                          int view_b, int cand_b, const AssociationConfig& cfg) {
    const auto& pa = frame.views[view_a].candidates[cand_a].patch;
    const auto& pb = frame.views[view_b].candidates[cand_b].patch;
    if (!pa || !pb) return std::nullopt;
    const Eigen::Vector3d ma = pa->channel_median();
    const Eigen::Vector3d mb = pb->channel_median();
    const double mse = (ma - mb).squaredNorm() / 3.0;
    return std::clamp(1.0 - mse / cfg.phi, 0.0, 1.0);
}

AffinityMatrices build_affinities(const FrameDetections& frame, int view_a, int view_b,
                                  const std::vector<geom::CameraView>& cameras,
                                  const AssociationConfig& cfg) {
    const int na = static_cast<int>(frame.views[view_a].candidates.size());
    const int nb = static_cast<int>(frame.views[view_b].candidates.size());
    AffinityMatrices out;
    out.G = Eigen::MatrixXd::Zero(na, nb);
    out.F = Eigen::MatrixXd::Zero(na, nb);
    out.defined.setZero(na, nb);
    for (int i = 0; i < na; i++) {
        for (int j = 0; j < nb; j++) {
            auto g = geometry_affinity(frame, view_a, i, view_b, j, cameras, cfg);
            if (!g) continue;  // no mid-hip, pair skipped
            out.G(i, j) = *g;
            out.defined(i, j) = 1;
            if (auto f = appearance_affinity(frame, view_a, i, view_b, j, cfg)) out.F(i, j) = *f;
        }
    }
    return out;
}

ViewLabels match_identities(const FrameDetections& frame,
                            const std::vector<geom::CameraView>& cameras,
                            const AssociationConfig& cfg, const ViewLabels& propagated,
                            int* next_identity) {
    const size_t n_views = frame.views.size();
    ViewLabels labels = propagated;
    if (labels.size() != n_views) {
        labels.assign(n_views, {});
        for (size_t v = 0; v < n_views; v++)
            labels[v].assign(frame.views[v].candidates.size(), -1);
    }
    if (n_views == 0) return labels;

    // anchor view: most candidates, ties to the lowest view index
    size_t anchor = 0;
    for (size_t v = 1; v < n_views; v++)
        if (frame.views[v].candidates.size() > frame.views[anchor].candidates.size()) anchor = v;

    const size_t n_anchor = frame.views[anchor].candidates.size();

    // cluster per anchor candidate: members[view] = candidate index
    std::vector<std::vector<int>> members(n_anchor, std::vector<int>(n_views, -1));
    for (size_t a = 0; a < n_anchor; a++) members[a][anchor] = static_cast<int>(a);

    // propagated identities already own their labeled candidates per view
    std::map<int, std::vector<int>> identity_members;  // identity -> per-view candidate
    for (size_t v = 0; v < n_views; v++)
        for (size_t c = 0; c < labels[v].size(); c++)
            if (labels[v][c] >= 0) {
                auto& m = identity_members.try_emplace(labels[v][c],
                                                       std::vector<int>(n_views, -1))
                              .first->second;
                m[v] = static_cast<int>(c);
            }

    for (size_t v = 0; v < n_views; v++) {
        if (v == anchor) continue;
        AffinityMatrices aff = build_affinities(frame, static_cast<int>(anchor),
                                                static_cast<int>(v), cameras, cfg);
        // rows: anchor candidates still lacking a member in view v; columns:
        // unlabeled candidates of view v
        std::vector<int> row_ids, col_ids;
        for (size_t a = 0; a < n_anchor; a++) {
            const int id = labels[anchor][a];
            if (id >= 0 && identity_members[id][v] >= 0) continue;  // fixed by propagation
            row_ids.push_back(static_cast<int>(a));
        }
        for (size_t c = 0; c < frame.views[v].candidates.size(); c++)
            if (labels[v][c] < 0) col_ids.push_back(static_cast<int>(c));
        if (row_ids.empty() || col_ids.empty()) continue;

        std::vector<std::vector<double>> score(row_ids.size(),
                                               std::vector<double>(col_ids.size(), 0.0));
        for (size_t r = 0; r < row_ids.size(); r++)
            for (size_t c = 0; c < col_ids.size(); c++)
                if (aff.defined(row_ids[r], col_ids[c]))
                    score[r][c] = aff.G(row_ids[r], col_ids[c]) + aff.F(row_ids[r], col_ids[c]);

        const std::vector<int> row_to_col = hungarian_max(score);
        for (size_t r = 0; r < row_ids.size(); r++) {
            const int c = row_to_col[r];
            if (c < 0) continue;
            if (score[r][c] < cfg.match_floor) continue;  // rejected even if selected
            if (!aff.defined(row_ids[r], col_ids[c])) continue;
            members[row_ids[r]][v] = col_ids[c];
        }
    }

    // finalize: propagated anchor candidates extend their identity; unlabeled
    // anchor clusters confirmed in enough views spawn fresh identities
    for (size_t a = 0; a < n_anchor; a++) {
        int id = labels[anchor][a];
        if (id < 0) {
            int view_count = 0;
            for (size_t v = 0; v < n_views; v++) view_count += members[a][v] >= 0;
            if (view_count < cfg.th_v) continue;
            id = (*next_identity)++;
            labels[anchor][a] = id;
        }
        for (size_t v = 0; v < n_views; v++)
            if (members[a][v] >= 0) labels[v][members[a][v]] = id;
    }
    return labels;
}

FrameReconstructor::FrameReconstructor(std::vector<geom::CameraView> cameras,
                                       AssociationConfig cfg, int joint_count)
    : m_cams(std::move(cameras)), m_cfg(cfg), m_joint_count(joint_count) {}

void FrameReconstructor::reset() {
    m_prev.clear();
    m_next_identity = 0;
}

std::vector<Skeleton3D> FrameReconstructor::reconstruct(const FrameDetections& input) {
    FrameDetections frame = input;
    filter_joints(frame, m_cfg);
    const ViewLabels propagated = propagate_identity(m_prev, frame, m_cams, m_cfg);
    const ViewLabels labels =
        match_identities(frame, m_cams, m_cfg, propagated, &m_next_identity);

    // identity -> per-view candidate
    std::map<int, std::vector<int>> groups;
    for (size_t v = 0; v < frame.views.size(); v++)
        for (size_t c = 0; c < labels[v].size(); c++)
            if (labels[v][c] >= 0) {
                auto& g = groups.try_emplace(labels[v][c],
                                             std::vector<int>(frame.views.size(), -1))
                              .first->second;
                g[v] = static_cast<int>(c);
            }

    std::vector<Skeleton3D> skeletons;
    for (const auto& [identity, cands] : groups) {
        Skeleton3D skel;
        skel.identity = identity;
        skel.joints.assign(m_joint_count, geom::Vec3::Zero());
        skel.missing.assign(m_joint_count, 1);
        for (int j = 0; j < m_joint_count; j++) {
            std::vector<geom::Observation> obs;
            for (size_t v = 0; v < frame.views.size(); v++) {
                if (cands[v] < 0) continue;
                const auto& joints = frame.views[v].candidates[cands[v]].joints;
                if (j >= static_cast<int>(joints.size()) || !joints[j].valid) continue;
                const int cam_id = frame.views[v].view;
                if (cam_id < 0 || cam_id >= static_cast<int>(m_cams.size())) continue;
                obs.push_back({&m_cams[cam_id], joints[j].px, joints[j].confidence});
            }
            if (obs.size() < 2) continue;  // missing
            try {
                skel.joints[j] = geom::triangulate_dlt(obs);
                skel.missing[j] = 0;
            } catch (const DegenerateGeometryError&) {
                // unusable geometry for this joint only
            }
        }
        skeletons.push_back(std::move(skel));
    }

    // memory for the next frame's propagation: skeletons with something in them
    m_prev.clear();
    for (const auto& s : skeletons)
        if (s.present_count() > 0) m_prev.push_back(s);
    return skeletons;
}

}  // namespace mocap::assoc
