#include "mocap/fusion.hpp"

#include <json.hpp>

#include <fstream>

namespace mocap::fusion {

using dmae::MotionWindow;
using geom::Vec3;

void SkeletonMapping::validate() const {
    if (W.rows() < 1 || W.cols() < 1) throw DataError("mapping: empty weight matrix");
    for (int j = 0; j < W.cols(); j++) {
        double sum = 0;
        for (int i = 0; i < W.rows(); i++) {
            if (W(i, j) < 0)
                throw DataError("mapping: negative weight for target joint " + std::to_string(j));
            sum += W(i, j);
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw DataError("mapping: target joint " + std::to_string(j) +
                            " weights sum to " + std::to_string(sum));
    }
}

SkeletonMapping load_mapping(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("mapping: cannot open " + path);
    try {
        nlohmann::json j;
        is >> j;
        SkeletonMapping m;
        m.src = j.at("src").get<std::string>();
        m.tar = j.at("tar").get<std::string>();
        const auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
        if (rows.empty()) throw DataError("mapping: empty weights in " + path);
        // file rows are per target joint; internally columns are
        m.W.resize(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()));
        for (size_t t = 0; t < rows.size(); t++) {
            if (rows[t].size() != rows[0].size())
                throw DataError("mapping: ragged weights in " + path);
            for (size_t s = 0; s < rows[t].size(); s++) m.W(s, t) = rows[t][s];
        }
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("mapping: malformed " + path + ": " + e.what());
    }
}

void save_mapping(const std::string& path, const SkeletonMapping& mapping) {
    nlohmann::json j;
    j["src"] = mapping.src;
    j["tar"] = mapping.tar;
    auto rows = nlohmann::json::array();
    for (int t = 0; t < mapping.W.cols(); t++) {
        auto row = nlohmann::json::array();
        for (int s = 0; s < mapping.W.rows(); s++) row.push_back(mapping.W(s, t));
        rows.push_back(std::move(row));
    }
    j["weights"] = std::move(rows);
    std::ofstream os(path);
    if (!os) throw DataError("mapping: cannot open " + path + " for writing");
    os << j.dump(1) << "\n";
}

const SkeletonMapping& mapping_basic15_to_compact10() {
    static const SkeletonMapping m = [] {
        SkeletonMapping mapping;
        mapping.src = "basic15";
        mapping.tar = "compact10";
        mapping.W = Eigen::MatrixXd::Zero(15, 10);
        auto set = [&](int tar, std::initializer_list<int> srcs) {
            for (int s : srcs) mapping.W(s, tar) = 1.0 / srcs.size();
        };
        set(0, {0});            // pelvis = midhip
        set(1, {1});            // neck
        set(2, {1, 2});         // head = mid(neck, head)
        set(3, {3, 4});         // l_arm = mid(shoulder, elbow)
        set(4, {4, 5});         // l_hand = mid(elbow, wrist)
        set(5, {6, 7});         // r_arm
        set(6, {7, 8});         // r_hand
        set(7, {9, 10, 11});    // l_leg
        set(8, {12, 13, 14});   // r_leg
        set(9, {0, 1});         // spine = mid(midhip, neck)
        mapping.validate();
        return mapping;
    }();
    return m;
}

void interpolate_skeleton(const std::vector<Vec3>& src, const std::vector<uint8_t>& src_missing,
                          const SkeletonMapping& mapping, std::vector<Vec3>& tar,
                          std::vector<uint8_t>& tar_missing) {
    const int js = mapping.source_joints();
    const int jt = mapping.target_joints();
    if (static_cast<int>(src.size()) != js)
        throw DataError("interpolate: source has " + std::to_string(src.size()) +
                        " joints, mapping expects " + std::to_string(js));
    tar.assign(jt, Vec3::Zero());
    tar_missing.assign(jt, 0);
    for (int j = 0; j < jt; j++) {
        Vec3 acc = Vec3::Zero();
        for (int i = 0; i < js; i++) {
            if (mapping.W(i, j) == 0.0) continue;
            if (src_missing[i]) {
                tar_missing[j] = 1;  // cannot be interpolated
                break;
            }
            acc += mapping.W(i, j) * src[i];
        }
        if (!tar_missing[j]) tar[j] = acc;
    }
}

Track interpolate_track(const Track& src, const SkeletonMapping& mapping) {
    Track out;
    out.identity = src.identity;
    out.start_frame = src.start_frame;
    out.pos.resize(src.length());
    out.missing.resize(src.length());
    for (int t = 0; t < src.length(); t++)
        interpolate_skeleton(src.pos[t], src.missing[t], mapping, out.pos[t], out.missing[t]);
    return out;
}

MotionWindow fuse_windows(const MotionWindow& src, const MotionWindow& tar) {
    if (src.T != tar.T)
        throw ContractError("fuse: window lengths differ (" + std::to_string(src.T) + " vs " +
                            std::to_string(tar.T) + ")");
    MotionWindow fused;
    fused.T = src.T;
    fused.J = src.J + tar.J;
    fused.anchor = src.anchor;
    fused.identity = src.identity;
    fused.start_frame = src.start_frame;
    fused.pos.reserve(fused.T * fused.J);
    fused.mask.reserve(fused.T * fused.J);
    for (int t = 0; t < fused.T; t++) {
        for (int j = 0; j < src.J; j++) {
            fused.pos.push_back(src.pos[src.index(t, j)]);
            fused.mask.push_back(src.mask[src.index(t, j)]);
        }
        for (int j = 0; j < tar.J; j++) {
            fused.pos.push_back(tar.pos[tar.index(t, j)]);
            fused.mask.push_back(tar.mask[tar.index(t, j)]);
        }
    }
    return fused;
}

std::pair<MotionWindow, MotionWindow> defuse_window(const MotionWindow& fused, int src_joints) {
    if (src_joints < 1 || src_joints >= fused.J)
        throw ContractError("defuse: bad source joint count " + std::to_string(src_joints));
    MotionWindow src, tar;
    src.T = tar.T = fused.T;
    src.J = src_joints;
    tar.J = fused.J - src_joints;
    src.anchor = tar.anchor = fused.anchor;
    src.identity = tar.identity = fused.identity;
    src.start_frame = tar.start_frame = fused.start_frame;
    for (int t = 0; t < fused.T; t++) {
        for (int j = 0; j < src.J; j++) {
            src.pos.push_back(fused.pos[fused.index(t, j)]);
            src.mask.push_back(fused.mask[fused.index(t, j)]);
        }
        for (int j = 0; j < tar.J; j++) {
            tar.pos.push_back(fused.pos[fused.index(t, src.J + j)]);
            tar.mask.push_back(fused.mask[fused.index(t, src.J + j)]);
        }
    }
    return {std::move(src), std::move(tar)};
}

namespace {

geom::Vec3 masked_anchor(const MotionWindow& w, const std::vector<uint8_t>& mask, int midhip) {
    for (int t = 0; t < w.T; t++)
        if (!mask[w.index(t, midhip)]) return w.pos[w.index(t, midhip)];
    Vec3 c = Vec3::Zero();
    int n = 0;
    for (int i = 0; i < w.T * w.J; i++) {
        if (mask[i]) continue;
        c += w.pos[i];
        n++;
    }
    if (n == 0) throw ContractError("finetune: window has no visible source cells");
    return c / n;
}

}  // namespace

dmae::LossCurve finetune(dmae::DmaeModel& model,
                         const std::vector<std::pair<MotionWindow, MotionWindow>>& pairs,
                         const FinetuneConfig& cfg) {
    if (pairs.empty()) throw ContractError("finetune: empty dataset");
    const int js = pairs[0].first.J;
    const int jt = pairs[0].second.J;
    const int T = pairs[0].first.T;
    const int fused_joints = js + jt;
    if (cfg.source_mask_ratio < 0 || cfg.source_mask_ratio >= 1.0)
        throw ConfigError("finetune.source_mask_ratio: outside [0,1)");
    if (model.cfg.joints == js) {
        model.extend_joints(fused_joints, model.cfg.skeleton + "+fused");
    } else if (model.cfg.joints != fused_joints) {
        throw DataError("finetune: model joint axis " + std::to_string(model.cfg.joints) +
                        " matches neither source nor fused layout");
    }
    if (model.cfg.window != T)
        throw DataError("finetune: window length mismatch");

    const auto& tc = cfg.schedule;
    num::NamedParams params = model.parameters();
    const int n = static_cast<int>(pairs.size());
    const int steps_per_epoch = (n + tc.batch - 1) / tc.batch;
    const long long total_steps = static_cast<long long>(tc.epochs) * steps_per_epoch;
    num::OptimizerState opt;
    opt.init(params, tc.base_lr, total_steps, tc.weight_decay);

    dmae::LossCurve curve;
    std::vector<int> order(n);
    for (int i = 0; i < n; i++) order[i] = i;
    long long step = 0;
    for (int epoch = 0; epoch < tc.epochs; epoch++) {
        auto epoch_rng = make_rng(tc.seed, 0xF7 + epoch);
        std::shuffle(order.begin(), order.end(), epoch_rng);
        for (int base = 0; base < n; base += tc.batch) {
            const int count = std::min(tc.batch, n - base);
            for (auto& [name, p] : params) p.zero_grad();
            std::vector<dmae::MotionWindow> prepared;
            std::vector<std::vector<uint8_t>> batch_loss_masks;
            prepared.reserve(count);
            batch_loss_masks.reserve(count);
            for (int k = 0; k < count; k++) {
                const auto& [raw_src, raw_tar] = pairs[order[base + k]];
                const uint64_t step_seed =
                    mix_seed(tc.seed, static_cast<uint64_t>(step) * 4096 + k);

                // source mask: data gaps plus a fresh r_ft sample each step
                std::vector<uint8_t> src_mask = raw_src.mask;
                if (cfg.source_mask_ratio > 0) {
                    dmae::MaskSpec ms;
                    ms.ratio = cfg.source_mask_ratio;
                    ms.seed = step_seed;
                    const auto extra = dmae::sample_mask(ms, T, js);
                    for (size_t i = 0; i < src_mask.size(); i++)
                        src_mask[i] = src_mask[i] || extra[i];
                }

                MotionWindow src = raw_src;
                src.mask = src_mask;
                const Vec3 anchor = masked_anchor(src, src_mask, model.cfg.midhip);
                for (auto& p : src.pos) p -= anchor;
                src.anchor = anchor;
                MotionWindow tar = raw_tar;
                for (auto& p : tar.pos) p -= anchor;
                tar.anchor = anchor;
                tar.mask.assign(tar.pos.size(), 1);  // the entire target is masked

                MotionWindow fused = fuse_windows(src, tar);
                if (tc.augment) {
                    auto aug_rng = make_rng(step_seed, 0xA07);
                    std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
                    dmae::augment_rotate_z(fused, u(aug_rng));
                }
                // supervise target cells only
                std::vector<uint8_t> loss_mask(fused.pos.size(), 0);
                for (int t = 0; t < T; t++)
                    for (int j = js; j < fused_joints; j++)
                        loss_mask[fused.index(t, j)] = 1;
                prepared.push_back(std::move(fused));
                batch_loss_masks.push_back(std::move(loss_mask));
            }
            std::vector<const std::vector<uint8_t>*> loss_masks;
            for (const auto& lm : batch_loss_masks) loss_masks.push_back(&lm);
            dmae::ForwardCtx ctx{true, model.cfg.dropout,
                                 mix_seed(tc.seed, 0xF1000000ull + static_cast<uint64_t>(step)),
                                 0};
            const auto loss = dmae::batched_step_loss(model, prepared, loss_masks, &ctx);
            num::backward(loss);
            const double batch_loss = loss.item();
            if (!std::isfinite(batch_loss))
                throw TrainingError("finetune: non-finite loss at step " + std::to_string(step));
            curve.lr.push_back(opt.apply(params));
            curve.loss.push_back(batch_loss);
            step++;
        }
    }
    return curve;
}

std::vector<Vec3> predict_target_window(dmae::DmaeModel& model,
                                        const std::vector<std::vector<Vec3>>& src_raw,
                                        const std::vector<std::vector<uint8_t>>& src_missing,
                                        int src_joints, int tar_joints) {
    if (model.cfg.joints != src_joints + tar_joints)
        throw DataError("predict_target: model joint axis does not match the fused layout");
    const int T = static_cast<int>(src_raw.size());
    MotionWindow src = dmae::normalize_window(src_raw, src_missing, model.cfg.midhip);
    MotionWindow tar;
    tar.T = T;
    tar.J = tar_joints;
    tar.pos.assign(static_cast<size_t>(T) * tar_joints, Vec3::Zero());
    tar.mask.assign(static_cast<size_t>(T) * tar_joints, 1);
    tar.anchor = src.anchor;
    MotionWindow fused = fuse_windows(src, tar);
    const auto pred = dmae::predict_window(model, fused);
    std::vector<Vec3> out(static_cast<size_t>(T) * tar_joints);
    for (int t = 0; t < T; t++)
        for (int j = 0; j < tar_joints; j++)
            out[t * tar_joints + j] = pred[fused.index(t, src_joints + j)] + src.anchor;
    return out;
}

}  // namespace mocap::fusion
