#include "mocap/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

namespace mocap::metrics {

namespace {

// iterate over frames the two tracks share
template <class Fn>
void for_common_frames(const Track& a, const Track& b, Fn&& fn) {
    const int lo = std::max(a.start_frame, b.start_frame);
    const int hi = std::min(a.start_frame + a.length(), b.start_frame + b.length());
    for (int t = lo; t < hi; t++) fn(t - a.start_frame, t - b.start_frame);
}

}  // namespace

double mpjpe_mm(const Track& pred, const Track& gt) {
    double sum = 0;
    long long n = 0;
    for_common_frames(pred, gt, [&](int tp, int tg) {
        const int J = static_cast<int>(std::min(pred.pos[tp].size(), gt.pos[tg].size()));
        for (int j = 0; j < J; j++) {
            if (pred.missing[tp][j] || gt.missing[tg][j]) continue;
            sum += (pred.pos[tp][j] - gt.pos[tg][j]).norm();
            n++;
        }
    });
    if (n == 0) throw UndefinedMetricError("mpjpe: no comparable joints");
    return sum / n * 1000.0;
}

std::pair<double, double> pck_precision_recall(const Track& pred, const Track& gt,
                                               double threshold_m) {
    long long correct = 0, reconstructed = 0, truth = 0;
    for_common_frames(pred, gt, [&](int tp, int tg) {
        const int J = static_cast<int>(std::min(pred.pos[tp].size(), gt.pos[tg].size()));
        for (int j = 0; j < J; j++) {
            const bool has_gt = !gt.missing[tg][j];
            const bool has_pred = !pred.missing[tp][j];
            if (has_gt) truth++;
            if (has_gt && has_pred) {
                reconstructed++;
                if ((pred.pos[tp][j] - gt.pos[tg][j]).norm() <= threshold_m) correct++;
            }
        }
    });
    if (truth == 0) throw UndefinedMetricError("pck: empty ground truth");
    const double precision = reconstructed ? 100.0 * correct / reconstructed : 0.0;
    const double recall = 100.0 * correct / truth;
    return {precision, recall};
}

std::vector<LimbScore> pcp_per_limb(const Track& pred, const Track& gt,
                                    const SkeletonDefinition& def, double alpha,
                                    int* skipped_limbs) {
    std::vector<LimbScore> scores(def.limbs.size());
    for (size_t l = 0; l < def.limbs.size(); l++) scores[l].name = def.limb_name(l);
    int skipped = 0;
    for_common_frames(pred, gt, [&](int tp, int tg) {
        for (size_t l = 0; l < def.limbs.size(); l++) {
            const auto [a, b] = def.limbs[l];
            if (gt.missing[tg][a] || gt.missing[tg][b]) continue;  // no truth, no judgment
            const double limb_len = (gt.pos[tg][a] - gt.pos[tg][b]).norm();
            if (limb_len <= 0) {
                skipped++;
                continue;
            }
            scores[l].total++;
            if (pred.missing[tp][a] || pred.missing[tp][b]) continue;  // incorrect
            const bool ok_a = (pred.pos[tp][a] - gt.pos[tg][a]).norm() <= alpha * limb_len;
            const bool ok_b = (pred.pos[tp][b] - gt.pos[tg][b]).norm() <= alpha * limb_len;
            if (ok_a && ok_b) scores[l].correct++;
        }
    });
    if (skipped_limbs) *skipped_limbs = skipped;
    if (skipped > 0)
        std::fprintf(stderr, "pcp: skipped %d zero-length ground-truth limb instances\n",
                     skipped);
    return scores;
}

double pcp_percent(const Track& pred, const Track& gt, const SkeletonDefinition& def,
                   double alpha) {
    const auto scores = pcp_per_limb(pred, gt, def, alpha);
    long long correct = 0, total = 0;
    for (const auto& s : scores) {
        correct += s.correct;
        total += s.total;
    }
    return total ? 100.0 * correct / total : 0.0;
}

EvalReport evaluate(const MotionSequence& pred, const MotionSequence& gt,
                    const SkeletonDefinition& def, const EvalOptions& options) {
    const auto pred_tracks = extract_tracks(pred);
    const auto gt_tracks = extract_tracks(gt);

    // greedy minimal-MPJPE pairing
    std::vector<std::pair<int, int>> pairs;  // indices into pred_tracks/gt_tracks
    std::set<int> used_pred, used_gt;
    while (true) {
        double best = std::numeric_limits<double>::infinity();
        int bp = -1, bg = -1;
        for (size_t p = 0; p < pred_tracks.size(); p++) {
            if (used_pred.count(static_cast<int>(p))) continue;
            for (size_t g = 0; g < gt_tracks.size(); g++) {
                if (used_gt.count(static_cast<int>(g))) continue;
                double err;
                try {
                    err = mpjpe_mm(pred_tracks[p], gt_tracks[g]);
                } catch (const UndefinedMetricError&) {
                    continue;
                }
                if (err < best) {
                    best = err;
                    bp = static_cast<int>(p);
                    bg = static_cast<int>(g);
                }
            }
        }
        if (bp < 0) break;
        used_pred.insert(bp);
        used_gt.insert(bg);
        pairs.emplace_back(bp, bg);
    }
    std::sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
        return gt_tracks[a.second].identity < gt_tracks[b.second].identity;
    });

    EvalReport report;
    report.per_limb.resize(def.limbs.size());
    for (size_t l = 0; l < def.limbs.size(); l++) report.per_limb[l].name = def.limb_name(l);

    double mpjpe_weighted = 0;
    long long correct_pck = 0, reconstructed = 0, truth = 0, limb_correct = 0, limb_total = 0;
    for (const auto& [p, g] : pairs) {
        const auto& tp = pred_tracks[p];
        const auto& tg = gt_tracks[g];
        IdentityEval ev;
        ev.pred_id = tp.identity;
        ev.gt_id = tg.identity;
        ev.mpjpe_mm = mpjpe_mm(tp, tg);
        std::tie(ev.precision, ev.recall) =
            pck_precision_recall(tp, tg, options.pck_threshold);
        ev.pcp = pcp_percent(tp, tg, def, options.pcp_alpha);
        const auto limbs = pcp_per_limb(tp, tg, def, options.pcp_alpha);
        for (size_t l = 0; l < limbs.size(); l++) {
            report.per_limb[l].correct += limbs[l].correct;
            report.per_limb[l].total += limbs[l].total;
            limb_correct += limbs[l].correct;
            limb_total += limbs[l].total;
        }
        // pooled counters for the aggregate row
        for_common_frames(tp, tg, [&](int fp, int fg) {
            const int J = static_cast<int>(std::min(tp.pos[fp].size(), tg.pos[fg].size()));
            for (int j = 0; j < J; j++) {
                const bool has_gt = !tg.missing[fg][j];
                const bool has_pred = !tp.missing[fp][j];
                if (has_gt) truth++;
                if (has_gt && has_pred) {
                    reconstructed++;
                    const double d = (tp.pos[fp][j] - tg.pos[fg][j]).norm();
                    mpjpe_weighted += d;
                    ev.compared_joints++;
                    if (d <= options.pck_threshold) correct_pck++;
                }
            }
        });
        report.per_identity.push_back(ev);
    }

    // unmatched ground-truth tracks still count against recall
    for (size_t g = 0; g < gt_tracks.size(); g++) {
        if (used_gt.count(static_cast<int>(g))) continue;
        for (const auto& row : gt_tracks[g].missing)
            for (uint8_t m : row) truth += m == 0;
    }

    auto& agg = report.aggregate;
    long long compared = 0;
    for (const auto& ev : report.per_identity) compared += ev.compared_joints;
    agg.compared_joints = compared;
    agg.mpjpe_mm = compared ? mpjpe_weighted / compared * 1000.0 : 0.0;
    agg.precision = reconstructed ? 100.0 * correct_pck / reconstructed : 0.0;
    agg.recall = truth ? 100.0 * correct_pck / truth : 0.0;
    agg.pcp = limb_total ? 100.0 * limb_correct / limb_total : 0.0;

    double limb_pct_sum = 0;
    int limb_kinds = 0;
    for (const auto& s : report.per_limb) {
        if (s.total == 0) continue;
        limb_pct_sum += s.pct();
        limb_kinds++;
    }
    report.per_limb_average = limb_kinds ? limb_pct_sum / limb_kinds : 0.0;
    return report;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void write_header(std::ofstream& os, uint64_t config_hash, uint64_t seed) {
    char line[80];
    std::snprintf(line, sizeof(line), "# config=%016llx seed=%llu\n",
                  static_cast<unsigned long long>(config_hash),
                  static_cast<unsigned long long>(seed));
    os << line;
}

}  // namespace

void write_eval_csv(const std::string& path, const EvalReport& report, uint64_t config_hash,
                    uint64_t seed) {
    std::ofstream os(path);
    if (!os) throw DataError("eval: cannot open " + path + " for writing");
    write_header(os, config_hash, seed);
    os << "identity,gt_identity,pcp_pct,precision_pct,recall_pct,mpjpe_mm,compared_joints\n";
    for (const auto& ev : report.per_identity) {
        os << ev.pred_id << "," << ev.gt_id << "," << fmt(ev.pcp) << "," << fmt(ev.precision)
           << "," << fmt(ev.recall) << "," << fmt(ev.mpjpe_mm) << "," << ev.compared_joints
           << "\n";
    }
    const auto& a = report.aggregate;
    os << "aggregate,," << fmt(a.pcp) << "," << fmt(a.precision) << "," << fmt(a.recall) << ","
       << fmt(a.mpjpe_mm) << "," << a.compared_joints << "\n";
}

void write_limb_csv(const std::string& path, const EvalReport& report, uint64_t config_hash,
                    uint64_t seed) {
    std::ofstream os(path);
    if (!os) throw DataError("eval: cannot open " + path + " for writing");
    write_header(os, config_hash, seed);
    os << "limb,pcp_pct,correct,total\n";
    for (const auto& s : report.per_limb)
        os << s.name << "," << fmt(s.pct()) << "," << s.correct << "," << s.total << "\n";
    os << "Average," << fmt(report.per_limb_average) << ",,\n";
}

}  // namespace mocap::metrics
