#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mocap/motion_io.hpp"
#include "mocap/skeleton.hpp"

namespace mocap::metrics {

struct EvalOptions {
    double pck_threshold = 0.2;  // meters
    double pcp_alpha = 0.5;      // fraction of the ground-truth limb length, inclusive
};

// Aligned frame ranges are compared; joints count only where both sides have
// them (for MPJPE/correctness) per the definitions below.
double mpjpe_mm(const Track& pred, const Track& gt);

// precision = correct / reconstructed-and-verifiable, recall = correct / gt.
std::pair<double, double> pck_precision_recall(const Track& pred, const Track& gt,
                                               double threshold_m);

struct LimbScore {
    std::string name;
    int correct = 0;
    int total = 0;
    double pct() const { return total ? 100.0 * correct / total : 0.0; }
};

// A limb is correct when both predicted endpoints lie within alpha x the
// ground-truth limb length of their endpoints; a missing endpoint fails the
// limb; zero-length ground-truth limbs are skipped.
std::vector<LimbScore> pcp_per_limb(const Track& pred, const Track& gt,
                                    const SkeletonDefinition& def, double alpha,
                                    int* skipped_limbs = nullptr);
double pcp_percent(const Track& pred, const Track& gt, const SkeletonDefinition& def,
                   double alpha);

struct IdentityEval {
    int pred_id = -1;
    int gt_id = -1;
    double pcp = 0;
    double precision = 0;
    double recall = 0;
    double mpjpe_mm = 0;
    long long compared_joints = 0;
};

struct EvalReport {
    std::vector<IdentityEval> per_identity;
    IdentityEval aggregate;
    std::vector<LimbScore> per_limb;  // across all matched identities
    double per_limb_average = 0;      // mean of limb percentages
};

// Greedy minimal-MPJPE pairing between predicted and ground-truth identities,
// then all metrics per pair and pooled.
EvalReport evaluate(const MotionSequence& pred, const MotionSequence& gt,
                    const SkeletonDefinition& def, const EvalOptions& options);

void write_eval_csv(const std::string& path, const EvalReport& report, uint64_t config_hash,
                    uint64_t seed);
void write_limb_csv(const std::string& path, const EvalReport& report, uint64_t config_hash,
                    uint64_t seed);

}  // namespace mocap::metrics
