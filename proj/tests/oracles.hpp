#pragma once

// Test-only oracles, independent of the library paths they check:
//  - central finite differences for gradients
//  - grid-refinement minimizer for line-to-line distance
//  - Gauss-Newton reprojection refinement for triangulation
//  - exhaustive permutation search for assignment problems

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "mocap/tensor.hpp"

namespace oracles {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Max relative error between analytic gradients of `inputs` and central
// finite differences of the scalar produced by `build`. `build` must rebuild
// the whole graph from the inputs' current values on every call.
inline double fd_gradient_max_err(std::vector<mocap::num::Tensor>& inputs,
                                  const std::function<mocap::num::Tensor()>& build,
                                  double h = 1e-5) {
    using namespace mocap::num;
    for (auto& t : inputs) t.zero_grad();
    Tensor loss = build();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

    double worst = 0;
    for (size_t ti = 0; ti < inputs.size(); ti++) {
        auto vals = inputs[ti].data();
        for (int64_t i = 0; i < inputs[ti].size(); i++) {
            const double keep = vals[i];
            vals[i] = keep + h;
            const double up = build().item();
            vals[i] = keep - h;
            const double dn = build().item();
            vals[i] = keep;
            const double fd = (up - dn) / (2 * h);
            worst = std::max(worst, rel_err(analytic[ti][i], fd));
        }
    }
    return worst;
}

// Minimum distance between two parametric lines found by nested grid search,
// no calculus involved.
inline double line_distance_grid(const std::array<double, 3>& o1, const std::array<double, 3>& d1,
                                 const std::array<double, 3>& o2, const std::array<double, 3>& d2) {
    auto dist = [&](double s, double t) {
        double dx = (o1[0] + s * d1[0]) - (o2[0] + t * d2[0]);
        double dy = (o1[1] + s * d1[1]) - (o2[1] + t * d2[1]);
        double dz = (o1[2] + s * d1[2]) - (o2[2] + t * d2[2]);
        return std::sqrt(dx * dx + dy * dy + dz * dz);
    };
    double cs = 0, ct = 0, radius = 64.0;
    double best = dist(cs, ct);
    for (int round = 0; round < 60; round++) {
        const int n = 24;
        double bs = cs, bt = ct;
        for (int i = -n; i <= n; i++) {
            for (int j = -n; j <= n; j++) {
                const double s = cs + radius * i / n;
                const double t = ct + radius * j / n;
                const double d = dist(s, t);
                if (d < best) {
                    best = d;
                    bs = s;
                    bt = t;
                }
            }
        }
        cs = bs;
        ct = bt;
        radius *= 0.25;
        if (radius < 1e-13) break;
    }
    return best;
}

// Exhaustive maximizer of sum score[i][perm(i)] over partial injections of
// rows into columns (every subset of rows may stay unassigned).
struct BruteAssignment {
    double best_score = 0;
    std::vector<int> best;  // column per row, -1 = unassigned
};

inline void brute_assign_rec(const std::vector<std::vector<double>>& score, size_t row,
                             std::vector<int>& cur, std::vector<bool>& used, double acc,
                             double floor, BruteAssignment& out) {
    if (row == score.size()) {
        if (acc > out.best_score) {
            out.best_score = acc;
            out.best = cur;
        }
        return;
    }
    cur[row] = -1;
    brute_assign_rec(score, row + 1, cur, used, acc, floor, out);
    for (size_t c = 0; c < score[row].size(); c++) {
        if (used[c] || score[row][c] < floor) continue;
        used[c] = true;
        cur[row] = static_cast<int>(c);
        brute_assign_rec(score, row + 1, cur, used, acc + score[row][c], floor, out);
        used[c] = false;
    }
    cur[row] = -1;
}

inline BruteAssignment brute_force_assignment(const std::vector<std::vector<double>>& score,
                                              double floor = 0.0) {
    BruteAssignment out;
    out.best.assign(score.size(), -1);
    std::vector<int> cur(score.size(), -1);
    std::vector<bool> used(score.empty() ? 0 : score[0].size(), false);
    brute_assign_rec(score, 0, cur, used, 0.0, floor, out);
    return out;
}

}  // namespace oracles
