#pragma once

// Kuhn-Munkres assignment with potentials, O(n^3). Rectangular score
// matrices are padded to square with zeros; callers drop pairings below
// their own floor afterwards.

#include <limits>
#include <vector>

namespace mocap::assoc {

// Maximizes the total score. Returns, for every row, the assigned column or
// -1. Rows/columns beyond the true problem size stay unmatched.
inline std::vector<int> hungarian_max(const std::vector<std::vector<double>>& score) {
    const int rows = static_cast<int>(score.size());
    const int cols = rows == 0 ? 0 : static_cast<int>(score[0].size());
    const int n = std::max(rows, cols);
    if (n == 0) return {};

    // minimize negated scores on an n x n square
    auto cost = [&](int i, int j) -> double {
        if (i < rows && j < cols) return -score[i][j];
        return 0.0;
    };

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; i++) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; j++) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; j++) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> row_to_col(rows, -1);
    for (int j = 1; j <= n; j++) {
        const int i = match[j];
        if (i >= 1 && i <= rows && j <= cols) row_to_col[i - 1] = j - 1;
    }
    return row_to_col;
}

}  // namespace mocap::assoc
