#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace lso {

// Sort eigenvalues by (Im, Re); the order used in reports.
inline void sort_spectrum(std::vector<std::complex<double>>& ev) {
    std::sort(ev.begin(), ev.end(), [](auto a, auto b) {
        if (a.imag() != b.imag()) return a.imag() < b.imag();
        return a.real() < b.real();
    });
}

// Hausdorff distance between two finite point sets in C.
inline double hausdorff(const std::vector<std::complex<double>>& a,
                        const std::vector<std::complex<double>>& b) {
    auto one_sided = [](const auto& x, const auto& y) {
        double worst = 0.0;
        for (auto p : x) {
            double best = std::numeric_limits<double>::infinity();
            for (auto q : y) best = std::min(best, std::abs(p - q));
            worst = std::max(worst, best);
        }
        return worst;
    };
    if (a.empty() && b.empty()) return 0.0;
    if (a.empty() || b.empty()) return std::numeric_limits<double>::infinity();
    return std::max(one_sided(a, b), one_sided(b, a));
}

// Hungarian algorithm (O(n^3), dense costs).  Returns the minimal total cost
// and the column assigned to each row.  Sizes here are tiny (sector
// dimensions), so the classic potentials formulation is plenty.
inline double assignment_cost(const Eigen::MatrixXd& cost, std::vector<int>* match = nullptr) {
    const int n = static_cast<int>(cost.rows());
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = std::numeric_limits<double>::infinity();
            int j1 = -1;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) { minv[j] = cur; way[j] = j0; }
                if (minv[j] < delta) { delta = minv[j]; j1 = j; }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) { u[p[j]] += delta; v[j] -= delta; }
                else minv[j] -= delta;
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    if (match) {
        match->assign(n, -1);
        for (int j = 1; j <= n; ++j)
            if (p[j] > 0) (*match)[p[j] - 1] = j - 1;
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) total += cost(p[j] - 1, j - 1);
    return total;
}

// Largest pairwise distance under the optimal one-to-one matching of two
// equal-size spectra; robust against reordering of near-degenerate entries.
inline double matched_spectral_distance(const std::vector<std::complex<double>>& a,
                                        const std::vector<std::complex<double>>& b) {
    const int n = static_cast<int>(a.size());
    if (n != static_cast<int>(b.size()))
        return std::numeric_limits<double>::infinity();
    if (n == 0) return 0.0;
    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) cost(i, j) = std::abs(a[i] - b[j]);
    std::vector<int> match;
    assignment_cost(cost, &match);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) worst = std::max(worst, cost(i, match[i]));
    return worst;
}

} // namespace lso
