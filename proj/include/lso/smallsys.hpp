#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lso/errors.hpp"

namespace lso {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

// Finite-level system: sorted energies of a diagonal Hamiltonian.  Energies
// within degeneracy_tol are grouped when Bohr frequencies are formed.
struct SmallSystem {
    int dim = 0;
    std::vector<double> energies;
    double degeneracy_tol = 1e-9;

    void validate() const {
        if (dim <= 0 || static_cast<int>(energies.size()) != dim)
            throw ConfigError("small system dimension/energies mismatch");
        if (!std::is_sorted(energies.begin(), energies.end()))
            throw ConfigError("energies must be sorted ascending");
        if (!(degeneracy_tol >= 0.0))
            throw ConfigError("degeneracy_tol must be >= 0");
        // the tolerance must separate distinct energy groups
        double min_gap = std::numeric_limits<double>::infinity();
        for (int i = 0; i + 1 < dim; ++i) {
            const double gap = energies[i + 1] - energies[i];
            if (gap > degeneracy_tol) min_gap = std::min(min_gap, gap);
        }
        if (degeneracy_tol > 0 && min_gap < std::numeric_limits<double>::infinity() &&
            degeneracy_tol >= min_gap)
            throw ConfigError("degeneracy_tol is not smaller than the minimum level gap");
    }
};

// One eigenspace of the doubled-space free generator: all ordered index pairs
// (i,j) whose energy difference E_i - E_j falls on the same Bohr frequency.
struct SectorBasis {
    double bohr_frequency = 0.0;
    std::vector<std::pair<int, int>> pairs;

    int size() const { return static_cast<int>(pairs.size()); }
};

// Vector on the doubled space K (x) K, coefficients indexed by (i,j).
struct DoubledVector {
    int dim = 0;           // N; coefficients has N^2 entries, index i*N+j
    Vector coefficients;

    static DoubledVector zero(int n) {
        DoubledVector v;
        v.dim = n;
        v.coefficients = Vector::Zero(n * n);
        return v;
    }
    Complex& operator()(int i, int j) { return coefficients(i * dim + j); }
    Complex operator()(int i, int j) const { return coefficients(i * dim + j); }
    double norm() const { return coefficients.norm(); }
};

// All Bohr frequencies E_i - E_j with tolerance grouping.  Each ordered pair
// lands in exactly one sector; the zero sector always holds every (i,i).
inline std::vector<SectorBasis> bohr_spectrum(const SmallSystem& sys) {
    sys.validate();
    const int n = sys.dim;
    struct Item { double value; int i, j; };
    std::vector<Item> items;
    items.reserve(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            items.push_back({sys.energies[i] - sys.energies[j], i, j});
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.value != b.value) return a.value < b.value;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    // chain-group values with gaps <= tol; a chained group wider than the
    // tolerance means the grouping is ambiguous
    std::vector<SectorBasis> sectors;
    std::size_t k = 0;
    while (k < items.size()) {
        std::size_t e = k + 1;
        while (e < items.size() && items[e].value - items[e - 1].value <= sys.degeneracy_tol)
            ++e;
        const double spread = items[e - 1].value - items[k].value;
        if (spread > sys.degeneracy_tol) {
            std::ostringstream os;
            os << "Bohr frequency grouping ambiguous near " << items[k].value
               << ": chained spread " << spread << " exceeds degeneracy_tol "
               << sys.degeneracy_tol;
            throw ConfigError(os.str());
        }
        SectorBasis sec;
        // representative: value closest to the group mean, snapped to 0 if the
        // group contains a diagonal pair
        double mean = 0.0;
        bool has_diag = false;
        for (std::size_t q = k; q < e; ++q) {
            mean += items[q].value;
            if (items[q].i == items[q].j) has_diag = true;
        }
        sec.bohr_frequency = has_diag ? 0.0 : mean / double(e - k);
        for (std::size_t q = k; q < e; ++q) sec.pairs.push_back({items[q].i, items[q].j});
        std::sort(sec.pairs.begin(), sec.pairs.end());
        sectors.push_back(std::move(sec));
        k = e;
    }
    std::sort(sectors.begin(), sectors.end(),
              [](const SectorBasis& a, const SectorBasis& b) {
                  return a.bohr_frequency < b.bohr_frequency;
              });
    return sectors;
}

// Reorder a sector basis to an explicit pair list (must be a permutation of
// the lexicographic pairs).
inline void reorder_sector(SectorBasis& sec, const std::vector<std::pair<int, int>>& order) {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    auto have = sec.pairs;
    std::sort(have.begin(), have.end());
    if (sorted != have)
        throw ConfigError("sector ordering override is not a permutation of the sector pairs");
    sec.pairs = order;
}

inline const SectorBasis& find_sector(const std::vector<SectorBasis>& sectors, double e,
                                      double tol) {
    for (const auto& s : sectors)
        if (std::abs(s.bohr_frequency - e) <= std::max(tol, 1e-12 * (1.0 + std::abs(e))))
            return s;
    std::ostringstream os;
    os << e << " is not a Bohr frequency of the model";
    throw ConfigError(os.str());
}

// Thermal vector Z^-1/2 sum_i e^{-beta E_i/2} |i,i>.  Shifted by the minimum
// energy so extreme beta*E never overflows.
inline DoubledVector gibbs_vector(const SmallSystem& sys, double beta) {
    sys.validate();
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    DoubledVector v = DoubledVector::zero(sys.dim);
    const double e0 = sys.energies.front();
    double z = 0.0;
    for (int i = 0; i < sys.dim; ++i) {
        const double w = std::exp(-0.5 * beta * (sys.energies[i] - e0));
        v(i, i) = w;
        z += w * w;
    }
    v.coefficients /= std::sqrt(z);
    return v;
}

// Modular conjugation on the doubled space: (Jv)(i,j) = conj(v(j,i)).
// Antilinear involution; maps the e sector onto the -e sector.
inline DoubledVector modular_conjugate(const DoubledVector& v) {
    DoubledVector w = DoubledVector::zero(v.dim);
    for (int i = 0; i < v.dim; ++i)
        for (int j = 0; j < v.dim; ++j)
            w(i, j) = std::conj(v(j, i));
    return w;
}

// alias-safe Hermitian symmetrization (x may be the assignment target)
inline Matrix hermitize(const Matrix& x) {
    Matrix h = x.adjoint();
    h += x;
    return 0.5 * h;
}

inline void require_hermitian(const Matrix& g, double tol = 1e-12) {
    if (g.rows() != g.cols())
        throw ConfigError("coupling matrix must be square");
    const double dev = (g - g.adjoint()).cwiseAbs().maxCoeff();
    if (dev > tol * std::max(1.0, g.cwiseAbs().maxCoeff()))
        throw ConfigError("coupling matrix is not Hermitian");
}

enum class Side { Left, Right };

// Action of a coupling matrix on the doubled space.  Left: G acting on the
// first index; Right: entrywise-conjugated G acting on the second index.
inline Matrix doubled_coupling_action(const Matrix& g, Side side) {
    require_hermitian(g);
    const int n = static_cast<int>(g.rows());
    Matrix m = Matrix::Zero(n * n, n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                if (side == Side::Left)
                    m(i * n + j, k * n + j) = g(i, k);
                else
                    m(i * n + j, i * n + k) = std::conj(g(j, k));
            }
    return m;
}

} // namespace lso
