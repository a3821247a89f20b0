#pragma once

#include <random>

#include "lso/lso.hpp"

namespace lso {

// Deterministic model generators used by bundled configs and property tests.
// All randomness flows through a caller-provided 64-bit seed.

inline Matrix random_hermitian(std::mt19937_64& rng, int n, double scale = 1.0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = Complex(gauss(rng), gauss(rng));
    Matrix h = 0.5 * (a + a.adjoint()) * scale;
    return h;
}

enum class SpectrumKind { Simple, Mixed };

// Sorted energies with controlled gaps; Mixed duplicates one level exactly.
inline std::vector<double> random_energies(std::mt19937_64& rng, int n, SpectrumKind kind,
                                           double min_gap = 0.2, double max_gap = 0.8) {
    std::uniform_real_distribution<double> gap(min_gap, max_gap);
    std::vector<double> e(n);
    e[0] = 0.0;
    for (int i = 1; i < n; ++i) e[i] = e[i - 1] + gap(rng);
    if (kind == SpectrumKind::Mixed && n >= 2) {
        std::uniform_int_distribution<int> pick(1, n - 1);
        const int k = pick(rng);
        e[k] = e[k - 1];
        for (int i = k + 1; i < n; ++i) e[i] = e[i - 1] + gap(rng);
    }
    return e;
}

inline ReservoirSpec random_reservoir(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ubeta(0.8, 2.5);
    std::uniform_real_distribution<double> ugamma(0.5, 1.0);
    ReservoirSpec rs;
    rs.beta = ubeta(rng);
    rs.form_factor = FormFactor::gaussian_damped(ugamma(rng), 0.5, 1.2, 4.0);
    return rs;
}

inline OpenSystemModel random_model(std::uint64_t seed, int dim, SpectrumKind kind,
                                    double coupling_scale = 0.5) {
    std::mt19937_64 rng(seed);
    OpenSystemModel m;
    m.small.dim = dim;
    m.small.energies = random_energies(rng, dim, kind);
    m.couplings.push_back({random_hermitian(rng, dim, coupling_scale), random_reservoir(rng)});
    m.lambda = 0.1;
    return m;
}

} // namespace lso
