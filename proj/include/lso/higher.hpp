#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "lso/errors.hpp"
#include "lso/lso.hpp"
#include "lso/oracle.hpp"
#include "lso/quadrature.hpp"
#include "lso/reservoir.hpp"

namespace lso {

// Fourth-order decay kernel for the degenerate three-level model, validated
// against the triple-resolvent truncation.  Two radial channels contribute:
//
//   scatter:  (pi/2) Delta^2 int_Delta^rmax W(r) W(r-Delta)
//                                rho(r-Delta) (1+rho(r)) dr
//   cascade:  (pi/4) Delta^2 int_0^Delta W(s) W(Delta-s)
//                                (1+rho(s)) (1+rho(Delta-s)) ds
//
// The scattering channel absorbs a thermal quantum at r-Delta and emits at r;
// the cascade channel emits two quanta adding up to Delta and survives at
// zero temperature.  Both need an infrared exponent p > 0 to converge.
inline double xi1_scatter(const ReservoirSpec& spec, double delta,
                          const quad::Options& opt = {}) {
    spec.validate();
    const double R = spec.r_max();
    if (!(delta > 0.0 && delta < R)) throw ConfigError("xi1 requires 0 < delta < r_max");
    if (spec.form_factor.ir_exponent <= 0.0)
        throw ConfigError("fourth-order kernels require infrared exponent p > 0");
    auto integrand = [&](double r) {
        const double t = r - delta;
        if (t <= 0.0) return 0.0;
        return spec.form_factor.W(r) * spec.form_factor.W(t) * spec.rho(t) *
               (1.0 + spec.rho(r));
    };
    // endpoint behaviour (r-Delta)^{2p-1}: cluster panels toward r = Delta
    const double val = quad::integrate_ir([&](double t) { return integrand(delta + t); },
                                          R - delta, opt);
    return 0.5 * pi * delta * delta * val;
}

inline double xi1_cascade(const ReservoirSpec& spec, double delta,
                          const quad::Options& opt = {}) {
    spec.validate();
    if (!(delta > 0.0 && delta < spec.r_max()))
        throw ConfigError("xi1 requires 0 < delta < r_max");
    if (spec.form_factor.ir_exponent <= 0.0)
        throw ConfigError("fourth-order kernels require infrared exponent p > 0");
    auto integrand = [&](double s) {
        const double t = delta - s;
        if (s <= 0.0 || t <= 0.0) return 0.0;
        return spec.form_factor.W(s) * spec.form_factor.W(t) * (1.0 + spec.rho(s)) *
               (1.0 + spec.rho(t));
    };
    // symmetric endpoints s^{2p-1}: split at the midpoint, cluster both ends
    const double half = 0.5 * delta;
    const double val = quad::integrate_ir(integrand, half, opt) +
                       quad::integrate_ir([&](double t) { return integrand(delta - t); },
                                          half, opt);
    return 0.25 * pi * delta * delta * val;
}

inline double xi1(const ReservoirSpec& spec, double delta, const quad::Options& opt = {}) {
    return xi1_scatter(spec, delta, opt) + xi1_cascade(spec, delta, opt);
}

// Single-channel variant with the 2 pi front factor; kept for report
// comparisons only (it does not reproduce the truncated resolvent).
inline double xi1_single_channel(const ReservoirSpec& spec, double delta,
                                 const quad::Options& opt = {}) {
    return 4.0 * xi1_scatter(spec, delta, opt);
}

// pi int r^2 W(r)^2 tanh^2(beta r / 4) dr, using the algebraic reduction of
// (2 sqrt(rho(1+rho)) - 1 - 2 rho)^2.  Independent of any level splitting.
inline double xi2(const ReservoirSpec& spec, const quad::Options& opt = {}) {
    spec.validate();
    if (ir_classify(spec.form_factor) == IrClass::Subcritical)
        throw NonexistentLSO("subcritical infrared exponent");
    auto integrand = [&](double r) {
        const double w = spec.form_factor.W(r);
        const double t = std::tanh(0.25 * spec.beta * r);
        return r * r * w * w * t * t;
    };
    return pi * quad::integrate_ir(integrand, spec.r_max(), opt);
}

struct RefinementStep {
    int n_modes = 0;
    double eps = 0.0;
    double value = 0.0;  // probe: Frobenius norm of the sector matrix
};

struct FourthOrderResult {
    Matrix lambda0_prime;                  // extrapolated sector matrix
    std::vector<RefinementStep> trace;     // probe-entry refinement history
    bool converged = false;
};

// Triple-resolvent evaluation of the fourth-order correction on the zero
// sector.  The eps sequence is Richardson-extrapolated twice; the mode count
// grows by 4/3 until the probe entry moves by less than target_rel.
inline FourthOrderResult lambda0_prime_oracle(const OpenSystemModel& model, int n_modes,
                                              double eps0 = 0.08,
                                              double target_rel = 1e-2,
                                              int max_doublings = 2) {
    model.validate();
    const std::vector<double> eps_seq = {eps0, 0.5 * eps0, 0.25 * eps0, 0.125 * eps0};
    auto extrapolate = [&](const std::vector<Matrix>& vals) {
        std::vector<Matrix> r1;
        for (std::size_t k = 0; k + 1 < vals.size(); ++k)
            r1.push_back(2.0 * vals[k + 1] - vals[k]);
        std::vector<Matrix> r2;
        for (std::size_t k = 0; k + 1 < r1.size(); ++k)
            r2.push_back((4.0 * r1[k + 1] - r1[k]) / 3.0);
        return r2.back();
    };
    FourthOrderResult out;
    Matrix prev;
    int n = n_modes;
    for (int stage = 0; stage <= max_doublings; ++stage, n = (4 * n) / 3) {
        const auto fm = oracle::discretize(model, n);
        std::vector<Matrix> vals;
        for (double e : eps_seq) {
            vals.push_back(oracle::fourth_order_sector_matrix(fm, e));
            out.trace.push_back({n, e, vals.back().norm()});
        }
        Matrix cur = extrapolate(vals);
        if (stage > 0) {
            const double move = (cur - prev).norm() / (1.0 + cur.norm());
            if (move < target_rel) {
                out.lambda0_prime = cur;
                out.converged = true;
                return out;
            }
        }
        prev = cur;
    }
    out.lambda0_prime = prev;
    out.converged = false;
    return out;
}

struct SecondCorrection {
    Matrix lambda0_prime;     // zero-sector fourth-order correction
    double xi1_value = 0.0;   // validated kernel at the model gap
    double xi2_value = 0.0;
    Eigen::Matrix2cd d_matrix;
    Complex slow_eigenvalue;  // lambda^2 <Psi0, L' Psi0>
    Complex slow_eigenvalue_spectral;  // slow eigenvalue of L0 + lambda^2 L'
    double fast_rate = 0.0;   // lambda^2 x smallest nonzero Im gap of L0
    double slow_rate = 0.0;   // lambda^4 x Im <Psi0, L' Psi0>
    std::vector<RefinementStep> trace;
    bool oracle_converged = false;
};

// Degenerate-kernel analysis for H = diag(e, f, f) with the ground-excited
// coupling on one leg only (b = 0): the kernel of L0 is span{Psi, Psi0};
// the fourth-order correction lifts it at rate lambda^4.
inline SecondCorrection d_matrix_and_rates(const OpenSystemModel& model, double lambda,
                                           int oracle_modes = 256,
                                           const quad::Options& opt = {}) {
    model.validate();
    if (model.small.dim != 3)
        throw ConfigError("d_matrix_and_rates expects a three-level system");
    const auto& E = model.small.energies;
    if (!(E[2] - E[1] <= model.small.degeneracy_tol &&
          E[1] - E[0] > model.small.degeneracy_tol))
        throw ConfigError("d_matrix_and_rates expects H = diag(e, f, f)");
    if (model.couplings.size() != 1)
        throw ConfigError("d_matrix_and_rates expects a single coupling");
    const Matrix& G = model.couplings[0].G;
    if (std::abs(G(0, 2)) > 1e-14)
        throw ConfigError("d_matrix_and_rates expects b = 0 (no direct 1<->3 coupling)");
    const double delta = E[1] - E[0];
    const double beta = model.couplings[0].reservoir.beta;

    // conventional basis order for the zero sector of diag(e, f, f)
    const std::vector<std::pair<int, int>> order = {{0, 0}, {1, 1}, {2, 2}, {1, 2}, {2, 1}};
    LevelShiftOperator L0 = build_lso_limit(model, 0.0, opt);
    {
        std::vector<int> perm;
        for (auto p : order)
            for (int k = 0; k < L0.sector.size(); ++k)
                if (L0.sector.pairs[k] == p) perm.push_back(k);
        if (perm.size() != 5) throw ConfigError("unexpected zero-sector structure");
        auto permute = [&](const Matrix& M) {
            Matrix R(5, 5);
            for (int a = 0; a < 5; ++a)
                for (int b = 0; b < 5; ++b) R(a, b) = M(perm[a], perm[b]);
            return R;
        };
        L0.matrix = permute(L0.matrix);
        L0.pv_part = permute(L0.pv_part);
        L0.delta_part = permute(L0.delta_part);
        L0.sector.pairs = order;
    }
    auto ker = kernel(L0, 1e-8);
    if (ker.dim != 2)
        throw ConfigError("kernel of the zero-sector operator is not two-dimensional");

    SecondCorrection out;
    FourthOrderResult fo = lambda0_prime_oracle(model, oracle_modes);
    out.trace = fo.trace;
    out.oracle_converged = fo.converged;
    // permute the oracle matrix (built on lexicographic pairs) likewise
    {
        const std::vector<std::pair<int, int>> zero_lex = {
            {0, 0}, {1, 1}, {1, 2}, {2, 1}, {2, 2}};
        std::vector<int> perm;
        for (auto p : order)
            for (int k = 0; k < 5; ++k)
                if (zero_lex[k] == p) perm.push_back(k);
        Matrix M(5, 5);
        for (int a = 0; a < 5; ++a)
            for (int b = 0; b < 5; ++b) M(a, b) = fo.lambda0_prime(perm[a], perm[b]);
        out.lambda0_prime = M;
    }

    const double ebd = std::exp(0.5 * beta * delta);
    Vector psi(5), psi0(5);
    psi << ebd, 1, 1, 0, 0;
    psi0 << 0, 0, 1, 0, 0;
    const Matrix& Lp = out.lambda0_prime;
    out.d_matrix << lambda * lambda * psi.dot(Lp * psi), lambda * lambda * psi.dot(Lp * psi0),
        lambda * lambda * psi0.dot(Lp * psi), lambda * lambda * psi0.dot(Lp * psi0);
    out.slow_eigenvalue = lambda * lambda * psi0.dot(Lp * psi0);
    // spectral extraction: slow eigenvalue of L0 + lambda^2 L'
    {
        Matrix full = L0.matrix + lambda * lambda * Lp;
        Eigen::ComplexEigenSolver<Matrix> es(full);
        Complex best = es.eigenvalues()(0);
        Complex second = best;
        double bmag = std::abs(best), smag = bmag;
        for (int k = 1; k < 5; ++k) {
            const Complex z = es.eigenvalues()(k);
            const double m = std::abs(z);
            if (m < bmag) {
                second = best; smag = bmag;
                best = z; bmag = m;
            } else if (m < smag) {
                second = z; smag = m;
            }
        }
        out.slow_eigenvalue_spectral = second;  // the nonzero member of the split pair
    }
    out.xi1_value = xi1(model.couplings[0].reservoir, delta, opt);
    out.xi2_value = xi2(model.couplings[0].reservoir, opt);
    // fast modes: nonzero decay rates of the second-order operator
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& z : spectrum(L0))
        if (z.imag() > 1e-10 * (1.0 + L0.matrix.norm())) gap = std::min(gap, z.imag());
    out.fast_rate = lambda * lambda * (std::isfinite(gap) ? gap : 0.0);
    out.slow_rate = lambda * lambda * out.slow_eigenvalue.imag();
    return out;
}

} // namespace lso
