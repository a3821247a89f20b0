#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lso/errors.hpp"
#include "lso/linalg.hpp"
#include "lso/quadrature.hpp"
#include "lso/reservoir.hpp"
#include "lso/smallsys.hpp"

namespace lso {

struct Coupling {
    Matrix G;
    ReservoirSpec reservoir;
};

// Small system linearly coupled to one or more thermal reservoirs, one
// Hermitian coupling matrix per reservoir.  lambda only scales reported
// rates; the level shift operators themselves are model invariants.
struct OpenSystemModel {
    SmallSystem small;
    std::vector<Coupling> couplings;
    double lambda = 1.0;

    void validate() const {
        small.validate();
        if (couplings.empty()) throw ConfigError("model needs at least one coupling");
        for (const auto& c : couplings) {
            require_hermitian(c.G);
            if (c.G.rows() != small.dim)
                throw ConfigError("coupling matrix dimension does not match the small system");
            c.reservoir.validate();
        }
    }
    bool common_beta(double* beta_out = nullptr) const {
        const double b0 = couplings.front().reservoir.beta;
        for (const auto& c : couplings)
            if (std::abs(c.reservoir.beta - b0) > 1e-14 * b0) return false;
        if (beta_out) *beta_out = b0;
        return true;
    }
};

// Second-order resonance generator on one Bohr sector.  For the eps -> 0
// limit the matrix splits as matrix = pv_part + delta_part with delta_part
// carrying all on-shell (decay) content.
struct LevelShiftOperator {
    SectorBasis sector;
    Matrix matrix;
    std::optional<double> epsilon;  // engaged for the regularized operator
    Matrix pv_part;
    Matrix delta_part;
    std::vector<int> provenance;    // indices of contributing couplings
};

namespace detail {

inline double snap_zero(double mu, double tol) {
    return std::abs(mu) <= tol ? 0.0 : mu;
}

// Per-reservoir kernel cache keyed by frequency; one builder pass touches
// only a handful of distinct Bohr differences.
struct KernelCache {
    const ReservoirSpec* spec;
    double eps;  // 0 for the limit
    quad::Options opt;
    std::map<double, HalfTransform> half;
    std::map<double, Complex> cross;

    const HalfTransform& h(double mu) {
        auto it = half.find(mu);
        if (it == half.end())
            it = half.emplace(mu, half_transform(*spec, mu, eps, opt)).first;
        return it->second;
    }
    Complex x(double nu) {
        const double a = std::abs(nu);
        auto it = cross.find(a);
        if (it == cross.end())
            it = cross.emplace(a, cross_kernel(*spec, a, eps, opt)).first;
        return it->second;
    }
};

} // namespace detail

// Assemble the sector matrix from the three contraction channels:
//   left  channel: delta_{jj'} sum_m G_im G_mi'  K(E_m - E_j - e)
//   right channel: delta_{ii'} sum_m conj(G)_jm conj(G)_mj' (-conj K(E_m - E_i + e))
//   mixed channel: -G_ii' conj(G)_jj' X(E_i' - E_i)
// where K is the half transform and X the purely on-shell cross kernel.
// The frequency bookkeeping is locked in by the finite-mode oracle tests.
inline LevelShiftOperator build_lso(const OpenSystemModel& model, double e, double eps,
                                    const quad::Options& opt = {}) {
    model.validate();
    const auto sectors = bohr_spectrum(model.small);
    LevelShiftOperator out;
    out.sector = find_sector(sectors, e, model.small.degeneracy_tol);
    if (eps > 0.0) out.epsilon = eps;
    const double ebohr = out.sector.bohr_frequency;
    const int n = out.sector.size();
    const int N = model.small.dim;
    const auto& E = model.small.energies;
    const double snap = std::max(4.0 * model.small.degeneracy_tol, 1e-12);

    out.matrix = Matrix::Zero(n, n);
    out.pv_part = Matrix::Zero(n, n);
    out.delta_part = Matrix::Zero(n, n);

    for (int ci = 0; ci < static_cast<int>(model.couplings.size()); ++ci) {
        const auto& cpl = model.couplings[ci];
        if (eps <= 0.0 &&
            ir_classify(cpl.reservoir.form_factor) == IrClass::Subcritical)
            throw NonexistentLSO(
                "subcritical infrared exponent: the eps -> 0 limit does not exist");
        out.provenance.push_back(ci);
        detail::KernelCache cache{&cpl.reservoir, eps > 0.0 ? eps : 0.0, opt, {}, {}};
        const Matrix& G = cpl.G;
        const Matrix Gb = G.conjugate();
        for (int a = 0; a < n; ++a) {
            const auto [i, j] = out.sector.pairs[a];
            for (int b = 0; b < n; ++b) {
                const auto [ip, jp] = out.sector.pairs[b];
                Complex pv{};
                Complex on{};
                if (j == jp) {
                    for (int m = 0; m < N; ++m) {
                        const Complex c = G(i, m) * G(m, ip);
                        if (c == Complex{}) continue;
                        const auto& k = cache.h(detail::snap_zero(E[m] - E[j] - ebohr, snap));
                        pv += c * k.pv;
                        on += c * k.onshell;
                    }
                }
                if (i == ip) {
                    for (int m = 0; m < N; ++m) {
                        const Complex c = Gb(j, m) * Gb(m, jp);
                        if (c == Complex{}) continue;
                        // value -conj(K(mu)) at mu = E_m - E_i + e
                        const auto& k = cache.h(detail::snap_zero(E[m] - E[i] + ebohr, snap));
                        pv += -c * k.pv;
                        on += c * k.onshell;
                    }
                }
                {
                    const Complex c = G(i, ip) * Gb(j, jp);
                    if (c != Complex{}) {
                        const Complex x = cache.x(detail::snap_zero(E[ip] - E[i], snap));
                        on += -c * x.imag();
                    }
                }
                out.pv_part(a, b) += pv;
                out.delta_part(a, b) += Complex(0, 1) * on;
            }
        }
    }
    out.matrix = out.pv_part + out.delta_part;
    return out;
}

inline LevelShiftOperator build_lso_eps(const OpenSystemModel& model, double e, double eps,
                                        const quad::Options& opt = {}) {
    if (!(eps > 0.0)) throw ConfigError("build_lso_eps requires eps > 0");
    return build_lso(model, e, eps, opt);
}

inline LevelShiftOperator build_lso_limit(const OpenSystemModel& model, double e,
                                          const quad::Options& opt = {}) {
    return build_lso(model, e, 0.0, opt);
}

// Additivity over reservoirs: the sector operator is the sum of the
// single-coupling operators, each evaluated at its own temperature.
inline LevelShiftOperator multi_reservoir_lso(const OpenSystemModel& model, double e,
                                              const quad::Options& opt = {}) {
    model.validate();
    LevelShiftOperator total;
    for (std::size_t r = 0; r < model.couplings.size(); ++r) {
        OpenSystemModel single{model.small, {model.couplings[r]}, model.lambda};
        LevelShiftOperator part = build_lso_limit(single, e, opt);
        if (r == 0) {
            total = std::move(part);
        } else {
            total.matrix += part.matrix;
            total.pv_part += part.pv_part;
            total.delta_part += part.delta_part;
        }
        total.provenance.assign(1, static_cast<int>(r));
    }
    std::vector<int> all(model.couplings.size());
    for (std::size_t r = 0; r < all.size(); ++r) all[r] = static_cast<int>(r);
    total.provenance = all;
    return total;
}

// Closed form on the 4-dimensional zero sector of a doubly degenerate
// two-level system:
//   (xi + i eta) G^2 (x) 1 - (xi - i eta) 1 (x) CG^2C - 2 i eta G (x) CGC
// in the pair basis (0,0),(0,1),(1,0),(1,1).
inline LevelShiftOperator closed_form_2level(const Matrix& G, double xi, double eta) {
    require_hermitian(G);
    if (G.rows() != 2) throw ConfigError("closed_form_2level needs a 2x2 coupling");
    if (eta < 0.0) throw ConfigError("eta must be nonnegative");
    LevelShiftOperator out;
    out.sector.bohr_frequency = 0.0;
    out.sector.pairs = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    const Matrix G2 = G * G;
    const Matrix left = doubled_coupling_action(G2, Side::Left);
    const Matrix right = doubled_coupling_action(G2, Side::Right);
    const Matrix mixl = doubled_coupling_action(G, Side::Left);
    const Matrix mixr = doubled_coupling_action(G, Side::Right);
    const Complex I1(0.0, 1.0);
    out.matrix = (xi + I1 * eta) * left - (xi - I1 * eta) * right -
                 2.0 * I1 * eta * (mixl * mixr);
    out.pv_part = xi * (left - right);
    out.delta_part = I1 * eta * (left + right - 2.0 * (mixl * mixr));
    return out;
}

// Closed form on the 5-dimensional zero sector of H = diag(e, f, f),
// Delta = f - e, in the ordered basis
//   (1,1), (2,2), (3,3), (2,3), (3,2)   [1-based indices].
// zeta = exp(beta Delta/2) - (4i/s) sinh(beta Delta/2) alpha.  For critical
// infrared data pass critical_delta > 0:  2 i pi c^2 critical_delta is added
// on diag(0,1,1,1,1) and the two structural zeros are replaced accordingly.
inline LevelShiftOperator closed_form_3level(double a, double b, double c, double beta,
                                             double delta, double s, double alpha,
                                             double critical_delta = 0.0) {
    if (!(beta > 0.0) || !(delta > 0.0))
        throw ConfigError("closed_form_3level requires beta > 0 and delta > 0");
    if (s < 0.0 || critical_delta < 0.0)
        throw ConfigError("s and critical_delta must be nonnegative");
    if (s == 0.0 && alpha != 0.0)
        throw ConfigError("closed_form_3level: zeta undefined for s = 0 with alpha != 0");
    LevelShiftOperator out;
    out.sector.bohr_frequency = 0.0;
    out.sector.pairs = {{0, 0}, {1, 1}, {2, 2}, {1, 2}, {2, 1}};
    const double sh = std::sinh(0.5 * beta * delta);
    const double ex = std::exp(0.5 * beta * delta);
    const Complex I1(0.0, 1.0);
    const Complex pref = s == 0.0 ? Complex(0, 0) : I1 * s / (2.0 * sh);
    Complex zeta = ex;
    if (s > 0.0) zeta -= (4.0 * I1 / s) * sh * alpha;
    const Complex zb = std::conj(zeta);
    Matrix M(5, 5);
    M << (a * a + b * b) / ex, -a * a, -b * b, -a * b, -a * b,
         -a * a, a * a * ex, 0.0, 0.5 * a * b * zeta, 0.5 * a * b * zb,
         -b * b, 0.0, b * b * ex, 0.5 * a * b * zb, 0.5 * a * b * zeta,
         -a * b, 0.5 * a * b * zeta, 0.5 * a * b * zb, 0.5 * (a * a * zb + b * b * zeta), 0.0,
         -a * b, 0.5 * a * b * zb, 0.5 * a * b * zeta, 0.0, 0.5 * (a * a * zeta + b * b * zb);
    out.matrix = pref * M;
    if (critical_delta > 0.0) {
        const Complex add = 2.0 * I1 * pi * c * c * critical_delta;
        for (int k = 1; k < 5; ++k) out.matrix(k, k) += add;
        out.matrix(1, 2) = -add;
        out.matrix(2, 1) = -add;
        out.matrix(3, 4) = -add;
        out.matrix(4, 3) = -add;
    }
    out.delta_part = 0.5 * (out.matrix - out.matrix.adjoint());
    out.pv_part = out.matrix - out.delta_part;
    return out;
}

inline std::vector<Complex> spectrum(const LevelShiftOperator& op) {
    Eigen::ComplexEigenSolver<Matrix> solver(op.matrix, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("dense eigensolver failed to converge");
    std::vector<Complex> ev(solver.eigenvalues().data(),
                            solver.eigenvalues().data() + solver.eigenvalues().size());
    sort_spectrum(ev);
    return ev;
}

struct KernelResult {
    int dim = 0;
    Matrix basis;                         // orthonormal columns spanning the kernel
    std::vector<double> singular_values;  // descending
    bool gap_warning = false;
};

// Numerical kernel by singular value thresholding at tol * sigma_max.
inline KernelResult kernel(const LevelShiftOperator& op, double tol) {
    if (!(tol > 0.0)) throw ConfigError("kernel tolerance must be positive");
    const int n = static_cast<int>(op.matrix.rows());
    Eigen::JacobiSVD<Matrix> svd(op.matrix, Eigen::ComputeFullV);
    KernelResult out;
    out.singular_values.assign(svd.singularValues().data(),
                               svd.singularValues().data() + n);
    const double smax = out.singular_values.empty() ? 0.0 : out.singular_values.front();
    const double thresh = tol * smax;
    int dim = 0;
    for (double s : out.singular_values)
        if (s <= thresh) ++dim;
    if (smax == 0.0) dim = n;  // zero matrix
    out.dim = dim;
    out.basis = svd.matrixV().rightCols(dim);
    if (dim > 0 && dim < n) {
        const double kept = out.singular_values[n - dim - 1];
        const double dropped = std::max(out.singular_values[n - dim],
                                        std::numeric_limits<double>::min());
        out.gap_warning = kept / dropped < 10.0;
    }
    return out;
}

struct CheckResult {
    std::string name;
    bool pass = false;
    bool applicable = true;
    double residual = 0.0;
    std::string detail;
};

struct SpectralReport {
    std::vector<Complex> eigenvalues;  // zero-sector limit spectrum
    int kernel_dim = 0;
    Matrix kernel_basis;
    std::vector<CheckResult> checks;

    bool all_pass() const {
        for (const auto& c : checks)
            if (c.applicable && !c.pass) return false;
        return true;
    }
};

namespace detail {

inline bool spectrum_simple(const SmallSystem& sys) {
    for (int i = 0; i + 1 < sys.dim; ++i)
        if (sys.energies[i + 1] - sys.energies[i] <= sys.degeneracy_tol) return false;
    return true;
}

// degenerate-excited-pair index set of H = diag(e, f, f) shapes, if any
inline std::optional<std::pair<int, int>> degenerate_pair(const SmallSystem& sys) {
    if (sys.dim != 3) return std::nullopt;
    const auto& E = sys.energies;
    if (E[2] - E[1] <= sys.degeneracy_tol && E[1] - E[0] > sys.degeneracy_tol)
        return std::make_pair(1, 2);
    return std::nullopt;
}

} // namespace detail

// Structural theorem battery:
//  (i)   spectra reflection  sigma(L_e(eps)) = -conj sigma(L_-e(eps))
//  (ii)  simple spectrum: L_0 = i Gamma with Gamma Hermitian PSD, real entries
//  (iii) thermal vector in the kernel: ||L_0 Psi_beta|| and ||Im L_0 Psi_beta||
//  (iv)  numerical range: eigenvalues in the closed upper half plane
//  (v)   three-level regular case: invariance under removal of the
//        zero-frequency coupling between the degenerate levels
inline SpectralReport verify_theorems(const OpenSystemModel& model,
                                      const std::vector<double>& eps_grid,
                                      const quad::Options& opt = {}) {
    model.validate();
    SpectralReport rep;
    const auto sectors = bohr_spectrum(model.small);
    const double scale_tol = 1e-10;

    // (i) reflection symmetry across sectors and the eps grid
    {
        double worst = 0.0;
        for (const auto& sec : sectors) {
            if (sec.bohr_frequency < 0.0) continue;
            for (double eps : eps_grid) {
                auto sp = spectrum(build_lso_eps(model, sec.bohr_frequency, eps, opt));
                auto sm = spectrum(build_lso_eps(model, -sec.bohr_frequency, eps, opt));
                for (auto& z : sm) z = -std::conj(z);
                sort_spectrum(sm);
                worst = std::max(worst, matched_spectral_distance(sp, sm));
            }
        }
        rep.checks.push_back({"reflection_symmetry", worst <= scale_tol, true, worst,
                              "max matched distance sigma(L_e(eps)) vs -conj sigma(L_-e(eps))"});
    }

    LevelShiftOperator zero_limit = build_lso_limit(model, 0.0, opt);
    rep.eigenvalues = spectrum(zero_limit);
    {
        auto ker = kernel(zero_limit, 1e-8);
        rep.kernel_dim = ker.dim;
        rep.kernel_basis = ker.basis;
    }

    // (ii) simple spectrum structure
    if (detail::spectrum_simple(model.small)) {
        double worst = 0.0;
        auto probe = [&](const LevelShiftOperator& op) {
            const double nrm = op.matrix.norm();
            const Matrix gamma = op.matrix / Complex(0, 1);
            const double re_norm = 0.5 * (op.matrix + op.matrix.adjoint()).norm();
            const double herm = (gamma - gamma.adjoint()).norm();
            const double im_entries = gamma.imag().cwiseAbs().maxCoeff();
            Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gamma + gamma.adjoint()));
            const double min_eig = es.eigenvalues().minCoeff();
            const double s = std::max(nrm, 1e-30);
            worst = std::max({worst, re_norm / s, herm / s, im_entries / s,
                              std::max(0.0, -min_eig) / s});
        };
        for (double eps : eps_grid) probe(build_lso_eps(model, 0.0, eps, opt));
        probe(zero_limit);
        rep.checks.push_back({"simple_spectrum_structure", worst <= 1e-8, true, worst,
                              "L_0 = i Gamma, Gamma Hermitian PSD with real entries"});
    } else {
        rep.checks.push_back({"simple_spectrum_structure", true, false, 0.0,
                              "skipped: degenerate small-system spectrum"});
    }

    // (iii) thermal vector annihilated by the zero-sector operator
    {
        double beta = 0.0;
        if (model.common_beta(&beta)) {
            DoubledVector psi = gibbs_vector(model.small, beta);
            Vector restricted(zero_limit.sector.size());
            for (int k = 0; k < zero_limit.sector.size(); ++k) {
                auto [i, j] = zero_limit.sector.pairs[k];
                restricted(k) = psi(i, j);
            }
            const double nrm = zero_limit.matrix.norm();
            const double full = (zero_limit.matrix * restricted).norm() / (1.0 + nrm);
            const double imonly =
                ((zero_limit.delta_part / Complex(0, 1)) * restricted).norm() / (1.0 + nrm);
            const double worst = std::max(full, imonly);
            rep.checks.push_back({"thermal_vector_kernel", worst <= 1e-8, true, worst,
                                  "||L_0 Psi_beta|| and ||(Im L_0) Psi_beta|| / (1+||L_0||)"});
        } else {
            rep.checks.push_back({"thermal_vector_kernel", true, false, 0.0,
                                  "skipped: reservoirs at different temperatures"});
        }
    }

    // (iv) closed upper half plane for eps > 0
    {
        double worst = 0.0;
        for (const auto& sec : sectors)
            for (double eps : eps_grid) {
                auto sp = spectrum(build_lso_eps(model, sec.bohr_frequency, eps, opt));
                double scale = 0.0;
                for (auto z : sp) scale = std::max(scale, std::abs(z));
                for (auto z : sp)
                    worst = std::max(worst, -z.imag() / std::max(scale, 1e-30));
            }
        rep.checks.push_back({"numerical_range_sign", worst <= 1e-12, true, worst,
                              "min Im sigma(L_e(eps)) >= -tol (closed upper half plane)"});
    }

    // (v) zero-frequency coupling drops out in the regular three-level case
    {
        auto dp = detail::degenerate_pair(model.small);
        bool applicable = dp.has_value();
        if (applicable)
            for (const auto& c : model.couplings)
                if (ir_classify(c.reservoir.form_factor) != IrClass::Regular)
                    applicable = false;
        if (applicable) {
            OpenSystemModel stripped = model;
            for (auto& c : stripped.couplings) {
                c.G(dp->first, dp->second) = 0.0;
                c.G(dp->second, dp->first) = 0.0;
            }
            LevelShiftOperator other = build_lso_limit(stripped, 0.0, opt);
            const double diff =
                (other.matrix - zero_limit.matrix).norm() / (1.0 + zero_limit.matrix.norm());
            rep.checks.push_back({"zero_frequency_coupling_drops", diff <= 1e-8, true, diff,
                                  "L_0 invariant under removing the degenerate-pair coupling"});
        } else {
            rep.checks.push_back({"zero_frequency_coupling_drops", true, false, 0.0,
                                  "skipped: not a regular-IR degenerate three-level model"});
        }
    }
    return rep;
}

} // namespace lso
