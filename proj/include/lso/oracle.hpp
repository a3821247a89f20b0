#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "lso/errors.hpp"
#include "lso/lso.hpp"

namespace lso::oracle {

// Radial quadrature grid carrying the thermal mode couplings:
//   c_k  = sqrt(w_k r_k^2 W(r_k))           bare mode amplitude
//   cl_k = sqrt(1+rho_k) c_k,  cr_k = sqrt(rho_k) c_k.
struct ModeSet {
    std::vector<double> r, w, cl, cr;
    int size() const { return static_cast<int>(r.size()); }
};

struct FiniteModeModel {
    OpenSystemModel model;
    int max_excitations = 1;
    std::vector<ModeSet> modes;  // one per coupling
};

namespace detail {

// 16-point Gauss-Legendre panels over [r_cut, r_max] plus geometrically
// clustered 4-point panels toward the infrared end.
inline void fill_grid(std::vector<double>& r, std::vector<double>& w, int n_modes,
                      double r_max, double r_ir, double ir_fraction) {
    static const double x16[8] = {0.0950125098376374, 0.2816035507792589,
                                  0.4580167776572274, 0.6178762444026438,
                                  0.7554044083550030, 0.8656312023878318,
                                  0.9445750230732326, 0.9894009349916499};
    static const double w16[8] = {0.1894506104550685, 0.1826034150449236,
                                  0.1691565193950025, 0.1495959888165767,
                                  0.1246289712555339, 0.0951585116824928,
                                  0.0622535239386479, 0.0271524594117541};
    static const double x4[2] = {0.3399810435848563, 0.8611363115940526};
    static const double w4[2] = {0.6521451548625461, 0.3478548451374538};
    auto panel16 = [&](double a, double b) {
        const double h = 0.5 * (b - a), c = 0.5 * (a + b);
        for (int q = 0; q < 8; ++q) {
            r.push_back(c - h * x16[7 - q]);
            w.push_back(h * w16[7 - q]);
        }
        for (int q = 0; q < 8; ++q) {
            r.push_back(c + h * x16[q]);
            w.push_back(h * w16[q]);
        }
    };
    auto panel4 = [&](double a, double b) {
        const double h = 0.5 * (b - a), c = 0.5 * (a + b);
        r.push_back(c - h * x4[1]); w.push_back(h * w4[1]);
        r.push_back(c - h * x4[0]); w.push_back(h * w4[0]);
        r.push_back(c + h * x4[0]); w.push_back(h * w4[0]);
        r.push_back(c + h * x4[1]); w.push_back(h * w4[1]);
    };
    const double r_cut = std::min(0.1 * r_max, 0.5);
    const int n_ir = std::max(4, static_cast<int>(ir_fraction * n_modes));
    const int n_panels_ir = std::max(1, n_ir / 4);
    const double ratio = std::pow(r_cut / r_ir, 1.0 / n_panels_ir);
    double lo = r_ir;
    for (int p = 0; p < n_panels_ir; ++p) {
        const double hi = (p + 1 == n_panels_ir) ? r_cut : lo * ratio;
        panel4(lo, hi);
        lo = hi;
    }
    const int n_bulk_panels = std::max(1, (n_modes - n_ir) / 16);
    const double step = (r_max - r_cut) / n_bulk_panels;
    for (int p = 0; p < n_bulk_panels; ++p)
        panel16(r_cut + p * step, r_cut + (p + 1) * step);
}

} // namespace detail

// Quadrature-node truncation of the thermal one-particle space.
inline FiniteModeModel discretize(const OpenSystemModel& model, int n_modes,
                                  double r_max_cap = 0.0) {
    model.validate();
    if (n_modes < 2) throw ConfigError("discretize requires n_modes >= 2");
    FiniteModeModel fm;
    fm.model = model;
    for (const auto& cpl : model.couplings) {
        const double rmax_full = cpl.reservoir.r_max();
        const double rmax = r_max_cap > 0.0 ? std::min(r_max_cap, rmax_full) : rmax_full;
        ModeSet ms;
        detail::fill_grid(ms.r, ms.w, n_modes, rmax, 1e-10 * rmax, 0.35);
        const int m = ms.size();
        ms.cl.resize(m);
        ms.cr.resize(m);
        for (int k = 0; k < m; ++k) {
            const double c2 = ms.w[k] * ms.r[k] * ms.r[k] * cpl.reservoir.form_factor.W(ms.r[k]);
            const double rho = cpl.reservoir.rho(ms.r[k]);
            ms.cl[k] = std::sqrt((1.0 + rho) * c2);
            ms.cr[k] = std::sqrt(rho * c2);
        }
        fm.modes.push_back(std::move(ms));
    }
    return fm;
}

// Grid sums of the continuum integrals xi and s (convergence probes).
inline double grid_xi(const FiniteModeModel& fm, int coupling = 0) {
    const auto& ms = fm.modes.at(coupling);
    double v = 0.0;
    for (int k = 0; k < ms.size(); ++k) {
        const double c2 = ms.cl[k] * ms.cl[k] - ms.cr[k] * ms.cr[k];  // w r^2 W
        v += 0.5 * c2 / ms.r[k];
    }
    return v;
}

// Single-excitation amplitudes on the doubled truncated space:
// one block per (ordered pair, coupling, left/right factor).
struct OneParticleState {
    int npairs = 0;
    std::vector<Eigen::VectorXcd> amp;  // indexed [pair*(2*ncpl) + 2*c + side]

    static OneParticleState zero(const FiniteModeModel& fm) {
        OneParticleState st;
        const int N = fm.model.small.dim;
        st.npairs = N * N;
        st.amp.resize(st.npairs * 2 * fm.modes.size());
        for (std::size_t b = 0; b < st.amp.size(); ++b) {
            const int c = static_cast<int>((b / 2) % fm.modes.size());
            st.amp[b] = Eigen::VectorXcd::Zero(fm.modes[c].size());
        }
        return st;
    }
    Eigen::VectorXcd& block(int pair, int ncpl, int c, int side) {
        return amp[pair * (2 * ncpl) + 2 * c + side];
    }
};

// I applied to a vacuum-sector vector (coefficients per ordered pair).
// V creates with weights (cl left, cr right); the conjugated term creates
// with the weights swapped and a minus sign.  1/sqrt(2) from the field.
inline OneParticleState apply_interaction_to_vacuum(const FiniteModeModel& fm,
                                                    const Eigen::VectorXcd& vac) {
    const int N = fm.model.small.dim;
    const int ncpl = static_cast<int>(fm.modes.size());
    OneParticleState st = OneParticleState::zero(fm);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            const Complex a = vac(i * N + j);
            if (a == Complex{}) continue;
            for (int c = 0; c < ncpl; ++c) {
                const auto& G = fm.model.couplings[c].G;
                const auto& ms = fm.modes[c];
                const auto cl = Eigen::Map<const Eigen::VectorXd>(ms.cl.data(), ms.size());
                const auto cr = Eigen::Map<const Eigen::VectorXd>(ms.cr.data(), ms.size());
                for (int m = 0; m < N; ++m) {
                    const Complex gmi = G(m, i);
                    if (gmi != Complex{}) {
                        st.block(m * N + j, ncpl, c, 0) += (a * gmi * inv_sqrt2) * cl;
                        st.block(m * N + j, ncpl, c, 1) += (a * gmi * inv_sqrt2) * cr;
                    }
                    const Complex gmj = std::conj(G(m, j));
                    if (gmj != Complex{}) {
                        st.block(i * N + m, ncpl, c, 1) -= (a * gmj * inv_sqrt2) * cl;
                        st.block(i * N + m, ncpl, c, 0) -= (a * gmj * inv_sqrt2) * cr;
                    }
                }
            }
        }
    return st;
}

// Adjoint leg: vacuum components of I applied to a one-particle state.
inline Eigen::VectorXcd project_interaction_to_vacuum(const FiniteModeModel& fm,
                                                      OneParticleState& st) {
    const int N = fm.model.small.dim;
    const int ncpl = static_cast<int>(fm.modes.size());
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(N * N);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j)
            for (int c = 0; c < ncpl; ++c) {
                const auto& G = fm.model.couplings[c].G;
                const auto& ms = fm.modes[c];
                const auto cl = Eigen::Map<const Eigen::VectorXd>(ms.cl.data(), ms.size());
                const auto cr = Eigen::Map<const Eigen::VectorXd>(ms.cr.data(), ms.size());
                Complex acc{};
                for (int m = 0; m < N; ++m) {
                    const Complex gim = G(i, m);
                    if (gim != Complex{}) {
                        acc += gim * (cl.cast<Complex>().dot(st.block(m * N + j, ncpl, c, 0)) +
                                      cr.cast<Complex>().dot(st.block(m * N + j, ncpl, c, 1)));
                    }
                    const Complex gjm = std::conj(G(j, m));
                    if (gjm != Complex{}) {
                        acc -= gjm * (cl.cast<Complex>().dot(st.block(i * N + m, ncpl, c, 1)) +
                                      cr.cast<Complex>().dot(st.block(i * N + m, ncpl, c, 0)));
                    }
                }
                out(i * N + j) += inv_sqrt2 * acc;
            }
    return out;
}

// Literal evaluation of the regularized sector operator on the truncation:
// apply I, divide by the free energies, apply I, project back.
inline Matrix direct_lso_eps(const FiniteModeModel& fm, double e, double eps) {
    if (!(eps > 0.0)) throw ConfigError("direct_lso_eps requires eps > 0");
    const auto& model = fm.model;
    const int N = model.small.dim;
    const auto sectors = bohr_spectrum(model.small);
    const SectorBasis sec = find_sector(sectors, e, model.small.degeneracy_tol);
    const int n = sec.size();
    const auto& E = model.small.energies;
    const int ncpl = static_cast<int>(fm.modes.size());
    Matrix out(n, n);
    for (int b = 0; b < n; ++b) {
        Eigen::VectorXcd vac = Eigen::VectorXcd::Zero(N * N);
        const auto [i0, j0] = sec.pairs[b];
        vac(i0 * N + j0) = 1.0;
        OneParticleState st = apply_interaction_to_vacuum(fm, vac);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) {
                const double base = E[i] - E[j] - e;
                for (int c = 0; c < ncpl; ++c) {
                    const auto& ms = fm.modes[c];
                    auto& left = st.block(i * N + j, ncpl, c, 0);
                    auto& right = st.block(i * N + j, ncpl, c, 1);
                    for (int k = 0; k < ms.size(); ++k) {
                        left(k) /= Complex(base + ms.r[k], -eps);
                        right(k) /= Complex(base - ms.r[k], -eps);
                    }
                }
            }
        Eigen::VectorXcd res = project_interaction_to_vacuum(fm, st);
        for (int a = 0; a < n; ++a) {
            const auto [i, j] = sec.pairs[a];
            out(a, b) = res(i * N + j);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Two-excitation truncation: the triple-resolvent fourth-order correction.
// ---------------------------------------------------------------------------

// Amplitudes over {vacuum, one particle, two particles} per ordered pair.
// Composite mode index u < 2M: left factor first, then right factor.  The
// two-particle block stores the symmetric wavefunction T with the state
// (1/2) sum_uv T_uv a*_u a*_v |0>.
struct TwoExcitationState {
    int npairs = 0;
    Eigen::VectorXcd vac;                               // per pair
    std::vector<Eigen::VectorXcd> one;                  // per pair, length 2M
    std::vector<std::optional<Eigen::MatrixXcd>> two;   // per pair, 2M x 2M

    static TwoExcitationState zero(int npairs, int m2) {
        TwoExcitationState st;
        st.npairs = npairs;
        st.vac = Eigen::VectorXcd::Zero(npairs);
        st.one.assign(npairs, Eigen::VectorXcd::Zero(m2));
        st.two.assign(npairs, std::nullopt);
        return st;
    }
    Eigen::MatrixXcd& two_block(int p, int m2) {
        if (!two[p]) two[p] = Eigen::MatrixXcd::Zero(m2, m2);
        return *two[p];
    }
};

namespace detail {

struct FourthOrderEngine {
    const FiniteModeModel& fm;
    Eigen::VectorXd u, v;   // field vectors of the two interaction terms
    Eigen::VectorXd omega;  // composite free energies (+r left, -r right)
    int m2 = 0;
    double snap = 0.0;

    explicit FourthOrderEngine(const FiniteModeModel& f) : fm(f) {
        if (fm.modes.size() != 1)
            throw ConfigError("fourth-order truncation supports a single coupling");
        const auto& ms = fm.modes[0];
        const int m = ms.size();
        m2 = 2 * m;
        u.resize(m2);
        v.resize(m2);
        omega.resize(m2);
        const double is2 = 1.0 / std::sqrt(2.0);
        for (int k = 0; k < m; ++k) {
            u(k) = is2 * ms.cl[k];
            u(m + k) = is2 * ms.cr[k];
            v(k) = is2 * ms.cr[k];
            v(m + k) = is2 * ms.cl[k];
            omega(k) = ms.r[k];
            omega(m + k) = -ms.r[k];
        }
        snap = std::max(4.0 * fm.model.small.degeneracy_tol, 1e-12);
    }

    TwoExcitationState apply_interaction(const TwoExcitationState& st, bool keep2) const {
        const int N = fm.model.small.dim;
        const auto& G = fm.model.couplings[0].G;
        TwoExcitationState out = TwoExcitationState::zero(st.npairs, m2);
        auto add_edge = [&](int from, int to, Complex coeff, const Eigen::VectorXd& field) {
            if (coeff == Complex{}) return;
            const Complex z = st.vac(from);
            const Eigen::VectorXcd fieldc = field.cast<Complex>();
            const auto& one = st.one[from];
            if (z != Complex{}) out.one[to] += (coeff * z) * fieldc;
            out.vac(to) += coeff * fieldc.dot(one);  // field is real
            if (st.two[from]) out.one[to] += coeff * ((*st.two[from]) * fieldc);
            if (keep2 && one.squaredNorm() > 0.0) {
                auto& blk = out.two_block(to, m2);
                blk.noalias() += coeff * (fieldc * one.transpose());
                blk.noalias() += coeff * (one * fieldc.transpose());
            }
        };
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) {
                const int from = i * N + j;
                const bool touched = st.vac(from) != Complex{} ||
                                     st.one[from].squaredNorm() > 0.0 || st.two[from];
                if (!touched) continue;
                for (int m = 0; m < N; ++m) {
                    add_edge(from, m * N + j, G(m, i), u);
                    add_edge(from, i * N + m, -std::conj(G(m, j)), v);
                }
            }
        return out;
    }

    void pbar_resolve(TwoExcitationState& st, double eps) const {
        const int N = fm.model.small.dim;
        const auto& E = fm.model.small.energies;
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) {
                const int p = i * N + j;
                const double base = lso::detail::snap_zero(E[i] - E[j], snap);
                if (base == 0.0)
                    st.vac(p) = 0.0;  // vacuum zero-sector removed by Pbar
                else
                    st.vac(p) /= Complex(base, -eps);
                for (int q = 0; q < m2; ++q)
                    st.one[p](q) /= Complex(base + omega(q), -eps);
                if (st.two[p]) {
                    auto& blk = *st.two[p];
                    for (int q = 0; q < m2; ++q)
                        for (int s = 0; s < m2; ++s)
                            blk(q, s) /= Complex(base + omega(q) + omega(s), -eps);
                }
            }
    }
};

} // namespace detail

// I R I R I R I applied to a zero-sector vacuum vector, vacuum components
// returned; R = Pbar (L0 - i eps)^-1 Pbar.  Three-particle content never
// reaches the projected result, so it is dropped exactly.
inline Eigen::VectorXcd fourth_order_apply(const FiniteModeModel& fm,
                                           const Eigen::VectorXcd& vac_in, double eps) {
    detail::FourthOrderEngine eng(fm);
    const int N = fm.model.small.dim;
    TwoExcitationState st = TwoExcitationState::zero(N * N, eng.m2);
    st.vac = vac_in;
    st = eng.apply_interaction(st, false);   // one particle
    eng.pbar_resolve(st, eps);
    st = eng.apply_interaction(st, true);    // vacuum + two particles
    eng.pbar_resolve(st, eps);
    st = eng.apply_interaction(st, false);   // one particle (3p dropped)
    for (auto& blk : st.two) blk.reset();
    eng.pbar_resolve(st, eps);
    st = eng.apply_interaction(st, false);
    return st.vac;
}

// Fourth-order correction matrix on the zero sector at fixed eps and grid.
inline Matrix fourth_order_sector_matrix(const FiniteModeModel& fm, double eps) {
    const auto& model = fm.model;
    const int N = model.small.dim;
    const auto sectors = bohr_spectrum(model.small);
    const SectorBasis sec = find_sector(sectors, 0.0, model.small.degeneracy_tol);
    const int n = sec.size();
    Matrix out(n, n);
    for (int b = 0; b < n; ++b) {
        Eigen::VectorXcd vac = Eigen::VectorXcd::Zero(N * N);
        const auto [i0, j0] = sec.pairs[b];
        vac(i0 * N + j0) = 1.0;
        const Eigen::VectorXcd res = fourth_order_apply(fm, vac, eps);
        for (int a = 0; a < n; ++a) {
            const auto [i, j] = sec.pairs[a];
            out(a, b) = res(i * N + j);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exact eigenbranch instances for the projected-resolvent identity.
// ---------------------------------------------------------------------------

// L0 Hermitian with an isolated doubly degenerate eigenvalue e; W Hermitian
// built so that psi_lambda = psi0 + lambda*phi is an exact eigenbranch of
// L0 + lambda W with the eigenvalue pinned at e for every lambda:
//   W psi0 = -(L0 - e) phi,  W phi = 0,  phi orthogonal to the e eigenspace,
//   <phi, (L0 - e) phi> = 0.
struct FeshbachInstance {
    Matrix L0;
    Matrix W;
    double e = 0.0;
    Matrix P;            // eigenprojection of e
    Vector psi0;
    Vector phi;          // exact branch slope (for reference; checks re-track it)
    std::uint64_t seed = 0;
};

inline FeshbachInstance random_feshbach_instance(std::uint64_t seed, int n = 8) {
    if (n < 6) throw ConfigError("feshbach instance needs dimension >= 6");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto random_matrix = [&](int rows, int cols) {
        Matrix m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = Complex(gauss(rng), gauss(rng));
        return m;
    };
    // Haar-ish unitary from QR
    Eigen::HouseholderQR<Matrix> qr(random_matrix(n, n));
    Matrix U = qr.householderQ();
    // spectrum: e twice in the middle, the rest spread on both sides
    const double e = 0.25 * gauss(rng);
    Eigen::VectorXd d(n);
    d(0) = e;
    d(1) = e;
    for (int k = 2; k < n; ++k) {
        const double gap = 0.8 + 0.4 * std::abs(gauss(rng));
        d(k) = (k % 2 == 0) ? e + (1 + k / 2) * gap : e - (1 + k / 2) * gap;
    }
    FeshbachInstance inst;
    inst.seed = seed;
    inst.e = e;
    Eigen::VectorXcd dc = d.cast<Complex>();
    inst.L0 = hermitize(U * dc.asDiagonal() * U.adjoint());
    inst.psi0 = U.col(0);
    const Vector psi2 = U.col(1);  // the second eigenvector at e
    inst.P = U.col(0) * U.col(0).adjoint() + U.col(1) * U.col(1).adjoint();
    // phi: balanced mix of one positive-side and one negative-side eigenvector,
    // so that <phi, (L0-e) phi> = 0 and the branch eigenvalue stays at e
    int kp = -1, km = -1;
    for (int k = 2; k < n; ++k) (d(k) > e ? kp : km) = k;
    const double qp = d(kp) - e, qm = d(km) - e;  // qp > 0 > qm
    Vector phi = U.col(kp) + std::sqrt(qp / -qm) * U.col(km);
    inst.phi = phi;
    Vector w = -(inst.L0 - e * Matrix::Identity(n, n)) * phi;
    // Hermitian completion acting only off span{psi0, psi2, phi, w}; keeping
    // W psi2 = 0 makes the branch differentiation immune to the eigensolver
    // mixing inside the degenerate pair
    Matrix span(n, 4);
    span.col(0) = inst.psi0;
    span.col(1) = psi2;
    span.col(2) = phi / phi.norm();
    span.col(3) = w / w.norm();
    Eigen::HouseholderQR<Matrix> sqr(span);
    Matrix Qfull = sqr.householderQ();
    Matrix rest = Qfull.rightCols(n - 4);
    const Matrix M = hermitize(random_matrix(n - 4, n - 4));
    inst.W = hermitize(w * inst.psi0.adjoint() + inst.psi0 * w.adjoint() +
                       rest * M * rest.adjoint());
    return inst;
}

struct FeshbachResiduals {
    double branch_residual = 0.0;       // ||(L0 + lambda W - e) psi_lambda||
    double identity_residual = 0.0;     // projected-resolvent identity at fixed eps
    double extrapolated_residual = 0.0; // eps -> 0 statement by Richardson
};

// Track the eigenbranch numerically (maximal overlap, scale anchored by
// <psi0, psi_lambda> = 1), differentiate by central differences, and verify
//   P W P psi0' = P W Pbar (L0bar - e - i eps)^-1 Pbar W P psi0
//                 + i eps P W Pbar (L0bar - e - i eps)^-1 Pbar psi0'.
inline FeshbachResiduals feshbach_identity_check(const FeshbachInstance& inst, double eps,
                                                 double lambda_step = 1e-4) {
    const int n = static_cast<int>(inst.L0.rows());
    const Matrix id = Matrix::Identity(n, n);
    auto branch_vector = [&](double lam) {
        Matrix K = inst.L0 + lam * inst.W;
        Eigen::SelfAdjointEigenSolver<Matrix> es(K);
        int best = 0;
        double best_overlap = -1.0;
        for (int k = 0; k < n; ++k) {
            if (std::abs(es.eigenvalues()(k) - inst.e) > 0.3) continue;
            const double ov = std::abs(inst.psi0.dot(es.eigenvectors().col(k)));
            if (ov > best_overlap) { best_overlap = ov; best = k; }
        }
        Vector v = es.eigenvectors().col(best);
        const Complex anchor = inst.psi0.dot(v);
        if (std::abs(anchor) < 1e-8)
            throw std::runtime_error("eigenbranch tracking failure (crossing)");
        return Vector(v / anchor);
    };
    FeshbachResiduals out;
    const double h = lambda_step;
    Vector plus = branch_vector(h), minus = branch_vector(-h);
    for (double lam : {h, -h}) {
        const Vector& v = lam > 0 ? plus : minus;
        out.branch_residual = std::max(
            out.branch_residual,
            ((inst.L0 + lam * inst.W - inst.e * id) * v).norm() / v.norm());
    }
    Vector dpsi = (plus - minus) / (2.0 * h);
    const Matrix Pbar = id - inst.P;
    auto resolvent_bar = [&](const Vector& v, double ep) {
        // solve (L0 - e - i ep) x = Pbar v restricted to Ran Pbar
        Matrix A = Pbar * (inst.L0 - Complex(inst.e, ep) * id) * Pbar + inst.P;
        Vector x = A.fullPivLu().solve(Vector(Pbar * v));
        return Vector(Pbar * x);
    };
    const Vector lhs = inst.P * (inst.W * (inst.P * dpsi));
    const Vector wpsi = inst.W * inst.psi0;
    const Vector t1 = inst.P * (inst.W * resolvent_bar(wpsi, eps));
    const Vector t2 = Complex(0, eps) * (inst.P * (inst.W * resolvent_bar(dpsi, eps)));
    const double scale = 1.0 + lhs.norm() + t1.norm();
    out.identity_residual = (lhs - t1 - t2).norm() / scale;
    // eps -> 0 limit of the first term alone
    auto term = [&](double ep) { return Vector(inst.P * (inst.W * resolvent_bar(wpsi, ep))); };
    Vector t_extrap = 2.0 * term(5e-4) - term(1e-3);
    out.extrapolated_residual = (lhs - t_extrap).norm() / scale;
    return out;
}

// ---------------------------------------------------------------------------
// Exact finite thermal doubling for the kernel-derivative identity.
// ---------------------------------------------------------------------------

// Small system (x) truncated bosonic modes, doubled as h (x) h.  The vector
// vec(exp(-beta H_lambda / 2)) is an exact zero eigenvector of
// L_lambda X = H_lambda X - X H_lambda for every lambda, which makes the
// projected-resolvent identity exact on the truncation.
struct GibbsCheckResult {
    double identity_residual = 0.0;   // regularized identity at given eps
    double delta_annihilation = 0.0;  // || P I Pbar delta_eps(L0bar) Pbar I P Omega ||
    double branch_residual = 0.0;     // || L_lambda Omega_lambda || at test points
};

inline GibbsCheckResult gibbs_derivative_check(const Matrix& h_small,
                                               const std::vector<double>& mode_energies,
                                               const std::vector<double>& mode_couplings,
                                               const Matrix& G, double beta, double eps,
                                               double lambda_step = 1e-3) {
    const int ns = static_cast<int>(h_small.rows());
    const int nm = static_cast<int>(mode_energies.size());
    require_hermitian(h_small);
    require_hermitian(G);
    if (static_cast<int>(mode_couplings.size()) != nm)
        throw ConfigError("mode energies/couplings mismatch");
    // Fock space with total occupation <= 2
    struct Occ { int a = -1, b = -1; };  // occupied modes (a<=b), -1 = none
    std::vector<Occ> occs;
    occs.push_back({});
    for (int k = 0; k < nm; ++k) occs.push_back({k, -1});
    for (int k = 0; k < nm; ++k)
        for (int l = k; l < nm; ++l) occs.push_back({k, l});
    const int F = static_cast<int>(occs.size());
    const int dim = ns * F;
    // field operator phi(g) on the truncated Fock space
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(F, F);
    auto idx1 = [&](int k) { return 1 + k; };
    auto idx2 = [&](int k, int l) {
        if (k > l) std::swap(k, l);
        return 1 + nm + k * nm - k * (k - 1) / 2 + (l - k);
    };
    for (int k = 0; k < nm; ++k) {
        phi(idx1(k), 0) += mode_couplings[k];
        phi(0, idx1(k)) += mode_couplings[k];
        for (int l = 0; l < nm; ++l) {
            const double amp = (l == k) ? std::sqrt(2.0) : 1.0;
            phi(idx2(k, l), idx1(l)) += amp * mode_couplings[k];
            phi(idx1(l), idx2(k, l)) += amp * mode_couplings[k];
        }
    }
    phi /= std::sqrt(2.0);
    Eigen::VectorXd free_energy(F);
    for (int q = 0; q < F; ++q) {
        double v = 0.0;
        if (occs[q].a >= 0) v += mode_energies[occs[q].a];
        if (occs[q].b >= 0) v += mode_energies[occs[q].b];
        free_energy(q) = v;
    }
    // H_lambda on h = C^ns (x) F
    auto H_of = [&](double lam) {
        Matrix H = Matrix::Zero(dim, dim);
        for (int s = 0; s < ns; ++s)
            for (int t = 0; t < ns; ++t)
                for (int q = 0; q < F; ++q) {
                    H(s * F + q, t * F + q) += h_small(s, t);
                    for (int p = 0; p < F; ++p)
                        H(s * F + q, t * F + p) += lam * G(s, t) * phi(q, p);
                }
        for (int s = 0; s < ns; ++s)
            for (int q = 0; q < F; ++q) H(s * F + q, s * F + q) += free_energy(q);
        return H;
    };
    auto omega_of = [&](double lam) {
        Matrix H = H_of(lam);
        Eigen::SelfAdjointEigenSolver<Matrix> es(H);
        Eigen::VectorXcd wexp =
            ((-0.5 * beta) * es.eigenvalues().array()).exp().matrix().cast<Complex>();
        Matrix X = es.eigenvectors() * wexp.asDiagonal() * es.eigenvectors().adjoint();
        return X;  // unnormalized purification, matrix form
    };
    const Matrix H0 = H_of(0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es0(H0);
    const Eigen::VectorXd E0 = es0.eigenvalues();
    const Matrix U0 = es0.eigenvectors();
    const Matrix V = H_of(1.0) - H0;  // the coupling operator itself
    // everything below works on matrices X in the H0 eigenbasis;
    // L0 X = (E_a - E_b) X_ab, I X = v X - X v with v = U0^dag V U0
    const Matrix v = U0.adjoint() * V * U0;
    const double z0 = omega_of(0.0).norm();
    auto to_basis = [&](const Matrix& X) { return Matrix(U0.adjoint() * X * U0); };
    GibbsCheckResult out;
    const double h = lambda_step;
    Matrix om_p = to_basis(omega_of(h)) / z0;
    Matrix om_m = to_basis(omega_of(-h)) / z0;
    Matrix om_0 = to_basis(omega_of(0.0)) / z0;
    const Eigen::VectorXcd E0c = E0.cast<Complex>();
    for (double lam : {h, -h}) {
        const Matrix& X = lam > 0 ? om_p : om_m;
        // L_lambda X = (H0 + lam V) X - X (H0 + lam V) in the H0 eigenbasis
        Matrix resid = E0c.asDiagonal() * X - X * E0c.asDiagonal() + lam * (v * X - X * v);
        out.branch_residual = std::max(out.branch_residual, resid.norm() / X.norm());
    }
    Matrix dpsi = (om_p - om_m) / (2.0 * h);
    // projections: kernel of L0 = pairs with E_a = E_b (within tolerance)
    const double tol = 1e-9 * (1.0 + std::abs(E0(dim - 1)));
    auto Pmask = [&](int a, int b) { return std::abs(E0(a) - E0(b)) <= tol; };
    auto P = [&](const Matrix& X) {
        Matrix Y = Matrix::Zero(dim, dim);
        for (int a = 0; a < dim; ++a)
            for (int b = 0; b < dim; ++b)
                if (Pmask(a, b)) Y(a, b) = X(a, b);
        return Y;
    };
    auto Pbar = [&](const Matrix& X) { return Matrix(X - P(X)); };
    auto applyI = [&](const Matrix& X) { return Matrix(v * X - X * v); };
    auto resolve_bar = [&](const Matrix& X, double ep) {
        Matrix Y = Pbar(X);
        for (int a = 0; a < dim; ++a)
            for (int b = 0; b < dim; ++b)
                if (!Pmask(a, b)) Y(a, b) /= Complex(E0(a) - E0(b), -ep);
        return Y;
    };
    const Matrix lhs = P(applyI(P(dpsi)));
    const Matrix ipsi = applyI(om_0);
    const Matrix t1 = P(applyI(resolve_bar(ipsi, eps)));
    const Matrix t2 = Complex(0, eps) * P(applyI(resolve_bar(dpsi, eps)));
    const double scale = 1.0 + lhs.norm() + t1.norm();
    out.identity_residual = (lhs - t1 - t2).norm() / scale;
    // delta part: (1/2i)(R(eps) - R(-eps)) sandwiched
    const Matrix tminus = P(applyI(resolve_bar(ipsi, -eps)));
    out.delta_annihilation = (0.5 * (t1 - tminus)).norm() / scale;
    return out;
}

} // namespace lso::oracle
