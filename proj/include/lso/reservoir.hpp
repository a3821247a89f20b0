#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "lso/errors.hpp"
#include "lso/quadrature.hpp"

namespace lso {

inline constexpr double pi = std::numbers::pi_v<double>;

// Bose occupation 1/(e^{beta r} - 1), cancellation-safe for small beta*r.
inline double occupation(double beta, double r) {
    if (!(r > 0.0)) throw ConfigError("occupation requires r > 0");
    return 1.0 / std::expm1(beta * r);
}

enum class FormFactorFamily { PowerCutoff, GaussianDamped, Table };

// Isotropic coupling profile g(r) >= 0 with infrared behaviour g ~ gamma r^p
// and hard ultraviolet cutoff r_max.  The angular weight W(r) = 4 pi g(r)^2
// carries all angular content.
struct FormFactor {
    FormFactorFamily family = FormFactorFamily::PowerCutoff;
    double ir_exponent = 0.0;    // p > -1
    double ir_amplitude = 1.0;   // gamma >= 0
    double uv_cutoff = 1.0;      // r_max
    double gauss_scale = 1.0;    // Lambda in gamma r^p exp(-r^2/Lambda^2)
    std::vector<std::pair<double, double>> table;  // (r, g) knots, sorted

    static FormFactor power_cutoff(double gamma, double p, double r_max) {
        FormFactor f;
        f.family = FormFactorFamily::PowerCutoff;
        f.ir_amplitude = gamma;
        f.ir_exponent = p;
        f.uv_cutoff = r_max;
        f.check_params();
        return f;
    }
    static FormFactor gaussian_damped(double gamma, double p, double lambda, double r_max) {
        FormFactor f;
        f.family = FormFactorFamily::GaussianDamped;
        f.ir_amplitude = gamma;
        f.ir_exponent = p;
        f.gauss_scale = lambda;
        f.uv_cutoff = r_max;
        f.check_params();
        return f;
    }
    static FormFactor from_table(std::vector<std::pair<double, double>> knots,
                                 double p_declared) {
        FormFactor f;
        f.family = FormFactorFamily::Table;
        f.table = std::move(knots);
        f.ir_exponent = p_declared;
        if (f.table.size() < 2) throw ConfigError("table form factor needs >= 2 knots");
        for (std::size_t i = 0; i + 1 < f.table.size(); ++i)
            if (!(f.table[i].first < f.table[i + 1].first))
                throw ConfigError("table form factor abscissae must be strictly increasing");
        for (auto& [r, g] : f.table)
            if (g < 0.0) throw ConfigError("table form factor must be nonnegative");
        f.uv_cutoff = f.table.back().first;
        f.ir_amplitude = f.table.front().second /
                         std::pow(std::max(f.table.front().first, 1e-300), p_declared);
        f.check_params();
        return f;
    }

    void check_params() const {
        if (!(ir_exponent > -1.0))
            throw ConfigError("infrared exponent must satisfy p > -1");
        if (ir_amplitude < 0.0) throw ConfigError("ir_amplitude must be >= 0");
        if (!(uv_cutoff > 0.0)) throw ConfigError("uv_cutoff must be positive");
        if (family == FormFactorFamily::GaussianDamped && !(gauss_scale > 0.0))
            throw ConfigError("gaussian scale must be positive");
    }

    double g(double r) const {
        if (r <= 0.0 || r > uv_cutoff) return 0.0;
        switch (family) {
            case FormFactorFamily::PowerCutoff:
                return ir_amplitude * std::pow(r, ir_exponent);
            case FormFactorFamily::GaussianDamped:
                return ir_amplitude * std::pow(r, ir_exponent) *
                       std::exp(-r * r / (gauss_scale * gauss_scale));
            case FormFactorFamily::Table: {
                if (r <= table.front().first) {
                    // extend below the first knot with the declared power law
                    return table.front().second *
                           std::pow(r / table.front().first, ir_exponent);
                }
                auto it = std::lower_bound(
                    table.begin(), table.end(), r,
                    [](const std::pair<double, double>& k, double x) { return k.first < x; });
                const auto [r1, g1] = *it;
                const auto [r0, g0] = *(it - 1);
                return g0 + (g1 - g0) * (r - r0) / (r1 - r0);
            }
        }
        return 0.0;
    }

    double W(double r) const {
        const double gr = g(r);
        return 4.0 * pi * gr * gr;
    }

    // Sample g(r)/r^p on a geometric grid and require < 1% relative drift,
    // confirming the declared infrared data.
    void validate_ir_window(double lo = 1e-8, double hi = 1e-2) const {
        check_params();
        if (ir_amplitude == 0.0) return;
        hi = std::min(hi, 0.5 * uv_cutoff);
        double ref = 0.0;
        for (double r = lo; r <= hi * (1 + 1e-12); r *= 10.0) {
            const double ratio = g(r) / std::pow(r, ir_exponent);
            if (ref == 0.0) ref = ratio;
            if (std::abs(ratio - ref) > 0.01 * std::abs(ref))
                throw ConfigError("form factor drifts from the declared infrared power law");
        }
        if (std::abs(ref - ir_amplitude) > 0.01 * std::abs(ir_amplitude))
            throw ConfigError("infrared amplitude does not match the sampled limit of g(r)/r^p");
    }
};

// Thermal reservoir: inverse temperature plus coupling profile.  The
// dispersion is the massless relativistic one, omega(r) = r; the closed forms
// assume it, so nothing else is accepted.
struct ReservoirSpec {
    double beta = 1.0;
    FormFactor form_factor;
    std::string dispersion = "massless";  // provenance only

    void validate() const {
        if (!(beta > 0.0)) throw ConfigError("beta must be positive");
        if (dispersion != "massless")
            throw ConfigError("only the massless dispersion omega(r) = r is supported");
        form_factor.check_params();
    }
    double rho(double r) const { return occupation(beta, r); }
    double r_max() const { return form_factor.uv_cutoff; }

    // radial weights entering every transform; the r -> 0 endpoint values are
    // the regular-infrared limits (the critical weight enters via delta_weight)
    double f_plus(double r) const {    // emission channel r^2 W (1+rho)
        if (r <= 0.0) return 0.0;
        return r * r * form_factor.W(r) * (1.0 + rho(r));
    }
    double f_rho(double r) const {     // absorption channel r^2 W rho
        if (r <= 0.0) return 0.0;
        return r * r * form_factor.W(r) * rho(r);
    }
    double w_cross(double r) const {   // r^2 W sqrt(rho(1+rho)) = r^2 W / (2 sinh(beta r/2))
        if (r <= 0.0) return 0.0;
        return r * r * form_factor.W(r) / (2.0 * std::sinh(0.5 * beta * r));
    }
};

enum class IrClass { Subcritical, Critical, Regular };

// p < -1/2: no epsilon -> 0 limit; p = -1/2: zero-frequency delta enhancement;
// p > -1/2: regular.
inline IrClass ir_classify(const FormFactor& ff) {
    ff.check_params();
    constexpr double tol = 1e-12;
    if (ff.ir_exponent < -0.5 - tol) return IrClass::Subcritical;
    if (ff.ir_exponent <= -0.5 + tol) return IrClass::Critical;
    return IrClass::Regular;
}

// Zero-frequency weight  beta^-1 lim_{r->0} r W(r); nonzero only at p = -1/2.
inline double delta_weight(const ReservoirSpec& spec) {
    spec.validate();
    switch (ir_classify(spec.form_factor)) {
        case IrClass::Subcritical:
            throw NonexistentLSO("subcritical infrared exponent: no zero-frequency limit");
        case IrClass::Regular:
            return 0.0;
        case IrClass::Critical:
            break;
    }
    // limit of r W(r); for g = gamma r^-1/2 this is 4 pi gamma^2
    const double v1 = spec.form_factor.W(1e-8) * 1e-8;
    const double v2 = spec.form_factor.W(1e-9) * 1e-9;
    if (std::abs(v1 - v2) > 1e-2 * (std::abs(v2) + 1e-300))
        throw ConfigError("zero-frequency weight r W(r) does not converge");
    return v2 / spec.beta;
}

struct SCoupling {
    double value = 0.0;
    bool outside_support = false;
};

// On-shell coupling strength  s = pi Delta^2 W(Delta).
inline SCoupling s_coupling(const ReservoirSpec& spec, double delta) {
    spec.validate();
    if (!(delta > 0.0)) throw ConfigError("s_coupling requires delta > 0");
    if (delta > spec.r_max()) return {0.0, true};
    return {pi * delta * delta * spec.form_factor.W(delta), false};
}

// P.V. int_0^rmax r^2 W(r)(1+rho(r)) / (delta - r) dr.
inline double pv_alpha(const ReservoirSpec& spec, double delta,
                       const quad::Options& opt = {}) {
    spec.validate();
    if (!(delta > 0.0 && delta < spec.r_max()))
        throw ConfigError("pv_alpha requires 0 < delta < r_max");
    // continuity probe at the pole
    const double h = 1e-7 * spec.r_max();
    const double f0 = spec.f_plus(delta);
    if (std::abs(spec.f_plus(delta + h) - f0) > 1e-2 * (1.0 + std::abs(f0)) ||
        std::abs(spec.f_plus(delta - h) - f0) > 1e-2 * (1.0 + std::abs(f0)))
        throw ConfigError("integrand discontinuous at the principal value pole");
    return quad::pv([&](double r) { return spec.f_plus(r); }, delta, 0.0, spec.r_max(), opt);
}

// Anti-resonant companion  int_0^rmax r^2 W(r) rho(r) / (delta + r) dr.
inline double pv_alpha_mirror(const ReservoirSpec& spec, double delta,
                              const quad::Options& opt = {}) {
    spec.validate();
    if (!(delta > 0.0)) throw ConfigError("pv_alpha_mirror requires delta > 0");
    return quad::integrate_ir([&](double r) { return spec.f_rho(r) / (delta + r); },
                              spec.r_max(), opt);
}

// Real shift coefficient entering the degenerate 3-level closed form: the
// resonant principal value and the anti-resonant thermal channel carry equal
// half weights.  Fixed against the finite-mode evaluation of the resolvent.
inline double closed_form_alpha(const ReservoirSpec& spec, double delta,
                                const quad::Options& opt = {}) {
    return 0.5 * (pv_alpha(spec, delta, opt) + pv_alpha_mirror(spec, delta, opt));
}

struct XiEta {
    double xi = 0.0;
    double eta = 0.0;
};

// xi = (1/2) int r W(r) dr;  eta = (pi/2) * delta_weight (critical IR only;
// the constant is pinned by the finite-mode oracle).
inline XiEta xi_eta(const ReservoirSpec& spec, const quad::Options& opt = {}) {
    spec.validate();
    if (ir_classify(spec.form_factor) == IrClass::Subcritical)
        throw NonexistentLSO("subcritical infrared exponent: xi/eta undefined");
    XiEta out;
    out.xi = 0.5 * quad::integrate_ir(
                       [&](double r) { return r * spec.form_factor.W(r); },
                       spec.r_max(), opt);
    out.eta = 0.5 * pi * delta_weight(spec);
    return out;
}

// One matrix-element kernel at frequency w0:
//   eps > 0:   (1/2)[ int f_plus/(w0 + r - i eps) + int f_rho/(w0 - r - i eps) ]
//   eps = 0:   principal value real part plus i pi/2 times the on-shell weight
//              (emission for w0 < 0, absorption for w0 > 0, delta_weight at 0).
struct HalfTransform {
    double pv = 0.0;       // real (shift) part
    double onshell = 0.0;  // imaginary (decay) part
    std::complex<double> value() const { return {pv, onshell}; }
};

inline HalfTransform half_transform(const ReservoirSpec& spec, double w0, double eps,
                                    const quad::Options& opt = {}) {
    spec.validate();
    const double R = spec.r_max();
    HalfTransform out;
    if (eps > 0.0) {
        const std::vector<double> brk =
            (std::abs(w0) > 0 && std::abs(w0) < R) ? std::vector<double>{std::abs(w0)}
                                                   : std::vector<double>{};
        auto kern = [&](double r) {
            return 0.5 * (spec.f_plus(r) / std::complex<double>(w0 + r, -eps) +
                          spec.f_rho(r) / std::complex<double>(w0 - r, -eps));
        };
        std::complex<double> v;
        if (ir_classify(spec.form_factor) == IrClass::Regular && spec.form_factor.ir_exponent >= 0.0)
            v = quad::integrate(kern, 0.0, R, brk, opt);
        else {
            // infrared panels handle r^{2p} weights; split the on-shell point off first
            const double split = brk.empty() ? R : std::abs(w0);
            v = quad::integrate_ir(kern, split, opt);
            if (split < R) v += quad::integrate(kern, split, R, opt);
        }
        out.pv = v.real();
        out.onshell = v.imag();
        return out;
    }
    if (eps < 0.0) throw ConfigError("half_transform requires eps >= 0");

    const IrClass cls = ir_classify(spec.form_factor);
    if (w0 == 0.0) {
        if (cls == IrClass::Subcritical)
            throw NonexistentLSO("subcritical infrared exponent at zero frequency");
        // the two thermal channels cancel the occupation: (1/2) int r W dr
        out.pv = 0.5 * quad::integrate_ir(
                           [&](double r) { return r * spec.form_factor.W(r); }, R, opt);
        out.onshell = 0.5 * pi * (cls == IrClass::Critical ? delta_weight(spec) : 0.0);
        return out;
    }
    auto fplus = [&](double r) { return spec.f_plus(r); };
    auto frho = [&](double r) { return spec.f_rho(r); };
    if (w0 > 0.0) {
        // pole in the absorption channel at r = w0
        out.pv = 0.5 * quad::integrate_ir([&](double r) { return spec.f_plus(r) / (w0 + r); },
                                          R, opt);
        if (w0 < R) {
            out.pv += 0.5 * quad::pv(frho, w0, 0.0, R, opt);
            out.onshell = 0.5 * pi * spec.f_rho(w0);
        }
        return out;
    }
    const double m = -w0;  // pole in the emission channel at r = -w0
    if (m < R) {
        out.pv = -0.5 * quad::pv(fplus, m, 0.0, R, opt);
        out.onshell = 0.5 * pi * spec.f_plus(m);
    }
    out.pv += 0.5 * quad::integrate_ir([&](double r) { return spec.f_rho(r) / (w0 - r); },
                                       R, opt);
    return out;
}

// Purely on-shell kernel weighting the mixed left/right term:
//   eps > 0:  i int w_cross(r) eps [ ((nu+r)^2+eps^2)^-1 + ((nu-r)^2+eps^2)^-1 ] dr
//   eps = 0:  i pi w_cross(|nu|)   (delta_weight at nu = 0).
inline std::complex<double> cross_kernel(const ReservoirSpec& spec, double nu, double eps,
                                         const quad::Options& opt = {}) {
    spec.validate();
    const double R = spec.r_max();
    const double a = std::abs(nu);
    if (eps > 0.0) {
        auto kern = [&](double r) {
            return spec.w_cross(r) * eps * (1.0 / ((a + r) * (a + r) + eps * eps) +
                                            1.0 / ((a - r) * (a - r) + eps * eps));
        };
        double v;
        if (spec.form_factor.ir_exponent >= 0.0)
            v = quad::integrate(kern, 0.0, R,
                                (a > 0 && a < R) ? std::vector<double>{a}
                                                 : std::vector<double>{},
                                opt);
        else {
            const double split = (a > 0 && a < R) ? a : R;
            v = quad::integrate_ir(kern, split, opt);
            if (split < R) v += quad::integrate(kern, split, R, opt);
        }
        return {0.0, v};
    }
    if (a == 0.0) {
        const IrClass cls = ir_classify(spec.form_factor);
        if (cls == IrClass::Subcritical)
            throw NonexistentLSO("subcritical infrared exponent at zero frequency");
        return {0.0, pi * (cls == IrClass::Critical ? delta_weight(spec) : 0.0)};
    }
    if (a >= R) return {0.0, 0.0};
    return {0.0, pi * spec.w_cross(a)};
}

} // namespace lso
