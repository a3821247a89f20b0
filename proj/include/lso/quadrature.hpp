#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "lso/errors.hpp"

namespace lso::quad {

struct Options {
    double abs_tol = 1e-10;
    double rel_tol = 1e-8;
    int max_depth = 52;
};

namespace detail {

// 15-point Gauss-Legendre on [-1,1].
inline constexpr std::array<double, 15> gl15_x = {
    -0.9879925180204854, -0.9372733924007060, -0.8482065834104272,
    -0.7244177313601701, -0.5709721726085388, -0.3941513470775634,
    -0.2011940939974345,  0.0,                 0.2011940939974345,
     0.3941513470775634,  0.5709721726085388,  0.7244177313601701,
     0.8482065834104272,  0.9372733924007060,  0.9879925180204854};

inline constexpr std::array<double, 15> gl15_w = {
    0.0307532419961173, 0.0703660474881081, 0.1071592204671719,
    0.1395706779261543, 0.1662692058169939, 0.1861610000155622,
    0.1984314853271116, 0.2025782419255613, 0.1984314853271116,
    0.1861610000155622, 0.1662692058169939, 0.1395706779261543,
    0.1071592204671719, 0.0703660474881081, 0.0307532419961173};

template <typename T>
double absval(T x) {
    return std::abs(x);
}

template <typename F>
auto gl15(F&& f, double a, double b) {
    const double h = 0.5 * (b - a);
    const double c = 0.5 * (a + b);
    using R = decltype(f(c));
    R s{};
    for (int i = 0; i < 15; ++i) s += R(gl15_w[i] * h) * f(c + h * gl15_x[i]);
    return s;
}

// Bisect until the two-panel refinement agrees with the single panel.
template <typename F, typename R>
void adapt(F& f, double a, double b, R whole, double tol, int depth,
           const Options& opt, R& acc, double& err_acc) {
    const double m = 0.5 * (a + b);
    const R left = gl15(f, a, m);
    const R right = gl15(f, m, b);
    const double err = absval(left + right - whole);
    if (err <= tol || depth >= opt.max_depth) {
        acc += left + right;
        err_acc += err;
        return;
    }
    adapt(f, a, m, left, 0.5 * tol, depth + 1, opt, acc, err_acc);
    adapt(f, m, b, right, 0.5 * tol, depth + 1, opt, acc, err_acc);
}

} // namespace detail

// Adaptive Gauss-Legendre over [a,b].  Works for real and complex integrands.
template <typename F>
auto integrate(F&& f, double a, double b, const Options& opt = {}) {
    using R = decltype(f(a));
    if (!(b > a)) return R{};
    const R whole = detail::gl15(f, a, b);
    const double tol = std::max(opt.abs_tol, opt.rel_tol * detail::absval(whole));
    R acc{};
    double err = 0.0;
    detail::adapt(f, a, b, whole, tol, 0, opt, acc, err);
    const double bound = std::max(opt.abs_tol, opt.rel_tol * detail::absval(acc));
    if (err > 50.0 * bound)
        throw QuadratureError("adaptive quadrature did not converge", err);
    return acc;
}

// Same, with interior breakpoints (integrand kinks, pole projections).
template <typename F>
auto integrate(F&& f, double a, double b, std::vector<double> pts,
               const Options& opt = {}) {
    using R = decltype(f(a));
    pts.push_back(a);
    pts.push_back(b);
    std::sort(pts.begin(), pts.end());
    R acc{};
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double lo = std::clamp(pts[i], a, b);
        const double hi = std::clamp(pts[i + 1], a, b);
        if (hi > lo) acc += integrate(f, lo, hi, opt);
    }
    return acc;
}

// Integrate over (0,b] with an integrable algebraic singularity at 0
// (integrand ~ r^q, q > -1).  Geometric halving panels toward the origin;
// once the panel contributions decay geometrically the remaining tail is
// summed from the observed ratio.
template <typename F>
auto integrate_ir(F&& f, double b, const Options& opt = {}) {
    using R = decltype(f(b));
    R acc = integrate(f, 0.5 * b, b, opt);
    double hi = 0.5 * b;
    R prev{};
    bool have_prev = false;
    for (int iter = 0; iter < 600; ++iter) {
        const double lo = 0.5 * hi;
        const R piece = integrate(f, lo, hi, opt);
        acc += piece;
        const double mag = detail::absval(piece);
        if (have_prev) {
            const double ratio = mag / std::max(detail::absval(prev), 1e-300);
            if (ratio < 0.999) {
                const double tail_bound = mag * ratio / (1.0 - ratio);
                if (tail_bound < 0.5 * std::max(opt.abs_tol,
                                                opt.rel_tol * detail::absval(acc))) {
                    acc += piece * (ratio / (1.0 - ratio));
                    return acc;
                }
            }
        }
        if (mag == 0.0 && detail::absval(prev) == 0.0 && iter > 4) return acc;
        prev = piece;
        have_prev = true;
        hi = lo;
        if (hi < 1e-290) return acc;
    }
    throw QuadratureError("infrared tail did not converge", detail::absval(prev));
}

// Cauchy principal value  P.V. int_a^b f(r)/(pole - r) dr  by singularity
// subtraction:  int (f(r)-f(pole))/(pole-r) dr + f(pole) log((pole-a)/(b-pole)).
// The subtracted integrand is evaluated with a derivative guard near the pole.
template <typename F>
double pv(F&& f, double pole, double a, double b, const Options& opt = {}) {
    if (!(a < pole && pole < b))
        throw ConfigError("principal value pole must lie inside the interval");
    const double fp = f(pole);
    const double scale = std::max({std::abs(pole), std::abs(b - pole), 1e-30});
    const double guard = 1e-7 * scale;
    const double h = 1e-5 * scale;
    const double dfp = (f(pole + h) - f(pole - h)) / (2.0 * h);
    auto g = [&](double r) {
        const double d = pole - r;
        if (std::abs(d) < guard) return -dfp;
        return (f(r) - fp) / d;
    };
    const double sub = integrate(g, a, b, {pole}, opt);
    return sub + fp * std::log((pole - a) / (b - pole));
}

} // namespace lso::quad
