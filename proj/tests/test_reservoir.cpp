#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "lso/reservoir.hpp"

using namespace lso;

namespace {

ReservoirSpec gaussian_spec(double gamma = 0.9, double p = 0.5, double beta = 1.3,
                            double rmax = 2.5) {
    ReservoirSpec rs;
    rs.beta = beta;
    rs.form_factor = FormFactor::gaussian_damped(gamma, p, 1.0, rmax);
    return rs;
}

// slow composite reference for the principal value, built from the symmetric
// pairing around the pole plus the plain remainder
double pv_reference(const std::function<double(double)>& f, double pole, double b, int n) {
    auto simpson = [&](const std::function<double(double)>& g, double lo, double hi) {
        double acc = g(lo) + g(hi);
        for (int k = 1; k < n; ++k) acc += g(lo + (hi - lo) * k / n) * (k % 2 ? 4.0 : 2.0);
        return acc * (hi - lo) / (3.0 * n);
    };
    const double d = std::min(pole, b - pole);
    auto odd = [&](double u) {
        if (u < 1e-9) u = 1e-9;
        return (f(pole - u) - f(pole + u)) / u;
    };
    double val = simpson(odd, 0.0, d);
    if (pole - d > 0.0)
        val += simpson([&](double r) { return f(r) / (pole - r); }, 0.0, pole - d);
    if (pole + d < b)
        val += simpson([&](double r) { return f(r) / (pole - r); }, pole + d, b);
    return val;
}

} // namespace

TEST_CASE("occupation numbers") {
    CHECK(occupation(1.0, std::log(2.0)) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(occupation(2.0, 50.0) < 1e-43);
    CHECK(std::abs(occupation(1.0, 1e-8) * 1e-8 - 1.0) < 1e-6);
    CHECK_THROWS_AS(occupation(1.0, 0.0), ConfigError);
    // detailed balance
    for (double beta : {0.5, 1.0, 3.0})
        for (double r : {0.01, 0.5, 2.0, 10.0}) {
            const double rho = occupation(beta, r);
            CHECK(std::abs(rho * std::exp(beta * r) - (1.0 + rho)) < 1e-12 * (1.0 + rho));
        }
}

TEST_CASE("hyperbolic reduction of the mixed thermal factor") {
    // (2 sqrt(rho(1+rho)) - 1 - 2 rho)^2 = tanh^2(beta r / 4)
    for (int i = 1; i <= 32; ++i)
        for (int k = 1; k <= 32; ++k) {
            const double beta = 0.1 * i;
            const double r = 0.15 * k;
            const double rho = occupation(beta, r);
            const double lhs = std::pow(2.0 * std::sqrt(rho * (1.0 + rho)) - 1.0 - 2.0 * rho, 2);
            const double rhs = std::pow(std::tanh(0.25 * beta * r), 2);
            CHECK(std::abs(lhs - rhs) < 1e-12);
        }
}

TEST_CASE("on-shell coupling strength") {
    ReservoirSpec flat;
    flat.beta = 1.0;
    flat.form_factor = FormFactor::power_cutoff(1.0, 0.0, 2.0);
    CHECK(s_coupling(flat, 1.0).value == Catch::Approx(4.0 * pi * pi).epsilon(1e-12));
    CHECK(s_coupling(flat, 0.5).value ==
          Catch::Approx(0.25 * s_coupling(flat, 1.0).value).epsilon(1e-12));
    CHECK(s_coupling(flat, 3.0).outside_support);
    CHECK(s_coupling(flat, 3.0).value == 0.0);

    ReservoirSpec off;
    off.beta = 1.0;
    off.form_factor = FormFactor::power_cutoff(0.0, 0.0, 2.0);
    CHECK(s_coupling(off, 1.0).value == 0.0);
}

TEST_CASE("principal value shift against a brute-force reference") {
    auto rs = gaussian_spec();
    const double delta = 1.0;
    const double fast = pv_alpha(rs, delta);
    const double slow =
        pv_reference([&](double r) { return rs.f_plus(r); }, delta, rs.r_max(), 400000);
    CHECK(std::abs(fast - slow) < 1e-8 * (1.0 + std::abs(slow)));

    ReservoirSpec off = rs;
    off.form_factor = FormFactor::power_cutoff(0.0, 0.5, 2.5);
    CHECK(pv_alpha(off, 1.0) == 0.0);
}

TEST_CASE("principal value shift is linear in the angular weight") {
    auto rs = gaussian_spec(0.6);
    auto rs2 = gaussian_spec(1.2);  // W scales by 4
    const double delta = 0.9;
    CHECK(pv_alpha(rs2, delta) == Catch::Approx(4.0 * pv_alpha(rs, delta)).epsilon(1e-10));
    CHECK(pv_alpha_mirror(rs2, delta) ==
          Catch::Approx(4.0 * pv_alpha_mirror(rs, delta)).epsilon(1e-10));
}

TEST_CASE("weighted integrals xi and eta") {
    ReservoirSpec crit;
    crit.beta = 2.0;
    crit.form_factor = FormFactor::power_cutoff(0.8, -0.5, 1.0);
    auto xe = xi_eta(crit);
    CHECK(xe.xi == Catch::Approx(2.0 * pi * 0.64).epsilon(1e-8));
    CHECK(xe.eta == Catch::Approx(0.5 * pi * delta_weight(crit)).epsilon(1e-10));

    ReservoirSpec reg = gaussian_spec();
    CHECK(xi_eta(reg).eta == 0.0);

    ReservoirSpec zero;
    zero.beta = 1.0;
    zero.form_factor = FormFactor::power_cutoff(0.0, 0.0, 1.0);
    auto z = xi_eta(zero);
    CHECK(z.xi == 0.0);
    CHECK(z.eta == 0.0);

    ReservoirSpec sub;
    sub.beta = 1.0;
    sub.form_factor = FormFactor::power_cutoff(1.0, -0.75, 1.0);
    CHECK_THROWS_AS(xi_eta(sub), NonexistentLSO);
}

TEST_CASE("infrared classification") {
    CHECK(ir_classify(FormFactor::power_cutoff(1.0, -0.75, 1.0)) == IrClass::Subcritical);
    CHECK(ir_classify(FormFactor::power_cutoff(1.0, -0.5, 1.0)) == IrClass::Critical);
    CHECK(ir_classify(FormFactor::power_cutoff(1.0, 0.0, 1.0)) == IrClass::Regular);
    CHECK_THROWS_AS(FormFactor::power_cutoff(1.0, -1.0, 1.0), ConfigError);
}

TEST_CASE("zero-frequency weight") {
    ReservoirSpec reg = gaussian_spec();
    CHECK(delta_weight(reg) == 0.0);

    ReservoirSpec c1;
    c1.beta = 1.0;
    c1.form_factor = FormFactor::power_cutoff(1.0, -0.5, 1.0);
    CHECK(delta_weight(c1) == Catch::Approx(4.0 * pi).epsilon(1e-6));

    ReservoirSpec c2;
    c2.beta = 4.0;
    c2.form_factor = FormFactor::power_cutoff(2.0, -0.5, 1.0);
    CHECK(delta_weight(c2) == Catch::Approx(4.0 * pi).epsilon(1e-6));
}

TEST_CASE("half transform: limit split and regularized family") {
    auto rs = gaussian_spec();
    ReservoirSpec off = rs;
    off.form_factor = FormFactor::power_cutoff(0.0, 0.5, 2.5);
    CHECK(half_transform(off, 0.3, 0.0).value() == std::complex<double>(0.0, 0.0));
    CHECK(half_transform(off, 0.3, 1e-2).value() == std::complex<double>(0.0, 0.0));

    // channel selection of the on-shell weight
    const double w0 = 0.8;
    auto up = half_transform(rs, w0, 0.0);
    CHECK(up.onshell == Catch::Approx(0.5 * pi * rs.f_rho(w0)).epsilon(1e-12));
    auto down = half_transform(rs, -w0, 0.0);
    CHECK(down.onshell == Catch::Approx(0.5 * pi * rs.f_plus(w0)).epsilon(1e-12));

    // regularized values approach the split at rate O(eps)
    double prev = -1.0;
    for (double eps : {2e-1, 1e-1, 5e-2}) {
        auto he = half_transform(rs, -w0, eps);
        const double dist = std::abs(he.value() - down.value());
        if (prev > 0.0) CHECK(dist < prev);
        prev = dist;
    }
}

TEST_CASE("cross kernel is purely on-shell") {
    auto rs = gaussian_spec();
    auto x = cross_kernel(rs, 0.6, 0.0);
    CHECK(x.real() == 0.0);
    CHECK(x.imag() == Catch::Approx(pi * rs.w_cross(0.6)).epsilon(1e-12));
    CHECK(cross_kernel(rs, 0.0, 0.0) == std::complex<double>(0.0, 0.0));  // regular infrared
    auto xe = cross_kernel(rs, 0.6, 5e-2);
    CHECK(xe.real() == 0.0);
    CHECK(std::abs(xe.imag() - x.imag()) < 0.2 * std::abs(x.imag()));
}

TEST_CASE("declared infrared data is validated by sampling") {
    CHECK_NOTHROW(FormFactor::gaussian_damped(0.9, 0.5, 1.0, 2.5).validate_ir_window());
    // a table drifting away from its declared exponent fails
    std::vector<std::pair<double, double>> pts;
    for (double r = 1e-3; r <= 2.0; r *= 1.6) pts.push_back({r, 0.5 * r + 0.2});
    auto ff = FormFactor::from_table(pts, 1.0);
    CHECK_THROWS_AS(ff.validate_ir_window(), ConfigError);
}
