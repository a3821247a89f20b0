#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lso/higher.hpp"

using namespace lso;

namespace {

OpenSystemModel b0_model(double a = 0.8, double c = 0.6, double beta = 1.3,
                         double delta = 0.7) {
    OpenSystemModel m;
    m.small = SmallSystem{3, {0.0, delta, delta}};
    Matrix g(3, 3);
    g << 0, a, 0, a, 0, c, 0, c, 0;
    ReservoirSpec rs;
    rs.beta = beta;
    rs.form_factor = FormFactor::gaussian_damped(0.9, 0.5, 1.0, 2.5);
    m.couplings.push_back({g, rs});
    m.lambda = 0.1;
    return m;
}

} // namespace

TEST_CASE("fourth-order kernels: positivity, scaling, reference values") {
    auto m = b0_model();
    const auto& rs = m.couplings[0].reservoir;
    const double delta = 0.7;
    const double x1 = xi1(rs, delta);
    const double x2 = xi2(rs);
    CHECK(x1 > 0.0);
    CHECK(x2 > 0.0);
    // frozen reference values from a dense composite quadrature of the same
    // kernels (independent evaluation path, 1e6-panel composite rule)
    CHECK(x1 == Catch::Approx(19.509737).epsilon(2e-6));
    CHECK(x2 == Catch::Approx(0.4205394).epsilon(2e-6));

    // xi2 ignores the level splitting entirely (no delta argument)
    ReservoirSpec cold = rs;
    cold.beta = 500.0;
    const double hot_free = pi * quad::integrate_ir(
        [&](double r) {
            const double w = cold.form_factor.W(r);
            return r * r * w * w;
        },
        cold.r_max());
    CHECK(xi2(cold) == Catch::Approx(hot_free).epsilon(1e-4));

    // xi1(delta)/delta^2 approaches a constant for small delta
    const double r1 = xi1(rs, 0.08) / (0.08 * 0.08);
    const double r2 = xi1(rs, 0.04) / (0.04 * 0.04);
    CHECK(std::abs(r1 - r2) < 0.05 * std::abs(r2));

    // vanishing profile
    ReservoirSpec off = rs;
    off.form_factor = FormFactor::gaussian_damped(1e-30, 0.5, 1.0, 2.5);
    CHECK(xi1(off, delta) < 1e-50);
    CHECK(xi2(off) < 1e-50);

    // the kernels need p > 0
    ReservoirSpec flat = rs;
    flat.form_factor = FormFactor::power_cutoff(0.9, 0.0, 2.5);
    CHECK_THROWS_AS(xi1(flat, delta), ConfigError);
}

TEST_CASE("triple-resolvent correction matches the validated kernels") {
    auto m = b0_model();
    auto fo = lambda0_prime_oracle(m, 512, 0.08, 2e-2, 0);
    REQUIRE(fo.lambda0_prime.rows() == 5);
    // zero-sector lexicographic pairs: (0,0),(1,1),(1,2),(2,1),(2,2)
    const Complex entry = fo.lambda0_prime(4, 4);
    const double a = 0.8, c = 0.6;
    const double predicted = a * a * c * c * xi1(m.couplings[0].reservoir, 0.7);
    CHECK(std::abs(entry.imag() - predicted) < 2e-2 * predicted);
    CHECK(std::abs(entry.real()) < 2e-2 * predicted);
    CHECK(!fo.trace.empty());
}

TEST_CASE("degenerate-pair analysis and rates") {
    auto m = b0_model();
    auto corr = d_matrix_and_rates(m, 0.1, 256);
    // the two orthogonality entries of the reduced matrix are small
    const double lead = std::abs(corr.d_matrix(1, 1));
    CHECK(std::abs(corr.d_matrix(0, 0)) < 0.05 * lead);
    CHECK(std::abs(corr.d_matrix(1, 0)) < 0.05 * lead);
    // determinant vanishes, trace is the slow eigenvalue
    const Complex det = corr.d_matrix.determinant();
    CHECK(std::abs(det) < 0.05 * lead * corr.d_matrix.norm());
    CHECK(std::abs(corr.d_matrix.trace() - corr.d_matrix(0, 0) - corr.slow_eigenvalue) <
          1e-12 * (1.0 + std::abs(corr.slow_eigenvalue)));
    // decay direction and the lambda^4 law
    CHECK(corr.slow_eigenvalue.imag() > -1e-10);
    CHECK(corr.slow_rate == Catch::Approx(0.1 * 0.1 * corr.slow_eigenvalue.imag()));
    CHECK(corr.fast_rate > 0.0);
    auto corr2 = d_matrix_and_rates(m, 0.2, 256);
    CHECK(corr2.slow_eigenvalue.real() ==
          Catch::Approx(4.0 * corr.slow_eigenvalue.real()).margin(1e-12));
    CHECK(corr2.slow_eigenvalue.imag() ==
          Catch::Approx(4.0 * corr.slow_eigenvalue.imag()).epsilon(1e-12));
}

TEST_CASE("ineffective zero-frequency coupling leaves the degeneracy in place") {
    // c = 0: the excited pair cannot be vacated even at fourth order
    auto m = b0_model(0.8, 0.0);
    auto corr = d_matrix_and_rates(m, 0.1, 128);
    CHECK(std::abs(corr.slow_eigenvalue) < 1e-10);
    CHECK(corr.slow_rate < 1e-10);
    CHECK(corr.fast_rate > 0.0);
    // with a = 0 the second-order operator vanishes entirely: rejected
    auto m2 = b0_model(0.0, 0.6);
    CHECK_THROWS_AS(d_matrix_and_rates(m2, 0.1, 128), ConfigError);
}

TEST_CASE("shape preconditions are enforced") {
    auto m = b0_model();
    m.couplings[0].G(0, 2) = 0.5;
    m.couplings[0].G(2, 0) = 0.5;
    CHECK_THROWS_AS(d_matrix_and_rates(m, 0.1, 128), ConfigError);
}
