#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lso/lso.hpp"
#include "lso/models.hpp"

using namespace lso;

namespace {

OpenSystemModel degenerate_two_level(double p, double gamma = 1.0, double beta = 1.3) {
    OpenSystemModel m;
    m.small = SmallSystem{2, {0.5, 0.5}};
    Matrix g(2, 2);
    g << 0.3, 0.45, 0.45, -0.2;
    ReservoirSpec rs;
    rs.beta = beta;
    rs.form_factor = FormFactor::power_cutoff(gamma, p, 1.0);
    m.couplings.push_back({g, rs});
    return m;
}

OpenSystemModel three_level(double a, double b, double c, double beta = 1.3,
                            double delta = 0.7) {
    OpenSystemModel m;
    m.small = SmallSystem{3, {0.0, delta, delta}};
    Matrix g(3, 3);
    g << 0, a, b, a, 0, c, b, c, 0;
    ReservoirSpec rs;
    rs.beta = beta;
    rs.form_factor = FormFactor::gaussian_damped(0.9, 0.5, 1.0, 2.5);
    m.couplings.push_back({g, rs});
    return m;
}

Matrix permute_to(const LevelShiftOperator& op,
                  const std::vector<std::pair<int, int>>& order) {
    std::vector<int> perm;
    for (auto p : order)
        for (int k = 0; k < op.sector.size(); ++k)
            if (op.sector.pairs[k] == p) perm.push_back(k);
    REQUIRE(perm.size() == order.size());
    Matrix M(order.size(), order.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        for (std::size_t j = 0; j < order.size(); ++j) M(i, j) = op.matrix(perm[i], perm[j]);
    return M;
}

const std::vector<std::pair<int, int>> onb3 = {{0, 0}, {1, 1}, {2, 2}, {1, 2}, {2, 1}};

} // namespace

TEST_CASE("degenerate two-level closed form") {
    Matrix cid = 0.7 * Matrix::Identity(2, 2);
    CHECK(closed_form_2level(cid, 1.3, 0.4).matrix.norm() < 1e-14);

    Matrix g(2, 2);
    g << 1, 0, 0, -1;
    auto op = closed_form_2level(g, 2.0, 0.5);
    Eigen::Vector4cd expect(0.0, Complex(0, 2), Complex(0, 2), 0.0);  // lexicographic pairs
    CHECK((op.matrix.diagonal() - expect).norm() < 1e-14);
    CHECK((op.matrix - Matrix(op.matrix.diagonal().asDiagonal())).norm() < 1e-14);

    // spectrum {0, 0, z, -conj z}
    std::mt19937_64 rng(5);
    for (int t = 0; t < 5; ++t) {
        Matrix G = random_hermitian(rng, 2, 1.0);
        const double xi = 0.8, eta = 0.3;
        auto sp = spectrum(closed_form_2level(G, xi, eta));
        Eigen::SelfAdjointEigenSolver<Matrix> es(G);
        const double a1 = es.eigenvalues()(0), a2 = es.eigenvalues()(1);
        const Complex z = (a1 - a2) * Complex(xi * (a1 + a2), eta * (a1 - a2));
        std::vector<Complex> want = {0.0, 0.0, z, -std::conj(z)};
        sort_spectrum(want);
        CHECK(matched_spectral_distance(sp, want) < 1e-12 * (1.0 + std::abs(z)));
    }

    // vanishing shift difference: z = 0 when the eigenvalues are +-1 and eta = 0
    auto flat = spectrum(closed_form_2level(g, 1.0, 0.0));
    for (auto z : flat) CHECK(std::abs(z) < 1e-14);
}

TEST_CASE("regular infrared two-level limit matches the closed form with eta = 0") {
    auto m = degenerate_two_level(0.5, 0.9);
    auto built = build_lso_limit(m, 0.0);
    auto xe = xi_eta(m.couplings[0].reservoir);
    CHECK(xe.eta == 0.0);
    auto closed = closed_form_2level(m.couplings[0].G, xe.xi, xe.eta);
    CHECK((built.matrix - closed.matrix).norm() < 1e-8 * (1.0 + closed.matrix.norm()));
}

TEST_CASE("critical infrared two-level limit carries the zero-frequency weight") {
    auto m = degenerate_two_level(-0.5);
    auto built = build_lso_limit(m, 0.0);
    auto xe = xi_eta(m.couplings[0].reservoir);
    CHECK(xe.eta > 0.0);
    auto closed = closed_form_2level(m.couplings[0].G, xe.xi, xe.eta);
    CHECK((built.matrix - closed.matrix).norm() < 1e-7 * (1.0 + closed.matrix.norm()));
    // the real part no longer vanishes for degenerate levels
    const Matrix re = 0.5 * (built.matrix + built.matrix.adjoint());
    CHECK(re.norm() > 1e-2 * built.matrix.norm());
}

TEST_CASE("three-level limit matches the closed 5x5 pattern") {
    const double a = 0.8, b = 0.5, c = 0.6, beta = 1.3, delta = 0.7;
    auto m = three_level(a, b, c, beta, delta);
    const auto& rs = m.couplings[0].reservoir;
    const double s = s_coupling(rs, delta).value;
    const double alpha = closed_form_alpha(rs, delta);
    auto closed = closed_form_3level(a, b, c, beta, delta, s, alpha);
    auto built = permute_to(build_lso_limit(m, 0.0), onb3);
    CHECK((built - closed.matrix).norm() < 1e-7 * (1.0 + built.norm()));

    // kernel contains the thermal vector and the printed companion
    Vector psi(5), chi(5);
    const double E = std::exp(0.5 * beta * delta);
    psi << E, 1, 1, 0, 0;
    // second kernel direction: the (a/b) weight applies to the populations only
    chi << (a / b) * E, (a / b) * (1.0 - (b / a) * (b / a)), 0, 1, 1;
    CHECK((closed.matrix * psi).norm() < 1e-10 * (1.0 + closed.matrix.norm()));
    CHECK((closed.matrix * chi).norm() < 1e-10 * (1.0 + closed.matrix.norm()));
    auto ker = kernel(closed, 1e-8);
    CHECK(ker.dim == 2);

    CHECK_THROWS_AS(closed_form_3level(a, b, c, beta, delta, 0.0, alpha), ConfigError);
    CHECK(closed_form_3level(0, 0, 0, beta, delta, s, alpha).matrix.norm() < 1e-14);
}

TEST_CASE("three-level spectrum agrees with the printed eigenvalue list") {
    const double a = 0.8, b = 0.5, beta = 1.3, delta = 0.7;
    auto m = three_level(a, b, 0.6, beta, delta);
    const auto& rs = m.couplings[0].reservoir;
    const double s = s_coupling(rs, delta).value;
    const double alpha = closed_form_alpha(rs, delta);
    auto closed = closed_form_3level(a, b, 0.6, beta, delta, s, alpha);
    auto sp = spectrum(closed);
    const double ab2 = a * a + b * b;
    const double coth = std::cosh(0.5 * beta * delta) / std::sinh(0.5 * beta * delta);
    const double stim = std::exp(beta * delta) / std::expm1(beta * delta);
    std::vector<Complex> want = {0.0, 0.0, Complex(0, s * ab2 * coth),
                                 ab2 * Complex(alpha, 0.5 * s * stim),
                                 ab2 * Complex(-alpha, 0.5 * s * stim)};
    sort_spectrum(want);
    const double scale = 0.0 + std::abs(want.back());
    CHECK(matched_spectral_distance(sp, want) < 1e-10 * (1.0 + scale));
}

TEST_CASE("b = 0 kernel is spanned by the thermal vector and the bare excited pair") {
    auto m = three_level(0.8, 0.0, 0.6);
    auto built = build_lso_limit(m, 0.0);
    Matrix M = permute_to(built, onb3);
    LevelShiftOperator reordered = built;
    reordered.matrix = M;
    reordered.sector.pairs = onb3;
    auto ker = kernel(reordered, 1e-8);
    CHECK(ker.dim == 2);
    Vector psi(5), psi0(5);
    const double E = std::exp(0.5 * 1.3 * 0.7);
    psi << E, 1, 1, 0, 0;
    psi0 << 0, 0, 1, 0, 0;
    CHECK((M * psi).norm() < 1e-8 * (1.0 + M.norm()) * psi.norm());
    CHECK((M * psi0).norm() < 1e-8 * (1.0 + M.norm()));
}

TEST_CASE("nondegenerate models have a simple kernel") {
    auto m = random_model(42, 4, SpectrumKind::Simple);
    auto lim = build_lso_limit(m, 0.0);
    CHECK(kernel(lim, 1e-8).dim == 1);
}

TEST_CASE("zero matrix spectrum and kernel") {
    auto m = three_level(0, 0, 0);
    auto lim = build_lso_limit(m, 0.0);
    for (auto z : spectrum(lim)) CHECK(std::abs(z) < 1e-14);
    CHECK(kernel(lim, 1e-8).dim == 5);
}

TEST_CASE("reflection symmetry and numerical range on a random model") {
    auto m = random_model(7, 4, SpectrumKind::Mixed);
    const auto sectors = bohr_spectrum(m.small);
    for (const auto& sec : sectors) {
        if (sec.bohr_frequency < 0.0) continue;
        for (double eps : {1e-1, 1e-2}) {
            auto sp = spectrum(build_lso_eps(m, sec.bohr_frequency, eps));
            auto sm = spectrum(build_lso_eps(m, -sec.bohr_frequency, eps));
            for (auto& z : sm) z = -std::conj(z);
            sort_spectrum(sm);
            CHECK(hausdorff(sp, sm) < 1e-10);
            for (auto z : sp) CHECK(z.imag() > -1e-12 * (1.0 + std::abs(z)));
        }
    }
}

TEST_CASE("limit is the small-eps asymptote of the regularized family") {
    auto m = three_level(0.8, 0.5, 0.6);
    auto lim = build_lso_limit(m, 0.0);
    std::vector<double> eps = {1e-1, 1e-2, 1e-3};
    std::vector<double> err;
    for (double e : eps)
        err.push_back((build_lso_eps(m, 0.0, e).matrix - lim.matrix).norm());
    CHECK(err[1] < err[0]);
    CHECK(err[2] < err[1]);
    // first-order rate: one decade in eps shrinks the error by roughly ten
    CHECK(err[0] / err[1] > 3.0);
    CHECK(err[0] / err[1] < 30.0);
}

TEST_CASE("subcritical infrared has no limit") {
    auto m = degenerate_two_level(-0.75);
    CHECK_THROWS_AS(build_lso_limit(m, 0.0), NonexistentLSO);
    CHECK_NOTHROW(build_lso_eps(m, 0.0, 1e-2));
}

TEST_CASE("only Bohr frequencies are accepted") {
    auto m = three_level(0.8, 0.5, 0.6);
    CHECK_THROWS_AS(build_lso_eps(m, 0.123, 1e-2), ConfigError);
    CHECK_THROWS_AS(build_lso_limit(m, -3.0), ConfigError);
}

TEST_CASE("kernel rank decisions report an ill-conditioned threshold gap") {
    LevelShiftOperator op;
    op.sector.bohr_frequency = 0.0;
    op.sector.pairs = {{0, 0}, {1, 1}, {2, 2}};
    op.matrix = Matrix::Zero(3, 3);
    op.matrix(0, 0) = 1.0;
    op.matrix(1, 1) = 3e-8;   // kept, but only a factor ~3 above the dropped one
    op.matrix(2, 2) = 9e-9;
    auto ker = kernel(op, 1e-8);
    CHECK(ker.dim == 1);
    CHECK(ker.gap_warning);
    op.matrix(1, 1) = 1e-3;   // comfortable gap
    auto ker2 = kernel(op, 1e-8);
    CHECK(ker2.dim == 1);
    CHECK(!ker2.gap_warning);
}

TEST_CASE("additivity over reservoirs") {
    auto m = three_level(0.8, 0.5, 0.6);
    // a second coupling with zero matrix changes nothing
    OpenSystemModel two = m;
    two.couplings.push_back({Matrix::Zero(3, 3), m.couplings[0].reservoir});
    CHECK((build_lso_limit(two, 0.0).matrix - build_lso_limit(m, 0.0).matrix).norm() <
          1e-12);
    // two identical reservoirs at G/sqrt(2) reproduce the single coupling
    OpenSystemModel split = m;
    split.couplings[0].G /= std::sqrt(2.0);
    split.couplings.push_back(split.couplings[0]);
    CHECK((build_lso_limit(split, 0.0).matrix - build_lso_limit(m, 0.0).matrix).norm() <
          1e-10 * (1.0 + build_lso_limit(m, 0.0).matrix.norm()));
    // explicit sum agrees with the joint build
    CHECK((multi_reservoir_lso(split, 0.0).matrix - build_lso_limit(split, 0.0).matrix)
              .norm() < 1e-12);
}

TEST_CASE("two temperatures: kernel of the summed operator is simple") {
    OpenSystemModel m;
    m.small = SmallSystem{3, {0.0, 0.6, 1.5}};
    Matrix g1(3, 3), g2(3, 3);
    g1 << 0, 0.5, 0.2, 0.5, 0, 0.4, 0.2, 0.4, 0;
    g2 << 0.1, 0.3, 0, 0.3, -0.1, 0.5, 0, 0.5, 0;
    ReservoirSpec r1, r2;
    r1.beta = 1.1;
    r1.form_factor = FormFactor::power_cutoff(0.7, 1.0, 2.0);
    r2.beta = 2.3;
    r2.form_factor = FormFactor::gaussian_damped(0.5, 0.5, 1.0, 3.0);
    m.couplings = {{g1, r1}, {g2, r2}};
    auto lim = multi_reservoir_lso(m, 0.0);
    // the equilibrium-form interaction loses its kernel off equilibrium;
    // the dimension is reported, not asserted against a closed form
    CHECK(kernel(lim, 1e-8).dim <= 1);
    // no common thermal vector: the equilibrium annihilation fails off equilibrium
    DoubledVector psi = gibbs_vector(m.small, 1.1);
    Vector restricted(lim.sector.size());
    for (int k = 0; k < lim.sector.size(); ++k) {
        auto [i, j] = lim.sector.pairs[k];
        restricted(k) = psi(i, j);
    }
    CHECK((lim.matrix * restricted).norm() > 1e-4 * lim.matrix.norm());
}

TEST_CASE("theorem battery on bundled shapes") {
    auto simple = random_model(11, 3, SpectrumKind::Simple);
    auto rep = verify_theorems(simple, {1e-1, 1e-2});
    CHECK(rep.all_pass());

    auto deg = three_level(0.8, 0.5, 0.6);
    auto rep2 = verify_theorems(deg, {1e-1, 1e-2});
    CHECK(rep2.all_pass());
    bool saw_c_check = false;
    for (const auto& c : rep2.checks)
        if (c.name == "zero_frequency_coupling_drops") {
            saw_c_check = true;
            CHECK(c.applicable);
            CHECK(c.pass);
        }
    CHECK(saw_c_check);
}

TEST_CASE("delta part is i times a positive semidefinite Hermitian block") {
    auto m = three_level(0.8, 0.5, 0.6);
    auto lim = build_lso_limit(m, 0.0);
    const Matrix gamma = lim.delta_part / Complex(0, 1);
    CHECK((gamma - gamma.adjoint()).norm() < 1e-12 * (1.0 + gamma.norm()));
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gamma + gamma.adjoint()));
    CHECK(es.eigenvalues().minCoeff() > -1e-10 * (1.0 + gamma.norm()));
}
