#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "bspde/fem.hpp"
#include "test_support.hpp"

using namespace bspde;
using Catch::Approx;

namespace {

Mesh nonuniform_mesh() {
    return Mesh(std::vector<double>{0.0, 0.1, 0.25, 0.45, 0.7, 0.85, 1.0});
}

double basis_quadrature(const FemSpace& space, int j, const std::function<double(double)>& weight,
                        int panels = 13) {
    // test-only oracle: integral of weight(x) * phi_j(x), adaptive Simpson
    // on a prime panel count so oscillatory weights cannot alias with the
    // dyadic subdivision points
    double total = 0.0;
    for (int e = 0; e < space.mesh().elements(); ++e) {
        const double a = space.mesh().nodes[e];
        const double b = space.mesh().nodes[e + 1];
        for (int s = 0; s < panels; ++s) {
            const double lo = a + (b - a) * s / panels;
            const double hi = a + (b - a) * (s + 1) / panels;
            total += testsupport::adaptive_simpson(
                [&](double x) { return weight(x) * space.eval_basis_in_element(j, e, x); }, lo, hi,
                1e-15);
        }
    }
    return total;
}

}  // namespace

TEST_CASE("space dimensions", "[fem]") {
    CHECK(FemSpace(Mesh::uniform(8), 3).dim() == 16);
    CHECK(FemSpace(Mesh::uniform(8), 2).dim() == 8);
    CHECK(FemSpace(Mesh::uniform(2), 2).dim() == 2);
    CHECK_THROWS(FemSpace(Mesh::uniform(1), 2));
    CHECK_THROWS(FemSpace(Mesh::uniform(4), 4));
}

TEST_CASE("essential boundary conditions", "[fem]") {
    for (int p : {2, 3}) {
        for (const Mesh& mesh : {Mesh::uniform(5), nonuniform_mesh()}) {
            FemSpace space(mesh, p);
            const int last = space.mesh().elements() - 1;
            for (int j = 0; j < space.dim(); ++j) {
                CHECK(space.eval_basis_in_element(j, 0, 0.0) == Approx(0.0).margin(1e-14));
                CHECK(space.eval_basis_in_element(j, last, 1.0) == Approx(0.0).margin(1e-14));
            }
        }
    }
}

TEST_CASE("C1 conformity at interior nodes", "[fem]") {
    for (int p : {2, 3}) {
        for (const Mesh& mesh : {Mesh::uniform(6), nonuniform_mesh()}) {
            FemSpace space(mesh, p);
            for (int e = 0; e + 1 < space.mesh().elements(); ++e) {
                const double x = space.mesh().nodes[e + 1];
                for (int j = 0; j < space.dim(); ++j)
                    for (int deriv : {0, 1}) {
                        const double left = space.eval_basis_in_element(j, e, x, deriv);
                        const double right = space.eval_basis_in_element(j, e + 1, x, deriv);
                        CHECK(left == Approx(right).margin(1e-12).epsilon(1e-12));
                    }
            }
        }
    }
}

TEST_CASE("Hermite matrices match closed forms", "[fem]") {
    // uniform two-element mesh; dofs [slope0, value1, slope1, slope2],
    // slope functions pre-scaled by h = 1/2
    FemSpace space(Mesh::uniform(2), 3);
    const auto mass = assemble_mass(space);
    const auto stiff = assemble_biharmonic(space);
    REQUIRE(mass.dim() == 4);

    CHECK(mass.at(0, 0) == Approx(1.0 / 3360).epsilon(1e-13));
    CHECK(mass.at(0, 1) == Approx(13.0 / 3360).epsilon(1e-13));
    CHECK(mass.at(0, 2) == Approx(-1.0 / 4480).epsilon(1e-13));
    CHECK(mass.at(1, 1) == Approx(13.0 / 35).epsilon(1e-13));
    CHECK(mass.at(1, 2) == Approx(0.0).margin(1e-16));
    CHECK(mass.at(1, 3) == Approx(-13.0 / 3360).epsilon(1e-13));
    CHECK(mass.at(2, 2) == Approx(1.0 / 1680).epsilon(1e-13));
    CHECK(mass.at(2, 3) == Approx(-1.0 / 4480).epsilon(1e-13));
    CHECK(mass.at(3, 3) == Approx(1.0 / 3360).epsilon(1e-13));

    CHECK(stiff.at(0, 0) == Approx(2.0).epsilon(1e-13));
    CHECK(stiff.at(0, 1) == Approx(-12.0).epsilon(1e-13));
    CHECK(stiff.at(0, 2) == Approx(1.0).epsilon(1e-13));
    CHECK(stiff.at(1, 1) == Approx(192.0).epsilon(1e-13));
    CHECK(stiff.at(1, 2) == Approx(0.0).margin(1e-12));
    CHECK(stiff.at(1, 3) == Approx(12.0).epsilon(1e-13));
    CHECK(stiff.at(2, 2) == Approx(4.0).epsilon(1e-13));
    CHECK(stiff.at(3, 3) == Approx(2.0).epsilon(1e-13));
}

TEST_CASE("assembly matches quadrature oracle", "[fem]") {
    for (int p : {2, 3}) {
        FemSpace space(nonuniform_mesh(), p);
        const auto mass = assemble_mass(space);
        // row sums equal the integral of phi_j against the sum of all
        // basis functions
        auto sum_all = [&](double x) {
            const int e = space.element_of(x);
            double s = 0.0;
            for (int j = 0; j < space.dim(); ++j) s += space.eval_basis_in_element(j, e, x);
            return s;
        };
        for (int j = 0; j < space.dim(); ++j) {
            double row = 0.0;
            for (int k = 0; k < space.dim(); ++k) row += mass.at(j, k);
            CHECK(row == Approx(basis_quadrature(space, j, sum_all)).margin(1e-12));
        }
    }
}

TEST_CASE("assembled matrices are positive definite", "[fem]") {
    for (int p : {2, 3}) {
        for (const Mesh& mesh : {Mesh::uniform(9), nonuniform_mesh()}) {
            FemSpace space(mesh, p);
            CHECK_NOTHROW(BandCholesky(assemble_mass(space)));
            CHECK_NOTHROW(BandCholesky(assemble_biharmonic(space)));
        }
    }
}

TEST_CASE("band Cholesky rejects indefinite matrices", "[fem]") {
    BandedSymMatrix bad(3, 1);
    bad.add(0, 0, 1.0);
    bad.add(1, 1, -2.0);
    bad.add(2, 2, 1.0);
    CHECK_THROWS_AS(BandCholesky(bad), std::runtime_error);
}

TEST_CASE("band Cholesky solves", "[fem]") {
    FemSpace space(Mesh::uniform(7), 3);
    const auto mass = assemble_mass(space);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    FemVector x(space.dim());
    for (auto& v : x) v = u(rng);
    const auto rhs = mass.multiply(x);
    const auto solved = BandCholesky(mass).solve(rhs);
    for (int i = 0; i < space.dim(); ++i) CHECK(solved[i] == Approx(x[i]).epsilon(1e-10).margin(1e-12));
}

TEST_CASE("sine load against quadrature", "[fem]") {
    for (int p : {2, 3}) {
        for (const Mesh& mesh : {Mesh::uniform(5), nonuniform_mesh()}) {
            FemSpace space(mesh, p);
            for (int k : {1, 2, 7, 40}) {
                const auto load = sine_load(space, k);
                for (int j = 0; j < space.dim(); ++j) {
                    const double oracle =
                        basis_quadrature(space, j, [&](double x) { return eval_basis(k, x); });
                    CHECK(load[j] == Approx(oracle).margin(1e-12));
                }
            }
        }
    }
}

TEST_CASE("sine load symmetries", "[fem]") {
    // mode 2 is odd about 1/2; the center value function on a symmetric
    // mesh is even, so the pairing vanishes
    FemSpace space(Mesh::uniform(2), 3);
    const auto load2 = sine_load(space, 2);
    CHECK(load2[1] == Approx(0.0).margin(1e-15));

    // reflection x -> 1-x on a uniform mesh: value dofs map to mirrored
    // value dofs, slopes to minus mirrored slopes; loads flip by (-1)^(k+1)
    const int n = 6;
    FemSpace sp(Mesh::uniform(n), 3);
    for (int k : {1, 2, 3, 8}) {
        const auto load = sine_load(sp, k);
        const double sign = (k % 2 == 1) ? 1.0 : -1.0;
        for (int j = 1; j <= n - 1; ++j) {
            const int value_j = 2 * j - 1;
            const int value_mirror = 2 * (n - j) - 1;
            CHECK(load[value_j] == Approx(sign * load[value_mirror]).margin(1e-14));
        }
        for (int j = 1; j <= n - 1; ++j) {
            const int slope_j = 2 * j;
            const int slope_mirror = 2 * (n - j);
            CHECK(load[slope_j] == Approx(-sign * load[slope_mirror]).margin(1e-14));
        }
    }
}

TEST_CASE("L2 projection recovers members and zero", "[fem]") {
    for (int p : {2, 3}) {
        FemSpace space(nonuniform_mesh(), p);
        std::mt19937_64 rng(19);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        FemVector c(space.dim());
        for (auto& v : c) v = u(rng);
        const auto recovered =
            l2_project(space, [&](double x) { return space.evaluate(c, x); }, 6);
        for (int j = 0; j < space.dim(); ++j)
            CHECK(recovered[j] == Approx(c[j]).epsilon(1e-11).margin(1e-12));

        const auto zero = l2_project(space, SpectralField::zeros(3));
        for (double v : zero) CHECK(v == 0.0);
    }
}

TEST_CASE("L2 projection error decreases under refinement", "[fem]") {
    const auto g = SpectralField::unit_mode(1);
    for (int p : {2, 3}) {
        double previous = 1e300;
        for (int n : {4, 8, 16, 32}) {
            FemSpace space(Mesh::uniform(n), p);
            const double err = fem_vs_spectral_error(space, l2_project(space, g), g);
            CHECK(err < previous);
            previous = err;
        }
    }
}

TEST_CASE("quartic solve reproduces the eigenfunction solution", "[fem]") {
    const auto f = SpectralField::unit_mode(1);
    const auto exact = apply_inverse_elliptic(f, 4);  // pi^-4 eps_1
    for (int p : {2, 3}) {
        std::vector<double> hs, errs;
        for (int n : {8, 16, 32, 64}) {
            FemSpace space(Mesh::uniform(n), p);
            const auto v = solve_Tbh(space, f);
            hs.push_back(1.0 / n);
            errs.push_back(fem_vs_spectral_error(space, v, exact));
        }
        const double slope = testsupport::loglog_slope(hs, errs);
        // the quartic-solve error bound guarantees at least order p for
        // smooth data; smooth single-mode data may converge faster
        CHECK(slope >= p - 0.2);
        CHECK(slope <= 4.5);

        // energy bound: discrete curvature never exceeds the exact one
        FemSpace space(Mesh::uniform(16), p);
        const auto v = solve_Tbh(space, f);
        const double energy = assemble_biharmonic(space).quadratic_form(v);
        CHECK(energy <= 1.0 / (kPi * kPi * kPi * kPi) + 1e-12);
    }
    // zero load gives the zero solution
    FemSpace space(Mesh::uniform(8), 3);
    for (double v : solve_Tbh(space, SpectralField::zeros(2))) CHECK(v == 0.0);
}

TEST_CASE("Galerkin orthogonality", "[fem]") {
    // for f = eps_k the residual of the discrete system ties the discrete
    // solution to the exact one through the bilinear form
    for (int p : {2, 3}) {
        FemSpace space(Mesh::uniform(12), p);
        const auto stiff = assemble_biharmonic(space);
        for (int k : {1, 3}) {
            const auto load = sine_load(space, k);
            const auto v = BandCholesky(stiff).solve(load);
            const auto bv = stiff.multiply(v);
            for (int j = 0; j < space.dim(); ++j)
                CHECK(bv[j] - load[j] == Approx(0.0).margin(1e-10));
        }
    }
}

TEST_CASE("error evaluation basics", "[fem]") {
    FemSpace space(Mesh::uniform(10), 3);
    const auto g = SpectralField({0.4, -0.2, 0.7});

    const FemVector zero(space.dim(), 0.0);
    CHECK(fem_vs_spectral_error(space, zero, g) == Approx(hdot_norm(g, 0.0)).epsilon(1e-12));

    // random small case against a dense quadrature oracle
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    FemVector c(space.dim());
    for (auto& v : c) v = u(rng);
    double oracle_sq = 0.0;
    for (int e = 0; e < space.mesh().elements(); ++e) {
        oracle_sq += testsupport::adaptive_simpson(
            [&](double x) {
                const double d = space.evaluate_in_element(c, e, x) - g.evaluate(x);
                return d * d;
            },
            space.mesh().nodes[e], space.mesh().nodes[e + 1], 1e-15);
    }
    CHECK(fem_vs_spectral_error(space, c, g) == Approx(std::sqrt(oracle_sq)).epsilon(1e-10));
}

TEST_CASE("energy projection converges at rate p-1 in H2", "[fem]") {
    // realizes the approximation property of the space via the
    // stiffness-orthogonal projection of a smooth function
    for (int p : {2, 3}) {
        std::vector<double> hs, errs;
        for (int n : {8, 16, 32, 64}) {
            FemSpace space(Mesh::uniform(n), p);
            // B-projection of eps_1 solves the quartic problem with load
            // lambda_1^4 eps_1
            auto f = SpectralField::unit_mode(1);
            std::vector<double> scaled(f.coeffs().begin(), f.coeffs().end());
            scaled[0] *= quartic_eigenvalue(1);
            const auto v = solve_Tbh(space, SpectralField(scaled));
            double err_sq = 0.0;
            for (int e = 0; e < space.mesh().elements(); ++e) {
                const double a = space.mesh().nodes[e];
                const double b = space.mesh().nodes[e + 1];
                const int panels = 4;
                for (int s = 0; s < panels; ++s)
                    err_sq += gauss8(
                        [&](double x) {
                            // exact curvature of eps_1 is -pi^2 eps_1
                            const double exact2 = -kPi * kPi * eval_basis(1, x);
                            const double diff = space.evaluate_in_element(v, e, x, 2) - exact2;
                            return diff * diff;
                        },
                        a + (b - a) * s / panels, a + (b - a) * (s + 1) / panels);
            }
            hs.push_back(1.0 / n);
            errs.push_back(std::sqrt(err_sq));
        }
        const double slope = testsupport::loglog_slope(hs, errs);
        CHECK(slope == Approx(p - 1.0).margin(0.2));
    }
}
