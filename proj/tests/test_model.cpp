#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nelsonmc/model.hpp"
#include "nelsonmc/quadrature.hpp"
#include "nelsonmc/rng.hpp"
#include "test_helpers.hpp"

#include <cmath>

using namespace nelsonmc;
using namespace nelsonmc::testing;

TEST_CASE("omega: massless, rest mass, pythagorean") {
    ModelSpec m = shell_massless_d3();
    const double k1[3] = {1.0, 0.0, 0.0};
    CHECK(omega(m, k1) == doctest::Approx(1.0));

    m.dispersion.mass = 1.0;
    const double k0[3] = {0.0, 0.0, 0.0};
    CHECK(omega(m, k0) == doctest::Approx(1.0));
    const double k34[3] = {3.0, 4.0, 0.0};
    CHECK(omega(m, k34) == doctest::Approx(std::sqrt(26.0)));
}

TEST_CASE("rho_hat shell and gaussian profiles") {
    ModelSpec m = shell_massless_d3();
    CHECK(rho_hat_radial(m, 1.0) == doctest::Approx(1.0));
    CHECK(rho_hat_radial(m, 0.4) == doctest::Approx(0.0));
    CHECK(rho_hat_radial(m, 6.0) == doctest::Approx(0.0));

    ModelSpec g;
    g.dim = 3;
    g.form_factor.profile = Profile::Gaussian;
    g.form_factor.amplitude = 2.0;
    g.form_factor.gauss_scale = 1.0;
    g.form_factor.kappa_ir = 0.0;
    g.form_factor.k_uv = 1e9;
    CHECK(rho_hat_radial(g, 1e-12) == doctest::Approx(2.0));
}

TEST_CASE("evenness of omega and rho_hat in k") {
    ModelSpec m = shell_massive_d3(1.3, 0.7);
    Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
        double k[3], mk[3];
        for (int c = 0; c < 3; ++c) {
            k[c] = 6.0 * (rng.uniform() - 0.5);
            mk[c] = -k[c];
        }
        CHECK(omega(m, k) == doctest::Approx(omega(m, mk)));
        CHECK(rho_hat(m, k) == doctest::Approx(rho_hat(m, mk)));
    }
}

TEST_CASE("radial quadrature: ball volume, C_rho integrand, free-fluctuation integrand") {
    // unit ball volume
    CHECK(radial_quadrature([](double) { return 1.0; }, 0.0, 1.0, 3, 1e-10) ==
          doctest::Approx(4.0 * M_PI / 3.0).epsilon(1e-9));
    // 1/(2r^3) over [0.5, 5]: closed form 2 pi ln 10
    CHECK(radial_quadrature([](double r) { return 0.5 / (r * r * r); }, 0.5, 5.0, 3, 1e-12) ==
          doctest::Approx(2.0 * M_PI * std::log(10.0)).epsilon(1e-10));
    // 1/(2r) over [0.5, 5]: closed form pi (K^2 - kappa^2)
    CHECK(radial_quadrature([](double r) { return 0.5 / r; }, 0.5, 5.0, 3, 1e-12) ==
          doctest::Approx(M_PI * (25.0 - 0.25)).epsilon(1e-10));
    // d=1 counts both signs
    CHECK(radial_quadrature([](double) { return 1.0; }, 0.0, 2.0, 1, 1e-12) ==
          doctest::Approx(4.0));
}

TEST_CASE("compute_constants against closed-form antiderivatives") {
    const ModelSpec m = shell_massless_d3();
    const ModelConstants c = compute_constants(m, 1e-10);
    const double K = 5.0, kap = 0.5;
    CHECK(c.c_rho == doctest::Approx(2.0 * M_PI * std::log(K / kap)).epsilon(1e-8));
    CHECK(c.v_eff == doctest::Approx(2.0 * M_PI * (K - kap)).epsilon(1e-8));
    CHECK(c.c1 == doctest::Approx(2.0 * M_PI * (K * K - kap * kap)).epsilon(1e-8));
    CHECK(c.c2 == doctest::Approx(4.0 * M_PI * (K - kap)).epsilon(1e-8));
    CHECK(c.coupling_strength == doctest::Approx(2.0 * M_PI * (K * K - kap * kap)).epsilon(1e-8));
    const auto prim = [](double r) { return r * r / 2.0 - 2.0 * r + 4.0 * std::log(r + 2.0); };
    CHECK(c.existence_integral ==
          doctest::Approx(4.0 * M_PI * (prim(K) - prim(kap))).epsilon(1e-8));
    CHECK_FALSE(c.ir_divergent);
}

TEST_CASE("IR divergence flagged for kappa=0 massless") {
    ModelSpec m = shell_massless_d3();
    m.form_factor.kappa_ir = 0.0;
    const ModelConstants c = compute_constants(m, 1e-8);
    CHECK(c.ir_divergent);
    CHECK(std::isinf(c.c_rho));
    // the other constants stay finite in d=3
    CHECK(std::isfinite(c.v_eff));
    CHECK(std::isfinite(c.coupling_strength));
}

TEST_CASE("quadrature convergence: halving tol changes constants within the coarser tol") {
    const ModelSpec m = shell_massive_d3(0.8, 1.0);
    for (double tol : {1e-6, 1e-8}) {
        const ModelConstants coarse = compute_constants(m, tol);
        const ModelConstants fine = compute_constants(m, tol / 2.0);
        CHECK(std::fabs(coarse.c_rho - fine.c_rho) <= tol * std::fabs(fine.c_rho) + 1e-14);
        CHECK(std::fabs(coarse.v_eff - fine.v_eff) <= tol * std::fabs(fine.v_eff) + 1e-14);
        CHECK(std::fabs(coarse.existence_integral - fine.existence_integral) <=
              tol * std::fabs(fine.existence_integral) + 1e-14);
    }
}

TEST_CASE("c_rho monotone in the cutoffs on a 5x5 grid") {
    double prev_row = -1.0;
    for (int i = 0; i < 5; ++i) {
        const double kap = 0.2 + 0.15 * i;
        double prev = -1.0;
        for (int j = 0; j < 5; ++j) {
            const double K = 2.0 + 1.5 * j;
            ModelSpec m = shell_massless_d3();
            m.form_factor.kappa_ir = kap;
            m.form_factor.k_uv = K;
            const double c = compute_constants(m, 1e-9).c_rho;
            if (prev >= 0.0) CHECK(c > prev); // increasing in K_uv
            prev = c;
        }
        if (prev_row >= 0.0) CHECK(prev < prev_row); // decreasing in kappa_ir (same K)
        prev_row = prev;
    }
}

TEST_CASE("check_conditions: (ii) holds iff the IR cutoff or mass regularizes") {
    ModelSpec m = shell_massless_d3();
    CHECK(check_conditions(m).cond_ii);
    m.form_factor.kappa_ir = 0.0;
    CHECK_FALSE(check_conditions(m).cond_ii);
    m.dispersion.mass = 0.3;
    CHECK(check_conditions(m).cond_ii);
}

TEST_CASE("check_conditions: harmonic trap makes (iii) vacuous") {
    const ModelSpec m = shell_massless_d3();
    const ConditionReport rep = check_conditions(m);
    CHECK(rep.sigma_infinite);
    CHECK(rep.cond_iii);
    CHECK(rep.cond_iii_integral > 0.0);
}

TEST_CASE("free_fluctuation of the shell probe") {
    const ModelSpec m = shell_massless_d3();
    const double f = free_fluctuation(m, [&](double u) { return rho_hat_radial(m, u); }, 1e-10);
    CHECK(f == doctest::Approx(M_PI * (25.0 - 0.25)).epsilon(1e-9));
}

TEST_CASE("quadrature failure reported when the panel budget is exhausted") {
    // an integrand needing far more panels than the tiny budget allows
    CHECK_THROWS_AS(radial_quadrature([](double r) { return std::sin(500.0 * r); }, 0.0, 10.0,
                                      1, 1e-12, 2),
                    QuadratureError);
}
