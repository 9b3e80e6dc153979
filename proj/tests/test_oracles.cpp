#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nelsonmc/oracles.hpp"
#include "nelsonmc/pair_potential.hpp"
#include "test_helpers.hpp"

#include <cmath>

using namespace nelsonmc;
using namespace nelsonmc::testing;

TEST_CASE("analytic W at the reference probe (0, 1)") {
    const ModelSpec m = shell_massless_d3();
    const double expected =
        -M_PI * (std::exp(-0.5) * 1.5 - std::exp(-5.0) * 6.0); // -pi[e^{-k}(1+k) - e^{-K}(1+K)]
    CHECK(analytic_w(m, 0.0, 1.0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(analytic_w(m, 0.0, 1.0) == doctest::Approx(-2.73120108833964).epsilon(1e-10));
}

TEST_CASE("analytic W decays to zero at large tau") {
    const ModelSpec m = shell_massless_d3();
    CHECK(std::fabs(analytic_w(m, 0.0, 60.0)) < 1e-12);
    CHECK(std::fabs(analytic_w(m, 2.0, 60.0)) < 1e-12);
}

TEST_CASE("analytic W matches the quadrature route to 1e-10") {
    const ModelSpec m = shell_massless_d3(0.8);
    for (double r : {0.0, 0.3, 1.0, 2.0, 7.5}) {
        for (double tau : {0.0, 0.05, 0.7, 1.0, 3.0, 10.0}) {
            const double a = analytic_w(m, r, tau);
            const double q = w_exact(m, r, tau, 1e-13);
            CHECK(std::fabs(a - q) <= 1e-10 * std::max({std::fabs(a), std::fabs(q), 1e-6}));
        }
    }
}

TEST_CASE("analytic W rejects out-of-family models") {
    CHECK_THROWS_AS(analytic_w(shell_massive_d3(1.0), 0.0, 1.0), std::invalid_argument);
    ModelSpec g = shell_massless_d3();
    g.form_factor.profile = Profile::Gaussian;
    CHECK_THROWS_AS(analytic_w(g, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("OU covariance formula") {
    CHECK(ou_covariance(1.0, 0.0) == doctest::Approx(0.5));
    CHECK(ou_covariance(1.0, 1.0) == doctest::Approx(0.5 * std::exp(-1.0)).epsilon(1e-12));
    CHECK(ou_covariance(2.0, 0.5) == doctest::Approx(std::exp(-1.0) / 4.0).epsilon(1e-12));
}

TEST_CASE("AR(1) tau_int formula") {
    CHECK(ar1_tau_int(0.0) == doctest::Approx(0.0));
    CHECK(ar1_tau_int(0.5) == doctest::Approx(1.0));
    CHECK_THROWS(ar1_tau_int(1.0));
}

TEST_CASE("pinned predictions: Poisson with mean C_rho") {
    const ModelSpec m = shell_massless_d3(amplitude_for_c_rho(0.5));
    const auto preds = pinned_predictions(m, 3, {1.0}, 1e-10);
    REQUIRE(preds.size() >= 3);
    const auto& pn = preds[0];
    CHECK(pn.values[0] == doctest::Approx(std::exp(-0.5)).epsilon(1e-8));
    CHECK(pn.values[1] == doctest::Approx(0.5 * std::exp(-0.5)).epsilon(1e-8));
    CHECK(pn.values[1] == doctest::Approx(0.30327).epsilon(1e-4));
    CHECK(pn.values[2] == doctest::Approx(0.07582).epsilon(1e-3));
    const auto& mean_n = preds[1];
    CHECK(mean_n.values[0] == doctest::Approx(0.5).epsilon(1e-8));
    // n(k=1) for the unit-amplitude massless shell is 1/(2 omega^3) = 0.5
    const auto preds_unit = pinned_predictions(shell_massless_d3(), 1, {1.0}, 1e-10);
    CHECK(preds_unit[2].values[0] == doctest::Approx(0.5));
}

TEST_CASE("zero-coupling predictions") {
    const ModelSpec m = shell_massless_d3(0.0);
    const auto preds = zero_coupling_predictions(m, 1e-10);
    CHECK(preds[0].values[0] == doctest::Approx(1.0)); // p_0
    CHECK(preds[1].values[0] == doctest::Approx(0.0)); // <N>
    bool found_density = false;
    for (const auto& p : preds)
        if (p.observable == "particle_density") {
            found_density = true;
            CHECK(p.values[0] == doctest::Approx(0.5));  // per-axis variance at s=1
            CHECK(p.values[1] == doctest::Approx(1.0));  // delta
            CHECK(p.values[2] == doctest::Approx(2.0));  // power
        }
    CHECK(found_density);
}
