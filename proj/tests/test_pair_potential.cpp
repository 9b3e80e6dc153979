#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nelsonmc/oracles.hpp"
#include "nelsonmc/pair_potential.hpp"
#include "nelsonmc/rng.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace nelsonmc;
using namespace nelsonmc::testing;

TEST_CASE("w_exact: reference value, zero coupling, sign and decay") {
    const ModelSpec m = shell_massless_d3();
    CHECK(w_exact(m, 0.0, 1.0, 1e-12) == doctest::Approx(-2.73120108833964).epsilon(1e-10));
    CHECK(w_exact(shell_massless_d3(0.0), 1.0, 1.0, 1e-12) == doctest::Approx(0.0));

    double prev = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double tau = 0.01 + 0.03 * i;
        const double w = w_exact(m, 0.0, tau, 1e-9);
        CHECK(w < 0.0);
        if (i > 0) CHECK(std::fabs(w) <= std::fabs(prev) * (1.0 + 1e-12));
        prev = w;
    }
}

TEST_CASE("w_exact symmetry in tau and r>0 closed form") {
    const ModelSpec m = shell_massless_d3();
    CHECK(w_exact(m, 1.3, 0.8, 1e-11) == doctest::Approx(w_exact(m, 1.3, -0.8, 1e-11)));
    // -(pi/r) Im int_kappa^K e^{(ir-tau)u} du at r=2, tau=1
    CHECK(w_exact(m, 2.0, 1.0, 1e-12) ==
          doctest::Approx(analytic_w(m, 2.0, 1.0)).epsilon(1e-10));
    CHECK(w_exact(m, 2.0, 1.0, 1e-12) == doctest::Approx(-0.37095002550).epsilon(1e-8));
}

TEST_CASE("build_w_table: zero coupling gives the all-zero table") {
    const ModelSpec m = shell_massless_d3(0.0);
    const WTable t = build_w_table(m, 2.0, 2.0, 8, 8, 1e-6);
    for (double v : t.values) CHECK(v == 0.0);
    CHECK_FALSE(t.w_negative_everywhere); // zeros are not strictly negative
}

TEST_CASE("build_w_table: nodes match w_exact, off-grid within 10x tol") {
    const ModelSpec m = shell_massless_d3();
    const double tol = 1e-5;
    const WTable t = build_w_table_auto(m, 4.0, 6.0, tol);
    // the sinc oscillation makes W change sign near r ~ 1.25 for these
    // cutoffs, so the wide-r table must NOT certify negativity...
    CHECK_FALSE(t.w_negative_everywhere);
    // ...while a table confined below the first sign change does
    const WTable t_narrow = build_w_table_auto(m, 0.8, 6.0, tol);
    CHECK(t_narrow.w_negative_everywhere);

    // on-grid probe (0, 1): node value equals the interpolation and w_exact
    const double w_grid = w_interp(t, 0.0, 1.0);
    CHECK(w_grid == doctest::Approx(w_exact(m, 0.0, 1.0, 1e-12)).epsilon(tol));

    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        const double r = rng.uniform() * 4.0;
        const double tau = rng.uniform() * 6.0;
        const double exact = w_exact(m, r, tau, 1e-11);
        const double approx = w_interp(t, r, tau);
        const double scale =
            std::max({std::fabs(exact), 1e-3 * std::fabs(w_exact(m, 0.0, tau, 1e-11)), 1e-300});
        CHECK(std::fabs(approx - exact) / scale <= 10.0 * tol);
    }
}

TEST_CASE("build_w_table rejects a grid too coarse for the tolerance") {
    const ModelSpec m = shell_massless_d3();
    CHECK_THROWS_AS(build_w_table(m, 4.0, 6.0, 6, 6, 1e-8), std::runtime_error);
}

TEST_CASE("w_interp: on-grid identity, tail truncation, bilinear mid-cell, slow path") {
    const ModelSpec m = shell_massless_d3();
    const WTable t = build_w_table_auto(m, 3.0, 4.0, 1e-3);

    const double dr = t.r_step(), dtau = t.tau_step();
    CHECK(w_interp(t, 10 * dr, 20 * dtau) == doctest::Approx(t.node(10, 20)));
    CHECK(w_interp(t, 1.0, t.tau_max + 1.0) == 0.0);
    // mid-cell value is the average of the four surrounding nodes
    const double mid = w_interp(t, 10.5 * dr, 20.5 * dtau);
    const double avg = 0.25 * (t.node(10, 20) + t.node(11, 20) + t.node(10, 21) + t.node(11, 21));
    CHECK(mid == doctest::Approx(avg).epsilon(1e-12));
    // r beyond the table falls back to the exact kernel and counts the event
    const long before = t.slow_path_events->load();
    const double far = w_interp(t, 5.0, 1.0);
    CHECK(t.slow_path_events->load() == before + 1);
    CHECK(far == doctest::Approx(w_exact(m, 5.0, 1.0, t.build_tol)).epsilon(1e-9));
}

TEST_CASE("cross_half_line_energy: zero coupling and the pinned C_rho limit") {
    const ModelSpec zero = shell_massless_d3(0.0);
    const WTable tz = build_w_table(zero, 2.0, 2.0, 4, 4, 1e-6);
    ParticlePath p = make_path(4.0, 0.05, 3);
    CHECK(cross_half_line_energy(p, tz) == doctest::Approx(0.0));

    // pinned path on a fine grid approaches C_rho (here scaled to 0.5);
    // the pinned path only reads r = 0, so the r extent can stay tiny
    const double g = amplitude_for_c_rho(0.5);
    const ModelSpec m = shell_massless_d3(g);
    const WTable t = build_w_table(m, 1e-3, 25.0, 2, 10000, 1e-6);
    ParticlePath pinned = make_path(25.0, 0.01, 3);
    const double d = cross_half_line_energy(pinned, t);
    CHECK(d == doctest::Approx(0.5).epsilon(2e-3));

    // amplitude scaling: D proportional to g^2
    const ModelSpec m2 = shell_massless_d3(g * 2.0);
    const WTable t2 = build_w_table(m2, 1e-3, 25.0, 2, 10000, 1e-6);
    CHECK(cross_half_line_energy(pinned, t2) == doctest::Approx(4.0 * d).epsilon(1e-9));
}

TEST_CASE("cross_half_line_energy: D >= 0 and below C_rho for random paths") {
    const ModelSpec m = shell_massless_d3();
    const double c_rho = c_rho_shell_massless();
    const WTable t = build_w_table_auto(m, 8.0, 20.0, 1e-4);
    Rng rng(11);
    ParticlePath p = make_path(10.0, 0.05, 3);
    const double eps = d_discretization_slack(m, t, 0.05, 10.0, 1e-9);
    for (int trial = 0; trial < 20; ++trial) {
        for (double& x : p.pos) x = 1.5 * rng.normal();
        const double d = cross_half_line_energy(p, t);
        CHECK(d >= 0.0);
        CHECK(d <= c_rho * (1.0 + eps));
    }
}

TEST_CASE("window_interaction: additivity and the pinned square value") {
    const double g = amplitude_for_c_rho(1.0);
    const ModelSpec m = shell_massless_d3(g);
    const WTable t = build_w_table_auto(m, 6.0, 16.0, 1e-5);
    ParticlePath p = make_path(8.0, 0.05, 3);
    Rng rng(3);
    for (double& x : p.pos) x = 0.7 * rng.normal();

    const double full = square_interaction(p, t, 8.0);
    const double inner = square_interaction(p, t, 3.0);
    const double ring = window_interaction(p, t, 3.0, 8.0);
    CHECK(full == doctest::Approx(inner + ring).epsilon(1e-12));
    CHECK(window_interaction(p, t, 8.0, 8.0) == doctest::Approx(0.0));

    // pinned square equals the 1-d (2T-|u|)-weighted integral of W(0,u)
    ParticlePath pinned = make_path(8.0, 0.05, 3);
    const double sq = square_interaction(pinned, t, 8.0);
    const double T = 8.0;
    double expected = 0.0;
    {
        // midpoint rule over u with the same dt resolves the oracle integral
        const int n = 32000;
        const double du = 2.0 * T / n;
        for (int i = 0; i < n; ++i) {
            const double u = -T + (i + 0.5) * du;
            expected += (2.0 * T - std::fabs(u)) * w_exact(m, 0.0, std::fabs(u), 1e-9) * du;
        }
    }
    CHECK(sq == doctest::Approx(expected).epsilon(5e-3));

    const ModelSpec zero = shell_massless_d3(0.0);
    const WTable tz = build_w_table(zero, 2.0, 2.0, 4, 4, 1e-6);
    CHECK(square_interaction(p, tz, 8.0) == doctest::Approx(0.0));
}

TEST_CASE("tail bounds and tau_max selection") {
    const ModelSpec m = shell_massive_d3(0.35, 1.0);
    const double c_rho = compute_constants(m, 1e-10).c_rho;
    const double eps = 1e-4 * c_rho;
    const double tau = choose_tau_max(m, eps, 40.0, 1e-9);
    CHECK(d_tail_bound(m, tau, 1e-9) <= eps * (1.0 + 1e-6));
    CHECK(d_tail_bound(m, tau * 0.8, 1e-9) > eps);
    // the generic finite-window bound decreases in the gap and grows with S
    CHECK(appendix_tail_bound(m, 2.0, 5.0, 1e-9) < appendix_tail_bound(m, 2.0, 3.0, 1e-9));
    CHECK(appendix_tail_bound(m, 4.0, 5.0, 1e-9) ==
          doctest::Approx(2.0 * appendix_tail_bound(m, 2.0, 5.0, 1e-9)).epsilon(1e-12));

    // truncation mass discarded by tau_max stays within the budget:
    // pinned D with the tau_max cutoff vs a much larger window
    const WTable t_cut = build_w_table_auto(m, 1e-3, tau, 1e-7);
    const WTable t_full = build_w_table_auto(m, 1e-3, 40.0, 1e-7);
    ParticlePath pinned = make_path(20.0, 0.01, 3);
    const double d_cut = cross_half_line_energy(pinned, t_cut);
    const double d_full = cross_half_line_energy(pinned, t_full);
    CHECK(std::fabs(d_full - d_cut) <= eps * (1.0 + 1e-2) + 4e-7);
}

TEST_CASE("CSV round trip is bit-exact") {
    const ModelSpec m = shell_massless_d3(0.77);
    const WTable t = build_w_table_auto(m, 2.5, 3.5, 2e-4);
    const std::string path = (std::filesystem::temp_directory_path() / "wtable_test.csv").string();
    write_w_table_csv(t, path);
    const WTable back = read_w_table_csv(path, m);
    REQUIRE(back.values.size() == t.values.size());
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        CHECK(back.values[i] == t.values[i]); // exact, not approximate
    }
    CHECK(back.n_r == t.n_r);
    CHECK(back.tau_max == t.tau_max);
    CHECK(back.w_negative_everywhere == t.w_negative_everywhere);
    std::filesystem::remove(path);

    // fingerprint mismatch rejected
    write_w_table_csv(t, path);
    CHECK_THROWS_AS(read_w_table_csv(path, shell_massless_d3(0.5)), std::runtime_error);
    std::filesystem::remove(path);
}
