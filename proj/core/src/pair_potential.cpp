#include "nelsonmc/pair_potential.hpp"

#include "nelsonmc/quadrature.hpp"
#include "nelsonmc/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace nelsonmc {

double w_exact(const ModelSpec& m, double r, double tau, double tol) {
    const FormFactor& ff = m.form_factor;
    const double lo = ff.kappa_ir;
    const double hi = ff.support_max(1e-3 * tol);
    if (!(hi > lo) || ff.amplitude == 0.0) return 0.0;
    const double at = std::fabs(tau);
    return radial_quadrature(
        [&](double u) {
            const double rho = rho_hat_radial(m, u);
            const double w = omega_radial(m, u);
            return -0.5 * rho * rho / (2.0 * w) * angular_cos_average(m.dim, u * r) *
                   std::exp(-w * at);
        },
        lo, hi, m.dim, tol);
}

namespace {

struct RadialRule {
    std::vector<double> u;  // nodes
    std::vector<double> c;  // weights including measure and profile factors
    std::vector<double> om; // omega at nodes
};

// Fixed composite Gauss-Legendre rule over the profile support, refined until
// the tabulated kernel family is reproduced at a set of worst-case probes.
RadialRule make_shared_rule(const ModelSpec& m, double r_max, double tau_max, double tol) {
    const FormFactor& ff = m.form_factor;
    const double lo = ff.kappa_ir;
    const double hi = ff.support_max(1e-3 * tol);
    const GaussRule& gl = gauss_legendre(12);
    const double probes[][2] = {{0.0, 0.0},        {r_max, 0.0},
                                {0.0, tau_max},    {r_max, tau_max},
                                {0.37 * r_max, 0.0}, {r_max, 0.21 * tau_max}};

    auto eval_with = [&](const RadialRule& rule, double r, double tau) {
        double acc = 0.0;
        for (std::size_t i = 0; i < rule.u.size(); ++i)
            acc += rule.c[i] * angular_cos_average(m.dim, rule.u[i] * r) *
                   std::exp(-rule.om[i] * tau);
        return acc;
    };
    auto build = [&](int n_panels) {
        RadialRule rule;
        const bool log_spaced = lo > 0.0 && hi / lo > 10.0;
        for (int p = 0; p < n_panels; ++p) {
            double a, b;
            if (log_spaced) {
                const double la = std::log(lo), lb = std::log(hi);
                a = std::exp(la + (lb - la) * p / n_panels);
                b = std::exp(la + (lb - la) * (p + 1) / n_panels);
            } else {
                a = lo + (hi - lo) * p / n_panels;
                b = lo + (hi - lo) * (p + 1) / n_panels;
            }
            for (std::size_t i = 0; i < gl.x.size(); ++i) {
                const double u = 0.5 * (a + b) + 0.5 * (b - a) * gl.x[i];
                const double rho = rho_hat_radial(m, u);
                const double w = omega_radial(m, u);
                rule.u.push_back(u);
                rule.om.push_back(w);
                rule.c.push_back(-0.5 * rho * rho / (2.0 * w) *
                                 std::pow(u, m.dim - 1) * sphere_area(m.dim) *
                                 0.5 * (b - a) * gl.w[i]);
            }
        }
        return rule;
    };

    int n_panels = 8;
    RadialRule rule = build(n_panels);
    for (int it = 0; it < 12; ++it) {
        RadialRule finer = build(2 * n_panels);
        double worst = 0.0;
        for (const auto& p : probes) {
            const double a = eval_with(rule, p[0], p[1]);
            const double b = eval_with(finer, p[0], p[1]);
            const double scale = std::max({std::fabs(a), std::fabs(b), 1e-300});
            worst = std::max(worst, std::fabs(a - b) / scale);
        }
        if (worst <= 0.3 * tol) return finer;
        rule = std::move(finer);
        n_panels *= 2;
    }
    throw QuadratureError("build_w_table: shared radial rule failed to converge");
}

double envelope_scale(const ModelSpec& m, double tau, double tol) {
    return std::fabs(w_exact(m, 0.0, tau, tol));
}

} // namespace

WTable build_w_table(const ModelSpec& m, double r_max, double tau_max,
                     int n_r, int n_tau, double tol) {
    if (!(r_max > 0.0) || !(tau_max > 0.0) || n_r < 2 || n_tau < 2)
        throw std::invalid_argument("build_w_table: need positive extents and >=2 grid points per axis");

    WTable table;
    table.r_max = r_max;
    table.tau_max = tau_max;
    table.n_r = n_r;
    table.n_tau = n_tau;
    table.build_tol = tol;
    table.fingerprint = model_fingerprint(m);
    table.model = m;
    table.values.assign(static_cast<std::size_t>(n_r) * n_tau, 0.0);

    if (m.form_factor.amplitude != 0.0) {
        const RadialRule rule = make_shared_rule(m, r_max, tau_max, tol);
        const int n_u = static_cast<int>(rule.u.size());
        Eigen::MatrixXd ang(n_u, n_r);
        for (int j = 0; j < n_r; ++j) {
            const double r = r_max * j / (n_r - 1);
            for (int i = 0; i < n_u; ++i)
                ang(i, j) = rule.c[i] * angular_cos_average(m.dim, rule.u[i] * r);
        }
        Eigen::MatrixXd dec(n_u, n_tau);
        for (int l = 0; l < n_tau; ++l) {
            const double tau = tau_max * l / (n_tau - 1);
            for (int i = 0; i < n_u; ++i) dec(i, l) = std::exp(-rule.om[i] * tau);
        }
        Eigen::MatrixXd vals = ang.transpose() * dec; // n_r x n_tau
        for (int j = 0; j < n_r; ++j)
            for (int l = 0; l < n_tau; ++l)
                table.values[static_cast<std::size_t>(j) * n_tau + l] = vals(j, l);
    }

    table.w_negative_everywhere = true;
    for (double v : table.values)
        if (!(v < 0.0)) { table.w_negative_everywhere = false; break; }

    // Off-grid audit against the adaptive quadrature; the denominator falls
    // back to the r = 0 envelope near zero crossings of the oscillatory tail.
    if (m.form_factor.amplitude != 0.0) {
        Rng rng(0x77ab1eULL ^ std::hash<std::string>{}(table.fingerprint));
        double worst = 0.0;
        for (int p = 0; p < 100; ++p) {
            const double r = rng.uniform() * r_max;
            const double tau = rng.uniform() * tau_max;
            const double exact = w_exact(m, r, tau, tol);
            const double approx = w_interp(table, r, tau);
            const double scale = std::max({std::fabs(exact),
                                           1e-3 * envelope_scale(m, tau, tol), 1e-300});
            worst = std::max(worst, std::fabs(approx - exact) / scale);
        }
        if (worst > 10.0 * tol) {
            std::ostringstream msg;
            msg << "build_w_table: interpolation audit failed, worst relative error "
                << worst << " exceeds 10*tol = " << 10.0 * tol
                << " (grid too coarse for the requested tolerance)";
            throw std::runtime_error(msg.str());
        }
    }
    return table;
}

void auto_table_grid(const ModelSpec& m, double r_max, double tau_max, double tol,
                     int& n_r, int& n_tau) {
    const double k2 = m.form_factor.k_uv * m.form_factor.k_uv +
                      m.dispersion.mass * m.dispersion.mass;
    const double dtau = std::sqrt(16.0 * tol / std::max(k2, 1.0));
    const double dr = std::sqrt(16.0 * tol / std::max(k2, 1.0));
    n_tau = std::max(2, static_cast<int>(std::ceil(tau_max / dtau)) + 1);
    n_r = std::max(2, static_cast<int>(std::ceil(r_max / dr)) + 1);
    if (static_cast<double>(n_r) * n_tau > 6e7)
        throw std::invalid_argument("auto_table_grid: grid exceeds the memory budget; "
                                    "coarsen the tolerance or shrink the extents");
}

WTable build_w_table_auto(const ModelSpec& m, double r_max, double tau_max, double tol) {
    int n_r = 0, n_tau = 0;
    auto_table_grid(m, r_max, tau_max, tol, n_r, n_tau);
    return build_w_table(m, r_max, tau_max, n_r, n_tau, tol);
}

double w_interp(const WTable& table, double r, double tau) {
    const double at = std::fabs(tau);
    if (at > table.tau_max) return 0.0;
    if (r > table.r_max) {
        table.slow_path_events->fetch_add(1, std::memory_order_relaxed);
        return w_exact(table.model, r, at, table.build_tol);
    }
    const double fr = r / table.r_step();
    const double ft = at / table.tau_step();
    int ir = static_cast<int>(fr);
    int it = static_cast<int>(ft);
    if (ir >= table.n_r - 1) ir = table.n_r - 2;
    if (it >= table.n_tau - 1) it = table.n_tau - 2;
    const double xr = fr - ir;
    const double xt = ft - it;
    const double v00 = table.node(ir, it), v01 = table.node(ir, it + 1);
    const double v10 = table.node(ir + 1, it), v11 = table.node(ir + 1, it + 1);
    return (1.0 - xr) * ((1.0 - xt) * v00 + xt * v01) +
           xr * ((1.0 - xt) * v10 + xt * v11);
}

namespace {

// Composite-trapezoid weight inside a symmetric window of n_half steps on
// each side of the center node: 1/2 at both window edges, 1 inside.
inline double edge_weight(int offset_from_edge, int span) {
    return (offset_from_edge == 0 || offset_from_edge == span) ? 0.5 : 1.0;
}

} // namespace

double cross_half_line_energy(const ParticlePath& path, const WTable& table,
                              double bulk_half_width) {
    if (path.n_beads % 2 == 0)
        throw std::invalid_argument("cross_half_line_energy: t=0 is not a grid node");
    const int center = path.center_index();
    int n_half = static_cast<int>(std::lround(bulk_half_width / path.dt));
    n_half = std::min(n_half, center);
    if (n_half < 1)
        throw std::invalid_argument("cross_half_line_energy: window shorter than one step");

    const double dt2 = path.dt * path.dt;
    const int max_gap = static_cast<int>(std::floor(table.tau_max / path.dt));
    double acc = 0.0;
    // i runs over s = -n_half..0, j over t = 0..n_half (indices relative to center)
    for (int i = 0; i <= n_half; ++i) {
        const int bead_i = center - i;
        const double wi = edge_weight(i, n_half);
        const int j_max = std::min(n_half, max_gap - i);
        for (int j = 0; j <= j_max; ++j) {
            const int bead_j = center + j;
            const double wj = edge_weight(j, n_half);
            const double w = w_interp(table, path.bead_distance(bead_i, bead_j),
                                      (i + j) * path.dt);
            acc += wi * wj * w;
        }
    }
    return -2.0 * acc * dt2;
}

double cross_half_line_energy(const ParticlePath& path, const WTable& table) {
    return cross_half_line_energy(path, table, path.half_width);
}

double square_interaction(const ParticlePath& path, const WTable& table, double T) {
    const int center = path.center_index();
    int n_half = static_cast<int>(std::lround(T / path.dt));
    n_half = std::min(n_half, center);
    const int lo = center - n_half, hi = center + n_half;
    const int max_gap = static_cast<int>(std::floor(table.tau_max / path.dt));
    const double dt2 = path.dt * path.dt;

    auto grid_weight = [&](int bead) {
        return (bead == 0 || bead == path.n_beads - 1) ? 0.5 : 1.0;
    };
    double acc = 0.0;
    for (int i = lo; i <= hi; ++i) {
        const double wi = grid_weight(i);
        acc += wi * wi * w_interp(table, 0.0, 0.0); // diagonal pair
        const int j_hi = std::min(hi, i + max_gap);
        for (int j = i + 1; j <= j_hi; ++j)
            acc += 2.0 * wi * grid_weight(j) *
                   w_interp(table, path.bead_distance(i, j), (j - i) * path.dt);
    }
    return acc * dt2;
}

double window_interaction(const ParticlePath& path, const WTable& table,
                          double S, double T) {
    if (S > T) throw std::invalid_argument("window_interaction: need S <= T");
    const int center = path.center_index();
    int n_s = static_cast<int>(std::lround(S / path.dt));
    int n_t = static_cast<int>(std::lround(T / path.dt));
    n_t = std::min(n_t, center);
    n_s = std::min(n_s, n_t);
    const int max_gap = static_cast<int>(std::floor(table.tau_max / path.dt));
    const double dt2 = path.dt * path.dt;
    auto grid_weight = [&](int bead) {
        return (bead == 0 || bead == path.n_beads - 1) ? 0.5 : 1.0;
    };
    auto inner = [&](int bead) {
        const int off = std::abs(bead - center);
        return off <= n_s;
    };
    double acc = 0.0;
    const int lo = center - n_t, hi = center + n_t;
    for (int i = lo; i <= hi; ++i) {
        const double wi = grid_weight(i);
        if (!inner(i))
            acc += wi * wi * w_interp(table, 0.0, 0.0);
        const int j_hi = std::min(hi, i + max_gap);
        for (int j = i + 1; j <= j_hi; ++j) {
            if (inner(i) && inner(j)) continue;
            acc += 2.0 * wi * grid_weight(j) *
                   w_interp(table, path.bead_distance(i, j), (j - i) * path.dt);
        }
    }
    return acc * dt2;
}

double d_tail_bound(const ModelSpec& m, double tau, double tol) {
    const FormFactor& ff = m.form_factor;
    const double lo = ff.kappa_ir;
    const double hi = ff.support_max(1e-3 * tol);
    if (!(hi > lo) || ff.amplitude == 0.0) return 0.0;
    return radial_quadrature(
        [&](double u) {
            const double rho = rho_hat_radial(m, u);
            const double w = omega_radial(m, u);
            return rho * rho * (1.0 + w * tau) * std::exp(-w * tau) /
                   (2.0 * w * w * w);
        },
        lo, hi, m.dim, tol);
}

double appendix_tail_bound(const ModelSpec& m, double S, double tau, double tol) {
    const FormFactor& ff = m.form_factor;
    const double lo = ff.kappa_ir;
    const double hi = ff.support_max(1e-3 * tol);
    if (!(hi > lo) || ff.amplitude == 0.0) return 0.0;
    return 8.0 * S *
           radial_quadrature(
               [&](double u) {
                   const double rho = rho_hat_radial(m, u);
                   const double w = omega_radial(m, u);
                   return rho * rho * std::exp(-w * tau) / (2.0 * w * w);
               },
               lo, hi, m.dim, tol);
}

double choose_tau_max(const ModelSpec& m, double eps_tail, double tau_cap, double tol) {
    if (m.form_factor.amplitude == 0.0) return std::min(1.0, tau_cap);
    double lo = 0.25, hi = lo;
    while (hi < tau_cap && d_tail_bound(m, hi, tol) > eps_tail) {
        lo = hi;
        hi = std::min(hi * 1.5, tau_cap);
    }
    if (d_tail_bound(m, hi, tol) > eps_tail) return tau_cap;
    for (int it = 0; it < 40; ++it) {
        const double mid = 0.5 * (lo + hi);
        (d_tail_bound(m, mid, tol) > eps_tail ? lo : hi) = mid;
    }
    return hi;
}

double d_discretization_slack(const ModelSpec& m, const WTable& table,
                              double dt, double bulk_half_width, double tol) {
    const ModelConstants c = compute_constants(m, tol);
    if (!(c.c_rho > 0.0) || c.ir_divergent) return 0.0;
    ParticlePath pinned = make_path(bulk_half_width, dt, m.dim);
    const double d_disc = cross_half_line_energy(pinned, table, bulk_half_width);
    return std::max(0.0, d_disc / c.c_rho - 1.0) + 10.0 * table.build_tol;
}

void write_w_table_csv(const WTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_w_table_csv: cannot open " + path);
    char buf[128];
    out << "# nelsonmc wtable v1\n";
    out << "# model_fingerprint " << table.fingerprint << "\n";
    std::snprintf(buf, sizeof(buf), "# build_tol %.17g\n", table.build_tol);
    out << buf;
    std::snprintf(buf, sizeof(buf), "# r_max %.17g n_r %d\n", table.r_max, table.n_r);
    out << buf;
    std::snprintf(buf, sizeof(buf), "# tau_max %.17g n_tau %d\n", table.tau_max, table.n_tau);
    out << buf;
    out << "# w_negative_everywhere " << (table.w_negative_everywhere ? 1 : 0) << "\n";
    out << "r,tau,w\n";
    for (int j = 0; j < table.n_r; ++j) {
        const double r = table.r_max * j / (table.n_r - 1);
        for (int l = 0; l < table.n_tau; ++l) {
            const double tau = table.tau_max * l / (table.n_tau - 1);
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", r, tau, table.node(j, l));
            out << buf;
        }
    }
    if (!out) throw std::runtime_error("write_w_table_csv: write failed for " + path);
}

WTable read_w_table_csv(const std::string& path, const ModelSpec& m) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_w_table_csv: cannot open " + path);
    WTable table;
    table.model = m;
    std::string line;
    int neg_flag = 0;
    while (std::getline(in, line)) {
        if (line.rfind("# ", 0) == 0) {
            std::istringstream ls(line.substr(2));
            std::string key;
            ls >> key;
            if (key == "model_fingerprint") ls >> table.fingerprint;
            else if (key == "build_tol") ls >> table.build_tol;
            else if (key == "r_max") { std::string tag; ls >> table.r_max >> tag >> table.n_r; }
            else if (key == "tau_max") { std::string tag; ls >> table.tau_max >> tag >> table.n_tau; }
            else if (key == "w_negative_everywhere") ls >> neg_flag;
            continue;
        }
        if (line.rfind("r,tau,w", 0) == 0) break;
    }
    table.w_negative_everywhere = neg_flag != 0;
    if (table.fingerprint != model_fingerprint(m))
        throw std::runtime_error("read_w_table_csv: model fingerprint mismatch");
    if (table.n_r < 2 || table.n_tau < 2)
        throw std::runtime_error("read_w_table_csv: malformed header");
    table.values.reserve(static_cast<std::size_t>(table.n_r) * table.n_tau);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const char* s = line.c_str();
        char* end = nullptr;
        std::strtod(s, &end); // r, regenerated from the header on lookup
        if (*end != ',') throw std::runtime_error("read_w_table_csv: malformed row");
        std::strtod(end + 1, &end); // tau
        if (*end != ',') throw std::runtime_error("read_w_table_csv: malformed row");
        table.values.push_back(std::strtod(end + 1, &end));
    }
    if (table.values.size() != static_cast<std::size_t>(table.n_r) * table.n_tau)
        throw std::runtime_error("read_w_table_csv: row count does not match header grid");
    return table;
}

} // namespace nelsonmc
