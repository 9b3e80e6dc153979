#include "nelsonmc/field_modes.hpp"

#include "nelsonmc/quadrature.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace nelsonmc {

namespace {

std::uint64_t next_grid_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}

// icosahedron vertices (unit norm), antipodally closed
void icosahedral_directions(std::vector<std::array<double, 3>>& dirs) {
    const double phi = 0.5 * (1.0 + std::sqrt(5.0));
    const double nrm = std::sqrt(1.0 + phi * phi);
    const double a = 1.0 / nrm, b = phi / nrm;
    const double v[12][3] = {{0, a, b},  {0, -a, b},  {0, a, -b},  {0, -a, -b},
                             {a, b, 0},  {-a, b, 0},  {a, -b, 0},  {-a, -b, 0},
                             {b, 0, a},  {b, 0, -a},  {-b, 0, a},  {-b, 0, -a}};
    for (const auto& d : v) dirs.push_back({d[0], d[1], d[2]});
}

} // namespace

ModeGrid make_mode_grid(const ModelSpec& m, int n_radial_panels,
                        AngularDesign design, int n_theta, int n_phi) {
    ModeGrid grid;
    grid.dim = m.dim;
    grid.grid_id = next_grid_id();

    const FormFactor& ff = m.form_factor;
    const double lo = ff.kappa_ir;
    const double hi = ff.support_max(1e-12);
    if (!(hi > lo)) return grid;

    const GaussRule& gl = gauss_legendre(12);
    const bool log_spaced = lo > 0.0 && hi / lo > 10.0;
    std::vector<double> u_nodes, u_weights;
    for (int p = 0; p < n_radial_panels; ++p) {
        double a, b;
        if (log_spaced) {
            const double la = std::log(lo), lb = std::log(hi);
            a = std::exp(la + (lb - la) * p / n_radial_panels);
            b = std::exp(la + (lb - la) * (p + 1) / n_radial_panels);
        } else {
            a = lo + (hi - lo) * p / n_radial_panels;
            b = lo + (hi - lo) * (p + 1) / n_radial_panels;
        }
        for (std::size_t i = 0; i < gl.x.size(); ++i) {
            u_nodes.push_back(0.5 * (a + b) + 0.5 * (b - a) * gl.x[i]);
            u_weights.push_back(0.5 * (b - a) * gl.w[i]);
        }
    }

    if (m.dim == 1) {
        for (std::size_t i = 0; i < u_nodes.size(); ++i) {
            for (int sign : {-1, 1}) {
                grid.kx.push_back(sign * u_nodes[i]);
                grid.ky.push_back(0.0);
                grid.kz.push_back(0.0);
                grid.weight.push_back(u_weights[i]);
                grid.om.push_back(omega_radial(m, u_nodes[i]));
                grid.rho.push_back(rho_hat_radial(m, u_nodes[i]));
            }
        }
        return grid;
    }

    // angular design on S^2 with weights summing to 4 pi
    std::vector<std::array<double, 3>> dirs;
    std::vector<double> ang_w;
    if (design == AngularDesign::Icosahedral) {
        icosahedral_directions(dirs);
        ang_w.assign(dirs.size(), 4.0 * M_PI / dirs.size());
    } else {
        if (n_phi % 2 != 0) ++n_phi; // keep the design closed under k -> -k
        const GaussRule& gt = gauss_legendre(n_theta);
        for (int it = 0; it < n_theta; ++it) {
            const double mu = gt.x[it]; // cos(theta)
            const double st = std::sqrt(std::max(0.0, 1.0 - mu * mu));
            for (int ip = 0; ip < n_phi; ++ip) {
                const double phi = 2.0 * M_PI * ip / n_phi;
                dirs.push_back({st * std::cos(phi), st * std::sin(phi), mu});
                ang_w.push_back(gt.w[it] * 2.0 * M_PI / n_phi);
            }
        }
    }

    for (std::size_t i = 0; i < u_nodes.size(); ++i) {
        const double u = u_nodes[i];
        const double measure = u_weights[i] * u * u;
        const double om = omega_radial(m, u);
        const double rho = rho_hat_radial(m, u);
        for (std::size_t a = 0; a < dirs.size(); ++a) {
            grid.kx.push_back(u * dirs[a][0]);
            grid.ky.push_back(u * dirs[a][1]);
            grid.kz.push_back(u * dirs[a][2]);
            grid.weight.push_back(measure * ang_w[a]);
            grid.om.push_back(om);
            grid.rho.push_back(rho);
        }
    }
    return grid;
}

std::pair<ModeVector, ModeVector> compute_fpm(const ParticlePath& path,
                                              const ModelSpec& m,
                                              const ModeGrid& grid,
                                              double bulk_half_width) {
    if (path.n_beads % 2 == 0)
        throw std::invalid_argument("compute_fpm: t=0 is not a grid node");
    if (grid.dim != path.dim)
        throw std::invalid_argument("compute_fpm: grid/path dimension mismatch");
    (void)m;
    const int center = path.center_index();
    int n_half = static_cast<int>(std::lround(bulk_half_width / path.dt));
    n_half = std::min(n_half, center);

    ModeVector fminus, fplus;
    fminus.grid_id = fplus.grid_id = grid.grid_id;
    fminus.amp.assign(grid.size(), {0.0, 0.0});
    fplus.amp.assign(grid.size(), {0.0, 0.0});

    for (std::size_t n = 0; n < grid.size(); ++n) {
        if (grid.rho[n] == 0.0) continue;
        const double om = grid.om[n];
        std::complex<double> accp{0.0, 0.0}, accm{0.0, 0.0};
        for (int j = 0; j <= n_half; ++j) {
            const double decay = std::exp(-om * j * path.dt);
            if (decay < 1e-18) break;
            const double cj = (j == 0 || j == n_half) ? 0.5 : 1.0;
            const double* qp = path.bead(center + j);
            const double* qm = path.bead(center - j);
            double phase_p = grid.kx[n] * qp[0];
            double phase_m = grid.kx[n] * qm[0];
            if (path.dim == 3) {
                phase_p += grid.ky[n] * qp[1] + grid.kz[n] * qp[2];
                phase_m += grid.ky[n] * qm[1] + grid.kz[n] * qm[2];
            }
            const double w = cj * decay;
            accp += w * std::complex<double>(std::cos(phase_p), std::sin(phase_p));
            accm += w * std::complex<double>(std::cos(phase_m), std::sin(phase_m));
        }
        fplus.amp[n] = -grid.rho[n] * path.dt * accp;
        fminus.amp[n] = -grid.rho[n] * path.dt * accm;
    }
    return {std::move(fminus), std::move(fplus)};
}

std::complex<double> k_inner(const ModeVector& f, const ModeVector& g,
                             const ModeGrid& grid) {
    if (f.grid_id != grid.grid_id || g.grid_id != grid.grid_id)
        throw std::invalid_argument("k_inner: mode vectors live on a different grid");
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t n = 0; n < grid.size(); ++n)
        acc += grid.weight[n] * f.amp[n] * std::conj(g.amp[n]) / (2.0 * grid.om[n]);
    return acc;
}

std::complex<double> wick_pair(const ModeVector& f, const ModeVector& g,
                               const ModeGrid& grid) {
    return std::exp(k_inner(f, g, grid));
}

GammaPair gamma_pair(const ModeVector& f,
                     const std::function<double(double, double, double)>& multiplier,
                     const ModeVector& g, const ModeGrid& grid) {
    ModeVector ag;
    ag.grid_id = g.grid_id;
    ag.amp.resize(g.amp.size());
    for (std::size_t n = 0; n < g.amp.size(); ++n)
        ag.amp[n] = multiplier(grid.kx[n], grid.ky[n], grid.kz[n]) * g.amp[n];
    const std::complex<double> fag = k_inner(f, ag, grid);
    const std::complex<double> fg = k_inner(f, g, grid);
    return {std::exp(fag), fag * std::exp(fg)};
}

FieldProbeMoments conditional_field_moments(const ParticlePath& path,
                                            const ModelSpec& m,
                                            const std::vector<FieldProbe>& probes,
                                            double bulk_half_width, double tol) {
    const int np = static_cast<int>(probes.size());
    FieldProbeMoments out;
    out.mean = Eigen::VectorXd::Zero(np);
    out.cov = Eigen::MatrixXd::Zero(np, np);

    const FormFactor& ff = m.form_factor;
    const double lo_k = ff.kappa_ir;
    const double hi_k = ff.support_max(1e-3 * tol);

    const int center = path.center_index();
    int n_half = static_cast<int>(std::lround(bulk_half_width / path.dt));
    n_half = std::min(n_half, center);

    for (int j = 0; j < np; ++j) {
        const double lo_m = std::max(lo_k, probes[j].support_lo);
        const double hi_m = std::min(hi_k, probes[j].support_hi);
        if (hi_m > lo_m && ff.amplitude != 0.0) {
            double acc = 0.0;
            for (int i = -n_half; i <= n_half; ++i) {
                const double ci = (std::abs(i) == n_half) ? 0.5 : 1.0;
                double qn = 0.0;
                const double* q = path.bead(center + i);
                for (int c = 0; c < path.dim; ++c) qn += q[c] * q[c];
                qn = std::sqrt(qn);
                const double gap = std::fabs(probes[j].t - i * path.dt);
                acc += ci * radial_quadrature(
                                [&](double u) {
                                    return probes[j].fhat(u) * rho_hat_radial(m, u) *
                                           angular_cos_average(m.dim, u * qn) *
                                           std::exp(-omega_radial(m, u) * gap) /
                                           (2.0 * omega_radial(m, u));
                                },
                                lo_m, hi_m, m.dim, tol);
            }
            out.mean(j) = -acc * path.dt;
        }
        for (int l = j; l < np; ++l) {
            const double gap = std::fabs(probes[j].t - probes[l].t);
            // field covariance carries the probe profiles only; integrate
            // over the intersection of their supports
            const double lo_c = std::max(probes[j].support_lo, probes[l].support_lo);
            const double hi_c = std::min(probes[j].support_hi, probes[l].support_hi);
            if (!(hi_c > lo_c)) continue;
            const double cov = radial_quadrature(
                [&](double u) {
                    return probes[j].fhat(u) * probes[l].fhat(u) *
                           std::exp(-omega_radial(m, u) * gap) /
                           (2.0 * omega_radial(m, u));
                },
                lo_c, hi_c, m.dim, tol);
            out.cov(j, l) = out.cov(l, j) = cov;
        }
    }
    return out;
}

FieldProbeMoments sample_conditional_field(const ParticlePath& path,
                                           const ModelSpec& m,
                                           const std::vector<FieldProbe>& probes,
                                           Rng& rng, int n_draws,
                                           double bulk_half_width, double tol) {
    const FieldProbeMoments analytic =
        conditional_field_moments(path, m, probes, bulk_half_width, tol);
    const int np = static_cast<int>(probes.size());

    Eigen::MatrixXd cov = analytic.cov;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    bool jitter = false;
    double eps = 1e-12 * std::max(1.0, cov.diagonal().maxCoeff());
    while (llt.info() != Eigen::Success && eps < 1e-3 * std::max(1.0, cov.diagonal().maxCoeff())) {
        jitter = true;
        cov = analytic.cov + eps * Eigen::MatrixXd::Identity(np, np);
        llt.compute(cov);
        eps *= 10.0;
    }
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("sample_conditional_field: covariance not positive semidefinite");
    const Eigen::MatrixXd L = llt.matrixL();

    FieldProbeMoments emp;
    emp.jitter_applied = jitter;
    emp.mean = Eigen::VectorXd::Zero(np);
    emp.cov = Eigen::MatrixXd::Zero(np, np);
    Eigen::VectorXd z(np), x(np);
    Eigen::MatrixXd sum_outer = Eigen::MatrixXd::Zero(np, np);
    for (int d = 0; d < n_draws; ++d) {
        for (int j = 0; j < np; ++j) z(j) = rng.normal();
        x = analytic.mean + L * z;
        emp.mean += x;
        sum_outer += x * x.transpose();
    }
    emp.mean /= n_draws;
    emp.cov = sum_outer / n_draws - emp.mean * emp.mean.transpose();
    return emp;
}

} // namespace nelsonmc
