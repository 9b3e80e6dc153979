#include "nelsonmc/observables.hpp"

#include "nelsonmc/quadrature.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <thread>

namespace nelsonmc {

namespace {

constexpr double kZClamp = 1e6;

double clamp_z(double slack, double se) {
    if (se > 0.0) return std::clamp(slack / se, -kZClamp, kZClamp);
    return slack >= 0.0 ? kZClamp : -kZClamp;
}

template <typename F>
void parallel_for(std::size_t n, int n_threads, F&& body) {
    if (n_threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const int nw = std::min<std::size_t>(n_threads, n);
    std::vector<std::thread> workers;
    for (int w = 0; w < nw; ++w)
        workers.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += nw) body(i);
        });
    for (auto& t : workers) t.join();
}

double q0_abs(const ParticlePath& p) {
    const double* q = p.bead(p.center_index());
    double s = 0.0;
    for (int c = 0; c < p.dim; ++c) s += q[c] * q[c];
    return std::sqrt(s);
}

// strided view of a chain-major series, preserving chain boundaries
void stride_series(const std::vector<double>& x, const std::vector<std::size_t>& offsets,
                   int stride, std::vector<double>& out, std::vector<std::size_t>& out_offsets) {
    out.clear();
    out_offsets.assign(1, 0);
    for (std::size_t c = 0; c + 1 < offsets.size(); ++c) {
        for (std::size_t i = offsets[c]; i < offsets[c + 1]; i += stride) out.push_back(x[i]);
        out_offsets.push_back(out.size());
    }
}

} // namespace

EstimationContext::EstimationContext(const SampleSet& samples_, const ModelSpec& model_,
                                     const WTable& table_, double quad_tol_, int n_threads_)
    : samples(samples_), model(model_), table(table_),
      quad_tol(quad_tol_), n_threads(n_threads_) {
    constants = compute_constants(model, quad_tol);
    const double target = samples.half_width - samples.t_margin;
    bulk_half_width = samples.dt * std::floor(target / samples.dt + 0.5);
    eps_disc = (model.form_factor.amplitude != 0.0 && !constants.ir_divergent)
                   ? d_discretization_slack(model, table, samples.dt, bulk_half_width, quad_tol)
                   : 0.0;
}

const std::vector<double>& EstimationContext::per_sample_d() const {
    if (d_values_.size() != samples.size()) {
        d_values_.assign(samples.size(), 0.0);
        parallel_for(samples.size(), n_threads, [&](std::size_t i) {
            d_values_[i] = cross_half_line_energy(samples.paths[i], table, bulk_half_width);
        });
    }
    return d_values_;
}

const std::vector<double>& EstimationContext::per_sample_phi_rho() const {
    if (phi_rho_values_.size() != samples.size()) {
        phi_rho_values_.assign(samples.size(), 0.0);
        const int n_half = static_cast<int>(std::lround(bulk_half_width / samples.dt));
        parallel_for(samples.size(), n_threads, [&](std::size_t i) {
            const ParticlePath& p = samples.paths[i];
            const int center = p.center_index();
            const int m = std::min(n_half, center);
            double acc = 0.0;
            for (int s = -m; s <= m; ++s) {
                const double cs = (std::abs(s) == m) ? 0.5 : 1.0;
                double qn = 0.0;
                const double* q = p.bead(center + s);
                for (int c = 0; c < p.dim; ++c) qn += q[c] * q[c];
                acc += cs * w_interp(table, std::sqrt(qn), std::fabs(s) * p.dt);
            }
            phi_rho_values_[i] = -2.0 * acc * p.dt;
        });
    }
    return phi_rho_values_;
}

MeanSE EstimationContext::series_stats(const std::vector<double>& x) const {
    return chain_mean_se(x, samples.chain_offsets);
}

ObservableReport estimate_pn(const EstimationContext& ctx, int n_max) {
    const std::vector<double>& d = ctx.per_sample_d();
    const double c_rho = ctx.constants.c_rho;
    ObservableReport rep;
    rep.name = "boson_number_distribution";
    rep.fingerprint = ctx.samples.config_fingerprint;
    rep.n_samples = static_cast<long>(d.size());
    rep.ess = ctx.samples.total_ess();

    const MeanSE d_stats = ctx.series_stats(d);
    const double d_max = d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());

    std::vector<double> weights(d.size());
    double norm_sum = 0.0;
    for (int n = 0; n <= n_max; ++n) {
        const double lg = std::lgamma(n + 1.0);
        double w_max = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double di = d[i];
            double w;
            if (di <= 0.0) w = (n == 0) ? std::exp(-di) : 0.0;
            else w = std::exp(n * std::log(di) - di - lg);
            weights[i] = w;
            w_max = std::max(w_max, w);
        }
        const MeanSE st = ctx.series_stats(weights);
        rep.labels.push_back("p_" + std::to_string(n));
        rep.estimate.push_back(st.mean);
        rep.se.push_back(st.se);
        norm_sum += st.mean;

        if (std::isfinite(c_rho)) {
            BoundCheck upper;
            upper.name = "superexp_upper_p_" + std::to_string(n);
            upper.direction = "upper";
            upper.bound = std::exp(n * std::log(std::max(c_rho, 1e-300)) + c_rho - lg);
            if (c_rho == 0.0) upper.bound = (n == 0) ? 1.0 : 0.0;
            upper.estimate = st.mean;
            upper.se = 0.0; // pathwise: every integrand obeys the bound
            const bool pathwise_ok = w_max <= upper.bound * (1.0 + 1e-12) + 1e-300;
            upper.z = pathwise_ok ? kZClamp : -kZClamp;
            upper.pass = pathwise_ok;
            rep.bounds.push_back(upper);

            if (ctx.table.w_negative_everywhere && d_stats.mean > 0.0) {
                BoundCheck lower;
                lower.name = "fockcomp_lower_p_" + std::to_string(n);
                lower.direction = "lower";
                lower.bound = std::exp(n * std::log(d_stats.mean) - c_rho - lg);
                const double bound_se = n * lower.bound / d_stats.mean * d_stats.se;
                lower.estimate = st.mean;
                lower.se = std::sqrt(st.se * st.se + bound_se * bound_se);
                lower.z = clamp_z(st.mean - lower.bound, lower.se);
                lower.pass = lower.z >= -3.0;
                rep.bounds.push_back(lower);
            }
        }
    }
    rep.extra.emplace_back("normalization_sum", norm_sum);
    rep.extra.emplace_back("truncation_remainder_bound",
                           std::isfinite(c_rho)
                               ? std::exp((n_max + 1) * std::log(std::max(c_rho, 1e-300)) -
                                          std::lgamma(n_max + 2.0))
                               : 0.0);
    rep.extra.emplace_back("d_mean", d_stats.mean);
    rep.extra.emplace_back("d_se", d_stats.se);
    rep.extra.emplace_back("d_max", d_max);
    rep.extra.emplace_back("c_rho", c_rho);
    rep.extra.emplace_back("eps_disc", ctx.eps_disc);
    return rep;
}

MomentumDensityResult estimate_momentum_density(const EstimationContext& ctx,
                                                const std::vector<MomentumBin>& bins,
                                                int pair_stride) {
    const SampleSet& samples = ctx.samples;
    const ModelSpec& m = ctx.model;
    const std::size_t n_samples = samples.size();
    const double dt = samples.dt;
    int n_half = static_cast<int>(std::lround(ctx.bulk_half_width / dt));

    // pick a stride so that the total pair work stays bounded
    if (pair_stride < 1) {
        pair_stride = 1;
        for (;; ++pair_stride) {
            double work = 0.0;
            for (const auto& b : bins) {
                const double om = omega_radial(m, b.k_center());
                const double jm = std::min<double>(n_half / pair_stride,
                                                   41.0 / (om * pair_stride * dt));
                work += jm * jm;
            }
            if (work * static_cast<double>(n_samples) <= 3e8 || pair_stride > 64) break;
        }
    }
    n_half -= n_half % pair_stride;

    MomentumDensityResult out;
    ObservableReport& rep = out.report;
    rep.name = "momentum_density";
    rep.fingerprint = samples.config_fingerprint;
    rep.n_samples = static_cast<long>(n_samples);
    rep.ess = samples.total_ess();
    out.per_sample_total.assign(n_samples, 0.0);

    // C-hat = E|q_0|^2 for the lower bound
    std::vector<double> q0sq(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const double r = q0_abs(samples.paths[i]);
        q0sq[i] = r * r;
    }
    const MeanSE c_hat = ctx.series_stats(q0sq);

    std::vector<std::vector<double>> ratios(bins.size(),
                                            std::vector<double>(n_samples, 0.0));
    out.bin_mass.assign(bins.size(), 0.0);

    for (std::size_t b = 0; b < bins.size(); ++b) {
        const double kc = bins[b].k_center();
        const double om = omega_radial(m, kc);
        const double rho = rho_hat_radial(m, kc);
        const double step = pair_stride * dt;
        const int j_cap = n_half / pair_stride;
        int j_max = std::min<int>(j_cap, static_cast<int>(41.0 / (om * step)));
        j_max = std::max(j_max, 1);

        // window free factor (path independent): [sum_j c_j e^{-om j step} step]^2
        double fsum = 0.0;
        for (int j = 0; j <= j_max; ++j) {
            const double cj = (j == 0 || j == j_cap) ? 0.5 : 1.0;
            fsum += cj * std::exp(-om * j * step);
        }
        const double f_win = fsum * step * fsum * step;

        std::vector<double> decay(j_max + 1), cw(j_max + 1);
        for (int j = 0; j <= j_max; ++j) {
            decay[j] = std::exp(-om * j * step);
            cw[j] = (j == 0 || j == j_cap) ? 0.5 : 1.0;
        }

        std::vector<double>& ratio_b = ratios[b];
        if (rho != 0.0) parallel_for(n_samples, ctx.n_threads, [&](std::size_t i) {
            const ParticlePath& p = samples.paths[i];
            const int center = p.center_index();
            double acc = 0.0;
            for (int js = 0; js <= j_max; ++js) {
                const int bi = center - js * pair_stride;
                const double ws = cw[js] * decay[js];
                double row = 0.0;
                for (int jt = 0; jt <= j_max; ++jt) {
                    const int bj = center + jt * pair_stride;
                    row += cw[jt] * decay[jt] *
                           angular_cos_average(p.dim, kc * p.bead_distance(bi, bj));
                }
                acc += ws * row;
            }
            ratio_b[i] = acc * step * step / f_win;
        });

        const double upper = rho * rho / (2.0 * om * om * om);
        const MeanSE st = ctx.series_stats(ratio_b);
        char label[64];
        std::snprintf(label, sizeof(label), "n(k=%.6g)", kc);
        rep.labels.push_back(label);
        rep.estimate.push_back(upper * st.mean);
        rep.se.push_back(upper * st.se);

        BoundCheck bc_up;
        bc_up.name = "pullthrough_upper_bin" + std::to_string(b);
        bc_up.direction = "upper";
        bc_up.bound = upper;
        bc_up.estimate = upper * st.mean;
        bc_up.se = upper * st.se;
        bc_up.z = clamp_z(bc_up.bound - bc_up.estimate, bc_up.se);
        bc_up.pass = bc_up.z >= -3.0;
        rep.bounds.push_back(bc_up);

        BoundCheck bc_lo;
        bc_lo.name = "quadratic_lower_bin" + std::to_string(b);
        bc_lo.direction = "lower";
        bc_lo.bound = (1.0 - c_hat.mean * kc * kc) * upper;
        const double bound_se = upper * kc * kc * c_hat.se;
        bc_lo.estimate = upper * st.mean;
        bc_lo.se = std::sqrt(upper * st.se * upper * st.se + bound_se * bound_se);
        bc_lo.z = clamp_z(bc_lo.estimate - bc_lo.bound, bc_lo.se);
        bc_lo.pass = bc_lo.z >= -3.0;
        rep.bounds.push_back(bc_lo);

        // analytic mass of the bin for the <N> quadrature route
        const double lo = std::max(bins[b].k_lo, m.form_factor.kappa_ir);
        const double hi = std::min(bins[b].k_hi, m.form_factor.support_max(1e-3 * ctx.quad_tol));
        if (hi > lo)
            out.bin_mass[b] = radial_quadrature(
                [&](double u) {
                    const double r = rho_hat_radial(m, u), w = omega_radial(m, u);
                    return r * r / (2.0 * w * w * w);
                },
                lo, hi, m.dim, ctx.quad_tol);
        for (std::size_t i = 0; i < n_samples; ++i)
            out.per_sample_total[i] += ratio_b[i] * out.bin_mass[b];

        char key[32];
        std::snprintf(key, sizeof(key), "raw_%zu", b);
        rep.extra.emplace_back(key, rho * rho / (2.0 * om) * st.mean * f_win);
        std::snprintf(key, sizeof(key), "k_lo_%zu", b);
        rep.extra.emplace_back(key, bins[b].k_lo);
        std::snprintf(key, sizeof(key), "k_hi_%zu", b);
        rep.extra.emplace_back(key, bins[b].k_hi);
    }
    rep.extra.emplace_back("c_hat", c_hat.mean);
    rep.extra.emplace_back("c_hat_se", c_hat.se);
    rep.extra.emplace_back("pair_stride", pair_stride);
    return out;
}

ObservableReport estimate_mean_boson_number(const EstimationContext& ctx, int n_max,
                                            const MomentumDensityResult* momentum) {
    const std::vector<double>& d = ctx.per_sample_d();
    ObservableReport rep;
    rep.name = "mean_boson_number";
    rep.fingerprint = ctx.samples.config_fingerprint;
    rep.n_samples = static_cast<long>(d.size());
    rep.ess = ctx.samples.total_ess();

    const MeanSE r1 = ctx.series_stats(d);

    std::vector<double> series(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        double s = 0.0;
        for (int n = 1; n <= n_max; ++n) {
            const double di = d[i];
            if (di <= 0.0) break;
            s += n * std::exp(n * std::log(di) - di - std::lgamma(n + 1.0));
        }
        series[i] = s;
    }
    const MeanSE r2 = ctx.series_stats(series);

    rep.labels = {"E[D]", "sum_n_pn"};
    rep.estimate = {r1.mean, r2.mean};
    rep.se = {r1.se, r2.se};

    MeanSE r3;
    if (momentum) {
        r3 = ctx.series_stats(momentum->per_sample_total);
        rep.labels.push_back("momentum_quadrature");
        rep.estimate.push_back(r3.mean);
        rep.se.push_back(r3.se);
    }

    auto pair_z = [](const MeanSE& a, const MeanSE& b) {
        const double se = std::sqrt(a.se * a.se + b.se * b.se);
        return se > 0.0 ? std::fabs(a.mean - b.mean) / se : 0.0;
    };
    rep.extra.emplace_back("z_ED_vs_sum", pair_z(r1, r2));
    if (momentum) {
        rep.extra.emplace_back("z_ED_vs_momentum", pair_z(r1, r3));
        rep.extra.emplace_back("z_sum_vs_momentum", pair_z(r2, r3));
    }

    if (std::isfinite(ctx.constants.c_rho)) {
        BoundCheck bc;
        bc.name = "mean_boson_upper_c_rho";
        bc.direction = "upper";
        bc.bound = ctx.constants.c_rho * (1.0 + ctx.eps_disc);
        bc.estimate = r1.mean;
        bc.se = r1.se;
        bc.z = clamp_z(bc.bound - bc.estimate, bc.se);
        bc.pass = bc.z >= -3.0;
        rep.bounds.push_back(bc);
    }
    return rep;
}

namespace {

double rho_probe(const ModelSpec& m, double u) { return rho_hat_radial(m, u); }

// Phi for the mode-route consistency check: int rho ghat <cos>(u |q0|) / omega^2 dk
double phi_mode_single(const ModelSpec& m, double q0, double tol) {
    const double lo = m.form_factor.kappa_ir;
    const double hi = m.form_factor.support_max(1e-3 * tol);
    if (!(hi > lo)) return 0.0;
    return radial_quadrature(
        [&](double u) {
            const double r = rho_hat_radial(m, u), w = omega_radial(m, u);
            return r * r * angular_cos_average(m.dim, u * q0) / (w * w);
        },
        lo, hi, m.dim, tol);
}

} // namespace

ObservableReport estimate_field_mean(const EstimationContext& ctx,
                                     const std::vector<double>& k_values) {
    const SampleSet& samples = ctx.samples;
    const ModelSpec& m = ctx.model;
    const std::size_t n = samples.size();
    ObservableReport rep;
    rep.name = "field_mean";
    rep.fingerprint = samples.config_fingerprint;
    rep.n_samples = static_cast<long>(n);
    rep.ess = samples.total_ess();

    std::vector<double> q0(n);
    for (std::size_t i = 0; i < n; ++i) q0[i] = q0_abs(samples.paths[i]);

    const double conv = std::pow(2.0 * M_PI, m.dim / 2.0);
    std::vector<double> series(n);
    for (double k : k_values) {
        for (std::size_t i = 0; i < n; ++i)
            series[i] = angular_cos_average(m.dim, k * q0[i]);
        const MeanSE st = ctx.series_stats(series);
        const double om = omega_radial(m, k);
        const double scale = -rho_hat_radial(m, k) / (conv * om * om);
        char label[64];
        std::snprintf(label, sizeof(label), "mode_k=%.6g", k);
        rep.labels.push_back(label);
        rep.estimate.push_back(scale * st.mean);
        rep.se.push_back(std::fabs(scale) * st.se);
    }

    // path-functional route, probe ghat = rho
    const std::vector<double>& phi = ctx.per_sample_phi_rho();
    const MeanSE functional = ctx.series_stats(phi);
    rep.labels.push_back("functional(rho)");
    rep.estimate.push_back(-functional.mean);
    rep.se.push_back(functional.se);

    // per-mode route integrated against the same probe, same samples
    std::vector<double> phi_mode(n);
    parallel_for(n, ctx.n_threads, [&](std::size_t i) {
        phi_mode[i] = phi_mode_single(m, q0[i], ctx.quad_tol);
    });
    const MeanSE mode_int = ctx.series_stats(phi_mode);
    rep.labels.push_back("mode_integrated(rho)");
    rep.estimate.push_back(-mode_int.mean);
    rep.se.push_back(mode_int.se);

    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = phi_mode[i] - phi[i];
    const MeanSE dstat = ctx.series_stats(diff);
    rep.extra.emplace_back("route_difference", dstat.mean);
    rep.extra.emplace_back("route_difference_se", dstat.se);
    rep.extra.emplace_back("z_mode_vs_functional", clamp_z(std::fabs(dstat.mean), dstat.se));
    return rep;
}

ObservableReport estimate_mgf(const EstimationContext& ctx,
                              const std::vector<double>& betas) {
    const std::vector<double>& phi = ctx.per_sample_phi_rho();
    const double free_fluct = free_fluctuation(
        ctx.model, [&](double u) { return rho_probe(ctx.model, u); }, ctx.quad_tol);

    ObservableReport rep;
    rep.name = "field_mgf";
    rep.fingerprint = ctx.samples.config_fingerprint;
    rep.n_samples = static_cast<long>(phi.size());
    rep.ess = ctx.samples.total_ess();

    std::vector<double> series(phi.size());
    for (double beta : betas) {
        char label[48];
        std::snprintf(label, sizeof(label), "M(beta=%.6g)", beta);
        rep.labels.push_back(label);
        if (beta == 0.0) {
            rep.estimate.push_back(1.0); // exp(0) for every sample
            rep.se.push_back(0.0);
            continue;
        }
        for (std::size_t i = 0; i < phi.size(); ++i)
            series[i] = std::exp(0.5 * beta * beta * free_fluct - beta * phi[i]);
        const MeanSE st = ctx.series_stats(series);
        rep.estimate.push_back(st.mean);
        rep.se.push_back(st.se);
    }
    rep.extra.emplace_back("free_fluct", free_fluct);
    return rep;
}

ObservableReport estimate_field_variance(const EstimationContext& ctx) {
    const std::vector<double>& phi = ctx.per_sample_phi_rho();
    const double free_fluct = free_fluctuation(
        ctx.model, [&](double u) { return rho_probe(ctx.model, u); }, ctx.quad_tol);

    const double phi_mean = mean(phi);
    std::vector<double> centered_sq(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i)
        centered_sq[i] = (phi[i] - phi_mean) * (phi[i] - phi_mean);
    const MeanSE var_phi = ctx.series_stats(centered_sq);

    ObservableReport rep;
    rep.name = "field_variance";
    rep.fingerprint = ctx.samples.config_fingerprint;
    rep.n_samples = static_cast<long>(phi.size());
    rep.ess = ctx.samples.total_ess();
    rep.labels = {"var_xi_rho"};
    rep.estimate = {free_fluct + var_phi.mean};
    rep.se = {var_phi.se};

    BoundCheck bc;
    bc.name = "fluctuation_lower_free_baseline";
    bc.direction = "lower";
    bc.bound = free_fluct;
    bc.estimate = rep.estimate[0];
    bc.se = var_phi.se;
    bc.z = clamp_z(bc.estimate - bc.bound, bc.se);
    bc.pass = bc.z >= -3.0;
    rep.bounds.push_back(bc);

    rep.extra.emplace_back("free_baseline", free_fluct);
    rep.extra.emplace_back("phi_mean", phi_mean);
    rep.extra.emplace_back("excess", var_phi.mean);
    return rep;
}

MgfDerivativeCheck mgf_derivative_check(const EstimationContext& ctx) {
    const std::vector<double>& phi = ctx.per_sample_phi_rho();
    const double free_fluct = free_fluctuation(
        ctx.model, [&](double u) { return rho_probe(ctx.model, u); }, ctx.quad_tol);

    MgfDerivativeCheck out;
    out.step = 1e-4 / std::sqrt(std::max(1.0, free_fluct));
    const double h = out.step;
    auto mgf_at = [&](double beta) {
        double s = 0.0;
        for (double p : phi) s += std::exp(0.5 * beta * beta * free_fluct - beta * p);
        return phi.empty() ? 1.0 : s / static_cast<double>(phi.size());
    };
    const double mp = mgf_at(h), mm = mgf_at(-h);
    out.fd_mean = (mp - mm) / (2.0 * h);
    const double second = (mp - 2.0 + mm) / (h * h);
    out.fd_var = second - out.fd_mean * out.fd_mean;

    const MeanSE phi_stats = ctx.series_stats(phi);
    out.mean = -phi_stats.mean;
    out.mean_se = phi_stats.se;

    const double phi_mean = mean(phi);
    std::vector<double> centered_sq(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i)
        centered_sq[i] = (phi[i] - phi_mean) * (phi[i] - phi_mean);
    const MeanSE var_phi = ctx.series_stats(centered_sq);
    out.var = free_fluct + var_phi.mean;
    out.var_se = var_phi.se;
    return out;
}

DensityHistogram estimate_particle_density(const EstimationContext& ctx, int n_bins,
                                           double r_hi) {
    const SampleSet& samples = ctx.samples;
    const std::size_t n = samples.size();
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = q0_abs(samples.paths[i]);
    if (r_hi <= 0.0) r_hi = *std::max_element(r.begin(), r.end()) * (1.0 + 1e-9) + 1e-12;

    DensityHistogram hist;
    hist.dim = samples.dim;
    hist.fingerprint = samples.config_fingerprint;
    hist.n_samples = static_cast<long>(n);
    hist.edges.resize(n_bins + 1);
    for (int b = 0; b <= n_bins; ++b) hist.edges[b] = r_hi * b / n_bins;
    hist.counts.assign(n_bins, 0);
    hist.chi.assign(n_bins, 0.0);
    hist.chi_se.assign(n_bins, 0.0);

    std::vector<int> bin_of(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        int b = static_cast<int>(r[i] / r_hi * n_bins);
        if (b >= 0 && b < n_bins) {
            bin_of[i] = b;
            ++hist.counts[b];
        }
    }
    std::vector<double> indicator(n);
    for (int b = 0; b < n_bins; ++b) {
        const double lo = hist.edges[b], hi = hist.edges[b + 1];
        const double vol = (samples.dim == 3)
                               ? 4.0 * M_PI / 3.0 * (hi * hi * hi - lo * lo * lo)
                               : 2.0 * (hi - lo);
        for (std::size_t i = 0; i < n; ++i)
            indicator[i] = (bin_of[i] == b) ? 1.0 / vol : 0.0;
        const MeanSE st = ctx.series_stats(indicator);
        hist.chi[b] = st.mean;
        hist.chi_se[b] = st.se;
    }
    return hist;
}

DecayFit fit_decay(const DensityHistogram& hist, long min_count, double tail_start_factor) {
    // tail window: beyond the density-weighted mean radius, enough counts
    double r_mean = 0.0;
    long total = 0;
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
        const double rc = 0.5 * (hist.edges[b] + hist.edges[b + 1]);
        r_mean += rc * hist.counts[b];
        total += hist.counts[b];
    }
    if (total == 0) throw std::runtime_error("fit_decay: empty histogram");
    r_mean /= static_cast<double>(total);

    std::vector<double> rs, ys, ws;
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
        const double rc = 0.5 * (hist.edges[b] + hist.edges[b + 1]);
        if (hist.counts[b] < min_count || rc < tail_start_factor * r_mean) continue;
        if (hist.chi[b] <= 0.0) continue;
        rs.push_back(rc);
        ys.push_back(std::log(hist.chi[b]));
        ws.push_back(static_cast<double>(hist.counts[b]));
    }
    if (rs.size() < 5)
        throw std::runtime_error("fit_decay: insufficient tail data (need >= 5 qualifying bins)");

    // weighted LS of y = a - delta r^p, linear in (a, delta) for fixed p
    auto sse_at = [&](double p, double* a_out, double* delta_out) {
        double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < rs.size(); ++i) {
            const double x = std::pow(rs[i], p);
            sw += ws[i];
            sx += ws[i] * x;
            sy += ws[i] * ys[i];
            sxx += ws[i] * x * x;
            sxy += ws[i] * x * ys[i];
        }
        const double det = sw * sxx - sx * sx;
        const double slope = (sw * sxy - sx * sy) / det; // = -delta
        const double a = (sy - slope * sx) / sw;
        double sse = 0.0;
        for (std::size_t i = 0; i < rs.size(); ++i) {
            const double resid = ys[i] - (a + slope * std::pow(rs[i], p));
            sse += ws[i] * resid * resid;
        }
        if (a_out) *a_out = a;
        if (delta_out) *delta_out = -slope;
        return sse;
    };

    double best_p = 1.0, best_sse = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 40; ++i) {
        const double p = 0.4 + (4.0 - 0.4) * i / 40.0;
        const double s = sse_at(p, nullptr, nullptr);
        if (s < best_sse) { best_sse = s; best_p = p; }
    }
    double lo = std::max(0.4, best_p - 0.2), hi = std::min(4.0, best_p + 0.2);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = sse_at(x1, nullptr, nullptr), f2 = sse_at(x2, nullptr, nullptr);
    for (int it = 0; it < 48; ++it) {
        if (f1 < f2) {
            hi = x2; x2 = x1; f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = sse_at(x1, nullptr, nullptr);
        } else {
            lo = x1; x1 = x2; f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = sse_at(x2, nullptr, nullptr);
        }
    }
    DecayFit fit;
    fit.p = 0.5 * (lo + hi);
    double a = 0.0;
    const double sse = sse_at(fit.p, &a, &fit.delta);
    fit.amplitude = std::exp(a);
    double sw = 0.0;
    for (double w : ws) sw += w;
    fit.residual = std::sqrt(sse / sw);
    fit.bins_used = static_cast<int>(rs.size());
    return fit;
}

ObservableReport estimate_position_boson_density(const EstimationContext& ctx,
                                                 const PositionRegion& region,
                                                 int n_radial_panels,
                                                 int sample_stride) {
    const SampleSet& samples = ctx.samples;
    const ModelSpec& m = ctx.model;
    const ModeGrid grid = make_mode_grid(m, n_radial_panels, AngularDesign::Icosahedral);
    const std::size_t n_nodes = grid.size();
    const std::size_t n_used = (samples.size() + sample_stride - 1) / sample_stride;
    if (static_cast<double>(n_nodes) * n_nodes * n_used > 2e9)
        throw std::runtime_error("estimate_position_boson_density: lattice budget exceeded, "
                                 "coarsen the grid or raise the sample stride");

    const double conv = std::pow(2.0 * M_PI, m.dim / 2.0);
    const double R = region.ball_radius;
    auto ghat = [&](double p) {
        if (m.dim == 1) {
            if (p < 1e-8) return 2.0 * R / std::sqrt(2.0 * M_PI);
            return 2.0 * std::sin(p * R) / p / std::sqrt(2.0 * M_PI);
        }
        if (p < 1e-6) return 4.0 * M_PI / 3.0 * R * R * R / conv;
        return 4.0 * M_PI * (std::sin(p * R) - p * R * std::cos(p * R)) / (p * p * p) / conv;
    };
    const double g_l1 = (m.dim == 3) ? 4.0 * M_PI / 3.0 * R * R * R : 2.0 * R;

    Eigen::MatrixXd gmat;
    if (!region.whole_space) {
        gmat.resize(n_nodes, n_nodes);
        for (std::size_t a = 0; a < n_nodes; ++a)
            for (std::size_t b = 0; b < n_nodes; ++b) {
                const double dx = grid.kx[a] - grid.kx[b];
                const double dy = grid.ky[a] - grid.ky[b];
                const double dz = grid.kz[a] - grid.kz[b];
                const double p = std::sqrt(dx * dx + dy * dy + dz * dz);
                gmat(a, b) = ghat(p) * grid.weight[a] * grid.weight[b] /
                             (2.0 * grid.om[a]) / conv;
            }
    }

    std::vector<double> values(n_used, 0.0);
    parallel_for(n_used, ctx.n_threads, [&](std::size_t ii) {
        const std::size_t i = ii * sample_stride;
        auto [fm, fp] = compute_fpm(samples.paths[i], m, grid, ctx.bulk_half_width);
        if (region.whole_space) {
            values[ii] = k_inner(fm, fp, grid).real();
        } else {
            double acc = 0.0;
            for (std::size_t a = 0; a < n_nodes; ++a) {
                std::complex<double> row{0.0, 0.0};
                for (std::size_t b = 0; b < n_nodes; ++b)
                    row += gmat(a, b) * std::conj(fp.amp[b]);
                acc += (fm.amp[a] * row).real();
            }
            values[ii] = acc;
        }
    });

    std::vector<double> dummy;
    std::vector<std::size_t> strided_offsets;
    {
        std::vector<double> full(samples.size(), 0.0);
        stride_series(full, samples.chain_offsets, sample_stride, dummy, strided_offsets);
    }
    const MeanSE st = chain_mean_se(values, strided_offsets);

    ObservableReport rep;
    rep.name = region.whole_space ? "position_boson_density_total" : "position_boson_density";
    rep.fingerprint = samples.config_fingerprint;
    rep.n_samples = static_cast<long>(n_used);
    rep.ess = samples.total_ess() / sample_stride;
    rep.labels = {region.whole_space ? "A_1" : "A_ball"};
    rep.estimate = {st.mean};
    rep.se = {st.se};

    BoundCheck bc;
    if (region.whole_space) {
        bc.name = "total_number_upper_c_rho";
        bc.bound = ctx.constants.c_rho * (1.0 + ctx.eps_disc);
    } else {
        bc.name = "volume_upper_c1c2";
        bc.bound = ctx.constants.c1 * ctx.constants.c2 * g_l1 /
                   (2.0 * std::pow(2.0 * M_PI, m.dim));
    }
    bc.direction = "upper";
    bc.estimate = st.mean;
    bc.se = st.se;
    bc.z = clamp_z(bc.bound - bc.estimate, bc.se);
    bc.pass = bc.z >= -3.0;
    rep.bounds.push_back(bc);

    rep.extra.emplace_back("g_l1_norm", region.whole_space ? -1.0 : g_l1);
    rep.extra.emplace_back("lattice_nodes", static_cast<double>(n_nodes));
    rep.extra.emplace_back("sample_stride", sample_stride);
    return rep;
}

BoundLedger verify_bounds(const std::vector<ObservableReport>& reports, double z_threshold) {
    BoundLedger ledger;
    for (const auto& rep : reports) {
        if (ledger.fingerprint.empty()) ledger.fingerprint = rep.fingerprint;
        else if (ledger.fingerprint != rep.fingerprint)
            throw std::runtime_error("verify_bounds: config fingerprint mismatch between reports ("
                                     + ledger.fingerprint + " vs " + rep.fingerprint + ")");
        for (const auto& check : rep.bounds) {
            BoundLedger::Entry e;
            e.report = rep.name;
            e.check = check;
            e.check.pass = check.z >= -z_threshold;
            ledger.overall_pass = ledger.overall_pass && e.check.pass;
            ledger.entries.push_back(std::move(e));
        }
    }
    return ledger;
}

namespace {

nlohmann::json bound_to_json(const BoundCheck& b) {
    return nlohmann::json{{"name", b.name},       {"direction", b.direction},
                          {"bound", b.bound},     {"estimate", b.estimate},
                          {"se", b.se},           {"z", b.z},
                          {"pass", b.pass}};
}

} // namespace

std::string report_to_json(const ObservableReport& rep) {
    nlohmann::json j;
    j["name"] = rep.name;
    j["fingerprint"] = rep.fingerprint;
    j["n_samples"] = rep.n_samples;
    j["ess"] = rep.ess;
    j["labels"] = rep.labels;
    j["estimate"] = rep.estimate;
    j["se"] = rep.se;
    nlohmann::json bounds = nlohmann::json::array();
    for (const auto& b : rep.bounds) bounds.push_back(bound_to_json(b));
    j["bounds"] = bounds;
    nlohmann::json extra;
    for (const auto& [k, v] : rep.extra) extra[k] = v;
    j["extra"] = extra;
    return j.dump(2);
}

void write_report_json(const ObservableReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_report_json: cannot open " + path);
    out << report_to_json(rep) << "\n";
}

ObservableReport report_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    ObservableReport rep;
    rep.name = j.at("name").get<std::string>();
    rep.fingerprint = j.at("fingerprint").get<std::string>();
    rep.n_samples = j.value("n_samples", 0L);
    rep.ess = j.value("ess", 0.0);
    if (j.contains("labels")) rep.labels = j.at("labels").get<std::vector<std::string>>();
    if (j.contains("estimate")) rep.estimate = j.at("estimate").get<std::vector<double>>();
    if (j.contains("se")) rep.se = j.at("se").get<std::vector<double>>();
    for (const auto& jb : j.value("bounds", nlohmann::json::array())) {
        BoundCheck b;
        b.name = jb.at("name").get<std::string>();
        b.direction = jb.at("direction").get<std::string>();
        b.bound = jb.at("bound").get<double>();
        b.estimate = jb.at("estimate").get<double>();
        b.se = jb.at("se").get<double>();
        b.z = jb.at("z").get<double>();
        b.pass = jb.at("pass").get<bool>();
        rep.bounds.push_back(std::move(b));
    }
    if (j.contains("extra"))
        for (auto it = j.at("extra").begin(); it != j.at("extra").end(); ++it)
            rep.extra.emplace_back(it.key(), it.value().get<double>());
    return rep;
}

ObservableReport read_report_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_report_json: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return report_from_json(text);
}

std::string ledger_to_json(const BoundLedger& ledger) {
    nlohmann::json j;
    j["fingerprint"] = ledger.fingerprint;
    j["overall_pass"] = ledger.overall_pass;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : ledger.entries) {
        nlohmann::json je = bound_to_json(e.check);
        je["report"] = e.report;
        entries.push_back(je);
    }
    j["checks"] = entries;
    return j.dump(2);
}

void write_momentum_csv(const ObservableReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_momentum_csv: cannot open " + path);
    auto extra_value = [&](const std::string& key) {
        for (const auto& [k, v] : rep.extra)
            if (k == key) return v;
        return 0.0;
    };
    out << "# fingerprint " << rep.fingerprint << "\n";
    out << "k_lo,k_hi,n_hat,se,lower,upper,raw_windowed\n";
    char buf[256];
    // bounds come in (upper, lower) pairs per bin
    for (std::size_t b = 0; 2 * b + 1 < rep.bounds.size(); ++b) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      extra_value("k_lo_" + std::to_string(b)),
                      extra_value("k_hi_" + std::to_string(b)),
                      rep.estimate[b], rep.se[b],
                      rep.bounds[2 * b + 1].bound, rep.bounds[2 * b].bound,
                      extra_value("raw_" + std::to_string(b)));
        out << buf;
    }
}

void write_pn_csv(const ObservableReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_pn_csv: cannot open " + path);
    out << "# fingerprint " << rep.fingerprint << "\n";
    out << "n,p_hat,se,upper_bound,lower_bound\n";
    char buf[256];
    for (std::size_t n = 0; n < rep.estimate.size(); ++n) {
        double upper = 0.0, lower = 0.0;
        for (const auto& b : rep.bounds) {
            if (b.name == "superexp_upper_p_" + std::to_string(n)) upper = b.bound;
            if (b.name == "fockcomp_lower_p_" + std::to_string(n)) lower = b.bound;
        }
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", n,
                      rep.estimate[n], rep.se[n], upper, lower);
        out << buf;
    }
}

void write_density_csv(const DensityHistogram& hist, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_density_csv: cannot open " + path);
    out << "# fingerprint " << hist.fingerprint << "\n";
    out << "r_lo,r_hi,count,chi,se\n";
    char buf[256];
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%ld,%.17g,%.17g\n", hist.edges[b],
                      hist.edges[b + 1], hist.counts[b], hist.chi[b], hist.chi_se[b]);
        out << buf;
    }
}

} // namespace nelsonmc
