#pragma once

#include "nelsonmc/model.hpp"
#include "nelsonmc/path.hpp"

#include <atomic>
#include <memory>
#include <string>
#include <vector>

namespace nelsonmc {

/// Effective pair potential obtained by integrating out the field,
///   W(r, tau) = -1/2 int |rho(k)|^2/(2 omega) <cos(k.q)>_ang e^{-omega |tau|} dk,
/// radially reduced (<cos> is cos(|k|r) in d=1 and sinc(|k|r) in d=3).
/// Nonpositive at r = 0 and decaying in |tau|.
double w_exact(const ModelSpec& m, double r, double tau, double tol);

/// Precomputed uniform (r, tau) grid of w_exact with bilinear lookup.
/// Immutable after build and shared read-only across chains.
struct WTable {
    double r_max = 0.0, tau_max = 0.0;
    int n_r = 0, n_tau = 0;
    double build_tol = 0.0;
    bool w_negative_everywhere = false;
    std::string fingerprint;
    ModelSpec model;                 // kept for the exact fallback at r > r_max
    std::vector<double> values;      // row-major, values[ir * n_tau + it]
    std::shared_ptr<std::atomic<long>> slow_path_events =
        std::make_shared<std::atomic<long>>(0);

    double node(int ir, int it) const { return values[static_cast<std::size_t>(ir) * n_tau + it]; }
    double r_step() const { return r_max / (n_r - 1); }
    double tau_step() const { return tau_max / (n_tau - 1); }
};

/// Builds the table from a fixed shared radial rule (the kernel is separable
/// in k across grid nodes), then audits 100 random off-grid probes against
/// w_exact; throws if the bilinear error exceeds 10x tol.
WTable build_w_table(const ModelSpec& m, double r_max, double tau_max,
                     int n_r, int n_tau, double tol);

/// Grid density sized to the interpolation tolerance: the bilinear error
/// scales with the squared step times the kernel curvature, set by the
/// UV cutoff scale.
void auto_table_grid(const ModelSpec& m, double r_max, double tau_max, double tol,
                     int& n_r, int& n_tau);
WTable build_w_table_auto(const ModelSpec& m, double r_max, double tau_max, double tol);

/// Bilinear interpolation in (r, |tau|).  |tau| > tau_max returns 0 (tail
/// truncation); r > r_max falls back to w_exact and counts the event.
double w_interp(const WTable& table, double r, double tau);

/// Dimensionless cross-half-line interaction
///   D(q) = -2 sum_{s<=0} sum_{t>=0} W(|q_t - q_s|, t-s) dt^2
/// over grid nodes with t-s <= tau_max, composite-trapezoid weights (half
/// weight at t=0 and at the window edges).  D >= 0 whenever W <= 0, and
/// D <= C_rho (1 + eps_disc) for any path.  The sum runs over the window
/// |t| <= bulk_half_width (pass path.half_width for the full path).
double cross_half_line_energy(const ParticlePath& path, const WTable& table,
                              double bulk_half_width);
double cross_half_line_energy(const ParticlePath& path, const WTable& table);

/// Double Riemann sum of W over [-T,T]^2 (grid-edge trapezoid weights apply
/// only at the ends of the stored path).
double square_interaction(const ParticlePath& path, const WTable& table, double T);

/// Sum over the ring [-T,T]^2 \ [-S,S]^2; by construction
/// square(T) = square(S) + window(S, T) exactly.
double window_interaction(const ParticlePath& path, const WTable& table,
                          double S, double T);

/// Discarded half-line mass when pair separations beyond tau are dropped:
///   int |rho|^2 (1 + omega tau) e^{-omega tau} / (2 omega^3) dk,
/// the dominated-convergence tail computation specialized to the
/// half-line x half-line geometry of D.
double d_tail_bound(const ModelSpec& m, double tau, double tol);

/// Generic finite-window tail bound 8 S int e^{-omega tau} |rho|^2/(2 omega^2) dk.
double appendix_tail_bound(const ModelSpec& m, double S, double tau, double tol);

/// Smallest tau with d_tail_bound <= eps_tail, capped at tau_cap.
double choose_tau_max(const ModelSpec& m, double eps_tail, double tau_cap, double tol);

/// Relative discretization slack of D: the constant path evaluated on the
/// dt grid exceeds C_rho by this factor (trapezoid overshoot plus table
/// error); used by the pathwise superexponential-bound checks.
double d_discretization_slack(const ModelSpec& m, const WTable& table,
                              double dt, double bulk_half_width, double tol);

void write_w_table_csv(const WTable& table, const std::string& path);
WTable read_w_table_csv(const std::string& path, const ModelSpec& m);

} // namespace nelsonmc
