#pragma once

#include "nelsonmc/field_modes.hpp"
#include "nelsonmc/model.hpp"
#include "nelsonmc/pair_potential.hpp"
#include "nelsonmc/sampler.hpp"
#include "nelsonmc/stats.hpp"

#include <optional>
#include <string>
#include <vector>

namespace nelsonmc {

struct BoundCheck {
    std::string name;
    std::string direction; // "upper" or "lower" (on the estimate)
    double bound = 0.0;
    double estimate = 0.0;
    double se = 0.0;
    double z = 0.0; // signed slack in combined-SE units, >= 0 means satisfied
    bool pass = false;
};

/// Estimate(s) with Monte Carlo standard errors, attached bound checks and
/// provenance.  Bounds are evaluated from ModelConstants, never fitted to
/// the samples (the sole exception, the C-hat of the momentum lower bound,
/// is prescribed that way).
struct ObservableReport {
    std::string name;
    std::string fingerprint;
    std::vector<std::string> labels;
    std::vector<double> estimate;
    std::vector<double> se;
    double ess = 0.0;
    long n_samples = 0;
    std::vector<BoundCheck> bounds;
    std::vector<std::pair<std::string, double>> extra; // scalar payload
};

std::string report_to_json(const ObservableReport& rep);
void write_report_json(const ObservableReport& rep, const std::string& path);
ObservableReport report_from_json(const std::string& text);
ObservableReport read_report_json(const std::string& path);

/// Shared estimator inputs; per-sample D values are computed once on first
/// use (parallelized, order-stable).
class EstimationContext {
public:
    EstimationContext(const SampleSet& samples, const ModelSpec& model,
                      const WTable& table, double quad_tol, int n_threads);

    const SampleSet& samples;
    const ModelSpec& model;
    const WTable& table;
    ModelConstants constants;
    double quad_tol;
    double bulk_half_width; // T - t_margin snapped to the grid
    double eps_disc;        // pathwise discretization slack of D
    int n_threads;

    const std::vector<double>& per_sample_d() const;
    /// probe functional Phi_g(q) = sum_s c_s dt P_ghat(|q_s|, |s|); the
    /// default probe ghat = rho reuses the W table (P = -2W).
    const std::vector<double>& per_sample_phi_rho() const;

    MeanSE series_stats(const std::vector<double>& x) const;

private:
    mutable std::vector<double> d_values_;
    mutable std::vector<double> phi_rho_values_;
};

/// Boson number distribution p_n = E[(D^n/n!) e^{-D}] with the
/// superexponential upper bound and, when the table certifies W < 0, the
/// Jensen lower bound (E[D])^n e^{-C_rho} / n!.
ObservableReport estimate_pn(const EstimationContext& ctx, int n_max);

/// Momentum-space boson density per radial bin,
///   n(k) = |rho|^2/(2 omega^3) x window-weighted average of <cos(k.dq)>,
/// with the two-sided band from the pullthrough-style bounds.
struct MomentumBin {
    double k_lo = 0.0, k_hi = 0.0;
    double k_center() const { return 0.5 * (k_lo + k_hi); }
};
struct MomentumDensityResult {
    ObservableReport report;
    std::vector<double> per_sample_total; // per-sample integral over bins
    std::vector<double> bin_mass;         // analytic upper-bound mass per bin
};
MomentumDensityResult estimate_momentum_density(const EstimationContext& ctx,
                                                const std::vector<MomentumBin>& bins,
                                                int pair_stride = 0 /*0 = auto*/);

/// Three routes to <N>: E[D], sum n p_n, and the momentum-density quadrature;
/// pairwise consistency z-scores attached.
ObservableReport estimate_mean_boson_number(const EstimationContext& ctx, int n_max,
                                            const MomentumDensityResult* momentum);

/// Average field strength: per-mode -rho(k) chi(k) / ((2pi)^{d/2} omega^2)
/// with the empirical characteristic function chi(k) = E[<e^{ik.q0}>_ang],
/// plus the path-functional route -E[Phi_g] for the probe ghat = rho.
ObservableReport estimate_field_mean(const EstimationContext& ctx,
                                     const std::vector<double>& k_values);

/// Moment generating function M(beta) = E exp(beta^2 F/2 - beta Phi_g),
/// exact 1 at beta = 0.
ObservableReport estimate_mgf(const EstimationContext& ctx,
                              const std::vector<double>& betas);

/// Field fluctuation Var = F + Var(Phi_g) against the free baseline F.
ObservableReport estimate_field_variance(const EstimationContext& ctx);

/// Central finite differences of the MGF at 0 against the direct mean and
/// variance estimators (consistency data for the acceptance suite).
struct MgfDerivativeCheck {
    double fd_mean = 0.0, mean = 0.0, mean_se = 0.0;
    double fd_var = 0.0, var = 0.0, var_se = 0.0;
    double step = 0.0;
};
MgfDerivativeCheck mgf_derivative_check(const EstimationContext& ctx);

/// Position density of the particle: radial histogram of q0.
struct DensityHistogram {
    std::vector<double> edges;  // n_bins + 1
    std::vector<long> counts;
    std::vector<double> chi;    // normalized density per unit volume
    std::vector<double> chi_se;
    long n_samples = 0;
    int dim = 3;
    std::string fingerprint;
};
DensityHistogram estimate_particle_density(const EstimationContext& ctx, int n_bins,
                                           double r_hi = 0.0 /*0 = auto*/);

/// Tail fit log chi(r) = log D - delta r^p over bins with enough counts.
struct DecayFit {
    double amplitude = 0.0; // D
    double delta = 0.0;
    double p = 0.0;
    double residual = 0.0; // weighted rms of the log-density fit
    int bins_used = 0;
};
DecayFit fit_decay(const DensityHistogram& hist, long min_count = 50,
                   double tail_start_factor = 1.2);

/// Expected boson number in a position-space region (ball of given radius),
/// via the double-k lattice formula, with the volume bound
/// C1 C2 ||g||_1 / (2 (2pi)^d).
struct PositionRegion {
    double ball_radius = 1.0;
    bool whole_space = false; // g = 1: reduces to <N> on the lattice
};
ObservableReport estimate_position_boson_density(const EstimationContext& ctx,
                                                 const PositionRegion& region,
                                                 int n_radial_panels = 8,
                                                 int sample_stride = 4);

/// Aggregated machine-readable pass/fail ledger over a set of reports.
struct BoundLedger {
    struct Entry {
        std::string report;
        BoundCheck check;
    };
    std::vector<Entry> entries;
    bool overall_pass = true;
    std::string fingerprint;
};
BoundLedger verify_bounds(const std::vector<ObservableReport>& reports,
                          double z_threshold = 3.0);
std::string ledger_to_json(const BoundLedger& ledger);

void write_momentum_csv(const ObservableReport& rep, const std::string& path);
void write_pn_csv(const ObservableReport& rep, const std::string& path);
void write_density_csv(const DensityHistogram& hist, const std::string& path);

} // namespace nelsonmc
