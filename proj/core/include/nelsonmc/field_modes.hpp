#pragma once

#include "nelsonmc/model.hpp"
#include "nelsonmc/path.hpp"
#include "nelsonmc/rng.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

namespace nelsonmc {

enum class AngularDesign { ProductGauss, Icosahedral };

/// Finite k-point set with quadrature weights reproducing int dk.
/// d=3: composite Gauss radial rule x an angular design closed under
/// k -> -k; d=1: signed radial nodes.
struct ModeGrid {
    int dim = 3;
    std::vector<double> kx, ky, kz; // kz,ky unused for d=1
    std::vector<double> weight;
    std::vector<double> om;   // omega at each node
    std::vector<double> rho;  // rho_hat at each node
    std::uint64_t grid_id = 0;

    std::size_t size() const { return weight.size(); }
};

ModeGrid make_mode_grid(const ModelSpec& m, int n_radial_panels,
                        AngularDesign design = AngularDesign::ProductGauss,
                        int n_theta = 12, int n_phi = 24);

/// Complex amplitude per grid node (f-hat values).
struct ModeVector {
    std::vector<std::complex<double>> amp;
    std::uint64_t grid_id = 0;
};

/// Half-line mode vectors of a path over the window |t| <= bulk_half_width:
///   f+_T(k) = - sum_{t >= 0} rho(k) e^{i k.q_t} e^{-omega t} dt   (trapezoid)
/// and the mirror image over t <= 0.  Returns (f-, f+).
std::pair<ModeVector, ModeVector> compute_fpm(const ParticlePath& path,
                                              const ModelSpec& m,
                                              const ModeGrid& grid,
                                              double bulk_half_width);

/// <f, g>_K = int fhat conj(ghat) / (2 omega) dk on the grid.
std::complex<double> k_inner(const ModeVector& f, const ModeVector& g,
                             const ModeGrid& grid);

/// Pairing of Wick exponentials: <:e^{xi(f)}:, :e^{xi(g)}:> = exp(<f,g>_K).
std::complex<double> wick_pair(const ModeVector& f, const ModeVector& g,
                               const ModeGrid& grid);

/// Second-quantisation pairings for a bounded real multiplier A(k):
///   Gamma value  = exp(<f, A g>_K)
///   dGamma value = <f, A g>_K exp(<f, g>_K)
struct GammaPair {
    std::complex<double> gamma;
    std::complex<double> dgamma;
};
GammaPair gamma_pair(const ModeVector& f,
                     const std::function<double(double kx, double ky, double kz)>& multiplier,
                     const ModeVector& g, const ModeGrid& grid);

/// A time-stamped radial probe profile fhat(|k|) with its radial support
/// (quadrature panels are laid over [support_lo, support_hi]).
struct FieldProbe {
    double t = 0.0;
    std::function<double(double)> fhat;
    double support_lo = 0.0;
    double support_hi = 0.0;
};

/// Conditional Gaussian law of the field given the particle path: mean
///   M_{t,q}(f) = - int ds int dk fhat rho <cos>_ang e^{-omega|t-s|}/(2 omega)
/// over the bulk window, covariance between probes
///   int fhat_j fhat_l e^{-omega|t_j-t_l|} / (2 omega) dk.
struct FieldProbeMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    bool jitter_applied = false;
};

FieldProbeMoments conditional_field_moments(const ParticlePath& path,
                                            const ModelSpec& m,
                                            const std::vector<FieldProbe>& probes,
                                            double bulk_half_width, double tol);

/// n Gaussian draws with the conditional moments; returns the empirical
/// mean/covariance (same struct).  Numerically indefinite covariances are
/// regularized with escalating diagonal jitter and flagged.
FieldProbeMoments sample_conditional_field(const ParticlePath& path,
                                           const ModelSpec& m,
                                           const std::vector<FieldProbe>& probes,
                                           Rng& rng, int n_draws,
                                           double bulk_half_width, double tol);

} // namespace nelsonmc
