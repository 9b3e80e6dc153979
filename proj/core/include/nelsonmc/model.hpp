#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace nelsonmc {

/// Boson dispersion omega(k) = sqrt(|k|^2 + mass^2); mass = 0 is massless.
struct Dispersion {
    double mass = 0.0;
    double operator()(double k_abs) const { return std::hypot(k_abs, mass); }
};

enum class Profile { Shell, Gaussian };

/// Radial coupling profile rho_hat(|k|) with infrared/ultraviolet cutoffs.
struct FormFactor {
    Profile profile = Profile::Shell;
    double amplitude = 1.0;     // g
    double kappa_ir = 0.0;      // IR cutoff
    double k_uv = 1.0;          // UV cutoff
    double gauss_scale = 1.0;   // Lambda (gaussian profile only)

    double value(double k_abs) const {
        if (k_abs <= kappa_ir || k_abs >= k_uv) return 0.0;
        if (profile == Profile::Shell) return amplitude;
        const double x = k_abs / gauss_scale;
        return amplitude * std::exp(-0.5 * x * x);
    }

    /// Upper integration limit: K_uv for the shell; for the gaussian profile,
    /// the point where the squared profile drops below tail_tol relative.
    double support_max(double tail_tol) const {
        if (profile == Profile::Shell) return k_uv;
        const double cut = gauss_scale * std::sqrt(-std::log(std::max(tail_tol, 1e-300)));
        return std::min(k_uv, std::max(cut, kappa_ir * (1.0 + 1e-12)));
    }
};

enum class PotentialKind { Harmonic, Pinned, General };

/// External trap.  The harmonic case is parametrized by the drift rate s of
/// the ground-state process dq = -s q dt + dB (psi_0 ~ exp(-s|q|^2/2),
/// stationary variance 1/(2s) per component); the Schroedinger potential with
/// that ground state is s^2 |q|^2 / 2 up to an additive constant.
struct ExternalPotential {
    PotentialKind kind = PotentialKind::Harmonic;
    double stiffness = 1.0; // harmonic drift rate s
    std::function<double(const double* q, int dim)> evaluate; // general V
    double carmona_m = 0.0;     // optional growth exponents
    double carmona_gamma = 0.0;
};

struct ModelSpec {
    int dim = 3; // 1 or 3
    Dispersion dispersion;
    FormFactor form_factor;
    ExternalPotential potential;
};

double omega_radial(const ModelSpec& m, double k_abs);
double rho_hat_radial(const ModelSpec& m, double k_abs);
/// Vector forms (k has m.dim components); both even in k.
double omega(const ModelSpec& m, const double* k);
double rho_hat(const ModelSpec& m, const double* k);

/// Angular average of cos(k.q) over the unit sphere at |k| r:
/// cos(x) in d=1, sin(x)/x in d=3.
double angular_cos_average(int dim, double x);

/// Scalar constants of the model, all radial quadratures at the given tol.
struct ModelConstants {
    double c_rho = 0.0;             // int |rho|^2 / (2 omega^3)
    double v_eff = 0.0;             // (1/2) int |rho|^2 / omega^2
    double c1 = 0.0;                // int |rho| / omega
    double c2 = 0.0;                // int |rho| / omega^2
    double coupling_strength = 0.0; // int |rho|^2 / omega
    double existence_integral = 0.0;// int |rho|^2 k^2 / (omega (2 omega + k^2))
    bool ir_divergent = false;      // kappa_ir = 0 and mass = 0: c_rho = +inf
};

ModelConstants compute_constants(const ModelSpec& m, double tol);

/// int |ghat|^2 / (2 omega) dk for a radial probe profile.
double free_fluctuation(const ModelSpec& m,
                        const std::function<double(double)>& ghat_radial,
                        double tol);

/// Report for the standing conditions and the sufficient ground-state
/// conditions (i)-(iii).  Report-only, never throws.
struct ConditionReport {
    bool gc1 = true;          // evenness/reality, structural
    bool gc2 = true;          // omega > 0 a.e., structural
    bool gc3_sqrt = true;     // rho/sqrt(omega) in L^2
    bool gc3_lin = true;      // rho/omega in L^2
    bool cond_i = true;       // same pair as gc3
    bool cond_ii = true;      // rho/omega^{3/2} in L^2 (infrared condition)
    double cond_iii_integral = 0.0;
    bool sigma_infinite = false; // confining V: Sigma = infinity
    bool cond_iii = true;
};

ConditionReport check_conditions(const ModelSpec& m, double tol = 1e-9);

/// Stable FNV-1a fingerprint of the physical configuration, used to tie
/// tables, archives and reports to the model they were produced from.
std::string model_fingerprint(const ModelSpec& m);

} // namespace nelsonmc
