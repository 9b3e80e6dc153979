#pragma once

#include "nelsonmc/model.hpp"
#include "nelsonmc/pair_potential.hpp"
#include "nelsonmc/sampler.hpp"

#include <cmath>

namespace nelsonmc::testing {

/// Reference configuration used throughout: shell profile, massless,
/// d=3, g=1, kappa=0.5, K=5.
inline ModelSpec shell_massless_d3(double amplitude = 1.0) {
    ModelSpec m;
    m.dim = 3;
    m.dispersion.mass = 0.0;
    m.form_factor.profile = Profile::Shell;
    m.form_factor.amplitude = amplitude;
    m.form_factor.kappa_ir = 0.5;
    m.form_factor.k_uv = 5.0;
    m.potential.kind = PotentialKind::Harmonic;
    m.potential.stiffness = 1.0;
    return m;
}

inline ModelSpec shell_massive_d3(double amplitude, double mass = 1.0) {
    ModelSpec m = shell_massless_d3(amplitude);
    m.dispersion.mass = mass;
    return m;
}

/// Amplitude that tunes C_rho to `target` for the massless shell reference
/// (C_rho scales with g^2 and equals 2 pi ln(K/kappa) at g=1).
inline double amplitude_for_c_rho(double target) {
    return std::sqrt(target / (2.0 * M_PI * std::log(10.0)));
}

inline double c_rho_shell_massless() { return 2.0 * M_PI * std::log(10.0); }

/// Table sized for a sampler config: tau_max from the config's tail budget,
/// so run_chains' tail audit is satisfied by construction.
inline WTable table_for(const ModelSpec& m, const SamplerConfig& cfg, double r_max,
                        double tol = 1e-5) {
    double tau_max = std::min(1.0, 2.0 * cfg.half_width);
    if (m.form_factor.amplitude != 0.0) {
        const ModelConstants c = compute_constants(m, 1e-9);
        if (!c.ir_divergent && c.c_rho > 0.0)
            tau_max = choose_tau_max(m, cfg.eps_tail_rel * c.c_rho,
                                     2.0 * cfg.half_width, 1e-9);
    }
    return build_w_table_auto(m, r_max, tau_max, tol);
}

} // namespace nelsonmc::testing
