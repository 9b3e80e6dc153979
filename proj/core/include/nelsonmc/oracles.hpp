#pragma once

#include "nelsonmc/model.hpp"

#include <string>
#include <vector>

namespace nelsonmc {

/// Closed-form reference value(s), computed only from ModelConstants and
/// elementary functions; the acceptance tests' ground truth.
struct OraclePrediction {
    std::string observable;
    std::vector<std::string> labels;
    std::vector<double> values;
    std::string tag; // pinned | zero-coupling | harmonic-reference | closed-form-W
};

/// Pinned (van Hove) limit: Poisson boson statistics with mean C_rho,
/// n(k) = |rho|^2/(2 omega^3), field mean per probe -int fhat rho / omega^2,
/// variance equal to the free baseline.
std::vector<OraclePrediction> pinned_predictions(const ModelSpec& m, int n_max,
                                                 const std::vector<double>& k_values,
                                                 double tol);

/// g = 0 degeneration: p_0 = 1, all field means zero, variance the free
/// baseline, chi = psi_0^2 (harmonic: per-axis variance 1/(2s)).
std::vector<OraclePrediction> zero_coupling_predictions(const ModelSpec& m, double tol);

/// Closed-form W for the shell massless d=3 family:
///   r = 0: -pi g^2 [e^{-kappa tau}(1+kappa tau) - e^{-K tau}(1+K tau)]/tau^2
///   r > 0: -(pi g^2 / r) Im[(e^{(ir-tau)K} - e^{(ir-tau)kappa})/(ir-tau)]
/// Throws for models outside the family.
double analytic_w(const ModelSpec& m, double r, double tau);

/// Stationary OU covariance e^{-s tau} / (2s).
double ou_covariance(double stiffness, double tau);

/// AR(1) integrated autocorrelation time rho/(1-rho).
double ar1_tau_int(double rho);

std::string predictions_to_json(const std::vector<OraclePrediction>& preds);

} // namespace nelsonmc
