#include "nelsonmc/oracles.hpp"

#include "nelsonmc/quadrature.hpp"

#include <json.hpp>

#include <cmath>
#include <complex>
#include <stdexcept>

namespace nelsonmc {

std::vector<OraclePrediction> pinned_predictions(const ModelSpec& m, int n_max,
                                                 const std::vector<double>& k_values,
                                                 double tol) {
    const ModelConstants c = compute_constants(m, tol);
    if (c.ir_divergent)
        throw std::runtime_error("pinned_predictions: C_rho diverges for this model");
    std::vector<OraclePrediction> out;

    OraclePrediction pn;
    pn.observable = "boson_number_distribution";
    pn.tag = "pinned";
    for (int n = 0; n <= n_max; ++n) {
        pn.labels.push_back("p_" + std::to_string(n));
        pn.values.push_back(std::exp(n * std::log(std::max(c.c_rho, 1e-300)) - c.c_rho -
                                     std::lgamma(n + 1.0)));
    }
    out.push_back(std::move(pn));

    out.push_back({"mean_boson_number", {"N"}, {c.c_rho}, "pinned"});

    OraclePrediction nk;
    nk.observable = "momentum_density";
    nk.tag = "pinned";
    for (double k : k_values) {
        const double rho = rho_hat_radial(m, k);
        const double om = omega_radial(m, k);
        char label[48];
        std::snprintf(label, sizeof(label), "n(k=%.6g)", k);
        nk.labels.push_back(label);
        nk.values.push_back(rho * rho / (2.0 * om * om * om));
    }
    out.push_back(std::move(nk));

    // field mean against the probe ghat = rho: -int rho^2 / omega^2 dk
    const double lo = m.form_factor.kappa_ir;
    const double hi = m.form_factor.support_max(1e-3 * tol);
    double mean_rho = 0.0;
    if (hi > lo)
        mean_rho = -radial_quadrature(
            [&](double u) {
                const double r = rho_hat_radial(m, u), w = omega_radial(m, u);
                return r * r / (w * w);
            },
            lo, hi, m.dim, tol);
    out.push_back({"field_mean", {"xi(rho)"}, {mean_rho}, "pinned"});

    double baseline = 0.0;
    if (hi > lo)
        baseline = radial_quadrature(
            [&](double u) {
                const double r = rho_hat_radial(m, u);
                return r * r / (2.0 * omega_radial(m, u));
            },
            lo, hi, m.dim, tol);
    out.push_back({"field_variance", {"var_xi_rho"}, {baseline}, "pinned"});
    return out;
}

std::vector<OraclePrediction> zero_coupling_predictions(const ModelSpec& m, double tol) {
    (void)tol;
    std::vector<OraclePrediction> out;
    out.push_back({"boson_number_distribution", {"p_0"}, {1.0}, "zero-coupling"});
    out.push_back({"mean_boson_number", {"N"}, {0.0}, "zero-coupling"});
    out.push_back({"field_mean", {"xi(rho)"}, {0.0}, "zero-coupling"});
    out.push_back({"field_variance", {"var_xi_rho"}, {0.0}, "zero-coupling"});
    if (m.potential.kind == PotentialKind::Harmonic) {
        const double s = m.potential.stiffness;
        out.push_back({"particle_density",
                       {"per_axis_variance", "decay_delta", "decay_power"},
                       {1.0 / (2.0 * s), s, 2.0},
                       "harmonic-reference"});
    }
    return out;
}

double analytic_w(const ModelSpec& m, double r, double tau) {
    if (m.dim != 3 || m.dispersion.mass != 0.0 ||
        m.form_factor.profile != Profile::Shell)
        throw std::invalid_argument("analytic_w: needs the shell massless d=3 family");
    const double g = m.form_factor.amplitude;
    const double kappa = m.form_factor.kappa_ir;
    const double K = m.form_factor.k_uv;
    const double at = std::fabs(tau);
    const double g2pi = M_PI * g * g;

    if (r <= 0.0) {
        if (at < 1e-14) return -g2pi * 0.5 * (K * K - kappa * kappa);
        auto prim = [&](double u) { return std::exp(-u * at) * (1.0 + u * at); };
        return -g2pi * (prim(kappa) - prim(K)) / (at * at);
    }
    // -(pi g^2 / r) Im int_kappa^K e^{(ir - tau) u} du
    const std::complex<double> a(-at, r);
    const std::complex<double> integral = (std::exp(a * K) - std::exp(a * kappa)) / a;
    return -g2pi / r * integral.imag();
}

double ou_covariance(double stiffness, double tau) {
    if (!(stiffness > 0.0)) throw std::invalid_argument("ou_covariance: stiffness must be positive");
    return std::exp(-stiffness * std::fabs(tau)) / (2.0 * stiffness);
}

double ar1_tau_int(double rho) {
    if (!(std::fabs(rho) < 1.0)) throw std::invalid_argument("ar1_tau_int: need |rho| < 1");
    return rho / (1.0 - rho);
}

std::string predictions_to_json(const std::vector<OraclePrediction>& preds) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : preds) {
        nlohmann::json j;
        j["observable"] = p.observable;
        j["labels"] = p.labels;
        j["values"] = p.values;
        j["tag"] = p.tag;
        arr.push_back(j);
    }
    return arr.dump(2);
}

} // namespace nelsonmc
