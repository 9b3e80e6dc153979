#include "nelsonmc/model.hpp"

#include "nelsonmc/quadrature.hpp"

#include <cstdio>
#include <cstring>

namespace nelsonmc {

double omega_radial(const ModelSpec& m, double k_abs) { return m.dispersion(k_abs); }

double rho_hat_radial(const ModelSpec& m, double k_abs) { return m.form_factor.value(k_abs); }

double omega(const ModelSpec& m, const double* k) {
    double s = 0.0;
    for (int a = 0; a < m.dim; ++a) s += k[a] * k[a];
    return m.dispersion(std::sqrt(s));
}

double rho_hat(const ModelSpec& m, const double* k) {
    double s = 0.0;
    for (int a = 0; a < m.dim; ++a) s += k[a] * k[a];
    return m.form_factor.value(std::sqrt(s));
}

double angular_cos_average(int dim, double x) {
    if (dim == 1) return std::cos(x);
    // sin(x)/x with the small-x series to avoid cancellation
    const double ax = std::fabs(x);
    if (ax < 1e-4) {
        const double x2 = x * x;
        return 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0);
    }
    return std::sin(x) / x;
}

namespace {

// Exponent of the integrand near k -> 0 is d-1-p for a weight 1/omega^p;
// the radial integral diverges iff the profile reaches down to 0 (massless,
// no IR cutoff) and d - p <= 0.
bool ir_finite(const ModelSpec& m, double inverse_omega_power) {
    if (m.dispersion.mass > 0.0 || m.form_factor.kappa_ir > 0.0) return true;
    return static_cast<double>(m.dim) - inverse_omega_power > 0.0;
}

double profile_integral(const ModelSpec& m, double tol,
                        const std::function<double(double)>& weight) {
    const FormFactor& ff = m.form_factor;
    const double lo = ff.kappa_ir;
    const double hi = ff.support_max(1e-3 * tol);
    if (!(hi > lo)) return 0.0;
    auto f = [&](double u) { return weight(u); };
    return radial_quadrature(f, lo, hi, m.dim, tol);
}

} // namespace

ModelConstants compute_constants(const ModelSpec& m, double tol) {
    ModelConstants c;
    auto rho = [&](double u) { return rho_hat_radial(m, u); };
    auto om = [&](double u) { return omega_radial(m, u); };

    c.ir_divergent = !ir_finite(m, 3.0);
    if (c.ir_divergent) {
        c.c_rho = std::numeric_limits<double>::infinity();
    } else {
        c.c_rho = profile_integral(m, tol, [&](double u) {
            const double r = rho(u), w = om(u);
            return r * r / (2.0 * w * w * w);
        });
    }
    c.v_eff = profile_integral(m, tol, [&](double u) {
        const double r = rho(u), w = om(u);
        return 0.5 * r * r / (w * w);
    });
    c.c1 = profile_integral(m, tol, [&](double u) {
        return std::fabs(rho(u)) / om(u);
    });
    c.c2 = profile_integral(m, tol, [&](double u) {
        const double w = om(u);
        return std::fabs(rho(u)) / (w * w);
    });
    c.coupling_strength = profile_integral(m, tol, [&](double u) {
        const double r = rho(u);
        return r * r / om(u);
    });
    c.existence_integral = profile_integral(m, tol, [&](double u) {
        const double r = rho(u), w = om(u);
        return r * r * u * u / (w * (2.0 * w + u * u));
    });
    return c;
}

double free_fluctuation(const ModelSpec& m,
                        const std::function<double(double)>& ghat_radial,
                        double tol) {
    const FormFactor& ff = m.form_factor;
    const double lo = ff.kappa_ir;
    const double hi = ff.support_max(1e-3 * tol);
    if (!(hi > lo)) return 0.0;
    return radial_quadrature(
        [&](double u) {
            const double g = ghat_radial(u);
            return g * g / (2.0 * omega_radial(m, u));
        },
        lo, hi, m.dim, tol);
}

ConditionReport check_conditions(const ModelSpec& m, double tol) {
    ConditionReport rep;
    rep.gc1 = true; // radial real profiles and omega(k)=omega(-k) by construction
    rep.gc2 = true; // omega vanishes at most at k=0
    rep.gc3_sqrt = ir_finite(m, 1.0);
    rep.gc3_lin = ir_finite(m, 2.0);
    rep.cond_i = rep.gc3_sqrt && rep.gc3_lin;
    rep.cond_ii = ir_finite(m, 3.0);

    // (iii): Sigma - E_p > existence integral.  For a confining trap
    // (harmonic, pinned) Sigma = infinity and (iii) holds vacuously; a general
    // V would need its essential spectrum supplied, which we do not attempt.
    rep.cond_iii_integral = compute_constants(m, tol).existence_integral;
    rep.sigma_infinite = (m.potential.kind == PotentialKind::Harmonic ||
                          m.potential.kind == PotentialKind::Pinned);
    rep.cond_iii = rep.sigma_infinite && rep.cond_i;
    return rep;
}

std::string model_fingerprint(const ModelSpec& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "d=%d;m=%.17g;prof=%d;g=%.17g;kir=%.17g;kuv=%.17g;lam=%.17g;pot=%d;s=%.17g",
                  m.dim, m.dispersion.mass, static_cast<int>(m.form_factor.profile),
                  m.form_factor.amplitude, m.form_factor.kappa_ir, m.form_factor.k_uv,
                  m.form_factor.gauss_scale, static_cast<int>(m.potential.kind),
                  m.potential.stiffness);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char* p = buf; *p; ++p) {
        h ^= static_cast<unsigned char>(*p);
        h *= 0x100000001b3ULL;
    }
    char out[32];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

} // namespace nelsonmc
