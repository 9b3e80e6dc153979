#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

namespace nelsonmc {

struct QuadratureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Gauss-Legendre nodes/weights on [-1,1], computed once per order and cached.
struct GaussRule {
    std::vector<double> x;
    std::vector<double> w;
};
const GaussRule& gauss_legendre(int n);

/// Unit-sphere surface area entering radial reduction of d-dimensional
/// k-integrals: 2 for d=1 (both signs of k), 4*pi for d=3.
double sphere_area(int dim);

/// Integrates f(r) r^{d-1} S_{d-1} dr over [a,b] by composite Gauss-Legendre
/// on log-spaced panels, doubling the panel count until two successive
/// refinements agree to relative tolerance `tol`.  Deterministic for a fixed
/// refinement ladder; throws QuadratureError when the panel budget is
/// exhausted before convergence.
double radial_quadrature(const std::function<double(double)>& f,
                         double a, double b, int dim, double tol,
                         int max_doublings = 14);

/// Plain 1-d integral of f over [a,b], same panel ladder, no radial measure.
double integrate(const std::function<double(double)>& f,
                 double a, double b, double tol, int max_doublings = 14);

} // namespace nelsonmc
