#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace nelsonmc {

double mean(const std::vector<double>& x);
double variance(const std::vector<double>& x); // unbiased

/// Integrated autocorrelation time tau = sum_{l>=1} rho(l) with an adaptive
/// window (stops once the estimated correlation is noise); 0 for i.i.d.
/// series, rho/(1-rho) for AR(1).
double tau_int_windowed(const std::vector<double>& x);

/// Effective sample size N / (2 tau + 1).
double ess_from_tau(std::size_t n, double tau);

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;
    double ess = 0.0;
    std::size_t n = 0;
};

/// Mean and standard error of a pooled per-sample series with known chain
/// boundaries, by batch means within each chain (16 batches per chain).
/// chain_offsets holds the start index of each chain plus the total size.
MeanSE chain_mean_se(const std::vector<double>& x,
                     const std::vector<std::size_t>& chain_offsets);

/// Kolmogorov-Smirnov statistic against a reference CDF.
double ks_statistic(std::vector<double> values, const std::function<double(double)>& cdf);

/// Asymptotic critical value at significance alpha for n_eff samples,
/// sqrt(-log(alpha/2) / 2) / sqrt(n_eff).
double ks_critical_value(double alpha, double n_eff);

double normal_cdf(double x); // standard normal

} // namespace nelsonmc
