#include "nelsonmc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nelsonmc {

double mean(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double variance(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

double tau_int_windowed(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 8) return 0.0;
    const double m = mean(x);
    double c0 = 0.0;
    for (double v : x) c0 += (v - m) * (v - m);
    c0 /= static_cast<double>(n);
    if (c0 <= 0.0) return 0.0;

    const std::size_t l_max = std::min<std::size_t>(n / 4, 2000);
    const double noise_floor = 2.0 / std::sqrt(static_cast<double>(n));
    double tau = 0.0;
    for (std::size_t l = 1; l <= l_max; ++l) {
        double c = 0.0;
        for (std::size_t i = 0; i + l < n; ++i) c += (x[i] - m) * (x[i + l] - m);
        const double rho = c / (static_cast<double>(n - l) * c0);
        if (rho < std::max(0.02, noise_floor)) break;
        tau += rho;
    }
    return std::max(0.0, tau);
}

double ess_from_tau(std::size_t n, double tau) {
    return static_cast<double>(n) / (2.0 * tau + 1.0);
}

MeanSE chain_mean_se(const std::vector<double>& x,
                     const std::vector<std::size_t>& chain_offsets) {
    MeanSE out;
    out.n = x.size();
    if (x.empty()) return out;
    out.mean = mean(x);
    if (chain_offsets.size() < 2)
        throw std::invalid_argument("chain_mean_se: need chain offsets");

    std::vector<double> batch_means;
    for (std::size_t c = 0; c + 1 < chain_offsets.size(); ++c) {
        const std::size_t lo = chain_offsets[c], hi = chain_offsets[c + 1];
        const std::size_t len = hi - lo;
        if (len == 0) continue;
        const std::size_t n_batches = std::min<std::size_t>(16, len);
        for (std::size_t b = 0; b < n_batches; ++b) {
            const std::size_t blo = lo + b * len / n_batches;
            const std::size_t bhi = lo + (b + 1) * len / n_batches;
            double s = 0.0;
            for (std::size_t i = blo; i < bhi; ++i) s += x[i];
            batch_means.push_back(s / static_cast<double>(bhi - blo));
        }
    }
    const std::size_t nb = batch_means.size();
    if (nb >= 2) {
        double s = 0.0;
        for (double b : batch_means) s += (b - out.mean) * (b - out.mean);
        out.se = std::sqrt(s / (static_cast<double>(nb) * (nb - 1)));
    }
    const double var = variance(x);
    out.ess = (out.se > 0.0 && var > 0.0)
                  ? std::min(static_cast<double>(out.n), var / (out.se * out.se))
                  : static_cast<double>(out.n);
    return out;
}

double ks_statistic(std::vector<double> values, const std::function<double(double)>& cdf) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    double d = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double f = cdf(values[i]);
        d = std::max(d, std::fabs(f - static_cast<double>(i + 1) / n));
        d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    }
    return d;
}

double ks_critical_value(double alpha, double n_eff) {
    return std::sqrt(-std::log(alpha / 2.0) / 2.0) / std::sqrt(std::max(n_eff, 1.0));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace nelsonmc
