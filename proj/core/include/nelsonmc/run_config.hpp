#pragma once

#include "nelsonmc/model.hpp"
#include "nelsonmc/sampler.hpp"

#include <string>
#include <vector>

namespace nelsonmc {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Full reproducible run description: model, sampler, observable selection,
/// tolerances, output directory and the global seed.  Round-trips losslessly
/// through its canonical JSON form; the fingerprint is a stable hash of that
/// canonical form.
struct RunConfig {
    ModelSpec model;
    SamplerConfig sampler;

    // observable selection
    int n_max = 8;
    int momentum_bins = 20;
    double momentum_k_lo = 0.0, momentum_k_hi = 0.0; // 0: full profile support
    int density_bins = 40;
    std::vector<double> mgf_betas{-0.2, -0.1, 0.0, 0.1, 0.2};
    double ball_radius = 0.6203504908994001; // unit volume in d=3

    // table build
    double table_r_max = 0.0; // 0: auto (10x trap length scale)
    int table_n_r = 0;        // 0: auto from tolerance
    int table_n_tau = 0;

    // tolerances
    double quad_tol = 1e-10;
    double table_tol = 1e-5;
    double z_threshold = 3.0;

    std::string out_dir = "out";

    void validate() const; // throws ConfigError naming the violated invariant
    std::string canonical_json() const;
    std::string fingerprint() const;

    double resolved_table_r_max() const;
    double resolved_tau_max(double quad_tol_override = 0.0) const;
};

/// Parses and validates a config file.  Unknown keys and duplicate keys are
/// rejected with the offending key in the message.
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_string(const std::string& text);

} // namespace nelsonmc
