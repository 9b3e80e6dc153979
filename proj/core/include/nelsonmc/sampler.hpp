#pragma once

#include "nelsonmc/model.hpp"
#include "nelsonmc/pair_potential.hpp"
#include "nelsonmc/path.hpp"
#include "nelsonmc/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nelsonmc {

struct ProposalMix {
    double bead = 0.70;   // single-bead Gaussian displacement
    double block = 0.25;  // bridge regeneration of a random window
    double shift = 0.05;  // global rigid shift
    int block_len = 16;   // interior beads regenerated per block move
    double bead_step = 0.5;
    double shift_step = 0.25;
};

struct SamplerConfig {
    double half_width = 20.0; // T
    double dt = 0.05;
    double tau_max = 0.0;       // 0: derive from the tail budget
    double eps_tail_rel = 1e-4; // tail budget as a fraction of C_rho
    ProposalMix proposal;
    int chain_count = 8;
    int burnin_sweeps = 200;
    int sweeps = 2000;   // post-burn-in sweeps per chain
    int thinning = 4;    // keep every thinning-th sweep
    std::uint64_t seed = 1;
    double t_margin = 2.0; // observables read the bulk |t| <= T - t_margin
    bool pinned = false;

    void validate() const; // throws std::invalid_argument on violation
};

struct ChainDiagnostics {
    double accept_bead = 0.0;
    double accept_block = 0.0;
    double accept_shift = 0.0;
    double tau_int_q0sq = 0.0; // of the kept (thinned) q0^2 series
    double ess = 0.0;
    long n_kept = 0;
};

/// Thinned, burned-in collection of paths from all chains, chain-major order.
struct SampleSet {
    std::vector<ParticlePath> paths;
    std::vector<std::size_t> chain_offsets; // start of each chain + total
    std::vector<ChainDiagnostics> chains;
    std::string config_fingerprint;
    double half_width = 0.0, dt = 0.0, t_margin = 0.0;
    int dim = 3;
    bool pinned = false;

    std::size_t size() const { return paths.size(); }
    double total_ess() const {
        double s = 0.0;
        for (const auto& c : chains) s += c.ess;
        return s;
    }
};

/// Exact draw from the stationary discretized Ornstein-Uhlenbeck reference:
/// per component q_{i+1} = a q_i + sqrt((1-a^2)/(2s)) xi, a = exp(-s dt), the
/// first node from the stationary normal of variance 1/(2s).  Pinned flag
/// yields the constant path at the origin.  Throws for other potentials.
ParticlePath sample_reference_harmonic(const SamplerConfig& cfg, const ModelSpec& m, Rng& rng);

/// Particle action sum |dq|^2/(2 dt) + sum V(q_i) dt for general-V mode.
double reference_action(const ParticlePath& path, const ModelSpec& m);

/// Gibbs exponent of the discretized interacting measure: the W double sum
/// over [-T,T]^2, plus the particle action in general-V mode (in harmonic
/// mode the OU law is the proposal base measure and only W enters ratios).
double gibbs_energy(const ParticlePath& path, const ModelSpec& m, const WTable& table);

/// One chain of the Metropolis sampler for the interacting measure.
class GibbsChain {
public:
    GibbsChain(const ModelSpec& m, const WTable& table, const SamplerConfig& cfg,
               int chain_index);

    void sweep(); // path.n_beads proposal attempts drawn from the mix
    const ParticlePath& path() const { return path_; }
    double interaction_energy() const { return w_energy_; }
    double recompute_interaction() const; // full O(L tau_max/dt) audit sum

    long proposals_bead = 0, accepts_bead = 0;
    long proposals_block = 0, accepts_block = 0;
    long proposals_shift = 0, accepts_shift = 0;

private:
    double w_row_delta(int bead, const double* new_pos) const;
    double log_reference_delta_bead(int bead, const double* new_pos) const;
    double log_reference_delta_shift(const double* delta) const;
    void propose_bead();
    void propose_block();
    void propose_shift();

    const ModelSpec& model_;
    const WTable& table_;
    SamplerConfig cfg_;
    ParticlePath path_;
    Rng rng_;
    double w_energy_ = 0.0;
    int max_gap_ = 0;
    double ou_a_ = 0.0, ou_var_ = 0.0, ou_var_st_ = 0.0;
    std::vector<double> scratch_;
};

/// Runs `chain_count` independently seeded chains (optionally across
/// threads), discards burn-in, thins, and fills diagnostics.  Fully
/// deterministic for a fixed config and seed regardless of thread count.
SampleSet run_chains(const ModelSpec& m, const WTable& table, const SamplerConfig& cfg,
                     int n_threads = 1);

struct DiagnosticsReport {
    std::vector<ChainDiagnostics> chains;
    double total_ess = 0.0;
};

/// Recomputes chain diagnostics from a SampleSet; throws if fewer than 100
/// samples are present.
DiagnosticsReport diagnostics(const SampleSet& samples);

} // namespace nelsonmc
