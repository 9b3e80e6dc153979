#include "nelsonmc/sampler.hpp"

#include "nelsonmc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace nelsonmc {

void SamplerConfig::validate() const {
    if (!(half_width > 0.0) || !(dt > 0.0))
        throw std::invalid_argument("sampler: half_width and dt must be positive");
    if (burnin_sweeps < 0) throw std::invalid_argument("sampler: burnin_sweeps must be >= 0");
    if (thinning < 1) throw std::invalid_argument("sampler: thinning must be >= 1");
    if (!(t_margin >= 0.0) || !(t_margin < half_width))
        throw std::invalid_argument("sampler: need 0 <= t_margin < half_width");
    if (chain_count < 1) throw std::invalid_argument("sampler: chain_count must be >= 1");
    if (sweeps < thinning) throw std::invalid_argument("sampler: sweeps must be >= thinning");
    if (proposal.bead < 0 || proposal.block < 0 || proposal.shift < 0 ||
        proposal.bead + proposal.block + proposal.shift <= 0)
        throw std::invalid_argument("sampler: proposal mix weights must be nonnegative and not all zero");
    if (proposal.block_len < 1) throw std::invalid_argument("sampler: block_len must be >= 1");
}

ParticlePath sample_reference_harmonic(const SamplerConfig& cfg, const ModelSpec& m, Rng& rng) {
    ParticlePath p = make_path(cfg.half_width, cfg.dt, m.dim);
    if (cfg.pinned || m.potential.kind == PotentialKind::Pinned) return p;
    if (m.potential.kind != PotentialKind::Harmonic)
        throw std::invalid_argument("sample_reference_harmonic: potential kind must be harmonic");
    const double s = m.potential.stiffness;
    const double a = std::exp(-s * cfg.dt);
    const double sd_step = std::sqrt((1.0 - a * a) / (2.0 * s));
    const double sd_st = std::sqrt(1.0 / (2.0 * s));
    for (int c = 0; c < p.dim; ++c) p.bead(0)[c] = sd_st * rng.normal();
    for (int i = 1; i < p.n_beads; ++i)
        for (int c = 0; c < p.dim; ++c)
            p.bead(i)[c] = a * p.bead(i - 1)[c] + sd_step * rng.normal();
    return p;
}

double reference_action(const ParticlePath& path, const ModelSpec& m) {
    if (m.potential.kind != PotentialKind::General)
        throw std::invalid_argument("reference_action: defined for general-V mode");
    double kin = 0.0, pot = 0.0;
    for (int i = 0; i + 1 < path.n_beads; ++i) {
        const double* a = path.bead(i);
        const double* b = path.bead(i + 1);
        for (int c = 0; c < path.dim; ++c) {
            const double d = b[c] - a[c];
            kin += d * d;
        }
    }
    kin /= 2.0 * path.dt;
    for (int i = 0; i < path.n_beads; ++i)
        pot += m.potential.evaluate(path.bead(i), path.dim);
    return kin + pot * path.dt;
}

double gibbs_energy(const ParticlePath& path, const ModelSpec& m, const WTable& table) {
    double e = square_interaction(path, table, path.half_width);
    if (m.potential.kind == PotentialKind::General) e += reference_action(path, m);
    return e;
}

GibbsChain::GibbsChain(const ModelSpec& m, const WTable& table, const SamplerConfig& cfg,
                       int chain_index)
    : model_(m), table_(table), cfg_(cfg),
      rng_(cfg.seed, static_cast<std::uint64_t>(chain_index)) {
    cfg_.validate();
    if (m.potential.kind == PotentialKind::Pinned) cfg_.pinned = true;
    if (cfg_.pinned || m.potential.kind == PotentialKind::Harmonic) {
        path_ = sample_reference_harmonic(cfg_, m, rng_);
    } else {
        path_ = make_path(cfg_.half_width, cfg_.dt, m.dim);
    }
    max_gap_ = static_cast<int>(std::floor(table.tau_max / cfg_.dt));
    const double s = m.potential.stiffness;
    ou_a_ = std::exp(-s * cfg_.dt);
    ou_var_ = (1.0 - ou_a_ * ou_a_) / (2.0 * s);
    ou_var_st_ = 1.0 / (2.0 * s);
    scratch_.resize(static_cast<std::size_t>(cfg_.proposal.block_len) * path_.dim);
    w_energy_ = recompute_interaction();
}

double GibbsChain::recompute_interaction() const {
    return square_interaction(path_, table_, path_.half_width);
}

double GibbsChain::w_row_delta(int bead, const double* new_pos) const {
    const int lo = std::max(0, bead - max_gap_);
    const int hi = std::min(path_.n_beads - 1, bead + max_gap_);
    const double* old_pos = path_.bead(bead);
    const double wk = (bead == 0 || bead == path_.n_beads - 1) ? 0.5 : 1.0;
    double delta = 0.0;
    for (int j = lo; j <= hi; ++j) {
        if (j == bead) continue;
        const double* qj = path_.bead(j);
        double d_new = 0.0, d_old = 0.0;
        for (int c = 0; c < path_.dim; ++c) {
            const double a = new_pos[c] - qj[c];
            const double b = old_pos[c] - qj[c];
            d_new += a * a;
            d_old += b * b;
        }
        const double tau = std::fabs(j - bead) * path_.dt;
        const double wj = (j == 0 || j == path_.n_beads - 1) ? 0.5 : 1.0;
        delta += wj * (w_interp(table_, std::sqrt(d_new), tau) -
                       w_interp(table_, std::sqrt(d_old), tau));
    }
    return 2.0 * wk * delta * path_.dt * path_.dt;
}

double GibbsChain::log_reference_delta_bead(int bead, const double* new_pos) const {
    const double* old_pos = path_.bead(bead);
    double delta = 0.0;
    if (model_.potential.kind == PotentialKind::Harmonic) {
        for (int c = 0; c < path_.dim; ++c) {
            const double xn = new_pos[c], xo = old_pos[c];
            if (bead == 0) {
                delta -= (xn * xn - xo * xo) / (2.0 * ou_var_st_);
            } else {
                const double prev = path_.bead(bead - 1)[c];
                const double rn = xn - ou_a_ * prev, ro = xo - ou_a_ * prev;
                delta -= (rn * rn - ro * ro) / (2.0 * ou_var_);
            }
            if (bead + 1 < path_.n_beads) {
                const double next = path_.bead(bead + 1)[c];
                const double rn = next - ou_a_ * xn, ro = next - ou_a_ * xo;
                delta -= (rn * rn - ro * ro) / (2.0 * ou_var_);
            }
        }
    } else { // general V: free kinetic bonds plus the potential weight
        for (int c = 0; c < path_.dim; ++c) {
            const double xn = new_pos[c], xo = old_pos[c];
            if (bead > 0) {
                const double prev = path_.bead(bead - 1)[c];
                delta -= ((xn - prev) * (xn - prev) - (xo - prev) * (xo - prev)) / (2.0 * path_.dt);
            }
            if (bead + 1 < path_.n_beads) {
                const double next = path_.bead(bead + 1)[c];
                delta -= ((next - xn) * (next - xn) - (next - xo) * (next - xo)) / (2.0 * path_.dt);
            }
        }
        delta -= (model_.potential.evaluate(new_pos, path_.dim) -
                  model_.potential.evaluate(old_pos, path_.dim)) * path_.dt;
    }
    return delta;
}

double GibbsChain::log_reference_delta_shift(const double* delta_vec) const {
    double delta = 0.0;
    if (model_.potential.kind == PotentialKind::Harmonic) {
        const double b = 1.0 - ou_a_;
        for (int c = 0; c < path_.dim; ++c) {
            const double d = delta_vec[c];
            const double q0 = path_.bead(0)[c];
            delta -= (2.0 * q0 * d + d * d) / (2.0 * ou_var_st_);
            double sum_resid = 0.0;
            for (int i = 0; i + 1 < path_.n_beads; ++i)
                sum_resid += path_.bead(i + 1)[c] - ou_a_ * path_.bead(i)[c];
            const int n_bonds = path_.n_beads - 1;
            delta -= (2.0 * sum_resid * b * d + n_bonds * b * b * d * d) / (2.0 * ou_var_);
        }
    } else {
        double vn = 0.0, vo = 0.0;
        std::vector<double> shifted(path_.dim);
        for (int i = 0; i < path_.n_beads; ++i) {
            const double* q = path_.bead(i);
            for (int c = 0; c < path_.dim; ++c) shifted[c] = q[c] + delta_vec[c];
            vn += model_.potential.evaluate(shifted.data(), path_.dim);
            vo += model_.potential.evaluate(q, path_.dim);
        }
        delta = -(vn - vo) * path_.dt;
    }
    return delta;
}

void GibbsChain::propose_bead() {
    ++proposals_bead;
    const int k = rng_.uniform_int(path_.n_beads);
    double new_pos[3];
    for (int c = 0; c < path_.dim; ++c)
        new_pos[c] = path_.bead(k)[c] + cfg_.proposal.bead_step * rng_.normal();
    const double dw = w_row_delta(k, new_pos);
    const double log_alpha = log_reference_delta_bead(k, new_pos) - dw;
    if (log_alpha >= 0.0 || std::log(rng_.uniform_pos()) < log_alpha) {
        std::memcpy(path_.bead(k), new_pos, sizeof(double) * path_.dim);
        w_energy_ += dw;
        ++accepts_bead;
    }
}

void GibbsChain::propose_block() {
    const int blen = cfg_.proposal.block_len;
    if (path_.n_beads < blen + 2) { propose_bead(); return; }
    ++proposals_block;
    const int l = rng_.uniform_int(path_.n_beads - blen - 1);
    const int r = l + blen + 1;

    // interaction energy of the interior beads against everything else
    auto block_energy = [&]() {
        double acc = 0.0;
        for (int i = l + 1; i < r; ++i) {
            const double wi = (i == 0 || i == path_.n_beads - 1) ? 0.5 : 1.0;
            const int jlo = std::max(0, i - max_gap_);
            const int jhi = std::min(path_.n_beads - 1, i + max_gap_);
            for (int j = jlo; j <= jhi; ++j) {
                if (j == i) continue;
                if (j > l && j < r && j < i) continue; // interior pair counted once
                const double wj = (j == 0 || j == path_.n_beads - 1) ? 0.5 : 1.0;
                acc += 2.0 * wi * wj *
                       w_interp(table_, path_.bead_distance(i, j),
                                std::fabs(j - i) * path_.dt);
            }
        }
        return acc * path_.dt * path_.dt;
    };

    double v_old = 0.0, v_new = 0.0;
    const double e_old = block_energy();
    for (int i = l + 1; i < r; ++i)
        std::memcpy(&scratch_[(i - l - 1) * path_.dim], path_.bead(i),
                    sizeof(double) * path_.dim);
    if (model_.potential.kind == PotentialKind::General)
        for (int i = l + 1; i < r; ++i)
            v_old += model_.potential.evaluate(path_.bead(i), path_.dim);

    // regenerate the interior from the reference bridge given the anchors
    if (model_.potential.kind == PotentialKind::Harmonic) {
        for (int i = l + 1; i < r; ++i) {
            const int m_steps = r - i;
            const double am = std::pow(ou_a_, m_steps);
            const double v_m = ou_var_st_ * (1.0 - am * am);
            const double lambda = 1.0 / ou_var_ + am * am / v_m;
            const double sd = std::sqrt(1.0 / lambda);
            for (int c = 0; c < path_.dim; ++c) {
                const double x = path_.bead(i - 1)[c];
                const double y = path_.bead(r)[c];
                const double mu = (ou_a_ * x / ou_var_ + am * y / v_m) / lambda;
                path_.bead(i)[c] = mu + sd * rng_.normal();
            }
        }
    } else {
        for (int i = l + 1; i < r; ++i) {
            const int m_steps = r - i;
            const double sd = std::sqrt(path_.dt * m_steps / (m_steps + 1.0));
            for (int c = 0; c < path_.dim; ++c) {
                const double x = path_.bead(i - 1)[c];
                const double y = path_.bead(r)[c];
                path_.bead(i)[c] = (m_steps * x + y) / (m_steps + 1.0) + sd * rng_.normal();
            }
        }
        for (int i = l + 1; i < r; ++i)
            v_new += model_.potential.evaluate(path_.bead(i), path_.dim);
    }

    const double e_new = block_energy();
    const double dw = e_new - e_old;
    const double log_alpha = -dw - (v_new - v_old) * path_.dt;
    if (log_alpha >= 0.0 || std::log(rng_.uniform_pos()) < log_alpha) {
        w_energy_ += dw;
        ++accepts_block;
    } else {
        for (int i = l + 1; i < r; ++i)
            std::memcpy(path_.bead(i), &scratch_[(i - l - 1) * path_.dim],
                        sizeof(double) * path_.dim);
    }
}

void GibbsChain::propose_shift() {
    ++proposals_shift;
    double delta[3];
    for (int c = 0; c < path_.dim; ++c)
        delta[c] = cfg_.proposal.shift_step * rng_.normal();
    // W depends only on bead separations, so only the reference part changes
    const double log_alpha = log_reference_delta_shift(delta);
    if (log_alpha >= 0.0 || std::log(rng_.uniform_pos()) < log_alpha) {
        for (int i = 0; i < path_.n_beads; ++i)
            for (int c = 0; c < path_.dim; ++c) path_.bead(i)[c] += delta[c];
        ++accepts_shift;
    }
}

void GibbsChain::sweep() {
    if (cfg_.pinned) return;
    const double total = cfg_.proposal.bead + cfg_.proposal.block + cfg_.proposal.shift;
    const double p_bead = cfg_.proposal.bead / total;
    const double p_block = cfg_.proposal.block / total;
    for (int n = 0; n < path_.n_beads; ++n) {
        const double u = rng_.uniform();
        if (u < p_bead) propose_bead();
        else if (u < p_bead + p_block) propose_block();
        else propose_shift();
    }
}

namespace {

double q0_norm_sq(const ParticlePath& p) {
    const double* q = p.bead(p.center_index());
    double s = 0.0;
    for (int c = 0; c < p.dim; ++c) s += q[c] * q[c];
    return s;
}

std::string sampler_fingerprint(const ModelSpec& m, const SamplerConfig& cfg) {
    std::ostringstream os;
    os << model_fingerprint(m) << ";T=" << cfg.half_width << ";dt=" << cfg.dt
       << ";seed=" << cfg.seed << ";chains=" << cfg.chain_count
       << ";sweeps=" << cfg.sweeps << ";thin=" << cfg.thinning
       << ";burn=" << cfg.burnin_sweeps << ";pin=" << cfg.pinned;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : os.str()) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    char out[32];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

} // namespace

SampleSet run_chains(const ModelSpec& m, const WTable& table, const SamplerConfig& cfg,
                     int n_threads) {
    cfg.validate();
    // tail budget audit: the table truncation must sit below the configured
    // fraction of C_rho (skipped at zero coupling where W vanishes)
    if (m.form_factor.amplitude != 0.0) {
        const ModelConstants consts = compute_constants(m, 1e-9);
        if (!consts.ir_divergent && consts.c_rho > 0.0) {
            const double tail = d_tail_bound(m, table.tau_max, 1e-9);
            if (tail > cfg.eps_tail_rel * consts.c_rho) {
                std::ostringstream msg;
                msg << "run_chains: tau_max=" << table.tau_max << " leaves tail "
                    << tail << " > eps_tail " << cfg.eps_tail_rel * consts.c_rho
                    << "; enlarge tau_max/half_width or relax eps_tail_rel";
                throw std::runtime_error(msg.str());
            }
        }
    }

    const int n_kept_per_chain = cfg.sweeps / cfg.thinning;
    std::vector<std::vector<ParticlePath>> kept(cfg.chain_count);
    std::vector<ChainDiagnostics> diags(cfg.chain_count);

    auto run_one = [&](int c) {
        GibbsChain chain(m, table, cfg, c);
        for (int s = 0; s < cfg.burnin_sweeps; ++s) chain.sweep();
        std::vector<double> q0sq;
        q0sq.reserve(n_kept_per_chain);
        kept[c].reserve(n_kept_per_chain);
        for (int s = 1; s <= cfg.sweeps; ++s) {
            chain.sweep();
            if (s % cfg.thinning == 0) {
                kept[c].push_back(chain.path());
                q0sq.push_back(q0_norm_sq(chain.path()));
            }
        }
        ChainDiagnostics d;
        d.accept_bead = chain.proposals_bead
                            ? static_cast<double>(chain.accepts_bead) / chain.proposals_bead : 0.0;
        d.accept_block = chain.proposals_block
                             ? static_cast<double>(chain.accepts_block) / chain.proposals_block : 0.0;
        d.accept_shift = chain.proposals_shift
                             ? static_cast<double>(chain.accepts_shift) / chain.proposals_shift : 0.0;
        d.n_kept = static_cast<long>(kept[c].size());
        d.tau_int_q0sq = cfg.pinned ? 0.0 : tau_int_windowed(q0sq);
        d.ess = ess_from_tau(q0sq.size(), d.tau_int_q0sq);
        diags[c] = d;
    };

    if (n_threads <= 1 || cfg.chain_count == 1) {
        for (int c = 0; c < cfg.chain_count; ++c) run_one(c);
    } else {
        std::vector<std::thread> workers;
        const int nw = std::min(n_threads, cfg.chain_count);
        for (int w = 0; w < nw; ++w)
            workers.emplace_back([&, w] {
                for (int c = w; c < cfg.chain_count; c += nw) run_one(c);
            });
        for (auto& t : workers) t.join();
    }

    SampleSet out;
    out.half_width = cfg.half_width;
    out.dt = cfg.dt;
    out.t_margin = cfg.t_margin;
    out.dim = m.dim;
    out.pinned = cfg.pinned || m.potential.kind == PotentialKind::Pinned;
    out.config_fingerprint = sampler_fingerprint(m, cfg);
    out.chains = std::move(diags);
    out.chain_offsets.push_back(0);
    for (int c = 0; c < cfg.chain_count; ++c) {
        for (auto& p : kept[c]) out.paths.push_back(std::move(p));
        out.chain_offsets.push_back(out.paths.size());
    }
    return out;
}

DiagnosticsReport diagnostics(const SampleSet& samples) {
    if (samples.size() < 100)
        throw std::runtime_error("diagnostics: need at least 100 samples");
    DiagnosticsReport rep;
    rep.chains = samples.chains;
    for (std::size_t c = 0; c + 1 < samples.chain_offsets.size(); ++c) {
        std::vector<double> q0sq;
        for (std::size_t i = samples.chain_offsets[c]; i < samples.chain_offsets[c + 1]; ++i)
            q0sq.push_back(q0_norm_sq(samples.paths[i]));
        if (c < rep.chains.size()) {
            rep.chains[c].tau_int_q0sq = samples.pinned ? 0.0 : tau_int_windowed(q0sq);
            rep.chains[c].ess = ess_from_tau(q0sq.size(), rep.chains[c].tau_int_q0sq);
            rep.chains[c].n_kept = static_cast<long>(q0sq.size());
        }
    }
    for (const auto& c : rep.chains) rep.total_ess += c.ess;
    return rep;
}

} // namespace nelsonmc
