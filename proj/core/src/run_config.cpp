#include "nelsonmc/run_config.hpp"

#include "nelsonmc/pair_potential.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace nelsonmc {

using nlohmann::json;

namespace {

// duplicate-key detection during parsing (nlohmann keeps the last value
// silently otherwise)
json parse_checked(const std::string& text) {
    std::vector<std::set<std::string>> key_stack;
    auto cb = [&](int /*depth*/, json::parse_event_t event, json& parsed) {
        switch (event) {
            case json::parse_event_t::object_start:
                key_stack.emplace_back();
                break;
            case json::parse_event_t::object_end:
                key_stack.pop_back();
                break;
            case json::parse_event_t::key: {
                const std::string key = parsed.get<std::string>();
                if (!key_stack.back().insert(key).second)
                    throw ConfigError("config parse error: duplicate key '" + key + "'");
                break;
            }
            default:
                break;
        }
        return true;
    };
    try {
        return json::parse(text, cb);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
}

void reject_unknown(const json& obj, const std::string& section,
                    const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("config validation error: unknown key '" + section + "." +
                              it.key() + "'");
}

template <typename T>
void read_to(const json& obj, const char* key, T& target) {
    if (obj.contains(key)) target = obj.at(key).get<T>();
}

} // namespace

void RunConfig::validate() const {
    const FormFactor& ff = model.form_factor;
    if (model.dim != 1 && model.dim != 3)
        throw ConfigError("config validation error: model.dim must be 1 or 3");
    if (ff.kappa_ir < 0.0)
        throw ConfigError("config validation error: form_factor.kappa_ir must be >= 0");
    if (!(ff.k_uv > ff.kappa_ir))
        throw ConfigError("config validation error: form_factor.k_uv must exceed kappa_ir");
    if (ff.amplitude < 0.0)
        throw ConfigError("config validation error: form_factor.amplitude must be >= 0");
    if (ff.profile == Profile::Gaussian && !(ff.gauss_scale > 0.0))
        throw ConfigError("config validation error: form_factor.gauss_scale must be > 0");
    if (model.dispersion.mass < 0.0)
        throw ConfigError("config validation error: dispersion.mass must be >= 0");
    if (model.potential.kind == PotentialKind::Harmonic && !(model.potential.stiffness > 0.0))
        throw ConfigError("config validation error: potential.stiffness must be > 0");
    try {
        sampler.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config validation error: ") + e.what());
    }
    if (n_max < 0) throw ConfigError("config validation error: observables.n_max must be >= 0");
    if (momentum_bins < 1 || density_bins < 1)
        throw ConfigError("config validation error: bin counts must be >= 1");
    if (!(quad_tol > 0.0) || !(table_tol > 0.0))
        throw ConfigError("config validation error: tolerances must be positive");
    if (!(z_threshold > 0.0))
        throw ConfigError("config validation error: z_threshold must be positive");
    if (!(ball_radius > 0.0))
        throw ConfigError("config validation error: observables.ball_radius must be > 0");
}

double RunConfig::resolved_table_r_max() const {
    if (table_r_max > 0.0) return table_r_max;
    // 10x the trap length scale; pinned paths never leave the origin
    if (model.potential.kind == PotentialKind::Harmonic)
        return 10.0 / std::sqrt(2.0 * model.potential.stiffness);
    return 10.0;
}

double RunConfig::resolved_tau_max(double quad_tol_override) const {
    const double tol = quad_tol_override > 0.0 ? quad_tol_override : quad_tol;
    if (sampler.tau_max > 0.0) return sampler.tau_max;
    const ModelConstants c = compute_constants(model, tol);
    const double cap = 2.0 * sampler.half_width;
    if (model.form_factor.amplitude == 0.0 || c.ir_divergent || !(c.c_rho > 0.0))
        return std::min(1.0, cap);
    return choose_tau_max(model, sampler.eps_tail_rel * c.c_rho, cap, tol);
}

namespace {

json to_canonical(const RunConfig& c) {
    json j;
    j["model"]["dim"] = c.model.dim;
    j["model"]["dispersion"]["mass"] = c.model.dispersion.mass;
    j["model"]["form_factor"]["profile"] =
        c.model.form_factor.profile == Profile::Shell ? "shell" : "gaussian";
    j["model"]["form_factor"]["amplitude"] = c.model.form_factor.amplitude;
    j["model"]["form_factor"]["kappa_ir"] = c.model.form_factor.kappa_ir;
    j["model"]["form_factor"]["k_uv"] = c.model.form_factor.k_uv;
    j["model"]["form_factor"]["gauss_scale"] = c.model.form_factor.gauss_scale;
    const char* kind = "harmonic";
    if (c.model.potential.kind == PotentialKind::Pinned) kind = "pinned";
    if (c.model.potential.kind == PotentialKind::General) kind = "general";
    j["model"]["potential"]["kind"] = kind;
    j["model"]["potential"]["stiffness"] = c.model.potential.stiffness;

    j["sampler"]["half_width"] = c.sampler.half_width;
    j["sampler"]["dt"] = c.sampler.dt;
    j["sampler"]["tau_max"] = c.sampler.tau_max;
    j["sampler"]["eps_tail_rel"] = c.sampler.eps_tail_rel;
    j["sampler"]["chains"] = c.sampler.chain_count;
    j["sampler"]["burnin_sweeps"] = c.sampler.burnin_sweeps;
    j["sampler"]["sweeps"] = c.sampler.sweeps;
    j["sampler"]["thinning"] = c.sampler.thinning;
    j["sampler"]["seed"] = c.sampler.seed;
    j["sampler"]["t_margin"] = c.sampler.t_margin;
    j["sampler"]["pinned"] = c.sampler.pinned;
    j["sampler"]["proposal"]["bead"] = c.sampler.proposal.bead;
    j["sampler"]["proposal"]["block"] = c.sampler.proposal.block;
    j["sampler"]["proposal"]["shift"] = c.sampler.proposal.shift;
    j["sampler"]["proposal"]["block_len"] = c.sampler.proposal.block_len;
    j["sampler"]["proposal"]["bead_step"] = c.sampler.proposal.bead_step;
    j["sampler"]["proposal"]["shift_step"] = c.sampler.proposal.shift_step;

    j["observables"]["n_max"] = c.n_max;
    j["observables"]["momentum_bins"] = c.momentum_bins;
    j["observables"]["momentum_k_lo"] = c.momentum_k_lo;
    j["observables"]["momentum_k_hi"] = c.momentum_k_hi;
    j["observables"]["density_bins"] = c.density_bins;
    j["observables"]["mgf_betas"] = c.mgf_betas;
    j["observables"]["ball_radius"] = c.ball_radius;

    j["table"]["r_max"] = c.table_r_max;
    j["table"]["n_r"] = c.table_n_r;
    j["table"]["n_tau"] = c.table_n_tau;

    j["tolerances"]["quad_tol"] = c.quad_tol;
    j["tolerances"]["table_tol"] = c.table_tol;
    j["tolerances"]["z_threshold"] = c.z_threshold;

    j["output"]["dir"] = c.out_dir;
    return j;
}

} // namespace

std::string RunConfig::canonical_json() const { return to_canonical(*this).dump(2); }

std::string RunConfig::fingerprint() const {
    const std::string canon = to_canonical(*this).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : canon) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    char out[32];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

RunConfig parse_config_string(const std::string& text) {
    const json j = parse_checked(text);
    RunConfig cfg;

    reject_unknown(j, "", {"model", "sampler", "observables", "table", "tolerances", "output"});

    if (j.contains("model")) {
        const json& jm = j.at("model");
        reject_unknown(jm, "model", {"dim", "dispersion", "form_factor", "potential"});
        read_to(jm, "dim", cfg.model.dim);
        if (jm.contains("dispersion")) {
            reject_unknown(jm.at("dispersion"), "model.dispersion", {"mass"});
            read_to(jm.at("dispersion"), "mass", cfg.model.dispersion.mass);
        }
        if (jm.contains("form_factor")) {
            const json& jf = jm.at("form_factor");
            reject_unknown(jf, "model.form_factor",
                           {"profile", "amplitude", "kappa_ir", "k_uv", "gauss_scale"});
            if (jf.contains("profile")) {
                const std::string p = jf.at("profile").get<std::string>();
                if (p == "shell") cfg.model.form_factor.profile = Profile::Shell;
                else if (p == "gaussian") cfg.model.form_factor.profile = Profile::Gaussian;
                else throw ConfigError("config validation error: unknown profile '" + p + "'");
            }
            read_to(jf, "amplitude", cfg.model.form_factor.amplitude);
            read_to(jf, "kappa_ir", cfg.model.form_factor.kappa_ir);
            read_to(jf, "k_uv", cfg.model.form_factor.k_uv);
            read_to(jf, "gauss_scale", cfg.model.form_factor.gauss_scale);
        }
        if (jm.contains("potential")) {
            const json& jp = jm.at("potential");
            reject_unknown(jp, "model.potential", {"kind", "stiffness"});
            if (jp.contains("kind")) {
                const std::string k = jp.at("kind").get<std::string>();
                if (k == "harmonic") cfg.model.potential.kind = PotentialKind::Harmonic;
                else if (k == "pinned") cfg.model.potential.kind = PotentialKind::Pinned;
                else
                    throw ConfigError("config validation error: potential kind '" + k +
                                      "' not available from config files (general V is a "
                                      "library-level interface)");
            }
            read_to(jp, "stiffness", cfg.model.potential.stiffness);
        }
    }

    if (j.contains("sampler")) {
        const json& js = j.at("sampler");
        reject_unknown(js, "sampler",
                       {"half_width", "dt", "tau_max", "eps_tail_rel", "chains",
                        "burnin_sweeps", "sweeps", "thinning", "seed", "t_margin", "pinned",
                        "proposal"});
        read_to(js, "half_width", cfg.sampler.half_width);
        read_to(js, "dt", cfg.sampler.dt);
        read_to(js, "tau_max", cfg.sampler.tau_max);
        read_to(js, "eps_tail_rel", cfg.sampler.eps_tail_rel);
        read_to(js, "chains", cfg.sampler.chain_count);
        read_to(js, "burnin_sweeps", cfg.sampler.burnin_sweeps);
        read_to(js, "sweeps", cfg.sampler.sweeps);
        read_to(js, "thinning", cfg.sampler.thinning);
        read_to(js, "seed", cfg.sampler.seed);
        read_to(js, "t_margin", cfg.sampler.t_margin);
        read_to(js, "pinned", cfg.sampler.pinned);
        if (js.contains("proposal")) {
            const json& jp = js.at("proposal");
            reject_unknown(jp, "sampler.proposal",
                           {"bead", "block", "shift", "block_len", "bead_step", "shift_step"});
            read_to(jp, "bead", cfg.sampler.proposal.bead);
            read_to(jp, "block", cfg.sampler.proposal.block);
            read_to(jp, "shift", cfg.sampler.proposal.shift);
            read_to(jp, "block_len", cfg.sampler.proposal.block_len);
            read_to(jp, "bead_step", cfg.sampler.proposal.bead_step);
            read_to(jp, "shift_step", cfg.sampler.proposal.shift_step);
        }
    }

    if (j.contains("observables")) {
        const json& jo = j.at("observables");
        reject_unknown(jo, "observables",
                       {"n_max", "momentum_bins", "momentum_k_lo", "momentum_k_hi",
                        "density_bins", "mgf_betas", "ball_radius"});
        read_to(jo, "n_max", cfg.n_max);
        read_to(jo, "momentum_bins", cfg.momentum_bins);
        read_to(jo, "momentum_k_lo", cfg.momentum_k_lo);
        read_to(jo, "momentum_k_hi", cfg.momentum_k_hi);
        read_to(jo, "density_bins", cfg.density_bins);
        read_to(jo, "mgf_betas", cfg.mgf_betas);
        read_to(jo, "ball_radius", cfg.ball_radius);
    }

    if (j.contains("table")) {
        const json& jt = j.at("table");
        reject_unknown(jt, "table", {"r_max", "n_r", "n_tau"});
        read_to(jt, "r_max", cfg.table_r_max);
        read_to(jt, "n_r", cfg.table_n_r);
        read_to(jt, "n_tau", cfg.table_n_tau);
    }

    if (j.contains("tolerances")) {
        const json& jt = j.at("tolerances");
        reject_unknown(jt, "tolerances", {"quad_tol", "table_tol", "z_threshold"});
        read_to(jt, "quad_tol", cfg.quad_tol);
        read_to(jt, "table_tol", cfg.table_tol);
        read_to(jt, "z_threshold", cfg.z_threshold);
    }

    if (j.contains("output")) {
        reject_unknown(j.at("output"), "output", {"dir"});
        read_to(j.at("output"), "dir", cfg.out_dir);
    }

    cfg.validate();
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config parse error: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_string(ss.str());
}

} // namespace nelsonmc
