// Command-line front end: configuration, orchestration and file-based
// input/output for the sampling/estimation pipeline.  Every output carries
// the config fingerprint; a fixed config and seed reproduce every byte.

#include "nelsonmc/archive.hpp"
#include "nelsonmc/model.hpp"
#include "nelsonmc/observables.hpp"
#include "nelsonmc/oracles.hpp"
#include "nelsonmc/pair_potential.hpp"
#include "nelsonmc/run_config.hpp"
#include "nelsonmc/sampler.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nelsonmc;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CliState {
    std::string config_path;
    std::string out_override;
    std::string archive_override;
    std::uint64_t seed_override = 0;
    bool seed_given = false;
    int threads = 2;
};

RunConfig load_config(const CliState& cli) {
    if (cli.config_path.empty()) throw ConfigError("missing --config <file>");
    RunConfig cfg = parse_config_file(cli.config_path);
    if (cli.seed_given) cfg.sampler.seed = cli.seed_override;
    if (!cli.out_override.empty()) cfg.out_dir = cli.out_override;
    cfg.validate();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << text;
    if (text.empty() || text.back() != '\n') out << "\n";
}

WTable build_table(const RunConfig& cfg) {
    const double tau_max = cfg.resolved_tau_max();
    const double r_max = cfg.resolved_table_r_max();
    int n_r = 0, n_tau = 0;
    auto_table_grid(cfg.model, r_max, tau_max, cfg.table_tol, n_r, n_tau);
    if (cfg.table_n_r > 0) n_r = cfg.table_n_r;
    if (cfg.table_n_tau > 0) n_tau = cfg.table_n_tau;
    return build_w_table(cfg.model, r_max, tau_max, n_r, n_tau, cfg.table_tol);
}

json constants_json(const RunConfig& cfg) {
    const ModelConstants c = compute_constants(cfg.model, cfg.quad_tol);
    json j;
    j["c_rho"] = c.ir_divergent ? "infinite" : json(c.c_rho);
    j["v_eff"] = c.v_eff;
    j["c1"] = c.c1;
    j["c2"] = c.c2;
    j["coupling_strength"] = c.coupling_strength;
    j["existence_integral"] = c.existence_integral;
    j["ir_divergent"] = c.ir_divergent;
    return j;
}

int cmd_check(const CliState& cli) {
    const RunConfig cfg = load_config(cli);
    const ConditionReport rep = check_conditions(cfg.model, cfg.quad_tol);
    json j;
    j["fingerprint"] = cfg.fingerprint();
    j["tool_version"] = kVersion;
    j["conditions"]["gc1"] = rep.gc1;
    j["conditions"]["gc2"] = rep.gc2;
    j["conditions"]["gc3_rho_over_sqrt_omega"] = rep.gc3_sqrt;
    j["conditions"]["gc3_rho_over_omega"] = rep.gc3_lin;
    j["conditions"]["i"] = rep.cond_i;
    j["conditions"]["ii_infrared"] = rep.cond_ii;
    j["conditions"]["iii"] = rep.cond_iii;
    j["conditions"]["iii_integral"] = rep.cond_iii_integral;
    j["conditions"]["sigma_infinite"] = rep.sigma_infinite;
    j["constants"] = constants_json(cfg);
    const std::string text = j.dump(2);
    write_text(fs::path(cfg.out_dir) / "check.json", text);
    std::cout << text << "\n";
    return 0;
}

int cmd_tabulate(const CliState& cli) {
    const RunConfig cfg = load_config(cli);
    const WTable table = build_table(cfg);
    const fs::path out = fs::path(cfg.out_dir) / "wtable.csv";
    fs::create_directories(cfg.out_dir);
    write_w_table_csv(table, out.string());
    std::cout << "wrote " << out.string() << " (" << table.n_r << "x" << table.n_tau
              << " grid, tau_max=" << table.tau_max
              << ", negative_everywhere=" << table.w_negative_everywhere << ")\n";
    return 0;
}

json diagnostics_json(const RunConfig& cfg, const SampleSet& samples) {
    json j;
    j["fingerprint"] = cfg.fingerprint();
    j["tool_version"] = kVersion;
    j["n_paths"] = samples.paths.size();
    j["total_ess"] = samples.total_ess();
    json chains = json::array();
    for (const auto& c : samples.chains) {
        chains.push_back({{"accept_bead", c.accept_bead},
                          {"accept_block", c.accept_block},
                          {"accept_shift", c.accept_shift},
                          {"tau_int_q0sq", c.tau_int_q0sq},
                          {"ess", c.ess},
                          {"n_kept", c.n_kept}});
    }
    j["chains"] = chains;
    return j;
}

SampleSet sample_paths(const RunConfig& cfg, const WTable& table, int threads) {
    SampleSet samples = run_chains(cfg.model, table, cfg.sampler, threads);
    samples.config_fingerprint = cfg.fingerprint();
    return samples;
}

int cmd_sample(const CliState& cli) {
    const RunConfig cfg = load_config(cli);
    const WTable table = build_table(cfg);
    const SampleSet samples = sample_paths(cfg, table, cli.threads);
    fs::create_directories(cfg.out_dir);
    const fs::path archive = cli.archive_override.empty()
                                 ? fs::path(cfg.out_dir) / "paths.bin"
                                 : fs::path(cli.archive_override);
    write_archive(samples, archive.string());
    write_text(fs::path(cfg.out_dir) / "diagnostics.json", diagnostics_json(cfg, samples).dump(2));
    std::cout << "wrote " << archive.string() << " (" << samples.paths.size()
              << " paths, total ESS " << samples.total_ess() << ")\n";
    return 0;
}

std::vector<MomentumBin> momentum_bins(const RunConfig& cfg) {
    const FormFactor& ff = cfg.model.form_factor;
    double lo = cfg.momentum_k_lo > 0.0 ? cfg.momentum_k_lo : ff.kappa_ir;
    double hi = cfg.momentum_k_hi > 0.0 ? cfg.momentum_k_hi : ff.support_max(1e-12);
    std::vector<MomentumBin> bins(cfg.momentum_bins);
    for (int b = 0; b < cfg.momentum_bins; ++b) {
        bins[b].k_lo = lo + (hi - lo) * b / cfg.momentum_bins;
        bins[b].k_hi = lo + (hi - lo) * (b + 1) / cfg.momentum_bins;
    }
    return bins;
}

int cmd_estimate(const CliState& cli) {
    const RunConfig cfg = load_config(cli);
    const WTable table = build_table(cfg);
    const fs::path archive = cli.archive_override.empty()
                                 ? fs::path(cfg.out_dir) / "paths.bin"
                                 : fs::path(cli.archive_override);
    SampleSet samples;
    if (fs::exists(archive)) {
        samples = read_archive(archive.string());
        if (samples.config_fingerprint != cfg.fingerprint())
            throw std::runtime_error("estimate: archive fingerprint " +
                                     samples.config_fingerprint +
                                     " does not match config fingerprint " + cfg.fingerprint());
    } else {
        samples = sample_paths(cfg, table, cli.threads);
        fs::create_directories(cfg.out_dir);
        write_archive(samples, archive.string());
        write_text(fs::path(cfg.out_dir) / "diagnostics.json",
                   diagnostics_json(cfg, samples).dump(2));
    }

    const EstimationContext ctx(samples, cfg.model, table, cfg.quad_tol, cli.threads);
    const fs::path rep_dir = fs::path(cfg.out_dir) / "reports";
    fs::create_directories(rep_dir);

    const ObservableReport pn = estimate_pn(ctx, cfg.n_max);
    write_report_json(pn, (rep_dir / "boson_number.json").string());
    write_pn_csv(pn, (fs::path(cfg.out_dir) / "pn.csv").string());

    const std::vector<MomentumBin> bins = momentum_bins(cfg);
    const MomentumDensityResult momentum = estimate_momentum_density(ctx, bins);
    write_report_json(momentum.report, (rep_dir / "momentum_density.json").string());
    write_momentum_csv(momentum.report, (fs::path(cfg.out_dir) / "nk.csv").string());

    const ObservableReport mean_n = estimate_mean_boson_number(ctx, cfg.n_max, &momentum);
    write_report_json(mean_n, (rep_dir / "mean_boson_number.json").string());

    std::vector<double> k_values;
    for (const auto& b : bins) k_values.push_back(b.k_center());
    write_report_json(estimate_field_mean(ctx, k_values),
                      (rep_dir / "field_mean.json").string());
    write_report_json(estimate_mgf(ctx, cfg.mgf_betas), (rep_dir / "field_mgf.json").string());
    write_report_json(estimate_field_variance(ctx),
                      (rep_dir / "field_variance.json").string());

    const DensityHistogram hist = estimate_particle_density(ctx, cfg.density_bins);
    write_density_csv(hist, (fs::path(cfg.out_dir) / "chi.csv").string());
    json jfit;
    jfit["fingerprint"] = cfg.fingerprint();
    try {
        const DecayFit fit = fit_decay(hist);
        jfit["amplitude"] = fit.amplitude;
        jfit["delta"] = fit.delta;
        jfit["p"] = fit.p;
        jfit["residual"] = fit.residual;
        jfit["bins_used"] = fit.bins_used;
    } catch (const std::exception& e) {
        jfit["fit_refused"] = e.what();
    }
    write_text(fs::path(cfg.out_dir) / "decay_fit.json", jfit.dump(2));

    if (!samples.pinned || cfg.model.form_factor.amplitude != 0.0) {
        PositionRegion region;
        region.ball_radius = cfg.ball_radius;
        write_report_json(estimate_position_boson_density(ctx, region),
                          (rep_dir / "position_density.json").string());
    }

    std::cout << "wrote reports to " << rep_dir.string() << "\n";
    return 0;
}

int cmd_verify(const CliState& cli) {
    const RunConfig cfg = load_config(cli);
    const fs::path rep_dir = fs::path(cfg.out_dir) / "reports";
    std::vector<fs::path> files;
    if (fs::is_directory(rep_dir))
        for (const auto& entry : fs::directory_iterator(rep_dir))
            if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("verify: no reports found under " + rep_dir.string());

    std::vector<ObservableReport> reports;
    for (const auto& f : files) reports.push_back(read_report_json(f.string()));
    const BoundLedger ledger = verify_bounds(reports, cfg.z_threshold);
    const std::string text = ledger_to_json(ledger);
    write_text(fs::path(cfg.out_dir) / "ledger.json", text);
    std::cout << text << "\n";
    return ledger.overall_pass ? 0 : 1;
}

int cmd_oracle(const CliState& cli) {
    const RunConfig cfg = load_config(cli);
    json j;
    j["fingerprint"] = cfg.fingerprint();
    j["tool_version"] = kVersion;
    const ModelConstants consts = compute_constants(cfg.model, cfg.quad_tol);
    if (!consts.ir_divergent) {
        std::vector<double> ks;
        for (const auto& b : momentum_bins(cfg)) ks.push_back(b.k_center());
        j["pinned"] = json::parse(
            predictions_to_json(pinned_predictions(cfg.model, cfg.n_max, ks, cfg.quad_tol)));
    }
    if (cfg.model.form_factor.amplitude == 0.0)
        j["zero_coupling"] =
            json::parse(predictions_to_json(zero_coupling_predictions(cfg.model, cfg.quad_tol)));
    const std::string text = j.dump(2);
    write_text(fs::path(cfg.out_dir) / "oracle.json", text);
    std::cout << text << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"path-integral Monte Carlo for a trapped particle coupled to a scalar Bose field"};
    app.set_version_flag("--version", kVersion);
    CliState cli;
    app.add_option("--config", cli.config_path, "run configuration file (JSON)");
    app.add_option("--out", cli.out_override, "output directory override");
    app.add_option("--archive", cli.archive_override, "path archive override");
    auto* seed_opt = app.add_option("--seed", cli.seed_override, "global seed override");
    app.add_option("--threads", cli.threads, "worker threads for chains/estimators");
    app.require_subcommand(1);
    auto* c1 = app.add_subcommand("check", "conditions and constants report");
    auto* c2 = app.add_subcommand("tabulate-w", "build and export the W table as CSV");
    auto* c3 = app.add_subcommand("sample", "run the chains and write the path archive");
    auto* c4 = app.add_subcommand("estimate", "estimate observables from a path archive");
    auto* c5 = app.add_subcommand("verify", "aggregate bound checks; exit 0 iff all pass");
    auto* c6 = app.add_subcommand("oracle", "closed-form prediction set as JSON");

    CLI11_PARSE(app, argc, argv);
    cli.seed_given = seed_opt->count() > 0;

    try {
        if (c1->parsed()) return cmd_check(cli);
        if (c2->parsed()) return cmd_tabulate(cli);
        if (c3->parsed()) return cmd_sample(cli);
        if (c4->parsed()) return cmd_estimate(cli);
        if (c5->parsed()) return cmd_verify(cli);
        if (c6->parsed()) return cmd_oracle(cli);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
