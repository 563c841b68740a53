#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sdce/config.hpp"
#include "sdce/harness.hpp"
#include "sdce/market.hpp"
#include "sdce/pmir.hpp"
#include "sdce/welfare.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::string out_dir;
    std::string format;
    std::string scale;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int workers = 0;
    bool workers_given = false;
};

sdce::cfg::ExperimentConfig build_config(const CliOptions& opt) {
    sdce::cfg::ExperimentConfig config = opt.config_path.empty()
                                             ? sdce::cfg::default_config()
                                             : sdce::cfg::load_config(opt.config_path);
    if (!opt.scale.empty()) sdce::cfg::apply_scale(config, opt.scale);
    if (opt.seed_given) {
        config.run.seed = opt.seed;
        config.seeds = {opt.seed};
    }
    if (opt.workers_given) config.workers = opt.workers;
    if (!opt.out_dir.empty()) {
        config.out_dir = opt.out_dir;
    } else if (config.out_dir.empty()) {
        if (const char* env = std::getenv("SDCE_OUT_DIR")) config.out_dir = env;
    }
    if (!opt.format.empty()) config.format = opt.format;
    config.validate();
    return config;
}

std::string emit_by_format(const sdce::harness::SweepOutcome& outcome,
                           const std::string& format) {
    if (format == "jsonl") return sdce::harness::emit_jsonl(outcome);
    if (format == "text") return sdce::harness::emit_text(outcome);
    return sdce::harness::emit_csv(outcome);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

int print_checks(const std::vector<sdce::harness::CheckLine>& checks) {
    bool all_pass = true;
    for (const auto& c : checks) {
        std::printf("[%s] %-32s %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                    c.detail.c_str());
        all_pass = all_pass && c.pass;
    }
    return all_pass ? 0 : 1;
}

int cmd_simulate(const CliOptions& opt) {
    const sdce::cfg::ExperimentConfig config = build_config(opt);
    sdce::harness::SweepOutcome outcome;
    sdce::harness::SweepCell cell;
    char id[96];
    std::snprintf(id, sizeof id, "0000-%s-%s-s%llu",
                  config.run.forced_rho >= 0.0 ? "forced" : "endo",
                  sdce::welfare::to_string(config.policy.kind).c_str(),
                  static_cast<unsigned long long>(config.run.seed));
    cell.run_id = id;
    cell.forced_rho = config.run.forced_rho;
    cell.policy = sdce::welfare::to_string(config.policy.kind);
    cell.panel_seed = config.run.seed;
    cell.cell_seed = config.run.seed;
    outcome.cells.push_back(cell);
    outcome.records.push_back(sdce::harness::run_cell(config, cell));
    outcome.errors.push_back("");

    const std::string text = emit_by_format(outcome, config.format);
    std::fputs(text.c_str(), stdout);
    if (!config.out_dir.empty()) {
        std::filesystem::create_directories(config.out_dir);
        const std::string ext =
            config.format == "jsonl" ? ".jsonl" : config.format == "text" ? ".txt" : ".csv";
        write_text_file(
            (std::filesystem::path(config.out_dir) / ("simulate" + ext)).string(),
            text);
    }
    return 0;
}

int cmd_sweep(const CliOptions& opt) {
    sdce::cfg::ExperimentConfig config = build_config(opt);
    if (config.out_dir.empty())
        throw sdce::cfg::ConfigError(
            "sweep needs an output directory (--out or SDCE_OUT_DIR)");
    const sdce::harness::SweepOutcome outcome = sdce::harness::run_sweep(config);
    if (config.format != "csv") {
        const std::string ext = config.format == "jsonl" ? ".jsonl" : ".txt";
        write_text_file(
            (std::filesystem::path(config.out_dir) / ("results" + ext)).string(),
            emit_by_format(outcome, config.format));
    }
    int failures = 0;
    for (std::size_t i = 0; i < outcome.errors.size(); ++i) {
        if (outcome.errors[i].empty()) continue;
        ++failures;
        std::fprintf(stderr, "cell %s failed: %s\n", outcome.cells[i].run_id.c_str(),
                     outcome.errors[i].c_str());
    }
    std::printf("sweep: %zu cells, %d reused, %d failed, results in %s\n",
                outcome.cells.size(), outcome.skipped, failures,
                config.out_dir.c_str());
    return failures == 0 ? 0 : 1;
}

int cmd_replicate(const CliOptions& opt, const std::string& table) {
    CliOptions local = opt;
    if (local.scale.empty()) local.scale = "desk";
    const sdce::cfg::ExperimentConfig config = build_config(local);

    std::string rendered;
    std::vector<sdce::harness::CheckLine> checks;
    if (table == "scaling")
        checks = sdce::harness::replicate_scaling(config, &rendered);
    else if (table == "reduced_form")
        checks = sdce::harness::replicate_reduced_form(config, &rendered);
    else if (table == "policies")
        checks = sdce::harness::replicate_policies(config, &rendered);
    else if (table == "regimes")
        checks = sdce::harness::replicate_regimes(config, &rendered);
    else
        throw sdce::cfg::ConfigError(
            "unknown replication table '" + table +
            "' (expected scaling, regimes, policies, or reduced_form)");
    std::fputs(rendered.c_str(), stdout);
    if (!rendered.empty()) std::fputs("\n", stdout);
    return print_checks(checks);
}

int cmd_fit(const CliOptions& opt, const std::string& csv_path) {
    (void)opt;
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw sdce::cfg::ConfigError("cannot read " + csv_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::vector<sdce::harness::ResultRow> rows =
        sdce::harness::read_results_csv(ss.str());

    sdce::est::Dataset data;
    for (const auto& r : rows) {
        if (r.generation == 0) continue;
        sdce::est::Observation o;
        o.t = r.generation;
        o.rho = r.rho;
        o.outcome = r.quality_rel;
        data.rows.push_back(o);
    }
    if (data.rows.empty())
        throw sdce::cfg::ConfigError("no usable rows (generation >= 1) in " + csv_path);
    const sdce::est::FitResult fit = sdce::est::scaling_fit(data);
    std::printf("n=%zu\nslope=%.17g\nintercept=%.17g\nse_hac=%.17g\n"
                "r_squared=%.17g\nlag=%d\n",
                data.rows.size(), fit.slope, fit.intercept, fit.se_hac,
                fit.r_squared, fit.lag_used);
    return 0;
}

int cmd_policy(const CliOptions& opt, const std::string& kind_name) {
    const sdce::cfg::ExperimentConfig base = build_config(opt);
    sdce::welfare::PolicyConfig policy = base.policy;
    try {
        policy.kind = sdce::welfare::parse_policy_kind(kind_name);
    } catch (const std::invalid_argument& e) {
        throw sdce::cfg::ConfigError(e.what());
    }
    const sdce::welfare::PolicyEffect effect = sdce::welfare::apply_policy(policy);
    const sdce::meanfield::GaussianMeasure q{base.run.q0_mean, base.run.q0_std};
    const sdce::meanfield::GaussianMeasure p{base.run.target_mean, base.run.target_std};

    std::printf("policy=%s\n", sdce::welfare::to_string(policy.kind).c_str());
    std::printf("optimal_subsidy=%.17g\n",
                sdce::welfare::optimal_subsidy(q, p, policy.kappa));
    std::printf("optimal_watermark=%.17g\n",
                sdce::welfare::optimal_watermark(q, p, policy.kappa, policy.psi));
    std::printf("subsidy_rate=%.17g\n", effect.subsidy_rate(q, p, policy.kappa));
    std::printf("rho_elasticity_scale=%.17g\n", effect.rho_elasticity_scale);
    std::printf("price_cap=%.17g\n", effect.price_cap);
    std::printf("producer_transfer=%.17g\n", effect.producer_transfer);
    std::printf("psi=%.17g\n", effect.psi);
    return 0;
}

int cmd_calibrate(const CliOptions& opt) {
    const sdce::cfg::ExperimentConfig config = build_config(opt);
    std::fputs(sdce::cfg::canonical_text(config).c_str(), stdout);
    std::printf("fingerprint=%016llx\n",
                static_cast<unsigned long long>(sdce::cfg::fingerprint(config)));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"data-market training loop simulator and estimation toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    CliOptions opt;
    app.add_option("--config", opt.config_path, "configuration file (key = value lines)");
    auto* seed_opt = app.add_option("--seed", opt.seed, "override the run seed and seed panel");
    app.add_option("--out", opt.out_dir, "output directory (default: $SDCE_OUT_DIR)");
    app.add_option("--format", opt.format, "csv, jsonl, or text")
        ->check(CLI::IsMember({"csv", "jsonl", "text"}));
    auto* workers_opt = app.add_option("--workers", opt.workers, "sweep worker threads");
    app.add_option("--scale", opt.scale, "desk (8x2) or paper (1024x16)")
        ->check(CLI::IsMember({"desk", "paper"}));

    auto* simulate = app.add_subcommand("simulate", "run one configured trajectory");
    auto* sweep = app.add_subcommand("sweep", "run the configured cross product");
    auto* replicate =
        app.add_subcommand("replicate", "rebuild a result table and check its gates");
    std::string table;
    replicate->add_option("table", table, "scaling | regimes | policies | reduced_form")
        ->required();
    auto* fit = app.add_subcommand("fit", "decay-rate fit of a results file");
    std::string csv_path;
    fit->add_option("csv", csv_path, "results file produced by sweep or simulate")
        ->required();
    auto* policy = app.add_subcommand("policy", "closed-form quantities for one policy");
    std::string kind_name;
    policy->add_option("kind", kind_name,
                       "none | subsidy | disclosure | royalty_cap | transfer | watermark")
        ->required();
    auto* calibrate =
        app.add_subcommand("calibrate", "print the resolved configuration and fingerprint");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    opt.seed_given = seed_opt->count() > 0;
    opt.workers_given = workers_opt->count() > 0;

    try {
        if (simulate->parsed()) return cmd_simulate(opt);
        if (sweep->parsed()) return cmd_sweep(opt);
        if (replicate->parsed()) return cmd_replicate(opt, table);
        if (fit->parsed()) return cmd_fit(opt, csv_path);
        if (policy->parsed()) return cmd_policy(opt, kind_name);
        if (calibrate->parsed()) return cmd_calibrate(opt);
    } catch (const sdce::cfg::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
