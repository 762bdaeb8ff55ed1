#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "ptlab/counterexample.hpp"
#include "ptlab/report.hpp"
#include "ptlab/sweep.hpp"
#include "ptlab/verify.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::int64_t trials = 0;
    int jobs = -1;
    std::int64_t mc_count = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
    auto* opt = cmd->add_option("--config", flags.config_path, "experiment config (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--out", flags.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", flags.seed, "master seed (overrides config)")
        ->each([&flags](const std::string&) { flags.seed_set = true; });
    cmd->add_option("--trials", flags.trials, "trials per cell (overrides config)");
    cmd->add_option("--jobs", flags.jobs, "worker threads, 0 = all (overrides config)");
    cmd->add_option("--mc-count", flags.mc_count, "Monte-Carlo draws for risk estimates");
}

ptlab::ExperimentConfig load_with_overrides(const CommonFlags& flags,
                                            ptlab::Instantiation expected) {
    ptlab::ExperimentConfig config = ptlab::load_config_file(flags.config_path);
    if (config.instantiation != expected)
        throw std::runtime_error("config instantiation does not match the subcommand");
    if (flags.seed_set) config.master_seed = flags.seed;
    if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
    if (flags.trials > 0) config.trials = flags.trials;
    if (flags.jobs >= 0) config.jobs = flags.jobs;
    if (flags.mc_count > 0) config.mc_count = flags.mc_count;
    return config;
}

int run_experiment(const ptlab::ExperimentConfig& config) {
    const ptlab::SweepOutput out = ptlab::run_sweep(config);
    std::vector<ptlab::RateReport> reports;
    for (const ptlab::RateCheck& check : config.rate_checks)
        reports.push_back(ptlab::fit_rate(out.rows, config, check));
    const ptlab::EmittedFiles files =
        ptlab::emit_report(out.rows, reports, config, out.extra, config.out_dir);
    std::cout << "wrote " << files.results_csv << " (" << out.rows.size() << " rows)\n";
    bool ok = true;
    for (const ptlab::RateReport& report : reports) {
        if (report.error.empty()) {
            std::printf("rate[%s]: slope=%.4f (se %.4f, %d points) target %.2f+-%.2f -> %s\n",
                        report.axis.c_str(), report.slope, report.slope_std_error,
                        report.points_used, report.target, report.tolerance,
                        report.pass ? "pass" : "FAIL");
        } else {
            std::printf("rate[%s]: %s -> FAIL\n", report.axis.c_str(), report.error.c_str());
        }
        ok = ok && report.pass;
    }
    if (out.extra.contains("threshold_met")) {
        const bool met = out.extra["threshold_met"].get<bool>();
        std::printf("failure frequency %.5f (se %.5f) vs constant %.5f -> %s\n",
                    out.extra["failure_frequency"].get<double>(),
                    out.extra["failure_std_error"].get<double>(),
                    out.extra["failure_constant"].get<double>(), met ? "pass" : "FAIL");
        ok = ok && met;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-phase pretraining benchmark harness"};
    app.require_subcommand(1);

    CommonFlags factor_flags, gmm_flags, contrastive_flags, counter_flags, report_flags;
    auto* factor_cmd = app.add_subcommand("factor", "factor-model sweep");
    add_common(factor_cmd, factor_flags, true);
    auto* gmm_cmd = app.add_subcommand("gmm", "Gaussian-mixture sweep");
    add_common(gmm_cmd, gmm_flags, true);
    auto* contrastive_cmd = app.add_subcommand("contrastive", "contrastive-pair sweep");
    add_common(contrastive_cmd, contrastive_flags, true);
    auto* counter_cmd = app.add_subcommand("counterexample", "two-phase-MLE failure runs");
    add_common(counter_cmd, counter_flags, true);

    CommonFlags verify_flags;
    int verify_factor_instances = 100, verify_gmm_instances = 50, verify_contrastive_instances = 50;
    std::string verify_family = "all";
    auto* verify_cmd = app.add_subcommand("verify", "informativeness inequality suites");
    verify_cmd->add_option("--family", verify_family, "all|factor|gmm|contrastive");
    verify_cmd->add_option("--factor-instances", verify_factor_instances, "");
    verify_cmd->add_option("--gmm-instances", verify_gmm_instances, "");
    verify_cmd->add_option("--contrastive-instances", verify_contrastive_instances, "");
    add_common(verify_cmd, verify_flags, false);

    auto* report_cmd = app.add_subcommand("report", "re-fit rates from an existing results.csv");
    add_common(report_cmd, report_flags, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (factor_cmd->parsed())
            return run_experiment(load_with_overrides(factor_flags, ptlab::Instantiation::factor));
        if (gmm_cmd->parsed())
            return run_experiment(load_with_overrides(gmm_flags, ptlab::Instantiation::gmm));
        if (contrastive_cmd->parsed())
            return run_experiment(
                load_with_overrides(contrastive_flags, ptlab::Instantiation::contrastive));
        if (counter_cmd->parsed())
            return run_experiment(
                load_with_overrides(counter_flags, ptlab::Instantiation::counterexample));

        if (verify_cmd->parsed()) {
            ptlab::VerifySuiteConfig config;
            if (verify_flags.seed_set) config.seed = verify_flags.seed;
            if (verify_flags.jobs >= 0) config.jobs = verify_flags.jobs;
            if (verify_flags.mc_count > 0) config.mc_count = verify_flags.mc_count;
            config.factor_instances = verify_family == "all" || verify_family == "factor"
                                          ? verify_factor_instances
                                          : 0;
            config.gmm_instances =
                verify_family == "all" || verify_family == "gmm" ? verify_gmm_instances : 0;
            config.contrastive_instances = verify_family == "all" || verify_family == "contrastive"
                                               ? verify_contrastive_instances
                                               : 0;
            const ptlab::VerifySuiteReport report = ptlab::run_verification_suite(config);
            auto line = [](const char* name, const std::vector<ptlab::VerifyItem>& items) {
                int held = 0;
                double max_ratio = 0.0;
                for (const auto& item : items) {
                    held += item.holds && item.precondition_ok;
                    max_ratio = std::max(max_ratio, item.ratio);
                }
                std::printf("%s: %d/%zu hold, max lhs/rhs ratio %.4g\n", name, held, items.size(),
                            max_ratio);
            };
            line("factor", report.factor);
            line("gmm", report.gmm);
            line("contrastive", report.contrastive);
            if (!verify_flags.out_dir.empty()) {
                std::filesystem::create_directories(verify_flags.out_dir);
                std::ofstream out(std::filesystem::path(verify_flags.out_dir) /
                                  "verify_summary.json");
                out << report.to_json().dump(2) << "\n";
            }
            return report.all_hold() ? 0 : 1;
        }

        if (report_cmd->parsed()) {
            ptlab::ExperimentConfig config = ptlab::load_config_file(report_flags.config_path);
            if (!report_flags.out_dir.empty()) config.out_dir = report_flags.out_dir;
            const std::string csv_path =
                (std::filesystem::path(config.out_dir) / "results.csv").string();
            std::ifstream in(csv_path, std::ios::binary);
            if (!in) throw std::runtime_error("report: cannot open " + csv_path);
            std::string csv((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            const std::vector<ptlab::SweepRow> rows = ptlab::parse_results_csv(csv);
            std::vector<ptlab::RateReport> reports;
            bool ok = true;
            for (const ptlab::RateCheck& check : config.rate_checks) {
                reports.push_back(ptlab::fit_rate(rows, config, check));
                ok = ok && reports.back().pass;
            }
            ptlab::emit_report(rows, reports, config, nlohmann::json(), config.out_dir);
            std::cout << "refit " << reports.size() << " rate checks over " << rows.size()
                      << " rows\n";
            return ok || reports.empty() ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
