#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptlab/sweep.hpp"

namespace ptlab {

// results.csv serialization. Doubles use %.17g so rows parse back bit-exact.
std::string results_csv_header();
std::string format_results_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_results_csv(const std::string& csv);

std::uint64_t fnv1a_hash(const std::string& data);

nlohmann::json build_summary(const ExperimentConfig& config,
                             const std::vector<RateReport>& rate_reports,
                             const nlohmann::json& extra, std::size_t row_count);

// Log-log scatter of per-cell medians plus the fitted line, as a plain SVG string.
std::string render_rate_svg(const std::vector<SweepRow>& rows, const ExperimentConfig& config,
                            const RateReport& report);

struct EmittedFiles {
    std::string results_csv;
    std::string summary_json;
    std::vector<std::string> plots;
};

// Writes results.csv, summary.json, and one plot_<axis>.svg per rate report.
EmittedFiles emit_report(const std::vector<SweepRow>& rows,
                         const std::vector<RateReport>& rate_reports,
                         const ExperimentConfig& config, const nlohmann::json& extra,
                         const std::string& out_dir);

}  // namespace ptlab
