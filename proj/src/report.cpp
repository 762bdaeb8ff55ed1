#include "ptlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ptlab {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_double(const std::string& s, const char* what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(std::string("results.csv: bad ") + what + " value '" + s + "'");
    }
}

std::int64_t parse_int(const std::string& s, const char* what) {
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(std::string("results.csv: bad ") + what + " value '" + s + "'");
    }
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

std::string results_csv_header() {
    return "experiment_id,instantiation,method,m,n,d,r_or_k,trial,seed,excess_risk,"
           "excess_risk_se,aux_tv,aux_align_residual,failed";
}

std::string format_results_csv(const std::vector<SweepRow>& rows) {
    std::string out = results_csv_header() + "\n";
    for (const SweepRow& row : rows) {
        out += row.experiment_id + ',' + row.instantiation + ',' + row.method + ',';
        out += std::to_string(row.m) + ',' + std::to_string(row.n) + ',';
        out += std::to_string(row.d) + ',' + std::to_string(row.r_or_k) + ',';
        out += std::to_string(row.trial) + ',' + std::to_string(row.seed) + ',';
        out += fmt_double(row.excess_risk) + ',' + fmt_double(row.excess_risk_se) + ',';
        out += fmt_double(row.aux_tv) + ',' + fmt_double(row.aux_align_residual) + ',';
        out += std::to_string(row.failed) + '\n';
    }
    return out;
}

std::vector<SweepRow> parse_results_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("results.csv: empty document");
    if (line != results_csv_header()) throw std::runtime_error("results.csv: unexpected header");
    std::vector<SweepRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_line(line);
        if (f.size() != 14)
            throw std::runtime_error("results.csv: expected 14 fields, got " +
                                     std::to_string(f.size()));
        SweepRow row;
        row.experiment_id = f[0];
        row.instantiation = f[1];
        row.method = f[2];
        row.m = parse_int(f[3], "m");
        row.n = parse_int(f[4], "n");
        row.d = parse_int(f[5], "d");
        row.r_or_k = parse_int(f[6], "r_or_k");
        row.trial = parse_int(f[7], "trial");
        row.seed = static_cast<std::uint64_t>(parse_int(f[8], "seed"));
        row.excess_risk = parse_double(f[9], "excess_risk");
        row.excess_risk_se = parse_double(f[10], "excess_risk_se");
        row.aux_tv = parse_double(f[11], "aux_tv");
        row.aux_align_residual = parse_double(f[12], "aux_align_residual");
        row.failed = static_cast<int>(parse_int(f[13], "failed"));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::uint64_t fnv1a_hash(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

nlohmann::json build_summary(const ExperimentConfig& config,
                             const std::vector<RateReport>& rate_reports,
                             const nlohmann::json& extra, std::size_t row_count) {
    nlohmann::json summary;
    const nlohmann::json config_echo = config_to_json(config);
    summary["config"] = config_echo;
    summary["master_seed"] = config.master_seed;
    summary["config_hash"] = fnv1a_hash(config_echo.dump());
    summary["row_count"] = row_count;
    nlohmann::json reports = nlohmann::json::array();
    bool all_pass = true;
    for (const RateReport& r : rate_reports) {
        nlohmann::json item;
        item["axis"] = r.axis;
        item["slope"] = r.slope;
        item["slope_std_error"] = r.slope_std_error;
        item["points_used"] = r.points_used;
        item["target"] = r.target;
        item["tolerance"] = r.tolerance;
        item["pass"] = r.pass;
        if (!r.error.empty()) item["error"] = r.error;
        reports.push_back(item);
        all_pass = all_pass && r.pass;
    }
    summary["rate_reports"] = reports;
    if (!extra.is_null()) {
        summary["extra"] = extra;
        if (extra.contains("threshold_met")) all_pass = all_pass && extra["threshold_met"].get<bool>();
    }
    summary["all_checks_pass"] = all_pass;
    return summary;
}

std::string render_rate_svg(const std::vector<SweepRow>& rows, const ExperimentConfig& config,
                            const RateReport& report) {
    const bool axis_is_m = report.axis == "m";
    const auto& other_values = axis_is_m ? config.n_values : config.m_values;
    std::map<std::int64_t, std::vector<double>> cells;
    if (!other_values.empty()) {
        const std::int64_t other_max = *std::max_element(other_values.begin(), other_values.end());
        for (const SweepRow& row : rows) {
            if (row.method != "pipeline" || row.failed) continue;
            if ((axis_is_m ? row.n : row.m) != other_max) continue;
            cells[axis_is_m ? row.m : row.n].push_back(row.excess_risk);
        }
    }
    std::vector<std::pair<double, double>> points;
    for (auto& [value, risks] : cells) {
        const double med = median_of(risks);
        if (med > 0.0) points.emplace_back(std::log10(static_cast<double>(value)), std::log10(med));
    }

    const int width = 640, height = 480, margin = 60;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << margin << "\" y=\"24\" font-family=\"monospace\" font-size=\"14\">"
        << config.experiment_id << ": median excess risk vs " << report.axis
        << " (log-log), slope=" << report.slope << "</text>\n";
    if (points.size() >= 2) {
        double x_lo = points.front().first, x_hi = points.back().first;
        double y_lo = points.front().second, y_hi = y_lo;
        for (const auto& [x, y] : points) {
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
        }
        if (x_hi == x_lo) x_hi = x_lo + 1;
        if (y_hi == y_lo) y_hi = y_lo + 1;
        auto px = [&](double x) {
            return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin);
        };
        auto py = [&](double y) {
            return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin);
        };
        svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
            << width - margin << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
        svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
            << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
        // Fitted line through the mean point with the fitted slope (base-10 logs
        // shift both axes by the same factor, so the slope is unchanged).
        double mx = 0.0, my = 0.0;
        for (const auto& [x, y] : points) {
            mx += x;
            my += y;
        }
        mx /= static_cast<double>(points.size());
        my /= static_cast<double>(points.size());
        const double yl = my + report.slope * (x_lo - mx);
        const double yr = my + report.slope * (x_hi - mx);
        svg << "<line x1=\"" << px(x_lo) << "\" y1=\"" << py(yl) << "\" x2=\"" << px(x_hi)
            << "\" y2=\"" << py(yr) << "\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n";
        for (const auto& [x, y] : points)
            svg << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y)
                << "\" r=\"4\" fill=\"crimson\"/>\n";
        svg << "<text x=\"" << width / 2 << "\" y=\"" << height - margin / 4
            << "\" font-family=\"monospace\" font-size=\"12\">log10 " << report.axis
            << "</text>\n";
    } else {
        svg << "<text x=\"" << margin << "\" y=\"" << height / 2
            << "\" font-family=\"monospace\" font-size=\"14\">no positive medians to plot"
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

EmittedFiles emit_report(const std::vector<SweepRow>& rows,
                         const std::vector<RateReport>& rate_reports,
                         const ExperimentConfig& config, const nlohmann::json& extra,
                         const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("emit_report: cannot create directory " + out_dir + ": " +
                                     ec.message());
    EmittedFiles files;
    auto write_file = [&](const std::string& name, const std::string& content) {
        const std::string path = (fs::path(out_dir) / name).string();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("emit_report: cannot open " + path);
        out << content;
        if (!out) throw std::runtime_error("emit_report: write failed for " + path);
        return path;
    };
    files.results_csv = write_file("results.csv", format_results_csv(rows));
    files.summary_json =
        write_file("summary.json", build_summary(config, rate_reports, extra, rows.size()).dump(2) + "\n");
    for (const RateReport& report : rate_reports)
        files.plots.push_back(
            write_file("plot_" + report.axis + ".svg", render_rate_svg(rows, config, report)));
    return files;
}

}  // namespace ptlab
