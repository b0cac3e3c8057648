#include "qainit/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

#include "qainit/errors.hpp"

namespace qainit {

std::string format_real(double v) { return fmt::format("{:.17g}", v); }

std::string experiment_csv(const ExperimentReport& report) {
    std::string out = fmt::format("{}\n", kExperimentCsvHeader);
    for (const auto& row : report.rows) {
        out += fmt::format("{},{},{},{},{},{}\n", row.config_id, row.bits, method_name(row.method), row.rank,
                           format_real(row.calibrated_error), format_real(row.uncalibrated_error));
    }
    return out;
}

std::string experiment_json(const ExperimentReport& report) {
    nlohmann::ordered_json j;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& row : report.rows) {
        nlohmann::ordered_json r;
        r["config"] = row.config_id;
        r["bits"] = row.bits;
        r["method"] = std::string(method_name(row.method));
        r["rank"] = row.rank;
        r["calibrated_error"] = row.calibrated_error;
        r["uncalibrated_error"] = row.uncalibrated_error;
        r["proxy_loss_curve"] = row.proxy_loss_curve;
        j["rows"].push_back(std::move(r));
    }
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    for (const auto& [k, v] : report.summary) summary[k] = v;
    j["summary"] = std::move(summary);
    return j.dump(2) + "\n";
}

std::string trace_csv(std::span<const InitReport> reports) {
    std::string out = fmt::format("{}\n", kTraceCsvHeader);
    for (const auto& rep : reports) {
        for (std::size_t i = 0; i < rep.objective_trace.size(); ++i) {
            out += fmt::format("{},{},{}\n", rep.layer_name, i, format_real(rep.objective_trace[i]));
        }
    }
    return out;
}

std::string gap_csv(const GapReport& report) {
    std::string out = fmt::format("{}\n", kGapCsvHeader);
    for (const auto& r : report.rows) {
        out += fmt::format("{},{},{},{},{}\n", r.row.model, format_real(r.row.base4), format_real(r.row.ours4),
                           r.row.base8 ? format_real(*r.row.base8) : "NA", r.gap ? format_real(*r.gap) : "NA");
    }
    return out;
}

std::string gap_json(const GapReport& report, std::string_view dataset) {
    nlohmann::ordered_json j;
    j["dataset"] = std::string(dataset);
    j["lower_is_better"] = report.lower_is_better;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : report.rows) {
        nlohmann::ordered_json row;
        row["model"] = r.row.model;
        row["base4"] = r.row.base4;
        row["ours4"] = r.row.ours4;
        row["base8"] = r.row.base8 ? nlohmann::ordered_json(*r.row.base8) : nlohmann::ordered_json(nullptr);
        row["gap_closed"] = r.gap ? nlohmann::ordered_json(*r.gap) : nlohmann::ordered_json(nullptr);
        row["published"] = r.row.published ? nlohmann::ordered_json(*r.row.published) : nlohmann::ordered_json(nullptr);
        row["rounding_mismatch"] = r.rounding_mismatch;
        j["rows"].push_back(std::move(row));
    }
    j["applicable"] = report.applicable;
    j["average"] = report.average;
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

namespace {

std::string escape_xml(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace

std::string render_svg_chart(const ChartSpec& spec, std::span<const ChartSeries> series) {
    constexpr double width = 640.0, height = 400.0;
    constexpr double left = 80.0, right = 160.0, top = 40.0, bottom = 50.0;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    const auto tx = [&](double x) { return spec.log_x ? std::log2(x) : x; };
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            if (spec.log_x && !(x > 0.0)) throw InvalidArgument("svg: log-x chart needs positive x values");
            xmin = std::min(xmin, tx(x));
            xmax = std::max(xmax, tx(x));
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (!std::isfinite(xmin)) xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    const auto px = [&](double x) { return left + (tx(x) - xmin) / (xmax - xmin) * plot_w; };
    const auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * plot_h; };

    std::string out = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\">\n",
        width, height, width, height);
    out += fmt::format("<rect width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n", width, height);
    out += fmt::format("<text x=\"{:.1f}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n", left + plot_w / 2,
                       escape_xml(spec.title));
    out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"black\"/>\n",
                       left, top, plot_w, plot_h);
    for (int k = 0; k <= 4; ++k) {
        const double y = ymin + (ymax - ymin) * k / 4.0;
        out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"11\" text-anchor=\"end\">{:.4g}</text>\n", left - 6,
                           py(y) + 4, y);
    }
    std::vector<double> xticks;
    for (const auto& s : series)
        for (const auto& p : s.points) xticks.push_back(p.first);
    std::sort(xticks.begin(), xticks.end());
    xticks.erase(std::unique(xticks.begin(), xticks.end()), xticks.end());
    if (xticks.size() > 12) {
        std::vector<double> thinned;
        const std::size_t stride = (xticks.size() + 11) / 12;
        for (std::size_t i = 0; i < xticks.size(); i += stride) thinned.push_back(xticks[i]);
        xticks = std::move(thinned);
    }
    for (double x : xticks) {
        out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"11\" text-anchor=\"middle\">{:g}</text>\n", px(x),
                           top + plot_h + 16, x);
    }
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n", left + plot_w / 2,
                       height - 10, escape_xml(spec.x_label));
    out += fmt::format(
        "<text x=\"16\" y=\"{:.1f}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1f})\">{}</text>\n",
        top + plot_h / 2, top + plot_h / 2, escape_xml(spec.y_label));

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        std::string pts;
        for (const auto& [x, y] : s.points) {
            if (!pts.empty()) pts += ' ';
            pts += fmt::format("{:.2f},{:.2f}", px(x), py(y));
        }
        out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", escape_xml(s.color), pts);
        const double ly = top + 16.0 + 18.0 * static_cast<double>(i);
        out += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                           left + plot_w + 12, ly, left + plot_w + 32, ly, escape_xml(s.color));
        out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"12\">{}</text>\n", left + plot_w + 38, ly + 4,
                           escape_xml(s.name));
    }
    out += "</svg>\n";
    return out;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

} // namespace qainit
