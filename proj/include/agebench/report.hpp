#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "agebench/csv.hpp"
#include "agebench/digest.hpp"
#include "agebench/metrics.hpp"

namespace agebench {

struct ReportSpec {
    std::filesystem::path out_dir;
    std::set<std::string> formats{"markdown", "csv", "svg"};
    std::set<std::string> sections{"table2",       "table3",    "table4",
                                   "table6",       "trajectories", "stratified",
                                   "distributions"};
};

struct ReportOutput {
    std::vector<std::filesystem::path> files;
    std::vector<std::string> notices;  // skipped sections and why
};

namespace report_detail {

// String-keyed view of a metrics CSV: the report layer re-arranges text and
// never recomputes numbers.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<int>(it - header.begin());
    }
};

inline CsvTable load_table(const std::filesystem::path& path) {
    CsvTable t;
    if (!std::filesystem::exists(path)) return t;
    auto rows = read_csv_file(path.string());
    if (rows.empty()) return t;
    t.header = rows[0];
    t.rows.assign(rows.begin() + 1, rows.end());
    return t;
}

inline std::string markdown_table(const std::vector<std::string>& header,
                                  const std::vector<std::vector<std::string>>& rows) {
    std::string out = "|";
    for (const auto& h : header) out += " " + h + " |";
    out += "\n|";
    for (std::size_t i = 0; i < header.size(); ++i) out += " --- |";
    out += "\n";
    for (const auto& row : rows) {
        out += "|";
        for (const auto& cell : row) out += " " + cell + " |";
        out += "\n";
    }
    return out;
}

inline std::string csv_table(const std::vector<std::string>& header,
                             const std::vector<std::vector<std::string>>& rows) {
    std::string out = csv_join(header) + "\n";
    for (const auto& row : rows) out += csv_join(row) + "\n";
    return out;
}

inline std::string fmt_coord(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

// Fixed 640x420 viewport mapping ages [0, 60] to y and the two condition
// columns to x. No timestamps, fixed ordering: byte-identical reruns.
class TrajectorySvg {
  public:
    static constexpr double kW = 640, kH = 420;
    static constexpr double kLeft = 60, kRight = 600, kTop = 30, kBottom = 390;
    static constexpr double kAgeMax = 60.0;

    static double y_for_age(double age) {
        const double clamped = std::clamp(age, 0.0, kAgeMax);
        return kBottom - (clamped / kAgeMax) * (kBottom - kTop);
    }

    static std::string render(const std::string& title, const metrics::PredMap& base,
                              const metrics::PredMap& atk,
                              const std::set<std::string>& crossers,
                              const std::string& acr_text) {
        std::string s;
        s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
             "viewBox=\"0 0 640 420\">\n";
        s += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"420\" fill=\"white\"/>\n";
        s += "<text x=\"320\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + title +
             "</text>\n";
        // axis labels
        s += "<text x=\"" + fmt_coord(kLeft) + "\" y=\"410\" text-anchor=\"middle\" "
             "font-size=\"12\">baseline</text>\n";
        s += "<text x=\"" + fmt_coord(kRight) + "\" y=\"410\" text-anchor=\"middle\" "
             "font-size=\"12\">attacked</text>\n";
        // 18-year decision threshold
        const double y18 = y_for_age(18.0);
        s += "<line class=\"threshold\" x1=\"" + fmt_coord(kLeft) + "\" y1=\"" + fmt_coord(y18) +
             "\" x2=\"" + fmt_coord(kRight) + "\" y2=\"" + fmt_coord(y18) +
             "\" stroke=\"red\" stroke-dasharray=\"6,4\"/>\n";
        s += "<text x=\"" + fmt_coord(kRight + 4) + "\" y=\"" + fmt_coord(y18 + 4) +
             "\" font-size=\"11\" fill=\"red\">18</text>\n";
        // one line per subject, crossers highlighted
        for (const auto& [id, b] : base) {
            auto it = atk.find(id);
            if (it == atk.end()) continue;
            const bool crosser = crossers.count(id) > 0;
            s += "<line class=\"";
            s += crosser ? "crosser" : "subject";
            s += "\" x1=\"" + fmt_coord(kLeft) + "\" y1=\"" + fmt_coord(y_for_age(b)) +
                 "\" x2=\"" + fmt_coord(kRight) + "\" y2=\"" + fmt_coord(y_for_age(it->second)) +
                 "\" stroke=\"";
            s += crosser ? "orange" : "#bbbbbb";
            s += "\" stroke-width=\"";
            s += crosser ? "1.5" : "0.75";
            s += "\" stroke-opacity=\"0.8\"/>\n";
        }
        s += "<text class=\"acr\" x=\"320\" y=\"40\" text-anchor=\"middle\" font-size=\"12\">ACR " +
             acr_text + "</text>\n";
        s += "</svg>\n";
        return s;
    }
};

// Two stacked panels: mean shift per true-age bin on top, crossing rate with
// the 50% reference rule below. Absent bins leave gaps.
class StratifiedSvg {
  public:
    struct Bin {
        std::string label;
        std::optional<double> mean_shift;
        std::optional<double> crossing_rate;  // percent
    };

    static std::string render(const std::string& title, const std::vector<Bin>& bins) {
        const double panel_h = 170, gap = 40, left = 60, right = 620;
        const double top1 = 40, top2 = top1 + panel_h + gap;
        const double band = bins.empty() ? 0 : (right - left) / bins.size();
        std::string s;
        char buf[128];
        s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"460\" "
             "viewBox=\"0 0 640 460\">\n";
        s += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"460\" fill=\"white\"/>\n";
        s += "<text x=\"320\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + title +
             "</text>\n";
        s += "<text x=\"10\" y=\"" + fmt_coord(top1 - 8) +
             "\" font-size=\"12\">mean shift (yr)</text>\n";
        s += "<text x=\"10\" y=\"" + fmt_coord(top2 - 8) +
             "\" font-size=\"12\">crossing rate (%)</text>\n";

        // top panel: mean shift, zero line at mid-panel, scale +/- 15 yr
        const double shift_zero = top1 + panel_h / 2, shift_scale = panel_h / 2 / 15.0;
        s += "<line x1=\"" + fmt_coord(left) + "\" y1=\"" + fmt_coord(shift_zero) + "\" x2=\"" +
             fmt_coord(right) + "\" y2=\"" + fmt_coord(shift_zero) + "\" stroke=\"black\"/>\n";
        for (std::size_t i = 0; i < bins.size(); ++i) {
            const double x = left + band * i + band * 0.15;
            const double w = band * 0.7;
            if (bins[i].mean_shift) {
                const double v = std::clamp(*bins[i].mean_shift, -15.0, 15.0);
                const double h = std::abs(v) * shift_scale;
                const double y = v >= 0 ? shift_zero - h : shift_zero;
                std::snprintf(buf, sizeof buf,
                              "<rect class=\"shift\" x=\"%s\" y=\"%s\" width=\"%s\" "
                              "height=\"%s\" fill=\"steelblue\"/>\n",
                              fmt_coord(x).c_str(), fmt_coord(y).c_str(), fmt_coord(w).c_str(),
                              fmt_coord(h).c_str());
                s += buf;
            }
            s += "<text x=\"" + fmt_coord(x + w / 2) + "\" y=\"" +
                 fmt_coord(top1 + panel_h + 14) + "\" text-anchor=\"middle\" font-size=\"10\">" +
                 bins[i].label + "</text>\n";
        }

        // bottom panel: crossing rate 0..100 with dashed 50% rule
        const double rate_base = top2 + panel_h, rate_scale = panel_h / 100.0;
        s += "<line x1=\"" + fmt_coord(left) + "\" y1=\"" + fmt_coord(rate_base) + "\" x2=\"" +
             fmt_coord(right) + "\" y2=\"" + fmt_coord(rate_base) + "\" stroke=\"black\"/>\n";
        const double y50 = rate_base - 50.0 * rate_scale;
        s += "<line class=\"rule50\" x1=\"" + fmt_coord(left) + "\" y1=\"" + fmt_coord(y50) +
             "\" x2=\"" + fmt_coord(right) + "\" y2=\"" + fmt_coord(y50) +
             "\" stroke=\"red\" stroke-dasharray=\"6,4\"/>\n";
        for (std::size_t i = 0; i < bins.size(); ++i) {
            if (!bins[i].crossing_rate) continue;  // gap, not zero
            const double x = left + band * i + band * 0.15;
            const double w = band * 0.7;
            const double h = std::clamp(*bins[i].crossing_rate, 0.0, 100.0) * rate_scale;
            std::snprintf(buf, sizeof buf,
                          "<rect class=\"rate\" x=\"%s\" y=\"%s\" width=\"%s\" height=\"%s\" "
                          "fill=\"indianred\"/>\n",
                          fmt_coord(x).c_str(), fmt_coord(rate_base - h).c_str(),
                          fmt_coord(w).c_str(), fmt_coord(h).c_str());
            s += buf;
        }
        for (std::size_t i = 0; i < bins.size(); ++i) {
            const double x = left + band * i + band * 0.5;
            s += "<text x=\"" + fmt_coord(x) + "\" y=\"" + fmt_coord(rate_base + 14) +
                 "\" text-anchor=\"middle\" font-size=\"10\">" + bins[i].label + "</text>\n";
        }
        s += "</svg>\n";
        return s;
    }
};

}  // namespace report_detail

// One subject-trajectory panel for a (model, condition) cell.
inline std::filesystem::path emit_trajectory_plot(
    const std::string& title, const metrics::PredMap& base, const metrics::PredMap& atk,
    const std::set<std::string>& crossers, const std::string& acr_text,
    const std::filesystem::path& out_path) {
    write_file_text(out_path,
                    report_detail::TrajectorySvg::render(title, base, atk, crossers, acr_text));
    return out_path;
}

inline std::filesystem::path emit_stratified_plot(
    const std::string& title, const std::vector<report_detail::StratifiedSvg::Bin>& bins,
    const std::filesystem::path& out_path) {
    write_file_text(out_path, report_detail::StratifiedSvg::render(title, bins));
    return out_path;
}

}  // namespace agebench
