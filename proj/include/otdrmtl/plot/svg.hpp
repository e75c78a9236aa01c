#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "otdrmtl/errors.hpp"
#include "otdrmtl/io_util.hpp"

namespace otdrmtl::plot {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

struct ChartOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    int width = 640;
    int height = 420;
    bool y_from_zero = false;
};

namespace detail {

inline const char* kPalette[8] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

struct NiceAxis {
    double lo = 0.0, hi = 1.0, step = 0.2;
};

inline NiceAxis nice_axis(double lo, double hi) {
    if (!(hi > lo)) {
        hi = lo + 1.0;
        lo -= 1.0;
    }
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (raw <= m * mag) {
            step = m * mag;
            break;
        }
    }
    NiceAxis ax;
    ax.step = step;
    ax.lo = std::floor(lo / step) * step;
    ax.hi = std::ceil(hi / step) * step;
    return ax;
}

inline std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out.push_back(c);
    }
    return out;
}

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
}

}  // namespace detail

// Deterministic standalone SVG line chart (fixed formatting, no
// timestamps): identical inputs produce identical bytes.
inline std::string line_chart(const std::vector<Series>& series, const ChartOptions& opt) {
    if (series.empty()) throw config_error("line_chart: no series");
    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    bool any = false;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
            any = true;
        }
    if (!any) {
        x_lo = 0;
        x_hi = 1;
        y_lo = 0;
        y_hi = 1;
    }
    if (opt.y_from_zero) y_lo = std::min(y_lo, 0.0);
    const auto xa = detail::nice_axis(x_lo, x_hi);
    const auto ya = detail::nice_axis(y_lo, y_hi);

    const double ml = 62, mr = 18, mt = 34, mb = 46;
    const double pw = opt.width - ml - mr, ph = opt.height - mt - mb;
    auto px = [&](double x) { return ml + (x - xa.lo) / (xa.hi - xa.lo) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ya.lo) / (ya.hi - ya.lo) * ph; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opt.width) + "\" height=\"" +
           std::to_string(opt.height) + "\" viewBox=\"0 0 " + std::to_string(opt.width) + " " +
           std::to_string(opt.height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + detail::num(opt.width / 2.0) + "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
           detail::esc(opt.title) + "</text>\n";

    // grid and ticks
    for (double x = xa.lo; x <= xa.hi + 1e-9; x += xa.step) {
        svg += "<line x1=\"" + detail::num(px(x)) + "\" y1=\"" + detail::num(mt) + "\" x2=\"" + detail::num(px(x)) +
               "\" y2=\"" + detail::num(mt + ph) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + detail::num(px(x)) + "\" y=\"" + detail::num(mt + ph + 16) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + detail::num(x) + "</text>\n";
    }
    for (double y = ya.lo; y <= ya.hi + 1e-9; y += ya.step) {
        svg += "<line x1=\"" + detail::num(ml) + "\" y1=\"" + detail::num(py(y)) + "\" x2=\"" + detail::num(ml + pw) +
               "\" y2=\"" + detail::num(py(y)) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + detail::num(ml - 6) + "\" y=\"" + detail::num(py(y) + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + detail::num(y) + "</text>\n";
    }
    svg += "<rect x=\"" + detail::num(ml) + "\" y=\"" + detail::num(mt) + "\" width=\"" + detail::num(pw) +
           "\" height=\"" + detail::num(ph) + "\" fill=\"none\" stroke=\"#404040\"/>\n";
    svg += "<text x=\"" + detail::num(ml + pw / 2) + "\" y=\"" + detail::num(opt.height - 8.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + detail::esc(opt.x_label) + "</text>\n";
    svg += "<text x=\"16\" y=\"" + detail::num(mt + ph / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 " +
           detail::num(mt + ph / 2) + ")\">" + detail::esc(opt.y_label) + "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = detail::kPalette[s % 8];
        std::string pts;
        for (const auto& [x, y] : series[s].points) {
            if (!pts.empty()) pts += ' ';
            pts += detail::num(px(x)) + "," + detail::num(py(y));
        }
        if (series[s].points.size() == 1) {
            const auto& [x, y] = series[s].points.front();
            svg += "<circle cx=\"" + detail::num(px(x)) + "\" cy=\"" + detail::num(py(y)) +
                   "\" r=\"3\" fill=\"" + color + "\"/>\n";
        } else if (!pts.empty()) {
            svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + std::string(color) +
                   "\" stroke-width=\"1.8\"/>\n";
        }
        // legend
        const double ly = mt + 14 + 16 * static_cast<double>(s);
        svg += "<line x1=\"" + detail::num(ml + pw - 120) + "\" y1=\"" + detail::num(ly - 4) + "\" x2=\"" +
               detail::num(ml + pw - 100) + "\" y2=\"" + detail::num(ly - 4) + "\" stroke=\"" + color +
               "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + detail::num(ml + pw - 96) + "\" y=\"" + detail::num(ly) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + detail::esc(series[s].name) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

inline std::string curve_csv(const Series& s) {
    std::string out = "x,y\n";
    for (const auto& [x, y] : s.points) out += fmt_g9(x) + "," + fmt_g9(y) + "\n";
    return out;
}

}  // namespace otdrmtl::plot
