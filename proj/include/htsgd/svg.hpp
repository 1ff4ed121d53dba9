#pragma once

// Minimal standalone SVG rendering for the experiment figures: line series,
// point markers, histogram bars and overlay curves with axes and a legend.
// Output carries no timestamps so reruns are byte-identical.

#include "htsgd/common.hpp"
#include "htsgd/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace htsgd::io {

struct Series {
    enum class Kind { Line, Points, Bars };
    Kind kind = Kind::Line;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    std::string label;
    double bar_width = 0.0; // Bars only; data units
};

struct Figure {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    int width = 640;
    int height = 420;
};

namespace detail {

struct AxisRange {
    double lo = 0.0;
    double hi = 1.0;

    void expand(double value) {
        if (!std::isfinite(value)) throw ConfigError("render_svg: non-finite data");
        lo = std::min(lo, value);
        hi = std::max(hi, value);
    }
};

inline std::string round3(double v) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.3f", v);
    return buffer;
}

inline std::string tick_label(double v) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.4g", v);
    return buffer;
}

} // namespace detail

inline void render_svg(const Figure& figure, const std::string& path) {
    const int margin_left = 62, margin_right = 16, margin_top = 34, margin_bottom = 46;
    const double plot_w = figure.width - margin_left - margin_right;
    const double plot_h = figure.height - margin_top - margin_bottom;

    bool has_data = false;
    detail::AxisRange xr{1e300, -1e300}, yr{1e300, -1e300};
    for (const auto& s : figure.series) {
        if (s.x.size() != s.y.size()) throw ConfigError("render_svg: series length mismatch");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            has_data = true;
            const double half = s.kind == Series::Kind::Bars ? 0.5 * s.bar_width : 0.0;
            xr.expand(s.x[i] - half);
            xr.expand(s.x[i] + half);
            yr.expand(s.y[i]);
            if (s.kind == Series::Kind::Bars) yr.expand(0.0);
        }
    }
    if (!has_data) {
        xr = {0.0, 1.0};
        yr = {0.0, 1.0};
    }
    if (xr.hi - xr.lo < 1e-12) {
        xr.lo -= 0.5;
        xr.hi += 0.5;
    }
    if (yr.hi - yr.lo < 1e-12) {
        yr.lo -= 0.5;
        yr.hi += 0.5;
    }
    const double x_pad = 0.02 * (xr.hi - xr.lo);
    const double y_pad = 0.05 * (yr.hi - yr.lo);
    xr.lo -= x_pad;
    xr.hi += x_pad;
    yr.lo -= y_pad;
    yr.hi += y_pad;

    auto to_px = [&](double x) { return margin_left + (x - xr.lo) / (xr.hi - xr.lo) * plot_w; };
    auto to_py = [&](double y) { return margin_top + (yr.hi - y) / (yr.hi - yr.lo) * plot_h; };

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("render_svg: cannot open " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << figure.width << "\" height=\""
        << figure.height << "\" viewBox=\"0 0 " << figure.width << " " << figure.height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // Axes frame and ticks.
    out << "<g stroke=\"#333333\" fill=\"none\" stroke-width=\"1\">\n"
        << "<rect x=\"" << margin_left << "\" y=\"" << margin_top << "\" width=\"" << plot_w
        << "\" height=\"" << plot_h << "\"/>\n</g>\n";
    out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">\n";
    const int ticks = 6;
    for (int i = 0; i <= ticks; ++i) {
        const double fx = xr.lo + (xr.hi - xr.lo) * i / ticks;
        const double px = to_px(fx);
        out << "<line x1=\"" << detail::round3(px) << "\" y1=\"" << margin_top + plot_h
            << "\" x2=\"" << detail::round3(px) << "\" y2=\"" << margin_top + plot_h + 4
            << "\" stroke=\"#333333\"/>\n";
        out << "<text x=\"" << detail::round3(px) << "\" y=\"" << margin_top + plot_h + 16
            << "\" text-anchor=\"middle\">" << detail::tick_label(fx) << "</text>\n";
        const double fy = yr.lo + (yr.hi - yr.lo) * i / ticks;
        const double py = to_py(fy);
        out << "<line x1=\"" << margin_left - 4 << "\" y1=\"" << detail::round3(py) << "\" x2=\""
            << margin_left << "\" y2=\"" << detail::round3(py) << "\" stroke=\"#333333\"/>\n";
        out << "<text x=\"" << margin_left - 7 << "\" y=\"" << detail::round3(py + 4)
            << "\" text-anchor=\"end\">" << detail::tick_label(fy) << "</text>\n";
    }
    out << "<text x=\"" << margin_left + plot_w / 2 << "\" y=\"" << figure.height - 8
        << "\" text-anchor=\"middle\">" << figure.x_label << "</text>\n";
    out << "<text x=\"14\" y=\"" << margin_top + plot_h / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << margin_top + plot_h / 2
        << ")\">" << figure.y_label << "</text>\n";
    out << "<text x=\"" << margin_left + plot_w / 2 << "\" y=\"20\" text-anchor=\"middle\" "
        << "font-size=\"13\">" << figure.title << "</text>\n";
    out << "</g>\n";

    // Series, clipped to the plot area.
    out << "<clipPath id=\"plot\"><rect x=\"" << margin_left << "\" y=\"" << margin_top
        << "\" width=\"" << plot_w << "\" height=\"" << plot_h << "\"/></clipPath>\n"
        << "<g clip-path=\"url(#plot)\">\n";
    for (const auto& s : figure.series) {
        if (s.kind == Series::Kind::Line && s.x.size() >= 2) {
            out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.2\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i)
                out << detail::round3(to_px(s.x[i])) << ',' << detail::round3(to_py(s.y[i])) << ' ';
            out << "\"/>\n";
        } else if (s.kind == Series::Kind::Points) {
            for (std::size_t i = 0; i < s.x.size(); ++i)
                out << "<circle cx=\"" << detail::round3(to_px(s.x[i])) << "\" cy=\""
                    << detail::round3(to_py(s.y[i])) << "\" r=\"2.4\" fill=\"" << s.color << "\"/>\n";
        } else if (s.kind == Series::Kind::Bars) {
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                const double x0 = to_px(s.x[i] - 0.5 * s.bar_width);
                const double x1 = to_px(s.x[i] + 0.5 * s.bar_width);
                const double y0 = to_py(std::max(0.0, s.y[i]));
                const double y1 = to_py(std::min(0.0, s.y[i]));
                out << "<rect x=\"" << detail::round3(x0) << "\" y=\"" << detail::round3(y0)
                    << "\" width=\"" << detail::round3(x1 - x0) << "\" height=\""
                    << detail::round3(std::max(0.1, y1 - y0)) << "\" fill=\"" << s.color
                    << "\" fill-opacity=\"0.55\"/>\n";
            }
        }
    }
    out << "</g>\n";

    // Legend for labeled series.
    int row = 0;
    out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">\n";
    for (const auto& s : figure.series) {
        if (s.label.empty()) continue;
        const double ly = margin_top + 14 + 16 * row++;
        out << "<rect x=\"" << margin_left + plot_w - 130 << "\" y=\"" << ly - 9
            << "\" width=\"12\" height=\"8\" fill=\"" << s.color << "\"/>\n";
        out << "<text x=\"" << margin_left + plot_w - 114 << "\" y=\"" << ly << "\">" << s.label
            << "</text>\n";
    }
    out << "</g>\n</svg>\n";
    if (!out) throw ConfigError("render_svg: write failed for " + path);
}

} // namespace htsgd::io
