#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace lifshitz {

// Minimal static SVG line charts. Nonpositive values are skipped on log axes.
struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    bool markers = false;
    bool dashed = false;
};

struct PlotBand {
    std::string label;
    std::vector<double> x;
    std::vector<double> low;
    std::vector<double> high;
    std::string color = "#9ecae1";
};

struct Plot {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
    std::vector<PlotSeries> series;
    std::vector<PlotBand> bands;

    std::string render(int width = 720, int height = 480) const;
};

namespace detail {

inline std::string svg_escape(const std::string& s)
{
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

inline std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick_label(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

} // namespace detail

inline std::string Plot::render(int width, int height) const
{
    const double left = 80, right = 20, top = 40, bottom = 60;
    const double pw = width - left - right, ph = height - top - bottom;
    auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
    auto okx = [&](double v) { return std::isfinite(v) && (!log_x || v > 0); };
    auto oky = [&](double v) { return std::isfinite(v) && (!log_y || v > 0); };

    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    auto extend = [&](double x, double y) {
        if (!okx(x) || !oky(y)) return;
        x0 = std::min(x0, tx(x));
        x1 = std::max(x1, tx(x));
        y0 = std::min(y0, ty(y));
        y1 = std::max(y1, ty(y));
    };
    for (const auto& s : series)
        for (std::size_t k = 0; k < s.x.size(); ++k) extend(s.x[k], s.y[k]);
    for (const auto& b : bands)
        for (std::size_t k = 0; k < b.x.size(); ++k) {
            extend(b.x[k], b.low[k]);
            extend(b.x[k], b.high[k]);
        }
    if (!(x1 >= x0)) x0 = 0, x1 = 1;
    if (!(y1 >= y0)) y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double ypad = 0.04 * (y1 - y0);
    y0 -= ypad;
    y1 += ypad;
    auto px = [&](double v) { return left + (tx(v) - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return top + (1.0 - (ty(v) - y0) / (y1 - y0)) * ph; };

    using detail::num;
    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
                      "\" height=\"" + std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + num(width / 2.0) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
           detail::svg_escape(title) + "</text>\n";
    out += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
           "\" fill=\"none\" stroke=\"black\"/>\n";

    for (int k = 0; k <= 5; ++k) {
        const double fx = x0 + (x1 - x0) * k / 5.0;
        const double fy = y0 + (y1 - y0) * k / 5.0;
        const double gx = left + pw * k / 5.0;
        const double gy = top + ph * (1.0 - k / 5.0);
        out += "<line x1=\"" + num(gx) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(gx) + "\" y2=\"" +
               num(top + ph + 5) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + num(gx) + "\" y=\"" + num(top + ph + 18) + "\" text-anchor=\"middle\">" +
               detail::tick_label(log_x ? std::pow(10.0, fx) : fx) + "</text>\n";
        out += "<line x1=\"" + num(left - 5) + "\" y1=\"" + num(gy) + "\" x2=\"" + num(left) + "\" y2=\"" + num(gy) +
               "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + num(left - 8) + "\" y=\"" + num(gy + 4) + "\" text-anchor=\"end\">" +
               detail::tick_label(log_y ? std::pow(10.0, fy) : fy) + "</text>\n";
    }
    out += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(height - 15.0) + "\" text-anchor=\"middle\">" +
           detail::svg_escape(x_label) + "</text>\n";
    out += "<text transform=\"translate(18," + num(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
           detail::svg_escape(y_label) + "</text>\n";

    for (const auto& b : bands) {
        std::string pts;
        for (std::size_t k = 0; k < b.x.size(); ++k)
            if (okx(b.x[k]) && oky(b.high[k])) pts += num(px(b.x[k])) + "," + num(py(b.high[k])) + " ";
        for (std::size_t k = b.x.size(); k-- > 0;)
            if (okx(b.x[k]) && oky(b.low[k])) pts += num(px(b.x[k])) + "," + num(py(b.low[k])) + " ";
        out += "<polygon points=\"" + pts + "\" fill=\"" + b.color + "\" fill-opacity=\"0.5\" stroke=\"none\"/>\n";
    }
    for (const auto& s : series) {
        std::string pts;
        for (std::size_t k = 0; k < s.x.size(); ++k)
            if (okx(s.x[k]) && oky(s.y[k])) pts += num(px(s.x[k])) + "," + num(py(s.y[k])) + " ";
        out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\"" +
               (s.dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
        if (s.markers) {
            for (std::size_t k = 0; k < s.x.size(); ++k)
                if (okx(s.x[k]) && oky(s.y[k]))
                    out += "<circle cx=\"" + num(px(s.x[k])) + "\" cy=\"" + num(py(s.y[k])) + "\" r=\"2.5\" fill=\"" +
                           s.color + "\"/>\n";
        }
    }

    double ly = top + 14;
    auto legend = [&](const std::string& label, const std::string& color) {
        if (label.empty()) return;
        out += "<rect x=\"" + num(left + pw - 170) + "\" y=\"" + num(ly - 9) + "\" width=\"12\" height=\"10\" fill=\"" +
               color + "\"/>\n";
        out += "<text x=\"" + num(left + pw - 152) + "\" y=\"" + num(ly) + "\">" + detail::svg_escape(label) + "</text>\n";
        ly += 16;
    };
    for (const auto& b : bands) legend(b.label, b.color);
    for (const auto& s : series) legend(s.label, s.color);
    out += "</svg>\n";
    return out;
}

} // namespace lifshitz
