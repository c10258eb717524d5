// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "bee/loop.hpp"
#include "bee/util.hpp"

namespace bee {
namespace svg {

inline std::string escape(const std::string& s) {
    std::string out;
    for (const char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '"') out += "&quot;";
        else out += c;
    }
    return out;
}

inline std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(2) << std::fixed << v;
    return os.str();
}

// One named series over a shared x axis.
struct Series {
    std::string name;
    std::string color;
    std::vector<double> x;
    std::vector<double> y;
};

// Polyline chart with axes, ticks and a legend. Vertical dashed markers are
// drawn at `marks` (used for detector triggers and domain boundaries).
inline std::string line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const std::vector<Series>& series,
                              const std::vector<double>& marks = {}) {
    const double width = 860, height = 420;
    const double left = 70, right = 30, top = 46, bottom = 52;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;

    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool any = false;
    for (const Series& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!any) {
                xmin = xmax = s.x[i];
                ymin = ymax = s.y[i];
                any = true;
            }
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double v) { return left + (v - xmin) / (xmax - xmin) * plot_w; };
    auto py = [&](double v) { return top + (1 - (v - ymin) / (ymax - ymin)) * plot_h; };

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
          "font-family=\"sans-serif\" font-size=\"16\">"
       << escape(title) << "</text>\n";

    for (int t = 0; t <= 5; ++t) {
        const double fy = ymin + (ymax - ymin) * t / 5.0;
        const double yy = py(fy);
        os << "<line x1=\"" << left << "\" y1=\"" << yy << "\" x2=\"" << left + plot_w
           << "\" y2=\"" << yy << "\" stroke=\"#dddddd\"/>\n";
        os << "<text x=\"" << left - 8 << "\" y=\"" << yy + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << num(fy)
           << "</text>\n";
        const double fx = xmin + (xmax - xmin) * t / 5.0;
        const double xx = px(fx);
        os << "<text x=\"" << xx << "\" y=\"" << top + plot_h + 18
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << num(fx)
           << "</text>\n";
    }

    for (const double m : marks) {
        if (m < xmin || m > xmax) continue;
        os << "<line x1=\"" << px(m) << "\" y1=\"" << top << "\" x2=\"" << px(m) << "\" y2=\""
           << top + plot_h << "\" stroke=\"#cc4444\" stroke-dasharray=\"4,3\"/>\n";
    }

    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\""
       << plot_h << "\" fill=\"none\" stroke=\"#333333\"/>\n";

    for (const Series& s : series) {
        if (s.x.size() != s.y.size()) fail("svg series: x/y length mismatch for " + s.name);
        if (s.x.empty()) continue;
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            os << num(px(s.x[i])) << "," << num(py(s.y[i])) << (i + 1 < s.x.size() ? " " : "");
        os << "\"/>\n";
    }

    double ly = top + 14;
    for (const Series& s : series) {
        os << "<line x1=\"" << left + plot_w - 150 << "\" y1=\"" << ly - 4 << "\" x2=\""
           << left + plot_w - 126 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << s.color
           << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << left + plot_w - 120 << "\" y=\"" << ly
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(s.name) << "</text>\n";
        ly += 16;
    }

    os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
       << escape(x_label) << "</text>\n";
    os << "<text x=\"18\" y=\"" << top + plot_h / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
          "transform=\"rotate(-90 18 "
       << top + plot_h / 2 << ")\">" << escape(y_label) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace svg

// Consistency loss over the stream with trigger steps marked.
inline std::string plot_loss(const std::vector<StepReport>& reports,
                             const std::string& title = "consistency loss") {
    svg::Series mcr{"mcr loss", "#2266bb", {}, {}};
    svg::Series ent{"entropy loss", "#22aa66", {}, {}};
    std::vector<double> marks;
    for (const StepReport& rep : reports) {
        mcr.x.push_back(static_cast<double>(rep.step));
        mcr.y.push_back(rep.mcr_loss);
        ent.x.push_back(static_cast<double>(rep.step));
        ent.y.push_back(rep.ent_loss);
        if (rep.trigger) marks.push_back(static_cast<double>(rep.step));
    }
    return svg::line_chart(title, "step", "loss", {mcr, ent}, marks);
}

// Source-holdout accuracy measured after each domain.
inline std::string plot_forgetting(const std::vector<std::string>& domain_names,
                                   const std::vector<double>& boundary_acc,
                                   const std::string& title = "source accuracy over the stream") {
    if (domain_names.size() != boundary_acc.size())
        fail("plot_forgetting: name/accuracy count mismatch");
    svg::Series acc{"source acc %", "#2266bb", {}, {}};
    std::vector<double> marks;
    for (std::size_t i = 0; i < boundary_acc.size(); ++i) {
        acc.x.push_back(static_cast<double>(i + 1));
        acc.y.push_back(100.0 * boundary_acc[i]);
        marks.push_back(static_cast<double>(i + 1));
    }
    return svg::line_chart(title, "domains seen", "accuracy %", {acc}, marks);
}

}  // namespace bee
