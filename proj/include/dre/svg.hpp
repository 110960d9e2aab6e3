#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "dre/errors.hpp"

namespace dre {

// Native SVG line charts with median points and error whiskers. Output is
// deterministic: fixed palette, fixed float formatting, no timestamps.

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> ylo;  // empty, or same length as y
  std::vector<double> yhi;
};

struct PlotPanel {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<PlotSeries> series;
  bool log_x = false;
  bool log_y = false;
};

namespace detail {

inline std::string fmt(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

inline const char* svg_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

struct axis_map {
  double lo = 0.0, hi = 1.0;
  bool log = false;
  double px0 = 0.0, px1 = 1.0;

  double to_px(double v) const {
    double t = log ? std::log10(v) : v;
    double a = log ? std::log10(lo) : lo;
    double b = log ? std::log10(hi) : hi;
    if (b <= a) return 0.5 * (px0 + px1);
    return px0 + (t - a) / (b - a) * (px1 - px0);
  }
};

inline void expand_range(double& lo, double& hi, bool log_scale) {
  if (!(lo <= hi)) {
    lo = log_scale ? 0.1 : 0.0;
    hi = 1.0;
  }
  if (lo == hi) {
    if (log_scale) {
      lo *= 0.5;
      hi *= 2.0;
    } else {
      lo -= 0.5;
      hi += 0.5;
    }
  } else if (!log_scale) {
    const double pad = 0.06 * (hi - lo);
    lo -= pad;
    hi += pad;
  } else {
    lo *= 0.8;
    hi *= 1.25;
  }
}

}  // namespace detail

// Renders side-by-side panels into one standalone SVG document.
inline std::string panel_chart_svg(const std::vector<PlotPanel>& panels,
                                   int panel_w = 380, int panel_h = 320) {
  if (panels.empty()) throw precondition_error("panel_chart_svg: no panels");
  const int margin_l = 62, margin_r = 16, margin_t = 34, margin_b = 46;
  const int total_w = panel_w * static_cast<int>(panels.size());
  const int total_h = panel_h;
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(total_w) +
       "\" height=\"" + std::to_string(total_h) + "\" viewBox=\"0 0 " +
       std::to_string(total_w) + " " + std::to_string(total_h) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const PlotPanel& p = panels[pi];
    const double ox = static_cast<double>(panel_w) * static_cast<double>(pi);

    // data ranges
    double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
    bool first = true;
    std::vector<double> xticks;
    for (const PlotSeries& sr : p.series) {
      for (std::size_t i = 0; i < sr.x.size(); ++i) {
        const double xv = sr.x[i];
        const double y0 = sr.ylo.empty() ? sr.y[i] : sr.ylo[i];
        const double y1 = sr.yhi.empty() ? sr.y[i] : sr.yhi[i];
        if (p.log_x && xv <= 0.0)
          throw precondition_error("panel_chart_svg: non-positive x on log axis");
        if (p.log_y && y0 <= 0.0)
          throw precondition_error("panel_chart_svg: non-positive y on log axis");
        if (first) {
          xlo = xhi = xv;
          ylo = y0;
          yhi = y1;
          first = false;
        } else {
          xlo = std::min(xlo, xv);
          xhi = std::max(xhi, xv);
          ylo = std::min(ylo, y0);
          yhi = std::max(yhi, y1);
        }
        if (std::find(xticks.begin(), xticks.end(), xv) == xticks.end())
          xticks.push_back(xv);
      }
    }
    if (first) throw precondition_error("panel_chart_svg: empty panel");
    std::sort(xticks.begin(), xticks.end());
    detail::expand_range(xlo, xhi, p.log_x);
    detail::expand_range(ylo, yhi, p.log_y);

    detail::axis_map xm{xlo, xhi, p.log_x, ox + margin_l,
                        ox + static_cast<double>(panel_w) - margin_r};
    detail::axis_map ym{ylo, yhi, p.log_y, static_cast<double>(total_h - margin_b),
                        static_cast<double>(margin_t)};

    // frame
    s += "<rect x=\"" + detail::fmt(xm.px0) + "\" y=\"" + detail::fmt(ym.px1) +
         "\" width=\"" + detail::fmt(xm.px1 - xm.px0) + "\" height=\"" +
         detail::fmt(ym.px0 - ym.px1) +
         "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    // title
    s += "<text x=\"" + detail::fmt(0.5 * (xm.px0 + xm.px1)) + "\" y=\"20\" "
         "font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">" +
         p.title + "</text>\n";
    // axis labels
    s += "<text x=\"" + detail::fmt(0.5 * (xm.px0 + xm.px1)) + "\" y=\"" +
         detail::fmt(static_cast<double>(total_h) - 10.0) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" +
         p.xlabel + "</text>\n";
    s += "<text x=\"" + detail::fmt(ox + 16.0) + "\" y=\"" +
         detail::fmt(0.5 * (ym.px0 + ym.px1)) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 " +
         detail::fmt(ox + 16.0) + " " + detail::fmt(0.5 * (ym.px0 + ym.px1)) + ")\">" +
         p.ylabel + "</text>\n";

    // x ticks at the distinct data positions
    for (double tv : xticks) {
      const double px = xm.to_px(tv);
      s += "<line x1=\"" + detail::fmt(px) + "\" y1=\"" + detail::fmt(ym.px0) +
           "\" x2=\"" + detail::fmt(px) + "\" y2=\"" + detail::fmt(ym.px0 + 5.0) +
           "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
      s += "<text x=\"" + detail::fmt(px) + "\" y=\"" + detail::fmt(ym.px0 + 18.0) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
           detail::fmt(tv, "%.6g") + "</text>\n";
    }
    // 5 y ticks, evenly spaced in screen space
    for (int k = 0; k <= 4; ++k) {
      const double frac = static_cast<double>(k) / 4.0;
      const double py = ym.px0 + frac * (ym.px1 - ym.px0);
      double val;
      if (p.log_y) {
        const double la = std::log10(ylo), lb = std::log10(yhi);
        val = std::pow(10.0, la + frac * (lb - la));
      } else {
        val = ylo + frac * (yhi - ylo);
      }
      s += "<line x1=\"" + detail::fmt(xm.px0 - 5.0) + "\" y1=\"" + detail::fmt(py) +
           "\" x2=\"" + detail::fmt(xm.px0) + "\" y2=\"" + detail::fmt(py) +
           "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
      s += "<text x=\"" + detail::fmt(xm.px0 - 8.0) + "\" y=\"" + detail::fmt(py + 4.0) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
           detail::fmt(val, "%.3g") + "</text>\n";
    }

    // series
    for (std::size_t si = 0; si < p.series.size(); ++si) {
      const PlotSeries& sr = p.series[si];
      const char* color = detail::svg_color(si);
      // whiskers
      for (std::size_t i = 0; i < sr.y.size(); ++i) {
        if (sr.ylo.empty()) break;
        const double px = xm.to_px(sr.x[i]);
        const double p0 = ym.to_px(sr.ylo[i]);
        const double p1 = ym.to_px(sr.yhi[i]);
        s += "<line x1=\"" + detail::fmt(px) + "\" y1=\"" + detail::fmt(p0) +
             "\" x2=\"" + detail::fmt(px) + "\" y2=\"" + detail::fmt(p1) +
             "\" stroke=\"" + color + "\" stroke-width=\"1\"/>\n";
        for (double pe : {p0, p1})
          s += "<line x1=\"" + detail::fmt(px - 3.0) + "\" y1=\"" + detail::fmt(pe) +
               "\" x2=\"" + detail::fmt(px + 3.0) + "\" y2=\"" + detail::fmt(pe) +
               "\" stroke=\"" + color + "\" stroke-width=\"1\"/>\n";
      }
      // polyline through medians
      std::string pts;
      for (std::size_t i = 0; i < sr.y.size(); ++i) {
        if (i) pts += " ";
        pts += detail::fmt(xm.to_px(sr.x[i])) + "," + detail::fmt(ym.to_px(sr.y[i]));
      }
      s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"/>\n";
      for (std::size_t i = 0; i < sr.y.size(); ++i)
        s += "<circle cx=\"" + detail::fmt(xm.to_px(sr.x[i])) + "\" cy=\"" +
             detail::fmt(ym.to_px(sr.y[i])) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
      // legend entry
      const double ly = ym.px1 + 14.0 + 14.0 * static_cast<double>(si);
      s += "<line x1=\"" + detail::fmt(xm.px1 - 86.0) + "\" y1=\"" + detail::fmt(ly - 4.0) +
           "\" x2=\"" + detail::fmt(xm.px1 - 70.0) + "\" y2=\"" + detail::fmt(ly - 4.0) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
      s += "<text x=\"" + detail::fmt(xm.px1 - 64.0) + "\" y=\"" + detail::fmt(ly) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + sr.label + "</text>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

}  // namespace dre
