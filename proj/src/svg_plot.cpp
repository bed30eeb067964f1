#include "amlmc/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "amlmc/csv.hpp"
#include "amlmc/stats.hpp"

namespace amlmc {

namespace {

constexpr double kWidth = 640, kHeight = 440;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
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

}  // namespace

std::string render_svg(const std::vector<MethodPoint>& points, const std::string& title,
                       std::vector<std::string>* warnings) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<double, double>>> series;  // (log10 mse, log10 cost)
  for (const auto& p : points) {
    if (!series.count(p.method)) {
      order.push_back(p.method);
      series[p.method];
    }
    if (p.mse > 0 && p.cost > 0 && std::isfinite(p.mse) && std::isfinite(p.cost))
      series[p.method].emplace_back(std::log10(p.mse), std::log10(p.cost));
  }
  std::vector<std::string> methods;
  for (const auto& m : order) {
    if (series[m].empty()) {
      if (warnings) warnings->push_back("method " + m + " has no plottable points; series omitted");
      continue;
    }
    methods.push_back(m);
  }

  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& m : methods)
    for (const auto& [x, y] : series[m]) {
      if (first) {
        x0 = x1 = x;
        y0 = y1 = y;
        first = false;
      }
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  x0 = std::floor(x0);
  x1 = std::max(std::ceil(x1), x0 + 1);
  y0 = std::floor(y0);
  y1 = std::max(std::ceil(y1), y0 + 1);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return kTop + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(title) << "</text>\n";
  svg << "<g class=\"axes\" stroke=\"#444\" fill=\"none\">\n";
  svg << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw) << "\" height=\""
      << num(ph) << "\"/>\n";
  svg << "</g>\n<g class=\"ticks\">\n";
  for (double t = x0; t <= x1 + 1e-9; t += 1) {
    svg << "<line x1=\"" << num(sx(t)) << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(sx(t)) << "\" y2=\""
        << num(kTop + ph + 5) << "\" stroke=\"#444\"/>";
    svg << "<text x=\"" << num(sx(t)) << "\" y=\"" << num(kTop + ph + 18) << "\" text-anchor=\"middle\">1e"
        << static_cast<int>(t) << "</text>\n";
  }
  for (double t = y0; t <= y1 + 1e-9; t += 1) {
    svg << "<line x1=\"" << num(kLeft - 5) << "\" y1=\"" << num(sy(t)) << "\" x2=\"" << num(kLeft) << "\" y2=\""
        << num(sy(t)) << "\" stroke=\"#444\"/>";
    svg << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(sy(t) + 4) << "\" text-anchor=\"end\">1e"
        << static_cast<int>(t) << "</text>\n";
  }
  svg << "</g>\n";
  svg << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 10)
      << "\" text-anchor=\"middle\">MSE</text>\n";
  svg << "<text transform=\"translate(16," << num(kTop + ph / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">cost</text>\n";

  for (std::size_t i = 0; i < methods.size(); ++i) {
    const auto& m = methods[i];
    const auto& pts = series[m];
    const char* color = kColors[i % (sizeof kColors / sizeof *kColors)];
    svg << "<g class=\"series\" data-method=\"" << escape(m) << "\" stroke=\"" << color << "\" fill=\"" << color
        << "\">\n";
    for (const auto& [x, y] : pts)
      svg << "<circle cx=\"" << num(sx(x)) << "\" cy=\"" << num(sy(y)) << "\" r=\"4\"/>\n";
    if (pts.size() >= 2) {
      std::vector<double> xs, ys;
      for (const auto& [x, y] : pts) {
        xs.push_back(x);
        ys.push_back(y);
      }
      const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
      if (*hi > *lo) {
        const auto fit = fit_line(xs, ys);
        svg << "<line class=\"fit\" x1=\"" << num(sx(*lo)) << "\" y1=\"" << num(sy(fit.intercept + fit.slope * *lo))
            << "\" x2=\"" << num(sx(*hi)) << "\" y2=\"" << num(sy(fit.intercept + fit.slope * *hi))
            << "\" stroke-width=\"1.5\"/>\n";
      }
    }
    const double ly = kTop + 10 + 20 * static_cast<double>(i);
    svg << "<circle cx=\"" << num(kLeft + pw + 20) << "\" cy=\"" << num(ly) << "\" r=\"4\"/>";
    svg << "<text x=\"" << num(kLeft + pw + 30) << "\" y=\"" << num(ly + 4) << "\" stroke=\"none\" fill=\"black\">"
        << escape(m) << "</text>\n";
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::string> emit_plot(const std::string& points_csv, const std::string& svg_path,
                                   const std::string& title) {
  const auto points = read_points_csv(points_csv);
  std::vector<std::string> warnings;
  const std::string svg = render_svg(points, title, &warnings);
  ensure_parent_directory(svg_path);
  std::ofstream out(svg_path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + svg_path);
  out << svg;
  return warnings;
}

}  // namespace amlmc
