#include "convexecg/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "convexecg/error.hpp"
#include "convexecg/format.hpp"

namespace convexecg::svg {

namespace {

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
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

std::string fixed(double v) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << v;
  return s.str();
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

std::string render(const std::string& title, const std::vector<Panel>& panels, int width,
                   int panel_height) {
  constexpr int kMarginLeft = 60, kMarginRight = 20, kTop = 30, kGap = 28;
  const int height = kTop + static_cast<int>(panels.size()) * (panel_height + kGap) + 10;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(title) << "</text>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double top = kTop + static_cast<double>(p) * (panel_height + kGap) + 14;
    const double left = kMarginLeft;
    const double w = width - kMarginLeft - kMarginRight;
    const double h = panel_height - 14;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& ser : panel.series) {
      for (std::size_t k = 0; k < ser.x.size() && k < ser.y.size(); ++k) {
        xmin = std::min(xmin, ser.x[k]);
        xmax = std::max(xmax, ser.x[k]);
        ymin = std::min(ymin, ser.y[k]);
        ymax = std::max(ymax, ser.y[k]);
      }
    }
    if (!std::isfinite(xmin)) xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    const auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * w; };
    const auto sy = [&](double y) { return top + h - (y - ymin) / (ymax - ymin) * h; };

    s << "<g>\n<text x=\"" << left << "\" y=\"" << top - 4 << "\">" << escape(panel.title) << "</text>\n";
    s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w << "\" height=\"" << h
      << "\" fill=\"none\" stroke=\"#999\"/>\n";
    s << "<text x=\"" << left - 4 << "\" y=\"" << fixed(top + 10) << "\" text-anchor=\"end\">"
      << fixed(ymax) << "</text>\n";
    s << "<text x=\"" << left - 4 << "\" y=\"" << fixed(top + h) << "\" text-anchor=\"end\">"
      << fixed(ymin) << "</text>\n";
    s << "<text x=\"" << left << "\" y=\"" << fixed(top + h + 12) << "\">" << fixed(xmin) << "</text>\n";
    s << "<text x=\"" << left + w << "\" y=\"" << fixed(top + h + 12) << "\" text-anchor=\"end\">"
      << fixed(xmax) << "</text>\n";
    for (double v : panel.vlines) {
      s << "<line x1=\"" << fixed(sx(v)) << "\" x2=\"" << fixed(sx(v)) << "\" y1=\"" << top << "\" y2=\""
        << top + h << "\" stroke=\"#888\" stroke-dasharray=\"4,3\"/>\n";
    }

    double legend_x = left + 8;
    for (std::size_t k = 0; k < panel.series.size(); ++k) {
      const auto& ser = panel.series[k];
      const std::string color = ser.color.empty() ? kPalette[k % 6] : ser.color;
      const std::size_t count = std::min(ser.x.size(), ser.y.size());
      if (ser.markers_only) {
        for (std::size_t i = 0; i < count; ++i) {
          s << "<circle cx=\"" << fixed(sx(ser.x[i])) << "\" cy=\"" << fixed(sy(ser.y[i]))
            << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
      } else if (count > 0) {
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
        for (std::size_t i = 0; i < count; ++i) {
          s << (i ? " " : "") << fixed(sx(ser.x[i])) << ',' << fixed(sy(ser.y[i]));
        }
        s << "\"/>\n";
      }
      s << "<text x=\"" << fixed(legend_x) << "\" y=\"" << fixed(top + 12) << "\" fill=\"" << color << "\">"
        << escape(ser.label) << "</text>\n";
      legend_x += 12.0 + 7.0 * static_cast<double>(ser.label.size());
    }
    s << "</g>\n";
  }

  s << "<!-- data\n";
  for (const auto& panel : panels) {
    for (const auto& ser : panel.series) {
      s << "series " << escape(panel.title) << " / " << escape(ser.label) << ':';
      for (std::size_t i = 0; i < std::min(ser.x.size(), ser.y.size()); ++i) {
        s << ' ' << format_double(ser.x[i]) << ',' << format_double(ser.y[i]);
      }
      s << '\n';
    }
  }
  s << "-->\n</svg>\n";
  return s.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw Error("write failure on '" + path + "'");
}

}  // namespace convexecg::svg
