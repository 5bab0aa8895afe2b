#include "rrlab/svg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "rrlab/io.hpp"

namespace rrlab {

namespace {

constexpr const char* kPalette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e",
                                    "#e6ab02", "#a6761d", "#666666", "#1f78b4", "#b2df8a"};

struct Rgb {
  double r, g, b;
};

// Light (#f7fbff) to dark (#08306b) blue.
Rgb blues(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const Rgb lo{247, 251, 255}, hi{8, 48, 107};
  return {lo.r + (hi.r - lo.r) * t, lo.g + (hi.g - lo.g) * t, lo.b + (hi.b - lo.b) * t};
}

std::string hex(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(c.r)), static_cast<int>(std::lround(c.g)),
                static_cast<int>(std::lround(c.b)));
  return buf;
}

std::string num(double v) { return format_fixed(v, 2); }

void open_svg(std::ostringstream& out, double w, double h) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
      << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\" font-family=\"sans-serif\">\n";
}

}  // namespace

std::string svg_timestamp() {
  if (const char* pinned = std::getenv("SOURCE_DATE_EPOCH"); pinned && *pinned) return pinned;
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return std::to_string(std::chrono::duration_cast<std::chrono::seconds>(now).count());
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string heatmap_svg(const Matrix& m, const std::string& title, const std::string& row_label,
                        const std::string& col_label) {
  if (m.rows() == 0 || m.cols() == 0) throw std::invalid_argument("heatmap_svg: empty matrix");
  if (!m.all_finite()) throw NumericError("heatmap_svg: non-finite matrix entry");
  const double cell = 48.0, left = 70.0, top = 60.0;
  const double w = left + cell * static_cast<double>(m.cols()) + 20.0;
  const double h = top + cell * static_cast<double>(m.rows()) + 40.0;
  const double lo = *std::min_element(m.data().begin(), m.data().end());
  const double hi = *std::max_element(m.data().begin(), m.data().end());

  std::ostringstream out;
  open_svg(out, w, h);
  out << "  <metadata>\n"
      << "    <colorscale name=\"blues\" mapping=\"linear\" min=\"" << format_double(lo) << "\" max=\""
      << format_double(hi) << "\" low-color=\"#f7fbff\" high-color=\"#08306b\"/>\n"
      << "    <generated epoch=\"" << xml_escape(svg_timestamp()) << "\"/>\n"
      << "  </metadata>\n";
  out << "  <text x=\"" << num(w / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(title)
      << "</text>\n";
  out << "  <text x=\"" << num(left + cell * static_cast<double>(m.cols()) / 2) << "\" y=\"46\" text-anchor=\"middle\" "
      << "font-size=\"12\">" << xml_escape(col_label) << "</text>\n";
  out << "  <text x=\"16\" y=\"" << num(top + cell * static_cast<double>(m.rows()) / 2)
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << num(top + cell * static_cast<double>(m.rows()) / 2) << ")\">" << xml_escape(row_label) << "</text>\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << "  <text x=\"" << num(left - 8) << "\" y=\"" << num(top + cell * (static_cast<double>(r) + 0.5) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << r << "</text>\n";
  }
  for (std::size_t c = 0; c < m.cols(); ++c) {
    out << "  <text x=\"" << num(left + cell * (static_cast<double>(c) + 0.5)) << "\" y=\"" << num(top - 4)
        << "\" text-anchor=\"middle\" font-size=\"11\">" << c << "</text>\n";
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      const double x = left + cell * static_cast<double>(c), y = top + cell * static_cast<double>(r);
      out << "  <rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(cell) << "\" height=\""
          << num(cell) << "\" fill=\"" << hex(blues(t)) << "\" stroke=\"#ffffff\"/>\n";
      out << "  <text class=\"cell\" data-row=\"" << r << "\" data-col=\"" << c << "\" x=\"" << num(x + cell / 2)
          << "\" y=\"" << num(y + cell / 2 + 4) << "\" text-anchor=\"middle\" font-size=\"11\" fill=\""
          << (t > 0.55 ? "#ffffff" : "#000000") << "\">" << format_fixed(v, 2) << "</text>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

std::string line_chart_svg(const std::vector<LineSeries>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label, double y_min, double y_max) {
  if (!(y_max > y_min)) throw std::invalid_argument("line_chart_svg: empty y range");
  const double w = 640, h = 400, left = 60, right = 150, top = 40, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  double x_max = 1.0;
  for (const auto& s : series) {
    for (const auto& p : s.points) x_max = std::max(x_max, p.first);
  }
  auto sx = [&](double x) { return left + pw * x / x_max; };
  auto sy = [&](double y) { return top + ph * (1.0 - (std::clamp(y, y_min, y_max) - y_min) / (y_max - y_min)); };

  std::ostringstream out;
  open_svg(out, w, h);
  out << "  <metadata>\n    <generated epoch=\"" << xml_escape(svg_timestamp()) << "\"/>\n  </metadata>\n";
  out << "  <text x=\"" << num(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";
  out << "  <rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
      << "\" fill=\"none\" stroke=\"#444444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = y_min + (y_max - y_min) * i / 4.0;
    out << "  <line x1=\"" << num(left) << "\" y1=\"" << num(sy(y)) << "\" x2=\"" << num(left + pw) << "\" y2=\""
        << num(sy(y)) << "\" stroke=\"#dddddd\"/>\n";
    out << "  <text x=\"" << num(left - 6) << "\" y=\"" << num(sy(y) + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
        << num(y) << "</text>\n";
  }
  out << "  <text x=\"" << num(left + pw / 2) << "\" y=\"" << num(h - 12) << "\" text-anchor=\"middle\" font-size=\"12\">"
      << xml_escape(x_label) << "</text>\n";
  out << "  <text x=\"" << num(left) << "\" y=\"" << num(h - 30) << "\" text-anchor=\"middle\" font-size=\"11\">0</text>\n";
  out << "  <text x=\"" << num(left + pw) << "\" y=\"" << num(h - 30) << "\" text-anchor=\"middle\" font-size=\"11\">"
      << format_double(x_max) << "</text>\n";
  out << "  <text x=\"14\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
      << num(top + ph / 2) << ")\">" << xml_escape(y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    out << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" data-series=\""
        << xml_escape(series[i].name) << "\" points=\"";
    for (std::size_t j = 0; j < series[i].points.size(); ++j) {
      out << (j ? " " : "") << num(sx(series[i].points[j].first)) << ',' << num(sy(series[i].points[j].second));
    }
    out << "\"/>\n";
    const double ly = top + 14.0 * static_cast<double>(i) + 8;
    out << "  <line x1=\"" << num(left + pw + 10) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(left + pw + 26)
        << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "  <text x=\"" << num(left + pw + 30) << "\" y=\"" << num(ly + 4) << "\" font-size=\"11\">"
        << xml_escape(series[i].name) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string range_bars_svg(const RewardRangeStats& stats, const std::string& title) {
  std::vector<RangeEntry> entries = stats.sources;
  entries.push_back(stats.integrated);
  double lo = entries.front().min, hi = entries.front().max;
  for (const auto& e : entries) {
    lo = std::min(lo, e.min);
    hi = std::max(hi, e.max);
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double bar = 36, gap = 24, left = 60, top = 40, ph = 260;
  const double w = left + (bar + gap) * static_cast<double>(entries.size()) + 20;
  const double h = top + ph + 70;
  auto sy = [&](double y) { return top + ph * (1.0 - (y - lo) / (hi - lo)); };

  std::ostringstream out;
  open_svg(out, w, h);
  out << "  <metadata>\n    <range min=\"" << format_double(lo) << "\" max=\"" << format_double(hi) << "\"/>\n"
      << "    <generated epoch=\"" << xml_escape(svg_timestamp()) << "\"/>\n  </metadata>\n";
  out << "  <text x=\"" << num(w / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(title)
      << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = lo + (hi - lo) * i / 4.0;
    out << "  <text x=\"" << num(left - 6) << "\" y=\"" << num(sy(y) + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
        << num(y) << "</text>\n";
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const double x = left + gap / 2 + (bar + gap) * static_cast<double>(i);
    const bool integrated = i + 1 == entries.size();
    out << "  <rect x=\"" << num(x) << "\" y=\"" << num(sy(e.max)) << "\" width=\"" << num(bar) << "\" height=\""
        << num(std::max(1.0, sy(e.min) - sy(e.max))) << "\" fill=\"" << (integrated ? "#d95f02" : "#1f78b4")
        << "\" fill-opacity=\"0.6\" data-source=\"" << xml_escape(e.id) << "\"/>\n";
    out << "  <line x1=\"" << num(x) << "\" y1=\"" << num(sy(e.mean)) << "\" x2=\"" << num(x + bar) << "\" y2=\""
        << num(sy(e.mean)) << "\" stroke=\"#000000\" stroke-width=\"2\"/>\n";
    out << "  <text x=\"" << num(x + bar / 2) << "\" y=\"" << num(top + ph + 16)
        << "\" text-anchor=\"end\" font-size=\"10\" transform=\"rotate(-40 " << num(x + bar / 2) << ' '
        << num(top + ph + 16) << ")\">" << xml_escape(e.id) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace rrlab
