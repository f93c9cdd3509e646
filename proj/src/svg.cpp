#include "deepssm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace deepssm::plot {

namespace {

struct Mapper {
  double x0, x1, y0, y1;
  double px0, px1, py0, py1;
  double x(double v) const { return px0 + (v - x0) / (x1 - x0) * (px1 - px0); }
  double y(double v) const { return py0 + (v - y0) / (y1 - y0) * (py1 - py0); }
};

void polyline(std::ostringstream& os, const Mapper& m, const Vec& t,
              const Vec& v, const char* color, double width) {
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
     << width << "\" points=\"";
  for (size_t i = 0; i < t.size(); ++i)
    os << m.x(t[i]) << ',' << m.y(v[i]) << ' ';
  os << "\"/>\n";
}

}  // namespace

std::string render_svg(const SeriesPlot& p) {
  if (p.t.empty() || p.t.size() != p.truth.size() ||
      p.t.size() != p.mean.size())
    throw ValueError("render_svg: series lengths mismatch or empty");
  const bool band = !p.lo.empty();
  if (band && (p.lo.size() != p.t.size() || p.hi.size() != p.t.size()))
    throw ValueError("render_svg: band lengths mismatch");

  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  auto widen = [&](const Vec& v) {
    for (double x : v) {
      ymin = std::min(ymin, x);
      ymax = std::max(ymax, x);
    }
  };
  widen(p.truth);
  widen(p.mean);
  if (band) {
    widen(p.lo);
    widen(p.hi);
  }
  if (ymax == ymin) {
    ymax += 1.0;
    ymin -= 1.0;
  }
  const double pad = 0.05 * (ymax - ymin);
  Mapper m{p.t.front(), p.t.back(),        ymin - pad, ymax + pad,
           60.0,        p.width - 15.0,    p.height - 35.0, 15.0};

  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << p.width
     << "\" height=\"" << p.height << "\" viewBox=\"0 0 " << p.width << ' '
     << p.height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!p.title.empty())
    os << "<text x=\"" << p.width / 2 << "\" y=\"14\" text-anchor=\"middle\" "
          "font-family=\"sans-serif\" font-size=\"13\">"
       << p.title << "</text>\n";

  if (band) {
    os << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\" "
          "points=\"";
    for (size_t i = 0; i < p.t.size(); ++i)
      os << m.x(p.t[i]) << ',' << m.y(p.hi[i]) << ' ';
    for (size_t i = p.t.size(); i-- > 0;)
      os << m.x(p.t[i]) << ',' << m.y(p.lo[i]) << ' ';
    os << "\"/>\n";
  }
  polyline(os, m, p.t, p.truth, "#444444", 1.0);
  polyline(os, m, p.t, p.mean, "#d62728", 1.0);

  // axes
  os << "<line x1=\"60\" y1=\"15\" x2=\"60\" y2=\"" << (p.height - 35)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"60\" y1=\"" << (p.height - 35) << "\" x2=\""
     << (p.width - 15) << "\" y2=\"" << (p.height - 35)
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    os << "<text x=\"55\" y=\"" << m.y(yv) + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
          "font-size=\"10\">"
       << yv << "</text>\n";
    const double xv = p.t.front() + (p.t.back() - p.t.front()) * i / 4.0;
    os << "<text x=\"" << m.x(xv) << "\" y=\"" << (p.height - 20)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"10\">"
       << xv << "</text>\n";
  }
  os << "<text x=\"" << (p.width - 20)
     << "\" y=\"30\" text-anchor=\"end\" font-family=\"sans-serif\" "
        "font-size=\"11\" fill=\"#444444\">measured</text>\n";
  os << "<text x=\"" << (p.width - 20)
     << "\" y=\"46\" text-anchor=\"end\" font-family=\"sans-serif\" "
        "font-size=\"11\" fill=\"#d62728\">predicted mean</text>\n";
  os << "</svg>\n";
  return os.str();
}

void write_svg(const std::string& path, const SeriesPlot& p) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write plot " + path);
  os << render_svg(p);
}

}  // namespace deepssm::plot
