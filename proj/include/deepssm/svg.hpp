#pragma once

#include <string>
#include <vector>

#include "deepssm/common.hpp"

namespace deepssm::plot {

/// Self-contained SVG line plot: measured series, predicted mean, and a
/// +-band polygon (mean +- 3 sigma in the evaluation reports).
struct SeriesPlot {
  std::string title;
  Vec t;       // shared x values
  Vec truth;   // measured output
  Vec mean;    // predicted mean
  Vec lo, hi;  // band edges; empty disables the band
  int width = 960;
  int height = 360;
};

std::string render_svg(const SeriesPlot& p);
void write_svg(const std::string& path, const SeriesPlot& p);

}  // namespace deepssm::plot
