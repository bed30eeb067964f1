#pragma once

#include <string>
#include <vector>

#include "amlmc/experiment.hpp"

namespace amlmc {

/// Log-log scatter of cost against MSE, one series per method with its OLS
/// line. Methods without plottable points are omitted and reported in the
/// returned warnings; a single-point series gets no line.
std::string render_svg(const std::vector<MethodPoint>& points, const std::string& title,
                       std::vector<std::string>* warnings = nullptr);

/// Reads a points CSV and writes the SVG; returns the warnings.
std::vector<std::string> emit_plot(const std::string& points_csv, const std::string& svg_path,
                                   const std::string& title);

}  // namespace amlmc
