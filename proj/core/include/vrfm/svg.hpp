#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vrfm/common.hpp"

namespace vrfm {

// Dependency-free SVG emission for the figure-style outputs. CSV files are
// the contract; these plots are a convenience.

struct Series {
  std::string label;
  std::vector<double> y;
  std::vector<double> yerr;  // optional, same length as y
  std::string color = "#1f77b4";
};

/// Line chart over categorical x positions (one per tick label).
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel,
                      const std::vector<std::string>& x_tick_labels,
                      const std::vector<Series>& series);

/// Heatmap of a (x-bins) x (t-bins) matrix; masked cells render gray.
void write_heatmap(const std::string& path, const std::string& title,
                   const std::vector<double>& xs, const std::vector<double>& ts,
                   const Matrix& values, const Matrix& mask);

struct PointSet {
  std::string label;
  Matrix points;  // n x 2
  std::string color = "#1f77b4";
};

/// 2D trajectories (polylines) with optional source/target scatter overlays.
void write_trajectories_2d(const std::string& path, const std::string& title,
                           const std::vector<Matrix>& paths,  // each k x 2
                           const std::vector<PointSet>& overlays);

/// 1D trajectories drawn over (t, x).
void write_trajectories_1d(const std::string& path, const std::string& title,
                           const std::vector<double>& times,
                           const std::vector<std::vector<double>>& paths);

}  // namespace vrfm
