#pragma once

#include <string>
#include <vector>

#include "core/linalg.hpp"

namespace cpinn {

// Minimal self-contained SVG plotting: enough for interval bands, scatter
// points, line charts and width heatmaps. CSV stays the authoritative
// output; these files are a convenience view.
class SvgCanvas {
 public:
  SvgCanvas(double width, double height);

  void set_data_range(double x_min, double x_max, double y_min, double y_max);

  void band(const std::vector<double>& x, const std::vector<double>& lo,
            const std::vector<double>& hi, const std::string& fill, double opacity);
  void polyline(const std::vector<double>& x, const std::vector<double>& y,
                const std::string& stroke, double stroke_width = 1.5);
  void points(const std::vector<double>& x, const std::vector<double>& y,
              const std::string& fill, double radius = 2.0);
  void heatmap_cell(double x0, double x1, double y0, double y1, double value,
                    double v_min, double v_max);
  void axes(const std::string& x_label, const std::string& y_label);
  void title(const std::string& text);
  void legend(const std::vector<std::pair<std::string, std::string>>& entries);

  void write(const std::string& path) const;

 private:
  double px(double x) const;
  double py(double y) const;

  double width_, height_;
  double x_min_ = 0.0, x_max_ = 1.0, y_min_ = 0.0, y_max_ = 1.0;
  std::string body_;
};

}  // namespace cpinn
