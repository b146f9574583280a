#include "core/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "core/errors.hpp"

namespace cpinn {

namespace {

constexpr double kMarginLeft = 56.0;
constexpr double kMarginRight = 16.0;
constexpr double kMarginTop = 28.0;
constexpr double kMarginBottom = 44.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace

SvgCanvas::SvgCanvas(double width, double height) : width_(width), height_(height) {}

void SvgCanvas::set_data_range(double x_min, double x_max, double y_min, double y_max) {
  x_min_ = x_min;
  x_max_ = x_max;
  y_min_ = y_min;
  y_max_ = y_max;
  if (x_max_ <= x_min_) x_max_ = x_min_ + 1.0;
  if (y_max_ <= y_min_) y_max_ = y_min_ + 1.0;
}

double SvgCanvas::px(double x) const {
  return kMarginLeft + (x - x_min_) / (x_max_ - x_min_) * (width_ - kMarginLeft - kMarginRight);
}

double SvgCanvas::py(double y) const {
  return height_ - kMarginBottom -
         (y - y_min_) / (y_max_ - y_min_) * (height_ - kMarginTop - kMarginBottom);
}

void SvgCanvas::band(const std::vector<double>& x, const std::vector<double>& lo,
                     const std::vector<double>& hi, const std::string& fill,
                     double opacity) {
  if (x.empty()) return;
  std::string pts;
  for (std::size_t i = 0; i < x.size(); ++i) {
    pts += fmt(px(x[i])) + "," + fmt(py(hi[i])) + " ";
  }
  for (std::size_t i = x.size(); i-- > 0;) {
    pts += fmt(px(x[i])) + "," + fmt(py(lo[i])) + " ";
  }
  body_ += "<polygon points=\"" + pts + "\" fill=\"" + fill + "\" opacity=\"" +
           fmt(opacity) + "\" stroke=\"none\"/>\n";
}

void SvgCanvas::polyline(const std::vector<double>& x, const std::vector<double>& y,
                         const std::string& stroke, double stroke_width) {
  if (x.empty()) return;
  std::string pts;
  for (std::size_t i = 0; i < x.size(); ++i) {
    pts += fmt(px(x[i])) + "," + fmt(py(y[i])) + " ";
  }
  body_ += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + stroke +
           "\" stroke-width=\"" + fmt(stroke_width) + "\"/>\n";
}

void SvgCanvas::points(const std::vector<double>& x, const std::vector<double>& y,
                       const std::string& fill, double radius) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    body_ += "<circle cx=\"" + fmt(px(x[i])) + "\" cy=\"" + fmt(py(y[i])) + "\" r=\"" +
             fmt(radius) + "\" fill=\"" + fill + "\"/>\n";
  }
}

void SvgCanvas::heatmap_cell(double x0, double x1, double y0, double y1, double value,
                             double v_min, double v_max) {
  double t = (value - v_min) / std::max(v_max - v_min, 1e-300);
  t = std::clamp(t, 0.0, 1.0);
  // blue -> white -> red
  int r = 0, g = 0, b = 0;
  if (t < 0.5) {
    const double s = t / 0.5;
    r = static_cast<int>(60 + 195 * s);
    g = static_cast<int>(90 + 165 * s);
    b = 255;
  } else {
    const double s = (t - 0.5) / 0.5;
    r = 255;
    g = static_cast<int>(255 - 175 * s);
    b = static_cast<int>(255 - 195 * s);
  }
  char color[16];
  std::snprintf(color, sizeof(color), "#%02x%02x%02x", r, g, b);
  const double X0 = px(x0), X1 = px(x1);
  const double Y0 = py(y1), Y1 = py(y0);  // flipped vertical axis
  body_ += "<rect x=\"" + fmt(X0) + "\" y=\"" + fmt(Y0) + "\" width=\"" + fmt(X1 - X0) +
           "\" height=\"" + fmt(Y1 - Y0) + "\" fill=\"" + std::string(color) + "\"/>\n";
}

void SvgCanvas::axes(const std::string& x_label, const std::string& y_label) {
  const double x0 = kMarginLeft, x1 = width_ - kMarginRight;
  const double y0 = height_ - kMarginBottom, y1 = kMarginTop;
  body_ += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(x1) +
           "\" y2=\"" + fmt(y0) + "\" stroke=\"#333\"/>\n";
  body_ += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(x0) +
           "\" y2=\"" + fmt(y1) + "\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x_min_ + (x_max_ - x_min_) * i / 4.0;
    const double fy = y_min_ + (y_max_ - y_min_) * i / 4.0;
    body_ += "<text x=\"" + fmt(px(fx)) + "\" y=\"" + fmt(y0 + 16) +
             "\" font-size=\"10\" text-anchor=\"middle\" fill=\"#333\">" + fmt_tick(fx) +
             "</text>\n";
    body_ += "<text x=\"" + fmt(x0 - 6) + "\" y=\"" + fmt(py(fy) + 3) +
             "\" font-size=\"10\" text-anchor=\"end\" fill=\"#333\">" + fmt_tick(fy) +
             "</text>\n";
  }
  body_ += "<text x=\"" + fmt((x0 + x1) / 2) + "\" y=\"" + fmt(height_ - 8) +
           "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#111\">" + x_label +
           "</text>\n";
  body_ += "<text x=\"14\" y=\"" + fmt((y0 + y1) / 2) +
           "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#111\" transform=\"rotate(-90 14 " +
           fmt((y0 + y1) / 2) + ")\">" + y_label + "</text>\n";
}

void SvgCanvas::title(const std::string& text) {
  body_ += "<text x=\"" + fmt(width_ / 2) +
           "\" y=\"18\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111\">" + text +
           "</text>\n";
}

void SvgCanvas::legend(const std::vector<std::pair<std::string, std::string>>& entries) {
  double y = kMarginTop + 8.0;
  for (const auto& [label, color] : entries) {
    const double x = width_ - kMarginRight - 130.0;
    body_ += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y - 8) +
             "\" width=\"12\" height=\"8\" fill=\"" + color + "\"/>\n";
    body_ += "<text x=\"" + fmt(x + 16) + "\" y=\"" + fmt(y) +
             "\" font-size=\"10\" fill=\"#333\">" + label + "</text>\n";
    y += 14.0;
  }
}

void SvgCanvas::write(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\""
      << height_ << "\" viewBox=\"0 0 " << width_ << " " << height_ << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << body_ << "</svg>\n";
  require(out.good(), ErrorCode::io_error, "failed writing " + path);
}

}  // namespace cpinn
