#pragma once
#include <string>
#include <vector>

namespace foldnet {

// Deterministic SVG assembly: fixed attribute order, fixed "%.3f" coordinate
// formatting, no timestamps, so identical inputs give identical bytes.
class SvgCanvas {
 public:
  SvgCanvas(double width, double height);

  void line(double x1, double y1, double x2, double y2, const std::string& color,
            double stroke_width = 1.0);
  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke = "none");
  void circle(double cx, double cy, double r, const std::string& fill);
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                double stroke_width = 1.0);
  void text(double x, double y, const std::string& content, double size = 11.0,
            const std::string& anchor = "start");

  std::string finish() const;

 private:
  double width_, height_;
  std::string body_;
};

// Shared axis mapping for the plot helpers.
struct AxisMap {
  double x0, x1, y0, y1;      // data range
  double px0, px1, py0, py1;  // pixel range (py0 = bottom)
  double px(double x) const;
  double py(double y) const;
};

}  // namespace foldnet
