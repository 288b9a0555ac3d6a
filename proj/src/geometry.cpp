#include "cilbench/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cilbench {

BBox::BBox(double x_min, double y_min, double x_max, double y_max)
    : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
  if (!std::isfinite(x_min) || !std::isfinite(y_min) || !std::isfinite(x_max) ||
      !std::isfinite(y_max)) {
    throw std::invalid_argument("bbox coordinates must be finite");
  }
  if (!(x_min < x_max) || !(y_min < y_max)) {
    throw std::invalid_argument(
        "bbox must have positive area: (" + std::to_string(x_min) + ", " +
        std::to_string(y_min) + ", " + std::to_string(x_max) + ", " +
        std::to_string(y_max) + ")");
  }
}

double iou(const BBox& a, const BBox& b) {
  if (a == b) return 1.0;
  const double iw =
      std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double ih =
      std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BBox mask_bounds(std::span<const Point> polygon) {
  if (polygon.size() < 3) {
    throw std::invalid_argument("mask polygon needs at least 3 vertices");
  }
  double x0 = polygon[0].x, x1 = polygon[0].x;
  double y0 = polygon[0].y, y1 = polygon[0].y;
  for (const Point& p : polygon) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  if (!(x0 < x1) || !(y0 < y1)) {
    throw std::invalid_argument("mask polygon has zero-area bounds");
  }
  return BBox(x0, y0, x1, y1);
}

bool boxes_close(const BBox& a, const BBox& b, double tolerance) {
  return std::abs(a.x_min() - b.x_min()) <= tolerance &&
         std::abs(a.y_min() - b.y_min()) <= tolerance &&
         std::abs(a.x_max() - b.x_max()) <= tolerance &&
         std::abs(a.y_max() - b.y_max()) <= tolerance;
}

}  // namespace cilbench
