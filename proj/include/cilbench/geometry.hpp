#pragma once

#include <span>
#include <vector>

namespace cilbench {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using Polygon = std::vector<Point>;

// Axis-aligned box in continuous pixel coordinates, origin top-left.
// Always has strictly positive area; the constructor throws
// std::invalid_argument otherwise.
class BBox {
 public:
  BBox(double x_min, double y_min, double x_max, double y_max);

  double x_min() const { return x_min_; }
  double y_min() const { return y_min_; }
  double x_max() const { return x_max_; }
  double y_max() const { return y_max_; }

  double width() const { return x_max_ - x_min_; }
  double height() const { return y_max_ - y_min_; }
  double area() const { return width() * height(); }

  bool contains(const Point& p) const {
    return p.x >= x_min_ && p.x <= x_max_ && p.y >= y_min_ && p.y <= y_max_;
  }

  friend bool operator==(const BBox&, const BBox&) = default;

 private:
  double x_min_;
  double y_min_;
  double x_max_;
  double y_max_;
};

// Intersection over union. Symmetric, 1.0 for identical boxes, 0.0 when the
// boxes do not overlap.
double iou(const BBox& a, const BBox& b);

// Tight bounds of a polygon's vertices. Throws std::invalid_argument for
// fewer than three vertices or zero-area bounds.
BBox mask_bounds(std::span<const Point> polygon);

// True when every coordinate of `a` is within `tolerance` of `b`.
bool boxes_close(const BBox& a, const BBox& b, double tolerance);

}  // namespace cilbench
