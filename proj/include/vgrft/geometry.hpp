// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>

namespace vgrft {

/// Axis-aligned box in continuous pixel coordinates, top-left (x1,y1) to
/// bottom-right (x2,y2). Area is (x2-x1)*(y2-y1); no inclusive-pixel offset.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  [[nodiscard]] bool valid() const noexcept;
  [[nodiscard]] double width() const noexcept { return x2 - x1; }
  [[nodiscard]] double height() const noexcept { return y2 - y1; }
  [[nodiscard]] double area() const noexcept { return width() * height(); }
  [[nodiscard]] double cx() const noexcept { return 0.5 * (x1 + x2); }
  [[nodiscard]] double cy() const noexcept { return 0.5 * (y1 + y2); }

  /// True when the box is valid and lies inside [0,w] x [0,h].
  [[nodiscard]] bool inside(double image_w, double image_h) const noexcept;

  [[nodiscard]] std::array<double, 4> as_array() const noexcept { return {x1, y1, x2, y2}; }
  static Box from_array(const std::array<double, 4>& a) noexcept { return {a[0], a[1], a[2], a[3]}; }

  friend bool operator==(const Box&, const Box&) = default;
};

std::string to_string(const Box& b);

// All pairwise measures throw GeometryError when either box is invalid.

/// Intersection over union, in [0,1].
double iou(const Box& a, const Box& b);

/// Generalized IoU: iou - (enclosing - union) / enclosing, in [-1,1].
double giou(const Box& a, const Box& b);

/// Distance IoU: iou - |c_a - c_b|^2 / diag(enclosing)^2, in [-1,1].
double diou(const Box& a, const Box& b);

/// 1 - |c_a - c_b| / image diagonal, floored at 0. Throws ConfigError on
/// non-positive image dimensions.
double center_distance_reward(const Box& a, const Box& b, double image_w, double image_h);

}  // namespace vgrft
