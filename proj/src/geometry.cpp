// SPDX-License-Identifier: Apache-2.0
#include "vgrft/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "vgrft/errors.hpp"

namespace vgrft {

namespace {

void require_valid(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) {
    throw GeometryError(fmt::format("degenerate box: {} vs {}", to_string(a), to_string(b)));
  }
}

struct Overlap {
  double inter;
  double uni;
  Box enclosing;
};

Overlap overlap(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const Box enc{std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
                std::max(a.y2, b.y2)};
  return {inter, a.area() + b.area() - inter, enc};
}

}  // namespace

bool Box::valid() const noexcept {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x2 > x1 && y2 > y1;
}

bool Box::inside(double image_w, double image_h) const noexcept {
  return valid() && x1 >= 0.0 && y1 >= 0.0 && x2 <= image_w && y2 <= image_h;
}

std::string to_string(const Box& b) {
  return fmt::format("[{},{},{},{}]", b.x1, b.y1, b.x2, b.y2);
}

double iou(const Box& a, const Box& b) {
  require_valid(a, b);
  const Overlap o = overlap(a, b);
  return o.inter / o.uni;
}

double giou(const Box& a, const Box& b) {
  require_valid(a, b);
  const Overlap o = overlap(a, b);
  const double enc_area = o.enclosing.area();
  return o.inter / o.uni - (enc_area - o.uni) / enc_area;
}

double diou(const Box& a, const Box& b) {
  require_valid(a, b);
  const Overlap o = overlap(a, b);
  const double dx = a.cx() - b.cx();
  const double dy = a.cy() - b.cy();
  const double diag2 = o.enclosing.width() * o.enclosing.width() +
                       o.enclosing.height() * o.enclosing.height();
  return o.inter / o.uni - (dx * dx + dy * dy) / diag2;
}

double center_distance_reward(const Box& a, const Box& b, double image_w, double image_h) {
  if (!(image_w > 0.0) || !(image_h > 0.0)) {
    throw ConfigError(fmt::format("image dimensions must be positive, got {}x{}", image_w, image_h));
  }
  require_valid(a, b);
  const double d = std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
  return std::max(0.0, 1.0 - d / std::hypot(image_w, image_h));
}

}  // namespace vgrft
