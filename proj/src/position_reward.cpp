// SPDX-License-Identifier: Apache-2.0
#include "vgrft/position_reward.hpp"

#include <cmath>

#include <fmt/format.h>

#include "vgrft/errors.hpp"

namespace vgrft {

KernelParams KernelParams::from_gt(const Box& gt, double alpha, double image_w, double image_h) {
  if (!(alpha > 0.0)) throw ConfigError(fmt::format("alpha must be positive, got {}", alpha));
  if (!(image_w > 0.0) || !(image_h > 0.0)) {
    throw ConfigError(fmt::format("image dimensions must be positive, got {}x{}", image_w, image_h));
  }
  if (!gt.valid()) throw ConfigError("ground-truth box is degenerate: " + to_string(gt));
  if (gt.cx() < 0.0 || gt.cx() > image_w || gt.cy() < 0.0 || gt.cy() > image_h) {
    throw ConfigError("ground-truth center lies outside the image: " + to_string(gt));
  }
  KernelParams p;
  p.alpha = alpha;
  p.cx = gt.cx();
  p.cy = gt.cy();
  p.sigma_x = alpha * gt.width() / 2.0;
  p.sigma_y = alpha * gt.height() / 2.0;
  p.image_w = image_w;
  p.image_h = image_h;
  return p;
}

double kernel_value(const KernelParams& p, double x, double y) noexcept {
  const double dx = x - p.cx;
  const double dy = y - p.cy;
  return std::exp(-dx * dx / (2.0 * p.sigma_x * p.sigma_x) - dy * dy / (2.0 * p.sigma_y * p.sigma_y));
}

namespace {

struct PixelRange {
  long long x_begin, x_end, y_begin, y_end;  // half-open
  [[nodiscard]] bool empty() const { return x_end <= x_begin || y_end <= y_begin; }
};

std::optional<PixelRange> pixel_range(const Box& b) {
  if (!b.valid()) return std::nullopt;
  PixelRange r{static_cast<long long>(std::ceil(b.x1)), static_cast<long long>(std::ceil(b.x2)),
               static_cast<long long>(std::ceil(b.y1)), static_cast<long long>(std::ceil(b.y2))};
  if (r.empty()) return std::nullopt;
  return r;
}

double axis_sum(long long begin, long long end, double center, double sigma) {
  double s = 0.0;
  const double denom = 2.0 * sigma * sigma;
  for (long long i = begin; i < end; ++i) {
    const double d = static_cast<double>(i) - center;
    s += std::exp(-d * d / denom);
  }
  return s;
}

}  // namespace

PositionalReward positional_reward(const Box& pred, const KernelParams& p) {
  const auto r = pixel_range(pred);
  if (!r) return {0.0, true};
  double s = 0.0;
  for (long long y = r->y_begin; y < r->y_end; ++y) {
    for (long long x = r->x_begin; x < r->x_end; ++x) {
      s += kernel_value(p, static_cast<double>(x), static_cast<double>(y));
    }
  }
  const double n = static_cast<double>((r->x_end - r->x_begin) * (r->y_end - r->y_begin));
  return {s / n, false};
}

PositionalReward positional_reward_separable(const Box& pred, const KernelParams& p) {
  const auto r = pixel_range(pred);
  if (!r) return {0.0, true};
  const double mx = axis_sum(r->x_begin, r->x_end, p.cx, p.sigma_x) /
                    static_cast<double>(r->x_end - r->x_begin);
  const double my = axis_sum(r->y_begin, r->y_end, p.cy, p.sigma_y) /
                    static_cast<double>(r->y_end - r->y_begin);
  return {mx * my, false};
}

std::string_view to_string(Proximity k) {
  switch (k) {
    case Proximity::Gaussian: return "gaussian";
    case Proximity::GIoU: return "giou";
    case Proximity::DIoU: return "diou";
    case Proximity::CenterDistance: return "center";
  }
  return "unknown";
}

std::optional<Proximity> proximity_from_string(std::string_view s) {
  for (auto k : {Proximity::Gaussian, Proximity::GIoU, Proximity::DIoU, Proximity::CenterDistance}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

RewardBreakdown composite_reward(const std::optional<Box>& pred, const Box& gt, bool format_ok,
                                 const RewardWeights& w, const KernelParams& p) {
  RewardBreakdown r;
  r.format = format_ok ? w.format_weight : 0.0;
  if (pred && pred->valid()) {
    r.iou = iou(*pred, gt);
    switch (w.proximity) {
      case Proximity::Gaussian: r.pos = positional_reward_separable(*pred, p).value; break;
      case Proximity::GIoU: r.pos = giou(*pred, gt); break;
      case Proximity::DIoU: r.pos = diou(*pred, gt); break;
      case Proximity::CenterDistance:
        r.pos = center_distance_reward(*pred, gt, p.image_w, p.image_h);
        break;
    }
  }
  r.total = r.format + r.iou + w.beta * r.pos;
  return r;
}

}  // namespace vgrft
