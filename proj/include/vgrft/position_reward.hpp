// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string_view>

#include "vgrft/geometry.hpp"

namespace vgrft {

/// Gaussian proximity kernel anchored at a ground-truth box:
///   K(x,y) = exp(-(x-cx)^2 / (2 sx^2) - (y-cy)^2 / (2 sy^2)),
/// with sx = alpha*W/2, sy = alpha*H/2 for the GT width W and height H.
/// The supremum of K over the plane is 1 (attained at the GT center), so
/// max-normalization leaves K unchanged.
struct KernelParams {
  double alpha = 2.5;
  double cx = 0.0;
  double cy = 0.0;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double image_w = 0.0;
  double image_h = 0.0;

  /// Throws ConfigError for alpha <= 0, non-positive image size, or an
  /// invalid GT box; GeometryError is not used here since the GT is config.
  static KernelParams from_gt(const Box& gt, double alpha, double image_w, double image_h);
};

double kernel_value(const KernelParams& p, double x, double y) noexcept;

struct PositionalReward {
  double value = 0.0;
  bool degenerate = false;  // invalid box or empty pixel set
};

/// Mean kernel activation over the lattice points {ceil(x1),...,ceil(x2)-1} x
/// {ceil(y1),...,ceil(y2)-1} of the predicted box. Direct O(w*h) summation.
PositionalReward positional_reward(const Box& pred, const KernelParams& p);

/// Same value via the factorization K(x,y) = gx(x) * gy(y); O(w+h).
PositionalReward positional_reward_separable(const Box& pred, const KernelParams& p);

/// Which proximity term fills the third reward channel. Gaussian is the
/// positional reward; the others are the distance-aware baselines.
enum class Proximity { Gaussian, GIoU, DIoU, CenterDistance };

std::string_view to_string(Proximity k);
std::optional<Proximity> proximity_from_string(std::string_view s);

struct RewardWeights {
  double beta = 0.1;
  double format_weight = 1.0;
  Proximity proximity = Proximity::Gaussian;
};

struct RewardBreakdown {
  double format = 0.0;
  double iou = 0.0;
  double pos = 0.0;  // proximity channel before the beta factor
  double total = 0.0;
};

/// total = format_weight*[format_ok] + iou + beta*pos. A missing or invalid
/// prediction scores 0 on the iou and proximity channels.
RewardBreakdown composite_reward(const std::optional<Box>& pred, const Box& gt, bool format_ok,
                                 const RewardWeights& w, const KernelParams& p);

}  // namespace vgrft
