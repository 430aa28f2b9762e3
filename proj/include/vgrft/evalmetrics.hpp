// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vgrft/geometry.hpp"
#include "vgrft/jsonl.hpp"
#include "vgrft/step_log.hpp"

namespace vgrft::eval {

struct PredictionPair {
  std::string id;
  std::optional<Box> pred;  // absent predictions score IoU 0
  Box gt;
  std::string kind;  // expression kind for breakdowns; may be empty
};

/// IoU used by the metrics: 0 for absent or degenerate predictions.
double pair_iou(const PredictionPair& p);

/// Fraction of pairs with IoU > threshold (>= when `inclusive`).
/// Throws DataError on an empty list ("undefined metric").
double accuracy_at(std::span<const PredictionPair> pairs, double threshold, bool inclusive = false);

/// Mean IoU. Throws DataError on an empty list.
double mean_iou(std::span<const PredictionPair> pairs);

struct KindStats {
  std::size_t n = 0;
  double acc_at_05 = 0.0;
  double acc_at_07 = 0.0;
  double miou = 0.0;
};

struct EvalReport {
  std::size_t n = 0;
  double acc_at_05 = 0.0;
  double acc_at_07 = 0.0;
  double miou = 0.0;
  std::map<std::string, KindStats> per_kind;
  std::vector<double> reward_std_series;

  [[nodiscard]] jsonl::json to_json() const;
  [[nodiscard]] std::string to_text() const;
};

EvalReport evaluate(std::span<const PredictionPair> pairs, bool inclusive = false);

/// Trailing moving average of the per-step reward std. Window 1 is the
/// identity; the first window-1 entries average over what is available.
std::vector<double> reward_std_curve(std::span<const StepLog> logs, std::size_t window = 50);

/// JSON Lines {id, pred_box | null, gt_box[, kind]}. Throws DataError naming
/// the line on schema violations.
std::vector<PredictionPair> load_predictions(const std::filesystem::path& path);
jsonl::json prediction_to_json(const PredictionPair& p);

}  // namespace vgrft::eval
