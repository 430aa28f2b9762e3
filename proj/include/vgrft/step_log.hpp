// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vgrft {

/// Per-step training record. The CSV carries the first eight fields; the
/// advantage diagnostics stay in memory.
struct StepLog {
  std::int64_t step = 0;
  double mean_reward = 0.0;
  double reward_std = 0.0;  // per-group population std, averaged over groups
  double mean_iou = 0.0;
  double var_iou = 0.0;
  double mean_w = 0.0;
  double loss = 0.0;
  double acc05 = 0.0;  // greedy decoding on the step's queries

  double adv_max_abs_mean = 0.0;  // worst |mean advantage| over groups with variance
  double adv_max_std_error = 0.0;  // worst |std(advantage) - 1| over groups with variance
  int groups_with_variance = 0;
};

inline constexpr const char* kStepLogHeader = "step,mean_reward,reward_std,mean_iou,var_iou,mean_w,loss,acc05";

std::string to_csv_row(const StepLog& s);
std::string to_csv(const std::vector<StepLog>& logs);  // with header
void write_step_logs(const std::filesystem::path& path, const std::vector<StepLog>& logs);
/// Throws DataError naming the line on malformed rows.
std::vector<StepLog> read_step_logs(const std::filesystem::path& path);

}  // namespace vgrft
