// SPDX-License-Identifier: Apache-2.0
#include "vgrft/step_log.hpp"

#include <charconv>
#include <sstream>

#include <fmt/format.h>

#include "vgrft/errors.hpp"
#include "vgrft/jsonl.hpp"

namespace vgrft {

std::string to_csv_row(const StepLog& s) {
  // 17 significant digits round-trip exactly.
  return fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}", s.step, s.mean_reward,
                     s.reward_std, s.mean_iou, s.var_iou, s.mean_w, s.loss, s.acc05);
}

std::string to_csv(const std::vector<StepLog>& logs) {
  std::string out = kStepLogHeader;
  out += '\n';
  for (const auto& s : logs) {
    out += to_csv_row(s);
    out += '\n';
  }
  return out;
}

void write_step_logs(const std::filesystem::path& path, const std::vector<StepLog>& logs) {
  jsonl::write_file(path, to_csv(logs));
}

std::vector<StepLog> read_step_logs(const std::filesystem::path& path) {
  std::istringstream in(jsonl::read_file(path));
  std::string line;
  std::vector<StepLog> out;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1 || line.empty()) continue;
    std::vector<double> v;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      double x = 0.0;
      const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
      if (ec != std::errc{} || p != cell.data() + cell.size()) {
        throw DataError(fmt::format("{}:{}: bad number '{}'", path.string(), n, cell));
      }
      v.push_back(x);
    }
    if (v.size() != 8) throw DataError(fmt::format("{}:{}: expected 8 columns", path.string(), n));
    StepLog s;
    s.step = static_cast<std::int64_t>(v[0]);
    s.mean_reward = v[1];
    s.reward_std = v[2];
    s.mean_iou = v[3];
    s.var_iou = v[4];
    s.mean_w = v[5];
    s.loss = v[6];
    s.acc05 = v[7];
    out.push_back(s);
  }
  return out;
}

}  // namespace vgrft
