// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "vgrft/jsonl.hpp"
#include "vgrft/response_format.hpp"

namespace fixture {

inline std::string cot_path() { return std::string(VGRFT_TEST_DATA_DIR) + "/cot_fixture.jsonl"; }

struct ClassScore {
  std::size_t tp = 0, fp = 0, fn = 0;
  [[nodiscard]] double precision() const { return tp + fp == 0 ? 1.0 : double(tp) / double(tp + fp); }
  [[nodiscard]] double recall() const { return tp + fn == 0 ? 1.0 : double(tp) / double(tp + fn); }
};

struct FixtureScore {
  std::array<ClassScore, vgrft::kViolationCount> per_class{};
  std::size_t records = 0;
  std::size_t partition_errors = 0;  // accepted/rejected disagrees with the label
};

// Scores the filter against the hand labels stored in "expected_violations".
inline FixtureScore score_cot_fixture(const vgrft::FilterSettings& s = {}) {
  std::vector<std::string> lines;
  std::vector<std::vector<vgrft::Violation>> expected;
  vgrft::jsonl::for_each_line(cot_path(), [&](std::size_t, std::string_view line) {
    lines.emplace_back(line);
    const auto j = vgrft::jsonl::json::parse(line);
    std::vector<vgrft::Violation> e;
    for (const auto& v : j.at("expected_violations")) e.push_back(*vgrft::violation_from_string(v.get<std::string>()));
    expected.push_back(std::move(e));
  });
  const auto out = vgrft::filter_corpus(lines, s);
  FixtureScore score;
  score.records = out.all.size();
  for (std::size_t i = 0; i < out.all.size(); ++i) {
    const auto& got = out.all[i].verdict;
    const auto& want = expected[i];
    if (got.accepted != want.empty()) ++score.partition_errors;
    for (std::size_t c = 0; c < vgrft::kViolationCount; ++c) {
      const auto v = static_cast<vgrft::Violation>(c);
      const bool g = got.has(v);
      bool w = false;
      for (auto x : want) w = w || x == v;
      auto& cs = score.per_class[c];
      if (g && w) ++cs.tp;
      if (g && !w) ++cs.fp;
      if (!g && w) ++cs.fn;
    }
  }
  return score;
}

}  // namespace fixture
