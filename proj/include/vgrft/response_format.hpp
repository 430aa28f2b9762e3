// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vgrft/geometry.hpp"
#include "vgrft/jsonl.hpp"

namespace vgrft {

/// A model response split into its <think>/<answer> segments.
///
/// Parsing never throws. Segment text is copied verbatim from `raw`; `box`
/// holds whatever four numbers the answer contained, so it may be invalid
/// (x1 > x2) or out of bounds. Callers check validity explicitly.
struct Transcript {
  std::string raw;
  std::optional<std::string> think;
  std::optional<std::string> answer;
  std::optional<Box> box;
  double image_w = 0.0;
  double image_h = 0.0;
  bool malformed_tags = false;

  /// Answer parsed to a valid box inside the image.
  [[nodiscard]] bool has_usable_box() const noexcept;
};

Transcript parse_transcript(std::string_view raw, double image_w, double image_h);

/// "<think>T</think><answer>A</answer>"; absent segments are omitted.
std::string serialize_transcript(const Transcript& t);

/// Parses "[x1, y1, x2, y2]" (surrounding whitespace allowed). No validity check.
std::optional<Box> parse_box_text(std::string_view text);

/// 1 iff the tag structure is intact, the think segment is nonblank, and the
/// answer is a valid in-bounds box.
int format_reward(const Transcript& t);

struct CoTRecord {
  std::string image_id;
  std::string query;
  Transcript transcript;
  Box gt_box;
};

enum class Violation { IncompleteChain, InconsistentCoordinates, WrongBox, MalformedTags };

inline constexpr std::size_t kViolationCount = 4;

std::string_view to_string(Violation v);
std::optional<Violation> violation_from_string(std::string_view s);

struct FilterVerdict {
  bool accepted = true;
  std::vector<Violation> violations;  // sorted, unique

  [[nodiscard]] bool has(Violation v) const;
};

struct FilterSettings {
  std::size_t min_think_chars = 40;  // after trimming whitespace
  double match_tolerance = 0.99;     // minimum IoU between answer and gt_box
};

FilterVerdict validate_cot(const CoTRecord& record, const FilterSettings& s);

/// Decodes one corpus line {image_id, query, response, gt_box, image_w, image_h}.
/// Throws DataError when a field is missing, mistyped, or gt_box is not a
/// valid in-bounds box.
CoTRecord decode_cot_record(const jsonl::json& j);

jsonl::json verdict_to_json(const FilterVerdict& v);

struct FilterSummary {
  std::size_t total = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t undecodable = 0;
  std::map<Violation, std::size_t> by_violation;

  FilterSummary& operator+=(const FilterSummary& other);
  [[nodiscard]] jsonl::json to_json() const;
};

/// One judged corpus line.
struct JudgedLine {
  std::size_t line_number = 0;
  std::string raw;
  std::optional<CoTRecord> record;  // absent when undecodable
  FilterVerdict verdict;
};

/// Judges a single line. Undecodable lines are rejected as MalformedTags.
JudgedLine judge_line(std::size_t line_number, std::string_view line, const FilterSettings& s);

struct FilterOutcome {
  std::vector<JudgedLine> accepted;
  std::vector<JudgedLine> rejected;
  std::vector<JudgedLine> all;  // input order
  FilterSummary summary;
};

/// Partitions an in-memory corpus (blank lines skipped, numbering 1-based).
FilterOutcome filter_corpus(const std::vector<std::string>& lines, const FilterSettings& s);

/// Streaming form used by the CLI. Accepted lines are copied verbatim; rejected
/// lines are the input object plus a "verdict" member (or {"raw", "verdict"}
/// when the line was not JSON). `verdicts` receives one object per input line.
FilterSummary filter_stream(std::istream& in, std::ostream& accepted, std::ostream& rejected,
                            std::ostream* verdicts, const FilterSettings& s);

}  // namespace vgrft
