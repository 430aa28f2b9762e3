// SPDX-License-Identifier: Apache-2.0
#include "vgrft/response_format.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <istream>
#include <ostream>
#include <string>

#include "vgrft/errors.hpp"

namespace vgrft {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

struct Segment {
  std::size_t open = std::string_view::npos;
  std::size_t body = 0;
  std::size_t close = std::string_view::npos;
  [[nodiscard]] bool found() const { return close != std::string_view::npos; }
};

// First open tag at or after `from`, then the first close tag after it.
Segment find_segment(std::string_view raw, std::string_view open, std::string_view close,
                     std::size_t from) {
  Segment s;
  s.open = raw.find(open, from);
  if (s.open == std::string_view::npos) return s;
  s.body = s.open + open.size();
  s.close = raw.find(close, s.body);
  return s;
}

}  // namespace

bool Transcript::has_usable_box() const noexcept {
  return box.has_value() && box->inside(image_w, image_h);
}

std::optional<Box> parse_box_text(std::string_view text) {
  text = trim(text);
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') return std::nullopt;
  text = text.substr(1, text.size() - 2);
  std::array<double, 4> v{};
  std::size_t i = 0;
  while (true) {
    if (i == 4) return std::nullopt;
    const auto comma = text.find(',');
    const std::string_view field = trim(text.substr(0, comma));
    if (field.empty()) return std::nullopt;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v[i]);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    ++i;
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (i != 4) return std::nullopt;
  return Box::from_array(v);
}

Transcript parse_transcript(std::string_view raw, double image_w, double image_h) {
  Transcript t;
  t.raw = std::string(raw);
  t.image_w = image_w;
  t.image_h = image_h;

  const Segment think = find_segment(raw, kThinkOpen, kThinkClose, 0);
  if (think.found()) t.think = std::string(raw.substr(think.body, think.close - think.body));

  const std::size_t answer_from = think.found() ? think.close + kThinkClose.size() : 0;
  const Segment answer = find_segment(raw, kAnswerOpen, kAnswerClose, answer_from);
  if (answer.found()) {
    t.answer = std::string(raw.substr(answer.body, answer.close - answer.body));
    t.box = parse_box_text(*t.answer);
  }

  // Structure is broken when any tag repeats, when a segment is left open or
  // appears out of order, or when no answer block exists at all.
  const std::size_t to = count_of(raw, kThinkOpen), tc = count_of(raw, kThinkClose);
  const std::size_t ao = count_of(raw, kAnswerOpen), ac = count_of(raw, kAnswerClose);
  bool broken = to > 1 || tc > 1 || ao > 1 || ac > 1 || to != tc || ao != ac || !answer.found();
  if (to == 1 && !think.found()) broken = true;
  if (t.think && t.think->find(kAnswerOpen) != std::string::npos) broken = true;
  if (!think.found() && answer.found() && tc + to > 0) broken = true;
  t.malformed_tags = broken;
  return t;
}

std::string serialize_transcript(const Transcript& t) {
  std::string out;
  if (t.think) {
    out += kThinkOpen;
    out += *t.think;
    out += kThinkClose;
  }
  if (t.answer) {
    out += kAnswerOpen;
    out += *t.answer;
    out += kAnswerClose;
  }
  return out;
}

int format_reward(const Transcript& t) {
  if (t.malformed_tags || !t.think || !t.answer) return 0;
  if (trim(*t.think).empty()) return 0;
  return t.has_usable_box() ? 1 : 0;
}

std::string_view to_string(Violation v) {
  switch (v) {
    case Violation::IncompleteChain: return "IncompleteChain";
    case Violation::InconsistentCoordinates: return "InconsistentCoordinates";
    case Violation::WrongBox: return "WrongBox";
    case Violation::MalformedTags: return "MalformedTags";
  }
  return "Unknown";
}

std::optional<Violation> violation_from_string(std::string_view s) {
  for (auto v : {Violation::IncompleteChain, Violation::InconsistentCoordinates,
                 Violation::WrongBox, Violation::MalformedTags}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

bool FilterVerdict::has(Violation v) const {
  return std::find(violations.begin(), violations.end(), v) != violations.end();
}

FilterVerdict validate_cot(const CoTRecord& record, const FilterSettings& s) {
  const Transcript& t = record.transcript;
  FilterVerdict verdict;
  auto flag = [&](Violation v) { verdict.violations.push_back(v); };

  if (!t.think || trim(*t.think).size() < s.min_think_chars) flag(Violation::IncompleteChain);
  if (t.answer && !t.has_usable_box()) flag(Violation::InconsistentCoordinates);
  if (t.has_usable_box() && iou(*t.box, record.gt_box) < s.match_tolerance) {
    flag(Violation::WrongBox);
  }
  if (t.malformed_tags) flag(Violation::MalformedTags);

  std::sort(verdict.violations.begin(), verdict.violations.end());
  verdict.accepted = verdict.violations.empty();
  return verdict;
}

CoTRecord decode_cot_record(const jsonl::json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  auto field = [&](const char* name) -> const jsonl::json& {
    const auto it = j.find(name);
    if (it == j.end()) throw DataError(std::string("missing field '") + name + "'");
    return *it;
  };
  const auto& id = field("image_id");
  const auto& query = field("query");
  const auto& response = field("response");
  const auto& w = field("image_w");
  const auto& h = field("image_h");
  if (!query.is_string() || !response.is_string()) {
    throw DataError("query and response must be strings");
  }
  if (!w.is_number() || !h.is_number()) throw DataError("image_w and image_h must be numbers");

  CoTRecord r;
  r.image_id = id.is_string() ? id.get<std::string>() : id.dump();
  r.query = query.get<std::string>();
  const double iw = w.get<double>();
  const double ih = h.get<double>();
  if (!(iw > 0.0) || !(ih > 0.0)) throw DataError("image dimensions must be positive");
  r.gt_box = jsonl::box_from_json(field("gt_box"));
  if (!r.gt_box.inside(iw, ih)) throw DataError("gt_box is not a valid in-bounds box");
  r.transcript = parse_transcript(response.get<std::string>(), iw, ih);
  return r;
}

jsonl::json verdict_to_json(const FilterVerdict& v) {
  jsonl::json out;
  out["accepted"] = v.accepted;
  auto arr = jsonl::json::array();
  for (auto x : v.violations) arr.push_back(std::string(to_string(x)));
  out["violations"] = std::move(arr);
  return out;
}

FilterSummary& FilterSummary::operator+=(const FilterSummary& other) {
  total += other.total;
  accepted += other.accepted;
  rejected += other.rejected;
  undecodable += other.undecodable;
  for (const auto& [k, n] : other.by_violation) by_violation[k] += n;
  return *this;
}

jsonl::json FilterSummary::to_json() const {
  jsonl::json out;
  out["total"] = total;
  out["accepted"] = accepted;
  out["rejected"] = rejected;
  out["undecodable"] = undecodable;
  jsonl::json counts = jsonl::json::object();
  for (auto v : {Violation::IncompleteChain, Violation::InconsistentCoordinates,
                 Violation::WrongBox, Violation::MalformedTags}) {
    const auto it = by_violation.find(v);
    counts[std::string(to_string(v))] = it == by_violation.end() ? 0 : it->second;
  }
  out["violations"] = std::move(counts);
  return out;
}

JudgedLine judge_line(std::size_t line_number, std::string_view line, const FilterSettings& s) {
  JudgedLine out;
  out.line_number = line_number;
  out.raw = std::string(line);
  try {
    out.record = decode_cot_record(jsonl::json::parse(line));
    out.verdict = validate_cot(*out.record, s);
  } catch (const jsonl::json::exception&) {
    out.verdict = {false, {Violation::MalformedTags}};
  } catch (const DataError&) {
    out.verdict = {false, {Violation::MalformedTags}};
  }
  return out;
}

namespace {

void tally(FilterSummary& sum, const JudgedLine& j) {
  ++sum.total;
  if (j.verdict.accepted) {
    ++sum.accepted;
  } else {
    ++sum.rejected;
  }
  if (!j.record) ++sum.undecodable;
  for (auto v : j.verdict.violations) ++sum.by_violation[v];
}

jsonl::json rejected_json(const JudgedLine& j) {
  jsonl::json out;
  if (j.record) {
    out = jsonl::json::parse(j.raw);
  } else {
    out["raw"] = j.raw;
  }
  out["verdict"] = verdict_to_json(j.verdict);
  return out;
}

}  // namespace

FilterOutcome filter_corpus(const std::vector<std::string>& lines, const FilterSettings& s) {
  FilterOutcome out;
  std::size_t n = 0;
  for (const auto& line : lines) {
    ++n;
    if (trim(line).empty()) continue;
    JudgedLine j = judge_line(n, line, s);
    tally(out.summary, j);
    (j.verdict.accepted ? out.accepted : out.rejected).push_back(j);
    out.all.push_back(std::move(j));
  }
  return out;
}

FilterSummary filter_stream(std::istream& in, std::ostream& accepted, std::ostream& rejected,
                            std::ostream* verdicts, const FilterSettings& s) {
  FilterSummary sum;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const JudgedLine j = judge_line(n, line, s);
    tally(sum, j);
    if (j.verdict.accepted) {
      accepted << line << '\n';
    } else {
      rejected << rejected_json(j).dump() << '\n';
    }
    if (verdicts) {
      jsonl::json v = verdict_to_json(j.verdict);
      jsonl::json row;
      row["line"] = n;
      row["image_id"] = j.record ? jsonl::json(j.record->image_id) : jsonl::json(nullptr);
      row["accepted"] = v["accepted"];
      row["violations"] = v["violations"];
      *verdicts << row.dump() << '\n';
    }
  }
  return sum;
}

}  // namespace vgrft
