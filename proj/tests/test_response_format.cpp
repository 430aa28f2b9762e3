// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "cot_fixture.hpp"
#include "vgrft/errors.hpp"
#include "vgrft/response_format.hpp"

using vgrft::Box;
using vgrft::Violation;

namespace {

const std::string kThink = "Two tanks are visible; the one nearer the bottom left corner is the target.";

std::string response(const std::string& think, const std::string& answer) {
  return "<think>" + think + "</think><answer>" + answer + "</answer>";
}

vgrft::CoTRecord record(const std::string& raw, Box gt = {10, 10, 50, 50}) {
  vgrft::CoTRecord r;
  r.image_id = "x";
  r.query = "the tank";
  r.transcript = vgrft::parse_transcript(raw, 100, 100);
  r.gt_box = gt;
  return r;
}

}  // namespace

TEST_CASE("parse a well-formed transcript") {
  const auto t = vgrft::parse_transcript(response(kThink, "[10, 10, 50, 50]"), 100, 100);
  REQUIRE(t.think);
  REQUIRE(t.answer);
  CHECK(*t.think == kThink);
  CHECK(*t.answer == "[10, 10, 50, 50]");
  REQUIRE(t.box);
  CHECK(*t.box == Box{10, 10, 50, 50});
  CHECK_FALSE(t.malformed_tags);
  CHECK(t.has_usable_box());
  CHECK(vgrft::format_reward(t) == 1);
}

TEST_CASE("box text parsing") {
  CHECK(vgrft::parse_box_text("[1,2,3,4]") == Box{1, 2, 3, 4});
  CHECK(vgrft::parse_box_text("  [ 1.5 , +2, 3e1, 4 ] ") == Box{1.5, 2, 30, 4});
  CHECK(vgrft::parse_box_text("[-1,2,3,4]") == Box{-1, 2, 3, 4});
  CHECK_FALSE(vgrft::parse_box_text("[1,2,3]"));
  CHECK_FALSE(vgrft::parse_box_text("[1,2,3,4,5]"));
  CHECK_FALSE(vgrft::parse_box_text("1,2,3,4"));
  CHECK_FALSE(vgrft::parse_box_text("[1,2,,4]"));
  CHECK_FALSE(vgrft::parse_box_text("[1,2,3,4px]"));
  CHECK_FALSE(vgrft::parse_box_text("box [1,2,3,4]"));
  CHECK_FALSE(vgrft::parse_box_text(""));
}

TEST_CASE("format reward") {
  auto fr = [](const std::string& raw) { return vgrft::format_reward(vgrft::parse_transcript(raw, 100, 100)); };
  CHECK(fr(response(kThink, "[1,2,3,4]")) == 1);
  CHECK(fr(response("   ", "[1,2,3,4]")) == 0);
  CHECK(fr(response(kThink, "[3,2,1,4]")) == 0);
  CHECK(fr(response(kThink, "[1,2,3,400]")) == 0);
  CHECK(fr(response(kThink, "[1,2,3]")) == 0);
  CHECK(fr("<answer>[1,2,3,4]</answer>") == 0);
  CHECK(fr("<think>" + kThink + "</think>") == 0);
  CHECK(fr(response(kThink, "[1,2,3,4]") + "<answer>[1,2,3,4]</answer>") == 0);
  CHECK(fr("<answer>[1,2,3,4]</answer><think>" + kThink + "</think>") == 0);
}

TEST_CASE("structural defects mark the tags malformed") {
  auto bad = [](const std::string& raw) { return vgrft::parse_transcript(raw, 100, 100).malformed_tags; };
  CHECK(bad("<think>a</think>"));
  CHECK(bad("<think>a<answer>[1,2,3,4]</answer>"));
  CHECK(bad("<think>a</think></think><answer>[1,2,3,4]</answer>"));
  CHECK(bad("<think>a<answer>x</answer></think><answer>[1,2,3,4]</answer>"));
  CHECK(bad("</think><answer>[1,2,3,4]</answer>"));
  CHECK(bad("<think>a</think><answer>[1,2,3,4]"));
  CHECK_FALSE(bad("<answer>[1,2,3,4]</answer>"));
  CHECK_FALSE(bad("preamble <think>a</think> gap <answer>[1,2,3,4]</answer> trailer"));
}

TEST_CASE("serialize then parse round-trips tag contents") {
  std::mt19937_64 rng(3);
  const std::string alphabet = "abc xyz,.;[]0123456789\n-";
  std::uniform_int_distribution<std::size_t> len(0, 60), pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<int> coord(0, 99), present(0, 3);
  for (int i = 0; i < 500; ++i) {
    vgrft::Transcript t;
    std::string think;
    for (std::size_t k = len(rng); k > 0; --k) think += alphabet[pick(rng)];
    if (present(rng) != 0) t.think = think;
    std::string ans = "[" + std::to_string(coord(rng)) + ", " + std::to_string(coord(rng)) + ", " +
                      std::to_string(coord(rng)) + ", " + std::to_string(coord(rng)) + "]";
    if (present(rng) != 0) t.answer = ans;
    const auto back = vgrft::parse_transcript(vgrft::serialize_transcript(t), 100, 100);
    CHECK(back.think == t.think);
    CHECK(back.answer == t.answer);
    CHECK(vgrft::serialize_transcript(back) == vgrft::serialize_transcript(t));
  }
}

TEST_CASE("violation names round-trip") {
  for (std::size_t c = 0; c < vgrft::kViolationCount; ++c) {
    const auto v = static_cast<Violation>(c);
    CHECK(vgrft::violation_from_string(vgrft::to_string(v)) == v);
  }
  CHECK_FALSE(vgrft::violation_from_string("Nope"));
}

TEST_CASE("validate_cot classes") {
  const vgrft::FilterSettings s;
  CHECK(vgrft::validate_cot(record(response(kThink, "[10,10,50,50]")), s).accepted);

  auto v = vgrft::validate_cot(record(response("short", "[10,10,50,50]")), s);
  CHECK_FALSE(v.accepted);
  CHECK(v.violations == std::vector{Violation::IncompleteChain});

  v = vgrft::validate_cot(record(response(kThink, "[50,10,10,50]")), s);
  CHECK(v.violations == std::vector{Violation::InconsistentCoordinates});

  v = vgrft::validate_cot(record(response(kThink, "[60,60,90,90]")), s);
  CHECK(v.violations == std::vector{Violation::WrongBox});

  v = vgrft::validate_cot(record(response(kThink, "[10,10,50,50]") + "</answer>"), s);
  CHECK(v.violations == std::vector{Violation::MalformedTags});

  v = vgrft::validate_cot(record("<think>x</think>"), s);
  CHECK(v.violations == std::vector{Violation::IncompleteChain, Violation::MalformedTags});
}

TEST_CASE("filter settings move the thresholds") {
  vgrft::FilterSettings s;
  s.min_think_chars = 5;
  CHECK(vgrft::validate_cot(record(response("short", "[10,10,50,50]")), s).accepted);
  s.match_tolerance = 0.5;
  CHECK(vgrft::validate_cot(record(response("short", "[10,10,50,60]")), s).accepted);
}

TEST_CASE("verdicts do not depend on corpus order") {
  std::vector<std::string> lines;
  vgrft::jsonl::for_each_line(fixture::cot_path(), [&](std::size_t, std::string_view l) { lines.emplace_back(l); });
  const auto base = vgrft::filter_corpus(lines, {});
  std::vector<std::size_t> order(lines.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::string> shuffled;
    for (auto i : order) shuffled.push_back(lines[i]);
    const auto out = vgrft::filter_corpus(shuffled, {});
    for (std::size_t k = 0; k < order.size(); ++k) {
      CHECK(out.all[k].verdict.violations == base.all[order[k]].verdict.violations);
    }
    CHECK(out.summary.to_json() == base.summary.to_json());
  }
}

TEST_CASE("hand-labeled fixture partitions exactly") {
  const auto score = fixture::score_cot_fixture();
  CHECK(score.records == 20);
  CHECK(score.partition_errors == 0);
  for (std::size_t c = 0; c < vgrft::kViolationCount; ++c) {
    INFO(vgrft::to_string(static_cast<Violation>(c)));
    CHECK(score.per_class[c].tp > 0);
    CHECK(score.per_class[c].precision() == 1.0);
    CHECK(score.per_class[c].recall() == 1.0);
  }
}

TEST_CASE("decode rejects broken records") {
  using vgrft::jsonl::json;
  json ok = {{"image_id", "a"}, {"query", "q"}, {"response", "r"}, {"gt_box", {1, 1, 5, 5}}, {"image_w", 10}, {"image_h", 10}};
  CHECK_NOTHROW(vgrft::decode_cot_record(ok));
  for (const char* f : {"image_id", "query", "response", "gt_box", "image_w", "image_h"}) {
    json j = ok;
    j.erase(f);
    CHECK_THROWS_AS(vgrft::decode_cot_record(j), vgrft::DataError);
  }
  json j = ok;
  j["gt_box"] = {1, 1, 50, 5};
  CHECK_THROWS_AS(vgrft::decode_cot_record(j), vgrft::DataError);
  j = ok;
  j["gt_box"] = {1, 1, 5};
  CHECK_THROWS_AS(vgrft::decode_cot_record(j), vgrft::DataError);
  j = ok;
  j["response"] = 3;
  CHECK_THROWS_AS(vgrft::decode_cot_record(j), vgrft::DataError);
  CHECK_THROWS_AS(vgrft::decode_cot_record(json::array()), vgrft::DataError);
}

TEST_CASE("stream filter output") {
  const std::string good = R"({"image_id":"a","query":"q","response":"<think>)" + kThink +
                           R"(</think><answer>[10,10,50,50]</answer>","gt_box":[10,10,50,50],"image_w":100,"image_h":100})";
  const std::string wrong = R"({"image_id":"b","query":"q","response":"<think>)" + kThink +
                            R"(</think><answer>[60,60,90,90]</answer>","gt_box":[10,10,50,50],"image_w":100,"image_h":100})";
  std::istringstream in(good + "\r\n\n" + wrong + "\nnot json\n");
  std::ostringstream acc, rej, ver;
  const auto sum = vgrft::filter_stream(in, acc, rej, &ver, {});
  CHECK(acc.str() == good + "\n");
  CHECK(sum.total == 3);
  CHECK(sum.accepted == 1);
  CHECK(sum.rejected == 2);
  CHECK(sum.undecodable == 1);
  CHECK(sum.by_violation.at(Violation::WrongBox) == 1);
  CHECK(sum.by_violation.at(Violation::MalformedTags) == 1);

  std::istringstream rl(rej.str());
  std::string line;
  std::getline(rl, line);
  auto j = vgrft::jsonl::json::parse(line);
  CHECK(j["image_id"] == "b");
  CHECK(j["verdict"]["violations"][0] == "WrongBox");
  std::getline(rl, line);
  j = vgrft::jsonl::json::parse(line);
  CHECK(j["raw"] == "not json");

  std::istringstream vl(ver.str());
  std::getline(vl, line);
  j = vgrft::jsonl::json::parse(line);
  CHECK(j["line"] == 1);
  CHECK(j["accepted"] == true);
  std::getline(vl, line);
  CHECK(vgrft::jsonl::json::parse(line)["line"] == 3);
  std::getline(vl, line);
  CHECK(vgrft::jsonl::json::parse(line)["image_id"].is_null());
}
