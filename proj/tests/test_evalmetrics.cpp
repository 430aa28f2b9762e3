// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "vgrft/errors.hpp"
#include "vgrft/evalmetrics.hpp"
#include "vgrft/step_log.hpp"

using namespace vgrft;
using namespace vgrft::eval;

namespace {

std::filesystem::path scratch_dir() {
  auto p = std::filesystem::temp_directory_path() / "vgrft_test_eval";
  std::filesystem::create_directories(p);
  return p;
}

// Predictions with a prescribed IoU against gt [0,0,10,10]: same height,
// width scaled.
PredictionPair with_iou(double v) { return {"", Box{0, 0, 10 * v, 10}, Box{0, 0, 10, 10}, ""}; }

}  // namespace

TEST_CASE("worked example") {
  const std::vector<PredictionPair> p{with_iou(0.6), with_iou(0.4), with_iou(0.55)};
  CHECK(accuracy_at(p, 0.5) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(mean_iou(p) == doctest::Approx(0.5166666666666667).epsilon(1e-14));
  CHECK(accuracy_at(p, 0.7) == 0.0);
}

TEST_CASE("threshold boundary is strict unless asked") {
  const std::vector<PredictionPair> p{with_iou(0.5), with_iou(0.25)};
  CHECK(pair_iou(p[0]) == 0.5);
  CHECK(accuracy_at(p, 0.5) == 0.0);
  CHECK(accuracy_at(p, 0.5, true) == 0.5);
}

TEST_CASE("absent and degenerate predictions score zero") {
  std::vector<PredictionPair> p{{"a", std::nullopt, Box{0, 0, 10, 10}, ""}, {"b", Box{5, 5, 5, 9}, Box{0, 0, 10, 10}, ""}};
  CHECK(pair_iou(p[0]) == 0.0);
  CHECK(pair_iou(p[1]) == 0.0);
  CHECK(mean_iou(p) == 0.0);
}

TEST_CASE("empty input is an error") {
  const std::vector<PredictionPair> none;
  CHECK_THROWS_AS(accuracy_at(none, 0.5), DataError);
  CHECK_THROWS_AS(mean_iou(none), DataError);
  CHECK_THROWS_AS(evaluate(none), DataError);
}

TEST_CASE("metrics agree with a brute-force recomputation") {
  std::mt19937_64 rng(31);
  std::vector<PredictionPair> pairs;
  for (int i = 0; i < 1000; ++i) {
    const Box gt = oracle::random_box(rng, 200.0, 4.0, 60.0);
    Box pred = oracle::random_box(rng, 200.0, 4.0, 60.0);
    if (i % 2 == 0) {  // many near hits so both thresholds matter
      std::normal_distribution<double> jitter(0.0, 4.0);
      pred = Box{gt.x1 + jitter(rng), gt.y1 + jitter(rng), gt.x2 + jitter(rng), gt.y2 + jitter(rng)};
      if (!pred.valid()) pred = gt;
    }
    pairs.push_back({std::to_string(i), pred, gt, i % 3 == 0 ? "unique" : "relative"});
  }
  double sum = 0.0;
  int over5 = 0, over7 = 0;
  for (const auto& p : pairs) {
    const double v = oracle::rect_iou(*p.pred, p.gt);
    sum += v;
    over5 += v > 0.5;
    over7 += v > 0.7;
  }
  CHECK(std::abs(mean_iou(pairs) - sum / 1000.0) <= 1e-12);
  CHECK(std::abs(accuracy_at(pairs, 0.5) - over5 / 1000.0) <= 1e-12);
  CHECK(std::abs(accuracy_at(pairs, 0.7) - over7 / 1000.0) <= 1e-12);
  CHECK(over5 > 100);
  CHECK(over7 > 50);

  const auto rep = evaluate(pairs);
  CHECK(rep.n == 1000);
  CHECK(rep.acc_at_07 <= rep.acc_at_05);
  CHECK(rep.per_kind.size() == 2);
  std::size_t n = 0;
  for (const auto& [k, s] : rep.per_kind) {
    CHECK(s.acc_at_07 <= s.acc_at_05);
    n += s.n;
  }
  CHECK(n == 1000);
  CHECK(rep.to_text().find("Acc@0.5") != std::string::npos);
  CHECK(rep.to_json()["n"] == 1000);
}

TEST_CASE("reward std curve") {
  std::vector<StepLog> logs(5);
  const double v[] = {1, 2, 3, 4, 5};
  for (int i = 0; i < 5; ++i) logs[static_cast<std::size_t>(i)].reward_std = v[i];
  CHECK(reward_std_curve(logs, 1) == std::vector<double>{1, 2, 3, 4, 5});
  CHECK(reward_std_curve(logs, 2) == std::vector<double>{1, 1.5, 2.5, 3.5, 4.5});
  CHECK(reward_std_curve(logs, 10) == std::vector<double>{1, 1.5, 2, 2.5, 3});
  CHECK(reward_std_curve(std::vector<StepLog>{}, 3).empty());
}

TEST_CASE("prediction files load faithfully") {
  const auto dir = scratch_dir();
  const std::vector<PredictionPair> p{{"q1", Box{1.25, 2, 30, 40.5}, Box{0, 0, 32, 40}, "ordinal"},
                                      {"q2", std::nullopt, Box{5, 5, 9, 9}, ""}};
  {
    std::ofstream f(dir / "pred.jsonl");
    for (const auto& x : p) f << prediction_to_json(x).dump() << "\n";
    f << "\n";
  }
  const auto back = load_predictions(dir / "pred.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "q1");
  CHECK(back[0].pred == p[0].pred);
  CHECK(back[0].gt == p[0].gt);
  CHECK(back[0].kind == "ordinal");
  CHECK_FALSE(back[1].pred);

  { std::ofstream(dir / "bad.jsonl") << prediction_to_json(p[0]).dump() << "\n{\"id\":\"x\",\"gt_box\":[1,2]}\n"; }
  CHECK_THROWS_WITH_AS(load_predictions(dir / "bad.jsonl"), doctest::Contains(":2"), DataError);
}

TEST_CASE("step log csv round-trip") {
  const auto dir = scratch_dir();
  std::vector<StepLog> logs;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 1; i <= 20; ++i) {
    StepLog s;
    s.step = i;
    s.mean_reward = u(rng);
    s.reward_std = u(rng);
    s.mean_iou = u(rng);
    s.var_iou = u(rng);
    s.mean_w = u(rng);
    s.loss = u(rng) * 1e-9;
    s.acc05 = 0.1 * i;
    logs.push_back(s);
  }
  write_step_logs(dir / "log.csv", logs);
  const auto back = read_step_logs(dir / "log.csv");
  REQUIRE(back.size() == logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) CHECK(to_csv_row(back[i]) == to_csv_row(logs[i]));
  CHECK(back[7].loss == logs[7].loss);
  CHECK(to_csv(logs).rfind(kStepLogHeader, 0) == 0);

  { std::ofstream(dir / "bad.csv") << kStepLogHeader << "\n1,2,3\n"; }
  CHECK_THROWS_WITH_AS(read_step_logs(dir / "bad.csv"), doctest::Contains("2"), DataError);
}
