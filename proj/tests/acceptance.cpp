// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cot_fixture.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "vgrft/evalmetrics.hpp"
#include "vgrft/experiment.hpp"
#include "vgrft/grpo.hpp"
#include "vgrft/jsonl.hpp"
#include "vgrft/position_reward.hpp"

using namespace vgrft;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr double kKernelTol = 1e-9;
constexpr double kKernelSeconds = 5.0;
constexpr double kAdvMeanTol = 1e-9;
constexpr double kAdvStdTol = 1e-6;
constexpr double kWeightTol = 1e-9;
constexpr double kGradRelTol = 1e-5;
constexpr double kMetricTol = 1e-12;
constexpr double kExperimentSeconds = 600.0;
constexpr int kSeeds = 5;
constexpr int kSeedMajority = 4;
constexpr std::int64_t kSteps = 1000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const Outcome& o) {
  fmt::print("[{}] C{:<2} {}: {}\n", o.pass ? "PASS" : "FAIL", id, name, o.detail);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

// ---- criteria -------------------------------------------------------------

Outcome kernel_equivalence() {
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> alpha(0.25, 4.0);
  double worst = 0.0;
  const auto t0 = Clock::now();
  for (int i = 0; i < 1000; ++i) {
    const Box gt = oracle::random_box(rng, 256.0, 2.0, 96.0);
    const Box pred = oracle::random_box(rng, 256.0, 1.0, 96.0);
    const auto k = KernelParams::from_gt(gt, alpha(rng), 256, 256);
    worst = std::max(worst, std::abs(positional_reward(pred, k).value - positional_reward_separable(pred, k).value));
  }
  const double secs = seconds_since(t0);
  return {worst <= kKernelTol && secs < kKernelSeconds,
          fmt::format("max |diff| {:.3g} (tol {:.0e}), {:.3f}s (limit {}s)", worst, kKernelTol, secs, kKernelSeconds)};
}

// Same-size predictions on one side of the target, both disjoint from it,
// the second further away.
Outcome dense_signal() {
  std::mt19937_64 rng(1002);
  std::uniform_int_distribution<int> side(8, 40), gap(0, 30), extra(1, 40), dir(0, 3), coord(0, 255);
  int n = 0, zero_iou = 0, ordered = 0;
  while (n < 500) {
    const double gw = side(rng), gh = side(rng);
    const double gx = coord(rng), gy = coord(rng);
    const Box gt{gx, gy, gx + gw, gy + gh};
    if (!gt.inside(256, 256)) continue;
    const double pw = side(rng), ph = side(rng);
    const double g1 = gap(rng), g2 = g1 + extra(rng);
    const int d = dir(rng);
    auto place = [&](double g) -> Box {
      switch (d) {
        case 0: return {gt.x2 + g, gt.y1, gt.x2 + g + pw, gt.y1 + ph};  // right
        case 1: return {gt.x1 - g - pw, gt.y1, gt.x1 - g, gt.y1 + ph};  // left
        case 2: return {gt.x1, gt.y2 + g, gt.x1 + pw, gt.y2 + g + ph};  // below
        default: return {gt.x1, gt.y1 - g - ph, gt.x1 + pw, gt.y1 - g};  // above
      }
    };
    const Box near = place(g1), far = place(g2);
    if (!near.inside(256, 256) || !far.inside(256, 256)) continue;
    ++n;
    const auto k = KernelParams::from_gt(gt, 2.5, 256, 256);
    zero_iou += iou(near, gt) == 0.0 && iou(far, gt) == 0.0;
    ordered += positional_reward_separable(near, k).value > positional_reward_separable(far, k).value;
  }
  return {zero_iou == n && ordered == n,
          fmt::format("{} pairs: IoU zero for both in {}, R_pos near > far in {}", n, zero_iou, ordered)};
}

Outcome translation_monotonicity() {
  std::mt19937_64 rng(1003);
  std::uniform_int_distribution<int> side(4, 40), pos(0, 255), step(1, 24), axis(0, 1);
  int n = 0, violations = 0;
  while (n < 500) {
    const Box gt = oracle::random_box(rng, 256.0, 8.0, 80.0);
    const auto k = KernelParams::from_gt(gt, 2.5, 256, 256);
    const double w = side(rng), h = side(rng), x = pos(rng), y = pos(rng);
    const Box a{x, y, x + w, y + h};
    const double d = step(rng);
    Box b = a;
    if (axis(rng) == 0) {
      if (a.x1 >= gt.cx()) b = {a.x1 + d, a.y1, a.x2 + d, a.y2};
      else if (a.x2 <= gt.cx()) b = {a.x1 - d, a.y1, a.x2 - d, a.y2};
      else continue;
    } else {
      if (a.y1 >= gt.cy()) b = {a.x1, a.y1 + d, a.x2, a.y2 + d};
      else if (a.y2 <= gt.cy()) b = {a.x1, a.y1 - d, a.x2, a.y2 - d};
      else continue;
    }
    ++n;
    violations += !(positional_reward_separable(b, k).value < positional_reward_separable(a, k).value);
  }
  return {violations == 0, fmt::format("{} outward translations, {} violations", n, violations)};
}

Outcome advantage_normalization() {
  auto cfg = experiment::far_init_config(1);
  cfg.steps = 200;
  cfg.mode = grpo::RewardMode::PosSc;
  const auto scenes = experiment::far_init_scenes(1);
  const auto run = experiment::run_grpo(cfg, scenes, policy::init_params(cfg.policy, 1));
  double worst_mean = 0.0, worst_std = 0.0;
  long groups = 0;
  for (const auto& l : run.logs) {
    worst_mean = std::max(worst_mean, l.adv_max_abs_mean);
    worst_std = std::max(worst_std, l.adv_max_std_error);
    groups += l.groups_with_variance;
  }
  return {run.logs.size() == 200 && groups > 0 && worst_mean < kAdvMeanTol && worst_std < kAdvStdTol,
          fmt::format("{} steps, {} groups with variance, max |mean| {:.3g}, max |std-1| {:.3g}", run.logs.size(),
                      groups, worst_mean, worst_std)};
}

Outcome consistency_table() {
  const grpo::GrpoSettings s;
  const std::vector<double> ones(8, 1.0), zeros(8, 0.0), split{0.0, 1.0};
  const double w1 = grpo::consistency_weight(ones, s);
  const double w0 = grpo::consistency_weight(zeros, s);
  const double w2 = grpo::consistency_weight(split, s);
  const double pre = std::exp(s.lambda_m);
  const bool ok = w1 == 1.0 && w0 == 3.0 && std::abs(pre - 3.3201169227365472) < 1e-12 &&
                  std::abs(w2 - std::exp(0.85)) < kWeightTol;
  return {ok, fmt::format("w(1s) {}, w(0s) {} (pre-clip {:.4f}), w({{0,1}}) {:.17g} vs exp(0.85) {:.17g}", w1, w0,
                          pre, w2, std::exp(0.85))};
}

Outcome gradient_fidelity() {
  const auto r = gradcheck::check_scales({0.1, 1.0, 5.0}, 20, 1006);
  return {r.coordinates == 60 && r.max_rel_error < kGradRelTol,
          fmt::format("{} coordinates over 3 scales, max relative error {:.3g} (tol {:.0e})", r.coordinates,
                      r.max_rel_error, kGradRelTol)};
}

// Far-init arms shared by criteria 7-9.
struct Arms {
  std::map<grpo::RewardMode, std::vector<experiment::ArmResult>> by_mode;
  double seconds_iou_pos = 0.0;
};

Arms run_arms() {
  using grpo::RewardMode;
  Arms a;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto scenes = experiment::far_init_scenes(static_cast<std::uint64_t>(seed));
    auto cfg = experiment::far_init_config(static_cast<std::uint64_t>(seed));
    cfg.steps = kSteps;
    for (auto m : {RewardMode::IouOnly, RewardMode::Pos, RewardMode::PosSc, RewardMode::PosScMean,
                   RewardMode::PosScVar}) {
      const auto t0 = Clock::now();
      a.by_mode[m].push_back(experiment::run_arm(cfg, m, static_cast<std::uint64_t>(seed), scenes));
      if (m == RewardMode::IouOnly || m == RewardMode::Pos) a.seconds_iou_pos += seconds_since(t0);
    }
  }
  return a;
}

double mean_acc(const std::vector<experiment::ArmResult>& v) {
  double s = 0.0;
  for (const auto& a : v) s += a.run.final_report.acc_at_05;
  return s / static_cast<double>(v.size());
}

std::string per_seed(const std::vector<experiment::ArmResult>& v, const std::function<double(const experiment::ArmResult&)>& f) {
  std::string out;
  for (const auto& a : v) out += fmt::format("{}{:.4g}", out.empty() ? "" : " ", f(a));
  return out;
}

Outcome positional_benefit(const Arms& a) {
  const auto& iou = a.by_mode.at(grpo::RewardMode::IouOnly);
  const auto& pos = a.by_mode.at(grpo::RewardMode::Pos);
  int wins = 0;
  for (int i = 0; i < kSeeds; ++i) wins += pos[i].run.final_report.acc_at_05 > iou[i].run.final_report.acc_at_05;
  const double mi = mean_acc(iou), mp = mean_acc(pos);
  auto acc = [](const experiment::ArmResult& r) { return r.run.final_report.acc_at_05; };
  return {wins >= kSeedMajority && mp > mi && a.seconds_iou_pos < kExperimentSeconds,
          fmt::format("+pos wins {}/{} seeds; mean Acc@0.5 {:.4f} vs {:.4f} (pos [{}], iou [{}]); {:.1f}s", wins,
                      kSeeds, mp, mi, per_seed(pos, acc), per_seed(iou, acc), a.seconds_iou_pos)};
}

Outcome variance_reduction(const Arms& a) {
  const auto& off = a.by_mode.at(grpo::RewardMode::Pos);
  const auto& on = a.by_mode.at(grpo::RewardMode::PosSc);
  int lower = 0;
  for (int i = 0; i < kSeeds; ++i) lower += on[i].late_std < off[i].late_std;
  auto s = [](const experiment::ArmResult& r) { return r.late_std; };
  return {lower >= kSeedMajority, fmt::format("late reward std lower with the weight in {}/{} seeds (on [{}], off [{}])",
                                              lower, kSeeds, per_seed(on, s), per_seed(off, s))};
}

Outcome ablation_consistency(const Arms& a) {
  const auto& mean_only = a.by_mode.at(grpo::RewardMode::PosScMean);
  const auto& var_only = a.by_mode.at(grpo::RewardMode::PosScVar);
  const auto& both = a.by_mode.at(grpo::RewardMode::PosSc);
  int distinct = 0;
  for (int i = 0; i < kSeeds; ++i) {
    const auto x = to_csv(mean_only[i].run.logs), y = to_csv(var_only[i].run.logs), z = to_csv(both[i].run.logs);
    distinct += x != y && y != z && x != z;
  }
  const double mm = mean_acc(mean_only), mv = mean_acc(var_only), mb = mean_acc(both);
  return {distinct == kSeeds && mb > mm && mb > mv,
          fmt::format("distinct series in {}/{} seeds; mean Acc@0.5 both {:.4f}, mean-only {:.4f}, var-only {:.4f}",
                      distinct, kSeeds, mb, mm, mv)};
}

Outcome cot_filter_exactness() {
  const auto s = fixture::score_cot_fixture();
  bool ok = s.records == 20 && s.partition_errors == 0;
  std::string detail = fmt::format("{} records, {} partition errors;", s.records, s.partition_errors);
  for (std::size_t c = 0; c < kViolationCount; ++c) {
    const auto& cs = s.per_class[c];
    ok = ok && cs.tp > 0 && cs.precision() == 1.0 && cs.recall() == 1.0;
    detail += fmt::format(" {} P={:.2f} R={:.2f}", to_string(static_cast<Violation>(c)), cs.precision(), cs.recall());
  }
  return {ok, detail};
}

Outcome metric_oracle(const Arms& a) {
  std::mt19937_64 rng(1011);
  std::normal_distribution<double> jitter(0.0, 5.0);
  std::vector<eval::PredictionPair> pairs;
  for (int i = 0; i < 1000; ++i) {
    const Box gt = oracle::random_box(rng, 256.0, 4.0, 80.0);
    Box pred = oracle::random_box(rng, 256.0, 4.0, 80.0);
    if (i % 2 == 0) pred = {gt.x1 + jitter(rng), gt.y1 + jitter(rng), gt.x2 + jitter(rng), gt.y2 + jitter(rng)};
    if (!pred.valid()) pred = gt;
    pairs.push_back({std::to_string(i), pred, gt, ""});
  }
  double sum = 0.0;
  int h5 = 0, h7 = 0;
  for (const auto& p : pairs) {
    const double v = oracle::rect_iou(*p.pred, p.gt);
    sum += v;
    h5 += v > 0.5;
    h7 += v > 0.7;
  }
  const double dm = std::abs(eval::mean_iou(pairs) - sum / 1000.0);
  const double d5 = std::abs(eval::accuracy_at(pairs, 0.5) - h5 / 1000.0);
  const double d7 = std::abs(eval::accuracy_at(pairs, 0.7) - h7 / 1000.0);

  int corpora = 1, ordered = eval::accuracy_at(pairs, 0.7) <= eval::accuracy_at(pairs, 0.5);
  for (const auto& [mode, runs] : a.by_mode) {
    for (const auto& r : runs) {
      ++corpora;
      ordered += r.run.final_report.acc_at_07 <= r.run.final_report.acc_at_05;
    }
  }
  const double worst = std::max({dm, d5, d7});
  return {worst <= kMetricTol && ordered == corpora,
          fmt::format("max |diff| {:.3g} on 1000 pairs (tol {:.0e}); Acc@0.7 <= Acc@0.5 on {}/{} corpora", worst,
                      kMetricTol, ordered, corpora)};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VGRFT_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "vgrft_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto d = [&](const std::string& name) { return (dir / name).string(); };
  int failed_cmds = 0;
  for (const char* tag : {"a", "b"}) {
    const std::string t(tag);
    failed_cmds += run_cli("gen --n 64 --seed 12 --out " + d("corpus_" + t + ".jsonl")) != 0;
    failed_cmds += run_cli("sft --data " + d("corpus_a.jsonl") + " --epochs 2 --seed 3 --out " + d("sft_" + t + ".json") +
                           " --log " + d("sft_" + t + ".csv")) != 0;
    failed_cmds += run_cli("train --data " + d("corpus_a.jsonl") + " --init " + d("sft_a.json") +
                           " --steps 25 --seed 8 --checkpoint-every 10 --out-dir " + d("train_" + t)) != 0;
  }
  const std::vector<std::pair<std::string, std::string>> files = {
      {"corpus_a.jsonl", "corpus_b.jsonl"}, {"sft_a.json", "sft_b.json"},
      {"sft_a.csv", "sft_b.csv"},           {"train_a/steps.csv", "train_b/steps.csv"},
      {"train_a/final.json", "train_b/final.json"}, {"train_a/ckpt_000010.json", "train_b/ckpt_000010.json"},
      {"train_a/eval.csv", "train_b/eval.csv"}};
  int identical = 0;
  for (const auto& [x, y] : files) {
    if (fs::exists(dir / x) && fs::exists(dir / y) && jsonl::read_file(dir / x) == jsonl::read_file(dir / y)) {
      ++identical;
    }
  }
  return {failed_cmds == 0 && identical == static_cast<int>(files.size()),
          fmt::format("{}/{} file pairs byte-identical across repeated gen/sft/train; {} command failures", identical,
                      files.size(), failed_cmds)};
}

}  // namespace

int main() {
  report(1, "kernel equivalence", kernel_equivalence());
  report(2, "dense signal", dense_signal());
  report(3, "translation monotonicity", translation_monotonicity());
  report(4, "advantage normalization", advantage_normalization());
  report(5, "consistency weight table", consistency_table());
  report(6, "gradient fidelity", gradient_fidelity());
  const Arms arms = run_arms();
  report(7, "positional reward benefit", positional_benefit(arms));
  report(8, "variance reduction", variance_reduction(arms));
  report(9, "ablation consistency", ablation_consistency(arms));
  report(10, "CoT filter exactness", cot_filter_exactness());
  report(11, "metric oracle", metric_oracle(arms));
  report(12, "determinism", determinism());
  fmt::print("{} of 12 criteria passed\n", 12 - failures);
  return failures == 0 ? 0 : 1;
}
