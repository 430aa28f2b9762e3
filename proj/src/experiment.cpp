// SPDX-License-Identifier: Apache-2.0
#include "vgrft/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "vgrft/seeding.hpp"

namespace vgrft::experiment {

scenes::Difficulty far_init_difficulty() { return scenes::Difficulty::far_init(); }

TrainConfig far_init_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.steps = 1000;
  c.queries_per_step = 8;
  c.policy.prior_std_bins = 6.0;
  c.policy.prior_spread_bins = 3.0;
  c.policy.init_scale = 1.0;
  return c;
}

std::vector<eval::PredictionPair> greedy_predictions(const policy::PolicyParams& p,
                                                     std::span<const scenes::Scene> scenes) {
  std::vector<eval::PredictionPair> out;
  out.reserve(scenes.size());
  const int bins = p.settings().bins;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& s = scenes[i];
    const auto f = policy::featurize(s, p.settings());
    const Box pred = policy::decode_box(policy::greedy_tokens(p, f.values), bins, s.image_w, s.image_h);
    out.push_back({std::to_string(i), pred, s.target_box(), std::string(scenes::to_string(s.expression.kind))});
  }
  return out;
}

eval::EvalReport evaluate_policy(const policy::PolicyParams& p, std::span<const scenes::Scene> scenes) {
  const auto pairs = greedy_predictions(p, scenes);
  return eval::evaluate(pairs);
}

RunResult run_grpo(const TrainConfig& cfg, std::span<const scenes::Scene> scenes,
                   const policy::PolicyParams& init, std::optional<policy::Adam> opt, std::int64_t first_step,
                   const StepCallback& on_step, std::vector<StepLog>* partial_logs) {
  const grpo::GrpoSettings settings = grpo::apply_reward_mode(cfg.grpo, cfg.mode);
  settings.validate();
  if (scenes.empty()) throw std::invalid_argument("run_grpo needs a non-empty scene corpus");

  RunResult res{{}, init, opt ? *opt : policy::Adam(init.size(), cfg.adam), {}};
  const policy::PolicyParams ref = init;
  const auto all_queries = grpo::make_queries(scenes, init.settings());

  const std::size_t per_step = std::min(cfg.queries_per_step, all_queries.size());
  std::vector<std::size_t> order(all_queries.size());
  std::size_t cursor = order.size();
  std::uint64_t epoch = 0;
  std::vector<grpo::Query> batch;

  for (std::int64_t k = 0; k < cfg.steps; ++k) {
    const std::int64_t step = first_step + k;
    batch.clear();
    while (batch.size() < per_step) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(derive_seed(cfg.seed, 0x5eed, epoch++));
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(all_queries[order[cursor++]]);
    }
    try {
      auto sr = grpo::train_step(res.params, ref, res.optimizer, batch, settings,
                                 derive_seed(cfg.seed, static_cast<std::uint64_t>(step)), step);
      res.logs.push_back(sr.log);
    } catch (...) {
      if (partial_logs) *partial_logs = res.logs;
      throw;
    }
    if (on_step) on_step(res.logs.back(), res.params);
  }
  res.final_report = evaluate_policy(res.params, scenes);
  return res;
}

double late_reward_std(std::span<const StepLog> logs, double fraction) {
  if (logs.empty()) return 0.0;
  const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(logs.size())));
  const std::size_t take = std::clamp<std::size_t>(n, 1, logs.size());
  double sum = 0.0;
  for (std::size_t i = logs.size() - take; i < logs.size(); ++i) sum += logs[i].reward_std;
  return sum / static_cast<double>(take);
}

std::vector<scenes::Scene> far_init_scenes(std::uint64_t seed) {
  return scenes::generate_scenes(seed * 100000, kFarInitScenes, far_init_difficulty());
}

ArmResult run_arm(TrainConfig cfg, grpo::RewardMode mode, std::uint64_t seed,
                  std::span<const scenes::Scene> scenes) {
  cfg.mode = mode;
  cfg.seed = seed;
  ArmResult a;
  a.seed = seed;
  a.mode = mode;
  a.run = run_grpo(cfg, scenes, policy::init_params(cfg.policy, seed));
  a.late_std = late_reward_std(a.run.logs);
  return a;
}

}  // namespace vgrft::experiment
