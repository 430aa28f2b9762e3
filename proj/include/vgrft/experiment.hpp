// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "vgrft/evalmetrics.hpp"
#include "vgrft/grpo.hpp"
#include "vgrft/policy.hpp"
#include "vgrft/scenes.hpp"

namespace vgrft::experiment {

/// Everything that determines a GRPO run. Two runs with equal configs
/// produce identical logs and parameters.
struct TrainConfig {
  grpo::GrpoSettings grpo;
  grpo::RewardMode mode = grpo::RewardMode::PosSc;
  policy::PolicySettings policy;
  policy::AdamSettings adam;
  std::int64_t steps = 1000;
  std::size_t queries_per_step = 8;
  std::uint64_t seed = 0;
};

/// Preset for the sparse-reward comparisons: corner targets, a policy whose
/// untrained mass sits in the image center.
TrainConfig far_init_config(std::uint64_t seed);
scenes::Difficulty far_init_difficulty();
inline constexpr std::size_t kFarInitScenes = 32;

/// Greedy predictions on `scenes` paired with their targets.
std::vector<eval::PredictionPair> greedy_predictions(const policy::PolicyParams& p,
                                                     std::span<const scenes::Scene> scenes);
eval::EvalReport evaluate_policy(const policy::PolicyParams& p, std::span<const scenes::Scene> scenes);

struct RunResult {
  std::vector<StepLog> logs;
  policy::PolicyParams params;
  policy::Adam optimizer;
  eval::EvalReport final_report;  // greedy, on the training scenes
};

using StepCallback = std::function<void(const StepLog&, const policy::PolicyParams&)>;

/// Runs `cfg.steps` GRPO steps over `scenes`. The reference policy is the
/// initial policy. Each step draws `queries_per_step` scenes from a seeded
/// per-epoch permutation. When a step throws, `partial_logs` (if given)
/// receives the logs recorded so far before the exception propagates.
RunResult run_grpo(const TrainConfig& cfg, std::span<const scenes::Scene> scenes,
                   const policy::PolicyParams& init, std::optional<policy::Adam> opt = std::nullopt,
                   std::int64_t first_step = 1, const StepCallback& on_step = {},
                   std::vector<StepLog>* partial_logs = nullptr);

/// Mean per-group reward std over the last `fraction` of the steps.
double late_reward_std(std::span<const StepLog> logs, double fraction = 0.25);

/// Training scenes of the far-init preset for one seed.
std::vector<scenes::Scene> far_init_scenes(std::uint64_t seed);

struct ArmResult {
  std::uint64_t seed = 0;
  grpo::RewardMode mode = grpo::RewardMode::IouOnly;
  RunResult run;
  double late_std = 0.0;
};

/// One ablation arm: `cfg` with its mode and seed replaced, policy
/// initialized from the seed, trained on `scenes`.
ArmResult run_arm(TrainConfig cfg, grpo::RewardMode mode, std::uint64_t seed,
                  std::span<const scenes::Scene> scenes);

}  // namespace vgrft::experiment
