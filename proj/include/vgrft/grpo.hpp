// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vgrft/policy.hpp"
#include "vgrft/position_reward.hpp"
#include "vgrft/scenes.hpp"
#include "vgrft/step_log.hpp"

namespace vgrft::grpo {

struct GrpoSettings {
  int group_size = 8;
  double clip_eps = 0.2;
  double kl_coeff = 0.04;
  double lambda_m = 1.2;
  double lambda_v = 1.0;
  double w_min = 0.5;
  double w_max = 3.0;
  double beta = 0.1;
  double alpha = 2.5;
  double adv_eps = 1e-6;
  double format_weight = 1.0;
  Proximity proximity = Proximity::Gaussian;
  bool use_consistency_weight = true;  // false pins w to 1
  int inner_epochs = 1;  // policy updates per sampled batch

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// (R - mean) / std with population std. Groups whose std does not exceed
/// `adv_eps` are treated as constant and get all-zero advantages.
std::vector<double> group_advantages(std::span<const double> rewards, double adv_eps);

/// clip(exp(lambda_m (1 - mean) + lambda_v var), w_min, w_max) over the
/// group's IoU rewards, population variance.
double consistency_weight(std::span<const double> iou_rewards, const GrpoSettings& s);

struct GroupBatch {
  std::size_t query_id = 0;
  std::vector<policy::Rollout> rollouts;
  std::vector<double> rewards;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  double mean_iou = 0.0;
  double var_iou = 0.0;
  std::vector<double> advantages;
  double sc_weight = 1.0;
};

/// Scores each rollout's decoded box against `gt` and fills the group
/// statistics, advantages, and weight.
GroupBatch build_group(std::size_t query_id, std::vector<policy::Rollout> rollouts, const Box& gt,
                       double image_w, double image_h, const GrpoSettings& s);

/// Reward weights and kernel implied by the settings.
RewardWeights reward_weights(const GrpoSettings& s);

using TokenLogProbs = std::array<double, policy::kHeads>;

struct TokenDiagnostics {
  double ratio = 1.0;
  bool clipped = false;  // gradient blocked by the clip
  double surrogate = 0.0;
  double kl = 0.0;
};

struct GroupLoss {
  double loss = 0.0;
  std::vector<std::array<TokenDiagnostics, policy::kHeads>> tokens;
  /// d loss / d new_logprob per token, for backpropagation.
  std::vector<TokenLogProbs> dloss_dlogprob;
};

/// w * mean over rollouts and tokens of
///   -min(rho A, clip(rho, 1-eps, 1+eps) A) + kl_coeff * (exp(ref-new) - (ref-new) - 1),
/// rho = exp(new - old). Throws NumericError naming the rollout on a
/// non-finite ratio.
GroupLoss grpo_token_loss(const GroupBatch& group, std::span<const TokenLogProbs> new_logprobs,
                          std::span<const TokenLogProbs> ref_logprobs, const GrpoSettings& s);

struct Query {
  std::size_t id = 0;
  const scenes::Scene* scene = nullptr;
  Eigen::VectorXd features;
};

std::vector<Query> make_queries(std::span<const scenes::Scene> scenes, const policy::PolicySettings& ps);

struct StepResult {
  StepLog log;
  std::vector<GroupBatch> groups;
};

/// One on-policy GRPO update over `queries`: G rollouts per query, composite
/// rewards, group advantages, SC-weighted token loss averaged over groups,
/// then `inner_epochs` optimizer steps. `step` only labels the log.
StepResult train_step(policy::PolicyParams& params, const policy::PolicyParams& ref_params, policy::Adam& opt,
                      std::span<const Query> queries, const GrpoSettings& s, std::uint64_t seed,
                      std::int64_t step);

/// Reward configurations for the ablation arms. Each mode is a pure function
/// of the base settings; no other code path differs between arms.
enum class RewardMode {
  IouOnly,    // format + IoU, plain GRPO
  Pos,        // + beta R_pos
  PosSc,      // + beta R_pos, SC weighting (both terms)
  Sc,         // format + IoU, SC weighting (both terms)
  PosScMean,  // + beta R_pos, SC weighting with the mean term only
  PosScVar,   // + beta R_pos, SC weighting with the variance term only
  ScMean,
  ScVar,
  GIoU,       // + beta GIoU
  DIoU,       // + beta DIoU
  Center,     // + beta center-distance reward
};

std::string_view to_string(RewardMode m);
std::optional<RewardMode> reward_mode_from_string(std::string_view s);
std::vector<RewardMode> all_reward_modes();

GrpoSettings apply_reward_mode(GrpoSettings base, RewardMode mode);

}  // namespace vgrft::grpo
