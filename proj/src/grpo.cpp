// SPDX-License-Identifier: Apache-2.0
#include "vgrft/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "vgrft/errors.hpp"
#include "vgrft/evalmetrics.hpp"
#include "vgrft/seeding.hpp"

namespace vgrft::grpo {

void GrpoSettings::validate() const {
  auto fail = [](std::string_view field, std::string_view why) {
    throw ConfigError(fmt::format("grpo.{}: {}", field, why));
  };
  if (group_size < 2) fail("group_size", "must be at least 2");
  if (!(clip_eps >= 0.0)) fail("clip_eps", "must be non-negative");
  if (!(kl_coeff >= 0.0)) fail("kl_coeff", "must be non-negative");
  if (!(lambda_m >= 0.0)) fail("lambda_m", "must be non-negative");
  if (!(lambda_v >= 0.0)) fail("lambda_v", "must be non-negative");
  if (!(w_min > 0.0) || !(w_min <= 1.0)) fail("w_min", "must be in (0, 1]");
  if (!(w_max >= 1.0) || !std::isfinite(w_max)) fail("w_max", "must be finite and >= 1");
  if (!(beta >= 0.0)) fail("beta", "must be non-negative");
  if (!(alpha > 0.0)) fail("alpha", "must be positive");
  if (!(adv_eps >= 0.0)) fail("adv_eps", "must be non-negative");
  if (!(format_weight >= 0.0)) fail("format_weight", "must be non-negative");
  if (inner_epochs < 1) fail("inner_epochs", "must be at least 1");
}

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // population
};

Moments moments(std::span<const double> x) {
  Moments m;
  if (x.empty()) return m;
  const double n = static_cast<double>(x.size());
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0, s = 0.0;
  for (double v : x) {
    ss += (v - m.mean) * (v - m.mean);
    s += v - m.mean;
  }
  // Two-pass with the rounding correction of the first pass.
  m.var = std::max(0.0, (ss - s * s / n) / n);
  return m;
}

}  // namespace

std::vector<double> group_advantages(std::span<const double> rewards, double adv_eps) {
  std::vector<double> adv(rewards.size(), 0.0);
  if (rewards.size() < 2) return adv;
  const Moments m = moments(rewards);
  const double sd = std::sqrt(m.var);
  if (!(sd > adv_eps)) return adv;
  double mean_dev = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    adv[i] = rewards[i] - m.mean;
    mean_dev += adv[i];
  }
  mean_dev /= static_cast<double>(rewards.size());
  for (auto& a : adv) a = (a - mean_dev) / sd;
  return adv;
}

double consistency_weight(std::span<const double> iou_rewards, const GrpoSettings& s) {
  const Moments m = moments(iou_rewards);
  const double w = std::exp(s.lambda_m * (1.0 - m.mean) + s.lambda_v * m.var);
  return std::clamp(w, s.w_min, s.w_max);
}

RewardWeights reward_weights(const GrpoSettings& s) {
  return {s.beta, s.format_weight, s.proximity};
}

GroupBatch build_group(std::size_t query_id, std::vector<policy::Rollout> rollouts, const Box& gt,
                       double image_w, double image_h, const GrpoSettings& s) {
  GroupBatch g;
  g.query_id = query_id;
  const KernelParams kernel = KernelParams::from_gt(gt, s.alpha, image_w, image_h);
  const RewardWeights weights = reward_weights(s);
  std::vector<double> ious;
  for (auto& r : rollouts) {
    const std::optional<Box> pred = r.degenerate ? std::nullopt : std::optional<Box>(r.decoded_box);
    r.rewards = composite_reward(pred, gt, !r.degenerate, weights, kernel);
    g.rewards.push_back(r.rewards.total);
    ious.push_back(r.rewards.iou);
  }
  g.rollouts = std::move(rollouts);
  const Moments rm = moments(g.rewards);
  g.reward_mean = rm.mean;
  g.reward_std = std::sqrt(rm.var);
  const Moments im = moments(ious);
  g.mean_iou = im.mean;
  g.var_iou = im.var;
  g.advantages = group_advantages(g.rewards, s.adv_eps);
  g.sc_weight = s.use_consistency_weight ? consistency_weight(ious, s) : 1.0;
  return g;
}

GroupLoss grpo_token_loss(const GroupBatch& group, std::span<const TokenLogProbs> new_logprobs,
                          std::span<const TokenLogProbs> ref_logprobs, const GrpoSettings& s) {
  const std::size_t n = group.rollouts.size();
  if (new_logprobs.size() != n || ref_logprobs.size() != n || group.advantages.size() != n) {
    throw std::invalid_argument("log-probabilities are not aligned with the group's rollouts");
  }
  GroupLoss out;
  out.tokens.resize(n);
  out.dloss_dlogprob.resize(n);
  const double norm = group.sc_weight / static_cast<double>(n * policy::kHeads);
  double total = 0.0;
  for (std::size_t g = 0; g < n; ++g) {
    const double adv = group.advantages[g];
    for (int t = 0; t < policy::kHeads; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      const double lp_new = new_logprobs[g][ti];
      const double lp_old = group.rollouts[g].old_logprobs[ti];
      const double lp_ref = ref_logprobs[g][ti];
      const double ratio = std::exp(lp_new - lp_old);
      if (!std::isfinite(ratio)) {
        throw NumericError(fmt::format("non-finite importance ratio in rollout {}, token {}", g, t));
      }
      const double clipped_ratio = std::clamp(ratio, 1.0 - s.clip_eps, 1.0 + s.clip_eps);
      const double unclipped = ratio * adv;
      const double clipped = clipped_ratio * adv;
      const bool use_unclipped = unclipped <= clipped;
      const double surrogate = -(use_unclipped ? unclipped : clipped);
      const double diff = lp_ref - lp_new;
      const double kl = std::exp(diff) - diff - 1.0;

      auto& d = out.tokens[g][ti];
      d.ratio = ratio;
      d.clipped = !use_unclipped;
      d.surrogate = surrogate;
      d.kl = kl;
      total += surrogate + s.kl_coeff * kl;

      const double dsur = use_unclipped ? -unclipped : 0.0;
      const double dkl = 1.0 - std::exp(diff);
      out.dloss_dlogprob[g][ti] = norm * (dsur + s.kl_coeff * dkl);
    }
  }
  out.loss = norm * total;
  return out;
}

std::vector<Query> make_queries(std::span<const scenes::Scene> scenes, const policy::PolicySettings& ps) {
  std::vector<Query> out;
  out.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    out.push_back({i, &scenes[i], policy::featurize(scenes[i], ps).values});
  }
  return out;
}

StepResult train_step(policy::PolicyParams& params, const policy::PolicyParams& ref_params, policy::Adam& opt,
                      std::span<const Query> queries, const GrpoSettings& s, std::uint64_t seed,
                      std::int64_t step) {
  s.validate();
  if (queries.empty()) throw std::invalid_argument("train_step needs at least one query");
  StepResult res;
  res.log.step = step;
  const int bins = params.settings().bins;

  std::vector<eval::PredictionPair> greedy;
  greedy.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    const auto& scene = *q.scene;
    const Box gt = scene.target_box();
    const Box pred = policy::decode_box(policy::greedy_tokens(params, q.features), bins, scene.image_w,
                                        scene.image_h);
    greedy.push_back({std::to_string(q.id), pred, gt, {}});
    auto rollouts = policy::sample_rollouts(params, q.features, s.group_size, derive_seed(seed, i),
                                            scene.image_w, scene.image_h);
    res.groups.push_back(build_group(q.id, std::move(rollouts), gt, scene.image_w, scene.image_h, s));
  }

  const double inv_groups = 1.0 / static_cast<double>(queries.size());
  std::vector<std::vector<TokenLogProbs>> ref_lps(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto qs = policy::forward_query(ref_params, queries[i].features);
    for (const auto& r : res.groups[i].rollouts) ref_lps[i].push_back(policy::token_logprobs(ref_params, qs, r.tokens));
  }

  for (int epoch = 0; epoch < s.inner_epochs; ++epoch) {
    policy::PolicyParams grad(params.settings());
    double loss = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const auto& group = res.groups[i];
      const auto qs = policy::forward_query(params, queries[i].features);
      std::vector<TokenLogProbs> new_lps;
      std::vector<policy::Tokens> tokens;
      for (const auto& r : group.rollouts) {
        new_lps.push_back(policy::token_logprobs(params, qs, r.tokens));
        tokens.push_back(r.tokens);
      }
      GroupLoss gl = grpo_token_loss(group, new_lps, ref_lps[i], s);
      loss += gl.loss * inv_groups;
      for (auto& c : gl.dloss_dlogprob) {
        for (auto& v : c) v *= inv_groups;
      }
      policy::accumulate_logprob_grad(params, queries[i].features, tokens, gl.dloss_dlogprob, grad);
    }
    if (!std::isfinite(loss)) throw NumericError(fmt::format("non-finite loss at step {}", step));
    if (epoch == 0) res.log.loss = loss;
    opt.step(params.flat(), grad.flat());
    if (!params.all_finite()) throw NumericError(fmt::format("non-finite parameters after step {}", step));
  }

  double reward_sum = 0.0;
  std::size_t reward_n = 0;
  for (const auto& g : res.groups) {
    for (double r : g.rewards) reward_sum += r;
    reward_n += g.rewards.size();
    res.log.reward_std += g.reward_std * inv_groups;
    res.log.mean_iou += g.mean_iou * inv_groups;
    res.log.var_iou += g.var_iou * inv_groups;
    res.log.mean_w += g.sc_weight * inv_groups;
    if (g.reward_std > s.adv_eps) {
      const Moments am = moments(g.advantages);
      ++res.log.groups_with_variance;
      res.log.adv_max_abs_mean = std::max(res.log.adv_max_abs_mean, std::abs(am.mean));
      res.log.adv_max_std_error = std::max(res.log.adv_max_std_error, std::abs(std::sqrt(am.var) - 1.0));
    }
  }
  res.log.mean_reward = reward_sum / static_cast<double>(reward_n);
  res.log.acc05 = eval::accuracy_at(greedy, 0.5);
  return res;
}

std::string_view to_string(RewardMode m) {
  switch (m) {
    case RewardMode::IouOnly: return "iou";
    case RewardMode::Pos: return "pos";
    case RewardMode::PosSc: return "pos-sc";
    case RewardMode::Sc: return "sc";
    case RewardMode::PosScMean: return "pos-sc-mean";
    case RewardMode::PosScVar: return "pos-sc-var";
    case RewardMode::ScMean: return "sc-mean";
    case RewardMode::ScVar: return "sc-var";
    case RewardMode::GIoU: return "giou";
    case RewardMode::DIoU: return "diou";
    case RewardMode::Center: return "center";
  }
  return "unknown";
}

std::vector<RewardMode> all_reward_modes() {
  return {RewardMode::IouOnly, RewardMode::Pos,    RewardMode::PosSc, RewardMode::Sc,
          RewardMode::PosScMean, RewardMode::PosScVar, RewardMode::ScMean, RewardMode::ScVar,
          RewardMode::GIoU,    RewardMode::DIoU,   RewardMode::Center};
}

std::optional<RewardMode> reward_mode_from_string(std::string_view s) {
  for (auto m : all_reward_modes()) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

GrpoSettings apply_reward_mode(GrpoSettings s, RewardMode mode) {
  auto plain = [&] {
    s.use_consistency_weight = false;
    s.lambda_m = 0.0;
    s.lambda_v = 0.0;
  };
  switch (mode) {
    case RewardMode::IouOnly:
      s.beta = 0.0;
      plain();
      break;
    case RewardMode::Pos:
      s.proximity = Proximity::Gaussian;
      plain();
      break;
    case RewardMode::PosSc:
      s.proximity = Proximity::Gaussian;
      s.use_consistency_weight = true;
      break;
    case RewardMode::Sc:
      s.beta = 0.0;
      s.use_consistency_weight = true;
      break;
    case RewardMode::PosScMean:
      s.proximity = Proximity::Gaussian;
      s.use_consistency_weight = true;
      s.lambda_v = 0.0;
      break;
    case RewardMode::PosScVar:
      s.proximity = Proximity::Gaussian;
      s.use_consistency_weight = true;
      s.lambda_m = 0.0;
      break;
    case RewardMode::ScMean:
      s.beta = 0.0;
      s.use_consistency_weight = true;
      s.lambda_v = 0.0;
      break;
    case RewardMode::ScVar:
      s.beta = 0.0;
      s.use_consistency_weight = true;
      s.lambda_m = 0.0;
      break;
    case RewardMode::GIoU:
      s.proximity = Proximity::GIoU;
      plain();
      break;
    case RewardMode::DIoU:
      s.proximity = Proximity::DIoU;
      plain();
      break;
    case RewardMode::Center:
      s.proximity = Proximity::CenterDistance;
      plain();
      break;
  }
  return s;
}

}  // namespace vgrft::grpo
