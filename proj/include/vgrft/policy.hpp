// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vgrft/geometry.hpp"
#include "vgrft/jsonl.hpp"
#include "vgrft/position_reward.hpp"
#include "vgrft/scenes.hpp"

namespace vgrft::policy {

inline constexpr int kHeads = 4;  // x1, y1, x2, y2
using Tokens = std::array<int, kHeads>;

struct PolicySettings {
  int hidden = 128;
  int bins = 64;
  int max_objects = 12;
  double init_scale = 1.0;      // weight std multiplier on 1/sqrt(fan_in); 0 gives uniform logits
  double prior_std_bins = 0.0;  // > 0 adds a Gaussian bump over bins, centered on the image
  double prior_spread_bins = 4.0;  // x1/y1 bump sits this many bins left of center, x2/y2 right
  double temperature = 1.0;     // sampling only; recorded logprobs are at temperature 1
  int ordinal_basis = 16;       // Gaussian bumps over the bin axis feeding each head; 0 disables

  /// Throws ConfigError naming the offending field.
  void validate() const;
  [[nodiscard]] int feature_width() const;

  friend bool operator==(const PolicySettings&, const PolicySettings&) = default;
};

// Feature layout: expression one-hots (kind, category, region, relation,
// anchor) followed by max_objects slots of (category one-hot, cx, cy, w, h)
// with geometry normalized by the image size.
inline constexpr int kExpressionFeatures =
    scenes::kExpressionKinds + scenes::kMaxCategories + scenes::kRegions + scenes::kRelations +
    scenes::kMaxCategories;
inline constexpr int kObjectFeatures = scenes::kMaxCategories + 4;

struct Features {
  Eigen::VectorXd values;
  bool truncated = false;  // scene had more than max_objects objects
};

/// Objects are ordered by (center y, center x) so the result does not depend
/// on the scene's object order.
Features featurize(const scenes::Scene& scene, const PolicySettings& s);

/// Fixed bins x ordinal_basis matrix of Gaussian bumps evenly spaced over the
/// bin axis. Logit contributions routed through it move mass between
/// neighbouring bins together, so coordinate tokens carry an ordinal prior.
Eigen::MatrixXd ordinal_basis(const PolicySettings& s);

/// Flat parameter vector with typed views. Layout: w_in (hidden x F), b_in,
/// then per head t: out[t] (bins x hidden), prev[t] (bins x t*bins),
/// bias[t] (bins), smooth[t] (basis x hidden), smooth_bias[t] (basis).
/// Head logits are out*h + basis*(smooth*h + smooth_bias) + bias + prev cols.
class PolicyParams {
 public:
  PolicyParams() = default;
  explicit PolicyParams(const PolicySettings& s);

  [[nodiscard]] const PolicySettings& settings() const { return settings_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] std::span<double> flat() { return data_; }
  [[nodiscard]] std::span<const double> flat() const { return data_; }
  [[nodiscard]] bool all_finite() const;

  using MatMap = Eigen::Map<Eigen::MatrixXd>;
  using CMatMap = Eigen::Map<const Eigen::MatrixXd>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;
  using CVecMap = Eigen::Map<const Eigen::VectorXd>;

  MatMap w_in();
  CMatMap w_in() const;
  VecMap b_in();
  CVecMap b_in() const;
  MatMap out(int head);
  CMatMap out(int head) const;
  MatMap prev(int head);
  CMatMap prev(int head) const;
  VecMap bias(int head);
  CVecMap bias(int head) const;
  MatMap smooth(int head);
  CMatMap smooth(int head) const;
  VecMap smooth_bias(int head);
  CVecMap smooth_bias(int head) const;
  [[nodiscard]] const Eigen::MatrixXd& basis() const { return basis_; }

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    return a.settings_ == b.settings_ && a.data_ == b.data_;
  }

 private:
  struct Block {
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
    friend bool operator==(const Block&, const Block&) = default;
  };
  PolicySettings settings_;
  std::vector<double> data_;
  Block w_in_, b_in_;
  std::array<Block, kHeads> out_{}, prev_{}, bias_{}, smooth_{}, smooth_bias_{};
  Eigen::MatrixXd basis_;
};

/// Random initialization, deterministic in (settings, seed).
PolicyParams init_params(const PolicySettings& s, std::uint64_t seed);

/// Hidden activation and the token-independent part of each head's logits.
struct QueryState {
  Eigen::VectorXd hidden;
  std::array<Eigen::VectorXd, kHeads> base_logits;
};

QueryState forward_query(const PolicyParams& p, const Eigen::VectorXd& features);

/// Log-softmax of head `t` given the earlier tokens in `prefix`.
/// Throws NumericError naming the head on non-finite logits.
Eigen::VectorXd head_logprobs(const PolicyParams& p, const QueryState& q, const Tokens& prefix, int t);

/// Per-token log-probabilities of a full token sequence.
std::array<double, kHeads> token_logprobs(const PolicyParams& p, const QueryState& q, const Tokens& tokens);

struct Rollout {
  Tokens tokens{};
  std::array<double, kHeads> token_logprobs{};
  std::array<double, kHeads> old_logprobs{};
  Box decoded_box;
  bool degenerate = false;
  RewardBreakdown rewards;
};

/// G autoregressive samples; deterministic in (params, features, G, seed).
std::vector<Rollout> sample_rollouts(const PolicyParams& p, const Eigen::VectorXd& features, int group_size,
                                     std::uint64_t seed, double image_w, double image_h);

/// Argmax decoding.
Tokens greedy_tokens(const PolicyParams& p, const Eigen::VectorXd& features);

/// Bin left edges; corners are swapped into order. Equal bins yield a
/// zero-width (invalid) box.
Box decode_box(const Tokens& tokens, int bins, double image_w, double image_h);
/// Bin index of each corner (floor, clamped to the bin range).
Tokens encode_box(const Box& box, int bins, double image_w, double image_h);

struct LogProbGrad {
  double logprob = 0.0;
  PolicyParams grad;  // same layout as the parameters
};

/// Sum of token log-probabilities and its exact gradient. Throws
/// std::out_of_range for tokens outside [0, bins).
LogProbGrad logprob_and_grad(const PolicyParams& p, const Eigen::VectorXd& features, const Tokens& tokens);

/// Adds sum_g sum_t coeffs[g][t] * grad log pi(tokens[g][t]) to `grad` (a
/// PolicyParams of the same shape used as a buffer), for several token
/// sequences sharing one set of features. Returns per-token log-probabilities.
std::vector<std::array<double, kHeads>> accumulate_logprob_grad(
    const PolicyParams& p, const Eigen::VectorXd& features, std::span<const Tokens> tokens,
    std::span<const std::array<double, kHeads>> coeffs, PolicyParams& grad);

struct AdamSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment descent on a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, AdamSettings s) : settings_(s), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad);

  [[nodiscard]] const AdamSettings& settings() const { return settings_; }
  void set_lr(double lr) { settings_.lr = lr; }
  [[nodiscard]] std::int64_t steps() const { return t_; }

  [[nodiscard]] jsonl::json to_json() const;
  static Adam from_json(const jsonl::json& j, std::size_t n);

 private:
  AdamSettings settings_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
};

struct SftExample {
  Eigen::VectorXd features;
  Tokens target{};
};

/// One descent step on the mean NLL of `batch`. Returns the NLL before the
/// update. Throws NumericError on a non-finite loss.
double sft_step(PolicyParams& p, Adam& opt, std::span<const SftExample> batch);

/// Mean NLL without updating.
double sft_loss(const PolicyParams& p, std::span<const SftExample> batch);

SftExample make_sft_example(const scenes::Scene& scene, const PolicySettings& s);

jsonl::json settings_to_json(const PolicySettings& s);
PolicySettings settings_from_json(const jsonl::json& j);

struct Checkpoint {
  PolicyParams params;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::string stage;  // "init", "sft", "rft"
  std::optional<Adam> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
/// Throws DataError on malformed files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vgrft::policy
