// SPDX-License-Identifier: Apache-2.0
#include "vgrft/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "vgrft/errors.hpp"

namespace vgrft::policy {

void PolicySettings::validate() const {
  auto fail = [](std::string_view field, std::string_view why) {
    throw ConfigError(fmt::format("policy.{}: {}", field, why));
  };
  if (hidden < 1) fail("hidden", "must be positive");
  if (bins < 2) fail("bins", "must be at least 2");
  if (max_objects < 0) fail("max_objects", "must be non-negative");
  if (!(init_scale >= 0.0)) fail("init_scale", "must be non-negative");
  if (!(prior_std_bins >= 0.0)) fail("prior_std_bins", "must be non-negative");
  if (!(temperature >= 0.0)) fail("temperature", "must be non-negative");
  if (!std::isfinite(prior_spread_bins)) fail("prior_spread_bins", "must be finite");
  if (ordinal_basis < 0 || ordinal_basis > bins) fail("ordinal_basis", "must be in [0, bins]");
}

int PolicySettings::feature_width() const { return kExpressionFeatures + max_objects * kObjectFeatures; }

Features featurize(const scenes::Scene& scene, const PolicySettings& s) {
  Features f;
  f.values = Eigen::VectorXd::Zero(s.feature_width());
  auto& v = f.values;
  const auto& e = scene.expression;

  int off = 0;
  v[off + static_cast<int>(e.kind)] = 1.0;
  off += scenes::kExpressionKinds;
  v[off + e.category] = 1.0;
  off += scenes::kMaxCategories;
  if (e.region) v[off + e.region->index()] = 1.0;
  off += scenes::kRegions;
  if (e.relation) v[off + static_cast<int>(*e.relation)] = 1.0;
  off += scenes::kRelations;
  if (e.anchor_category) v[off + *e.anchor_category] = 1.0;
  off += scenes::kMaxCategories;

  std::vector<const scenes::SceneObject*> order;
  order.reserve(scene.objects.size());
  for (const auto& o : scene.objects) order.push_back(&o);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    if (a->box.cy() != b->box.cy()) return a->box.cy() < b->box.cy();
    if (a->box.cx() != b->box.cx()) return a->box.cx() < b->box.cx();
    return a->category < b->category;
  });
  f.truncated = static_cast<int>(order.size()) > s.max_objects;
  const int n = std::min<int>(static_cast<int>(order.size()), s.max_objects);
  for (int i = 0; i < n; ++i) {
    const auto& o = *order[static_cast<std::size_t>(i)];
    const int base = off + i * kObjectFeatures;
    v[base + o.category] = 1.0;
    v[base + scenes::kMaxCategories + 0] = o.box.cx() / scene.image_w;
    v[base + scenes::kMaxCategories + 1] = o.box.cy() / scene.image_h;
    v[base + scenes::kMaxCategories + 2] = o.box.width() / scene.image_w;
    v[base + scenes::kMaxCategories + 3] = o.box.height() / scene.image_h;
  }
  return f;
}

Eigen::MatrixXd ordinal_basis(const PolicySettings& s) {
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(s.bins, s.ordinal_basis);
  if (s.ordinal_basis == 0) return phi;
  const double spacing = static_cast<double>(s.bins) / s.ordinal_basis;
  for (int j = 0; j < s.ordinal_basis; ++j) {
    const double mu = (j + 0.5) * spacing - 0.5;
    for (int k = 0; k < s.bins; ++k) {
      const double z = (k - mu) / spacing;
      phi(k, j) = std::exp(-0.5 * z * z);
    }
  }
  return phi;
}

PolicyParams::PolicyParams(const PolicySettings& s) : settings_(s) {
  s.validate();
  std::size_t off = 0;
  auto block = [&](int rows, int cols) {
    Block b{off, rows, cols};
    off += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    return b;
  };
  w_in_ = block(s.hidden, s.feature_width());
  b_in_ = block(s.hidden, 1);
  for (int t = 0; t < kHeads; ++t) {
    out_[t] = block(s.bins, s.hidden);
    prev_[t] = block(s.bins, t * s.bins);
    bias_[t] = block(s.bins, 1);
    smooth_[t] = block(s.ordinal_basis, s.hidden);
    smooth_bias_[t] = block(s.ordinal_basis, 1);
  }
  data_.assign(off, 0.0);
  basis_ = ordinal_basis(s);
}

bool PolicyParams::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

PolicyParams::MatMap PolicyParams::w_in() { return {data_.data() + w_in_.offset, w_in_.rows, w_in_.cols}; }
PolicyParams::CMatMap PolicyParams::w_in() const { return {data_.data() + w_in_.offset, w_in_.rows, w_in_.cols}; }
PolicyParams::VecMap PolicyParams::b_in() { return {data_.data() + b_in_.offset, b_in_.rows}; }
PolicyParams::CVecMap PolicyParams::b_in() const { return {data_.data() + b_in_.offset, b_in_.rows}; }
PolicyParams::MatMap PolicyParams::out(int t) {
  const auto& b = out_.at(static_cast<std::size_t>(t));
  return {data_.data() + b.offset, b.rows, b.cols};
}
PolicyParams::CMatMap PolicyParams::out(int t) const {
  const auto& b = out_.at(static_cast<std::size_t>(t));
  return {data_.data() + b.offset, b.rows, b.cols};
}
PolicyParams::MatMap PolicyParams::prev(int t) {
  const auto& b = prev_.at(static_cast<std::size_t>(t));
  return {data_.data() + b.offset, b.rows, b.cols};
}
PolicyParams::CMatMap PolicyParams::prev(int t) const {
  const auto& b = prev_.at(static_cast<std::size_t>(t));
  return {data_.data() + b.offset, b.rows, b.cols};
}
PolicyParams::VecMap PolicyParams::bias(int t) {
  const auto& b = bias_.at(static_cast<std::size_t>(t));
  return {data_.data() + b.offset, b.rows};
}
PolicyParams::CVecMap PolicyParams::bias(int t) const {
  const auto& b = bias_.at(static_cast<std::size_t>(t));
  return {data_.data() + b.offset, b.rows};
}

PolicyParams::MatMap PolicyParams::smooth(int t) {
  const auto& b = smooth_.at(static_cast<std::size_t>(t));
  return {data_.data() + b.offset, b.rows, b.cols};
}
PolicyParams::CMatMap PolicyParams::smooth(int t) const {
  const auto& b = smooth_.at(static_cast<std::size_t>(t));
  return {data_.data() + b.offset, b.rows, b.cols};
}
PolicyParams::VecMap PolicyParams::smooth_bias(int t) {
  const auto& b = smooth_bias_.at(static_cast<std::size_t>(t));
  return {data_.data() + b.offset, b.rows};
}
PolicyParams::CVecMap PolicyParams::smooth_bias(int t) const {
  const auto& b = smooth_bias_.at(static_cast<std::size_t>(t));
  return {data_.data() + b.offset, b.rows};
}

PolicyParams init_params(const PolicySettings& s, std::uint64_t seed) {
  PolicyParams p(s);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (s.init_scale > 0.0) {
    const double in_std = s.init_scale / std::sqrt(static_cast<double>(s.feature_width()));
    for (auto& w : p.w_in().reshaped()) w = in_std * normal(rng);
    const double out_std = s.init_scale / std::sqrt(static_cast<double>(s.hidden));
    for (int t = 0; t < kHeads; ++t) {
      for (auto& w : p.out(t).reshaped()) w = out_std * normal(rng);
    }
  }
  if (s.prior_std_bins > 0.0) {
    const double center = 0.5 * (s.bins - 1);
    for (int t = 0; t < kHeads; ++t) {
      const double mu = t < 2 ? center - s.prior_spread_bins : center + s.prior_spread_bins;
      auto b = p.bias(t);
      for (int k = 0; k < s.bins; ++k) {
        const double z = (k - mu) / s.prior_std_bins;
        b[k] = -0.5 * z * z;
      }
    }
  }
  return p;
}

QueryState forward_query(const PolicyParams& p, const Eigen::VectorXd& features) {
  if (features.size() != p.w_in().cols()) {
    throw std::invalid_argument(fmt::format("feature width {} does not match policy width {}",
                                            features.size(), p.w_in().cols()));
  }
  QueryState q;
  q.hidden = (p.w_in() * features + p.b_in()).array().tanh().matrix();
  const bool smooth = p.settings().ordinal_basis > 0;
  for (int t = 0; t < kHeads; ++t) {
    q.base_logits[t] = p.out(t) * q.hidden + p.bias(t);
    if (smooth) q.base_logits[t].noalias() += p.basis() * (p.smooth(t) * q.hidden + p.smooth_bias(t));
  }
  return q;
}

namespace {

Eigen::VectorXd head_logits(const PolicyParams& p, const QueryState& q, const Tokens& prefix, int t) {
  const int bins = p.settings().bins;
  Eigen::VectorXd logits = q.base_logits[static_cast<std::size_t>(t)];
  const auto prev = p.prev(t);
  for (int s = 0; s < t; ++s) {
    const int tok = prefix[static_cast<std::size_t>(s)];
    if (tok < 0 || tok >= bins) throw std::out_of_range(fmt::format("token {} out of range at head {}", tok, s));
    logits += prev.col(s * bins + tok);
  }
  if (!logits.allFinite()) throw NumericError(fmt::format("non-finite logits at head {}", t));
  return logits;
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

int argmax(const Eigen::VectorXd& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

void check_tokens(const Tokens& tokens, int bins) {
  for (int t = 0; t < kHeads; ++t) {
    const int tok = tokens[static_cast<std::size_t>(t)];
    if (tok < 0 || tok >= bins) {
      throw std::out_of_range(fmt::format("token {} out of range [0,{}) at head {}", tok, bins, t));
    }
  }
}

}  // namespace

Eigen::VectorXd head_logprobs(const PolicyParams& p, const QueryState& q, const Tokens& prefix, int t) {
  return log_softmax(head_logits(p, q, prefix, t));
}

std::array<double, kHeads> token_logprobs(const PolicyParams& p, const QueryState& q, const Tokens& tokens) {
  check_tokens(tokens, p.settings().bins);
  std::array<double, kHeads> out{};
  for (int t = 0; t < kHeads; ++t) {
    out[static_cast<std::size_t>(t)] = head_logprobs(p, q, tokens, t)[tokens[static_cast<std::size_t>(t)]];
  }
  return out;
}

Box decode_box(const Tokens& tokens, int bins, double image_w, double image_h) {
  const double bw = image_w / bins;
  const double bh = image_h / bins;
  const auto [xa, xb] = std::minmax(tokens[0], tokens[2]);
  const auto [ya, yb] = std::minmax(tokens[1], tokens[3]);
  return {std::clamp(xa * bw, 0.0, image_w), std::clamp(ya * bh, 0.0, image_h),
          std::clamp(xb * bw, 0.0, image_w), std::clamp(yb * bh, 0.0, image_h)};
}

Tokens encode_box(const Box& box, int bins, double image_w, double image_h) {
  auto bin = [bins](double v, double extent) {
    const int b = static_cast<int>(std::floor(v / extent * bins));
    return std::clamp(b, 0, bins - 1);
  };
  return {bin(box.x1, image_w), bin(box.y1, image_h), bin(box.x2, image_w), bin(box.y2, image_h)};
}

std::vector<Rollout> sample_rollouts(const PolicyParams& p, const Eigen::VectorXd& features, int group_size,
                                     std::uint64_t seed, double image_w, double image_h) {
  if (group_size < 1) throw std::invalid_argument("group size must be positive");
  const QueryState q = forward_query(p, features);
  const double temp = p.settings().temperature;
  const int bins = p.settings().bins;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<Rollout> out(static_cast<std::size_t>(group_size));
  for (auto& r : out) {
    for (int t = 0; t < kHeads; ++t) {
      const Eigen::VectorXd lp = head_logprobs(p, q, r.tokens, t);
      int tok = 0;
      if (temp == 0.0) {
        tok = argmax(lp);
      } else {
        // Inverse-CDF draw from softmax(lp / temp).
        const Eigen::ArrayXd scaled = lp.array() / temp;
        const Eigen::ArrayXd w = (scaled - scaled.maxCoeff()).exp();
        const double u = unif(rng) * w.sum();
        double acc = 0.0;
        tok = bins - 1;
        for (int k = 0; k < bins; ++k) {
          acc += w[k];
          if (u < acc) {
            tok = k;
            break;
          }
        }
      }
      r.tokens[static_cast<std::size_t>(t)] = tok;
      r.token_logprobs[static_cast<std::size_t>(t)] = lp[tok];
    }
    r.old_logprobs = r.token_logprobs;
    r.decoded_box = decode_box(r.tokens, bins, image_w, image_h);
    r.degenerate = !r.decoded_box.valid();
  }
  return out;
}

Tokens greedy_tokens(const PolicyParams& p, const Eigen::VectorXd& features) {
  const QueryState q = forward_query(p, features);
  Tokens tokens{};
  for (int t = 0; t < kHeads; ++t) tokens[static_cast<std::size_t>(t)] = argmax(head_logits(p, q, tokens, t));
  return tokens;
}

std::vector<std::array<double, kHeads>> accumulate_logprob_grad(
    const PolicyParams& p, const Eigen::VectorXd& features, std::span<const Tokens> tokens,
    std::span<const std::array<double, kHeads>> coeffs, PolicyParams& grad) {
  if (tokens.size() != coeffs.size()) throw std::invalid_argument("tokens/coeffs size mismatch");
  if (grad.size() != p.size()) throw std::invalid_argument("gradient buffer has the wrong size");
  const auto& s = p.settings();
  const QueryState q = forward_query(p, features);

  std::array<Eigen::VectorXd, kHeads> dlogits_sum;
  for (auto& d : dlogits_sum) d = Eigen::VectorXd::Zero(s.bins);

  std::vector<std::array<double, kHeads>> out(tokens.size());
  for (std::size_t g = 0; g < tokens.size(); ++g) {
    check_tokens(tokens[g], s.bins);
    for (int t = 0; t < kHeads; ++t) {
      const Eigen::VectorXd lp = head_logprobs(p, q, tokens[g], t);
      const int tok = tokens[g][static_cast<std::size_t>(t)];
      out[g][static_cast<std::size_t>(t)] = lp[tok];
      const double c = coeffs[g][static_cast<std::size_t>(t)];
      if (c == 0.0) continue;
      // d log softmax[tok] / d logits = onehot(tok) - softmax
      Eigen::VectorXd d = -c * lp.array().exp().matrix();
      d[tok] += c;
      dlogits_sum[static_cast<std::size_t>(t)] += d;
      auto gprev = grad.prev(t);
      for (int u = 0; u < t; ++u) gprev.col(u * s.bins + tokens[g][static_cast<std::size_t>(u)]) += d;
    }
  }

  Eigen::VectorXd dh = Eigen::VectorXd::Zero(s.hidden);
  for (int t = 0; t < kHeads; ++t) {
    const auto& d = dlogits_sum[static_cast<std::size_t>(t)];
    grad.out(t).noalias() += d * q.hidden.transpose();
    grad.bias(t) += d;
    dh.noalias() += p.out(t).transpose() * d;
    if (s.ordinal_basis > 0) {
      const Eigen::VectorXd dz = p.basis().transpose() * d;
      grad.smooth(t).noalias() += dz * q.hidden.transpose();
      grad.smooth_bias(t) += dz;
      dh.noalias() += p.smooth(t).transpose() * dz;
    }
  }
  const Eigen::VectorXd dpre = dh.array() * (1.0 - q.hidden.array().square());
  grad.w_in().noalias() += dpre * features.transpose();
  grad.b_in() += dpre;
  return out;
}

LogProbGrad logprob_and_grad(const PolicyParams& p, const Eigen::VectorXd& features, const Tokens& tokens) {
  LogProbGrad r{0.0, PolicyParams(p.settings())};
  const std::array<Tokens, 1> toks{tokens};
  const std::array<std::array<double, kHeads>, 1> ones{{{1.0, 1.0, 1.0, 1.0}}};
  const auto lps = accumulate_logprob_grad(p, features, toks, ones, r.grad);
  r.logprob = std::accumulate(lps[0].begin(), lps[0].end(), 0.0);
  return r;
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw std::invalid_argument("Adam: size mismatch");
  }
  ++t_;
  const double b1 = settings_.beta1, b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    params[i] -= settings_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + settings_.eps);
  }
}

jsonl::json Adam::to_json() const {
  jsonl::json j;
  j["lr"] = settings_.lr;
  j["beta1"] = settings_.beta1;
  j["beta2"] = settings_.beta2;
  j["eps"] = settings_.eps;
  j["t"] = t_;
  j["m"] = m_;
  j["v"] = v_;
  return j;
}

Adam Adam::from_json(const jsonl::json& j, std::size_t n) {
  AdamSettings s{j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
                 j.at("eps").get<double>()};
  Adam a(n, s);
  a.t_ = j.at("t").get<std::int64_t>();
  a.m_ = j.at("m").get<std::vector<double>>();
  a.v_ = j.at("v").get<std::vector<double>>();
  if (a.m_.size() != n || a.v_.size() != n) throw DataError("optimizer state has the wrong size");
  return a;
}

SftExample make_sft_example(const scenes::Scene& scene, const PolicySettings& s) {
  return {featurize(scene, s).values, encode_box(scene.target_box(), s.bins, scene.image_w, scene.image_h)};
}

double sft_loss(const PolicyParams& p, std::span<const SftExample> batch) {
  if (batch.empty()) throw std::invalid_argument("empty SFT batch");
  double nll = 0.0;
  for (const auto& ex : batch) {
    const auto lps = token_logprobs(p, forward_query(p, ex.features), ex.target);
    nll -= std::accumulate(lps.begin(), lps.end(), 0.0);
  }
  return nll / static_cast<double>(batch.size());
}

double sft_step(PolicyParams& p, Adam& opt, std::span<const SftExample> batch) {
  if (batch.empty()) throw std::invalid_argument("empty SFT batch");
  PolicyParams grad(p.settings());
  const double scale = -1.0 / static_cast<double>(batch.size());  // descend on mean NLL
  const std::array<double, kHeads> coeff{scale, scale, scale, scale};
  double nll = 0.0;
  for (const auto& ex : batch) {
    const std::array<Tokens, 1> toks{ex.target};
    const std::array<std::array<double, kHeads>, 1> c{coeff};
    const auto lps = accumulate_logprob_grad(p, ex.features, toks, c, grad);
    nll -= std::accumulate(lps[0].begin(), lps[0].end(), 0.0);
  }
  nll /= static_cast<double>(batch.size());
  if (!std::isfinite(nll)) throw NumericError(fmt::format("non-finite SFT loss {}", nll));
  opt.step(p.flat(), grad.flat());
  return nll;
}

jsonl::json settings_to_json(const PolicySettings& s) {
  jsonl::json j;
  j["hidden"] = s.hidden;
  j["bins"] = s.bins;
  j["max_objects"] = s.max_objects;
  j["init_scale"] = s.init_scale;
  j["prior_std_bins"] = s.prior_std_bins;
  j["prior_spread_bins"] = s.prior_spread_bins;
  j["temperature"] = s.temperature;
  j["ordinal_basis"] = s.ordinal_basis;
  return j;
}

PolicySettings settings_from_json(const jsonl::json& j) {
  PolicySettings s;
  s.hidden = j.at("hidden").get<int>();
  s.bins = j.at("bins").get<int>();
  s.max_objects = j.at("max_objects").get<int>();
  s.init_scale = j.at("init_scale").get<double>();
  s.prior_std_bins = j.at("prior_std_bins").get<double>();
  s.prior_spread_bins = j.at("prior_spread_bins").get<double>();
  s.temperature = j.at("temperature").get<double>();
  s.ordinal_basis = j.at("ordinal_basis").get<int>();
  return s;
}

namespace {
constexpr std::string_view kCheckpointFormat = "vgrft-policy";
constexpr int kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  jsonl::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["stage"] = c.stage;
  j["seed"] = c.seed;
  j["step"] = c.step;
  j["settings"] = settings_to_json(c.params.settings());
  j["num_params"] = c.params.size();
  j["params"] = std::vector<double>(c.params.flat().begin(), c.params.flat().end());
  if (c.optimizer) j["optimizer"] = c.optimizer->to_json();
  jsonl::write_file(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string text = jsonl::read_file(path);
  try {
    const auto j = jsonl::json::parse(text);
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw DataError(path.string() + ": not a policy checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw DataError(path.string() + ": unsupported checkpoint version");
    }
    Checkpoint c;
    c.stage = j.at("stage").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.step = j.at("step").get<std::int64_t>();
    c.params = PolicyParams(settings_from_json(j.at("settings")));
    const auto values = j.at("params").get<std::vector<double>>();
    if (values.size() != c.params.size()) {
      throw DataError(fmt::format("{}: expected {} parameters, found {}", path.string(), c.params.size(),
                                  values.size()));
    }
    std::copy(values.begin(), values.end(), c.params.flat().begin());
    if (j.contains("optimizer")) c.optimizer = Adam::from_json(j["optimizer"], c.params.size());
    return c;
  } catch (const jsonl::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace vgrft::policy
