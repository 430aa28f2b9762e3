// SPDX-License-Identifier: Apache-2.0
#include "vgrft/evalmetrics.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "vgrft/errors.hpp"

namespace vgrft::eval {

double pair_iou(const PredictionPair& p) {
  if (!p.pred || !p.pred->valid()) return 0.0;
  return iou(*p.pred, p.gt);
}

double accuracy_at(std::span<const PredictionPair> pairs, double threshold, bool inclusive) {
  if (pairs.empty()) throw DataError("undefined metric: no prediction pairs");
  std::size_t hits = 0;
  for (const auto& p : pairs) {
    if (!p.pred || !p.pred->valid()) continue;
    const double v = pair_iou(p);
    if (inclusive ? v >= threshold : v > threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

double mean_iou(std::span<const PredictionPair> pairs) {
  if (pairs.empty()) throw DataError("undefined metric: no prediction pairs");
  double s = 0.0;
  for (const auto& p : pairs) s += pair_iou(p);
  return s / static_cast<double>(pairs.size());
}

EvalReport evaluate(std::span<const PredictionPair> pairs, bool inclusive) {
  EvalReport r;
  r.n = pairs.size();
  r.acc_at_05 = accuracy_at(pairs, 0.5, inclusive);
  r.acc_at_07 = accuracy_at(pairs, 0.7, inclusive);
  r.miou = mean_iou(pairs);

  std::map<std::string, std::vector<PredictionPair>> groups;
  for (const auto& p : pairs) {
    if (!p.kind.empty()) groups[p.kind].push_back(p);
  }
  for (const auto& [kind, g] : groups) {
    r.per_kind[kind] = {g.size(), accuracy_at(g, 0.5, inclusive), accuracy_at(g, 0.7, inclusive), mean_iou(g)};
  }
  return r;
}

jsonl::json EvalReport::to_json() const {
  jsonl::json j;
  j["n"] = n;
  j["acc_at_05"] = acc_at_05;
  j["acc_at_07"] = acc_at_07;
  j["miou"] = miou;
  jsonl::json kinds = jsonl::json::object();
  for (const auto& [k, s] : per_kind) {
    kinds[k] = {{"n", s.n}, {"acc_at_05", s.acc_at_05}, {"acc_at_07", s.acc_at_07}, {"miou", s.miou}};
  }
  j["per_expression_kind"] = std::move(kinds);
  if (!reward_std_series.empty()) j["reward_std_series"] = reward_std_series;
  return j;
}

std::string EvalReport::to_text() const {
  std::string out = "Grounding evaluation\n";
  out += fmt::format("  samples  {}\n  Acc@0.5  {:.4f}\n  Acc@0.7  {:.4f}\n  mIoU     {:.4f}\n", n, acc_at_05,
                     acc_at_07, miou);
  if (!per_kind.empty()) {
    out += "\nBy expression kind\n";
    out += fmt::format("  {:<16} {:>6} {:>8} {:>8} {:>8}\n", "kind", "n", "Acc@0.5", "Acc@0.7", "mIoU");
    for (const auto& [k, s] : per_kind) {
      out += fmt::format("  {:<16} {:>6} {:>8.4f} {:>8.4f} {:>8.4f}\n", k, s.n, s.acc_at_05, s.acc_at_07, s.miou);
    }
  }
  return out;
}

std::vector<double> reward_std_curve(std::span<const StepLog> logs, std::size_t window) {
  if (window == 0) window = 1;
  std::vector<double> out;
  out.reserve(logs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    sum += logs[i].reward_std;
    if (i >= window) sum -= logs[i - window].reward_std;
    const std::size_t n = std::min(window, i + 1);
    out.push_back(n == 1 ? logs[i].reward_std : sum / static_cast<double>(n));
  }
  return out;
}

jsonl::json prediction_to_json(const PredictionPair& p) {
  jsonl::json j;
  j["id"] = p.id;
  j["pred_box"] = p.pred ? jsonl::box_to_json(*p.pred) : jsonl::json(nullptr);
  j["gt_box"] = jsonl::box_to_json(p.gt);
  if (!p.kind.empty()) j["kind"] = p.kind;
  return j;
}

std::vector<PredictionPair> load_predictions(const std::filesystem::path& path) {
  std::vector<PredictionPair> out;
  jsonl::for_each_line(path, [&](std::size_t line, std::string_view text) {
    auto fail = [&](const std::string& why) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), line, why));
    };
    jsonl::json j;
    try {
      j = jsonl::json::parse(text);
    } catch (const jsonl::json::exception& e) {
      fail(e.what());
    }
    if (!j.is_object()) fail("expected a JSON object");
    PredictionPair p;
    if (!j.contains("id")) fail("missing field 'id'");
    p.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    if (!j.contains("gt_box")) fail("missing field 'gt_box'");
    if (!j.contains("pred_box")) fail("missing field 'pred_box'");
    try {
      p.gt = jsonl::box_from_json(j["gt_box"]);
      if (!j["pred_box"].is_null()) p.pred = jsonl::box_from_json(j["pred_box"]);
    } catch (const DataError& e) {
      fail(e.what());
    }
    if (!p.gt.valid()) fail("gt_box is degenerate");
    if (j.contains("kind")) {
      if (!j["kind"].is_string()) fail("kind must be a string");
      p.kind = j["kind"].get<std::string>();
    }
    out.push_back(std::move(p));
  });
  return out;
}

}  // namespace vgrft::eval
