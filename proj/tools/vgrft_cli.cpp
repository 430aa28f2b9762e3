// SPDX-License-Identifier: Apache-2.0
// vgrft: scene generation, supervised warm start, GRPO fine-tuning,
// evaluation, reward inspection, and CoT corpus filtering.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "vgrft/errors.hpp"
#include "vgrft/evalmetrics.hpp"
#include "vgrft/experiment.hpp"
#include "vgrft/grpo.hpp"
#include "vgrft/jsonl.hpp"
#include "vgrft/policy.hpp"
#include "vgrft/position_reward.hpp"
#include "vgrft/response_format.hpp"
#include "vgrft/scenes.hpp"
#include "vgrft/seeding.hpp"
#include "vgrft/step_log.hpp"

namespace fs = std::filesystem;
using namespace vgrft;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

void require_free(const fs::path& p, bool overwrite) {
  if (!overwrite && fs::exists(p)) {
    throw ConfigError(fmt::format("{} already exists (pass --overwrite to replace it)", p.string()));
  }
}

void write_text(const fs::path& p, const std::string& text) { jsonl::write_file(p, text); }

// ---- shared option groups -------------------------------------------------

struct DifficultyOpts {
  scenes::Difficulty d;
  std::string layout = "standard";

  void add(CLI::App* app) {
    app->add_option("--min-objects", d.min_objects, "fewest objects per scene")->capture_default_str();
    app->add_option("--max-objects", d.max_objects, "most objects per scene")->capture_default_str();
    app->add_option("--min-size", d.min_size, "smallest object side in pixels")->capture_default_str();
    app->add_option("--max-size", d.max_size, "largest object side in pixels")->capture_default_str();
    app->add_option("--num-categories", d.num_categories, "categories in use")->capture_default_str();
    app->add_option("--image-w", d.image_w, "image width")->capture_default_str();
    app->add_option("--image-h", d.image_h, "image height")->capture_default_str();
    app->add_option("--layout", layout, "standard or far-init")
        ->check(CLI::IsMember({"standard", "far-init"}))
        ->capture_default_str();
    app->add_option("--retry-budget", d.retry_budget, "placement attempts per scene")->capture_default_str();
  }

  scenes::Difficulty resolve() const {
    scenes::Difficulty out = d;
    out.layout = *scenes::layout_from_string(layout);
    out.validate();
    return out;
  }
};

void add_policy_options(CLI::App* app, policy::PolicySettings& p) {
  app->add_option("--hidden", p.hidden, "hidden units")->capture_default_str();
  app->add_option("--bins", p.bins, "coordinate bins per head")->capture_default_str();
  app->add_option("--max-objects-in", p.max_objects, "object slots in the policy input")->capture_default_str();
  app->add_option("--init-scale", p.init_scale, "initial weight scale")->capture_default_str();
  app->add_option("--prior-std-bins", p.prior_std_bins, "central prior width in bins, 0 disables")
      ->capture_default_str();
  app->add_option("--prior-spread-bins", p.prior_spread_bins, "prior offset of the corner heads")
      ->capture_default_str();
  app->add_option("--temperature", p.temperature, "sampling temperature")->capture_default_str();
  app->add_option("--ordinal-basis", p.ordinal_basis, "ordinal bumps per head, 0 disables")->capture_default_str();
}

const std::vector<std::string> kPolicyFlags = {"--hidden",          "--bins",          "--max-objects-in",
                                                "--init-scale",      "--prior-std-bins", "--prior-spread-bins",
                                                "--temperature",     "--ordinal-basis"};

struct GrpoOpts {
  grpo::GrpoSettings s;

  void add(CLI::App* app) {
    app->add_option("--group-size", s.group_size, "rollouts per query")->capture_default_str();
    app->add_option("--clip-eps", s.clip_eps, "surrogate clip radius")->capture_default_str();
    app->add_option("--kl-coeff", s.kl_coeff, "reference KL coefficient")->capture_default_str();
    app->add_option("--lambda-m", s.lambda_m, "consistency weight mean coefficient")->capture_default_str();
    app->add_option("--lambda-v", s.lambda_v, "consistency weight variance coefficient")->capture_default_str();
    app->add_option("--w-min", s.w_min, "lower weight clip")->capture_default_str();
    app->add_option("--w-max", s.w_max, "upper weight clip")->capture_default_str();
    app->add_option("--beta", s.beta, "proximity channel weight")->capture_default_str();
    app->add_option("--alpha", s.alpha, "kernel width factor")->capture_default_str();
    app->add_option("--adv-eps", s.adv_eps, "constant-group threshold on reward std")->capture_default_str();
    app->add_option("--format-weight", s.format_weight, "format channel weight")->capture_default_str();
    app->add_option("--inner-epochs", s.inner_epochs, "updates per sampled batch")->capture_default_str();
  }
};

std::vector<std::string> mode_names() {
  std::vector<std::string> out;
  for (auto m : grpo::all_reward_modes()) out.emplace_back(grpo::to_string(m));
  return out;
}

struct TrainOpts {
  experiment::TrainConfig cfg;
  GrpoOpts grpo;
  std::string mode = "pos-sc";

  void add(CLI::App* app) {
    grpo.add(app);
    add_policy_options(app, cfg.policy);
    app->add_option("--reward-mode", mode, "reward arm")->check(CLI::IsMember(mode_names()))->capture_default_str();
    app->add_option("--steps", cfg.steps, "GRPO steps")->check(CLI::NonNegativeNumber)->capture_default_str();
    app->add_option("--queries-per-step", cfg.queries_per_step, "queries per step")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--lr", cfg.adam.lr, "learning rate")->capture_default_str();
    app->add_option("--seed", cfg.seed, "run seed")->capture_default_str();
  }

  experiment::TrainConfig resolve() const {
    experiment::TrainConfig c = cfg;
    c.grpo = grpo.s;
    c.mode = *grpo::reward_mode_from_string(mode);
    c.policy.validate();
    grpo::apply_reward_mode(c.grpo, c.mode).validate();
    if (!(c.adam.lr >= 0.0)) throw ConfigError("lr: must be non-negative");
    return c;
  }
};

void check_corpus_fits(const std::vector<scenes::Scene>& corpus, const policy::PolicySettings& s,
                       const std::string& path) {
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (static_cast<int>(corpus[i].objects.size()) > s.max_objects) {
      throw DataError(fmt::format("{}: scene {} has {} objects but the policy has {} object slots", path, i + 1,
                                  corpus[i].objects.size(), s.max_objects));
    }
  }
}

// ---- gen ------------------------------------------------------------------

struct GenCmd {
  std::string out;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  bool overwrite = false;
  DifficultyOpts diff;

  void add(CLI::App* app) {
    app->add_option("--out", out, "output JSON Lines corpus")->required();
    app->add_option("--n", n, "number of scenes")->capture_default_str();
    app->add_option("--seed", seed, "first scene seed")->capture_default_str();
    diff.add(app);
    app->add_flag("--overwrite", overwrite, "replace existing outputs")->configurable(false);
  }

  int run() const {
    const auto d = diff.resolve();
    require_free(out, overwrite);
    const auto corpus = scenes::generate_scenes(seed, n, d);
    scenes::write_dataset(out, corpus);
    std::size_t objects = 0;
    std::map<std::string, std::size_t> kinds;
    for (const auto& s : corpus) {
      objects += s.objects.size();
      ++kinds[std::string(scenes::to_string(s.expression.kind))];
    }
    fmt::print("scenes {}\nobjects {}\n", corpus.size(), objects);
    for (const auto& [k, c] : kinds) fmt::print("kind {} {}\n", k, c);
    return kOk;
  }
};

// ---- sft ------------------------------------------------------------------

struct SftCmd {
  std::string data, out, log, resume;
  int epochs = 5;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool overwrite = false;
  policy::PolicySettings ps;
  CLI::App* app = nullptr;

  void add(CLI::App* a) {
    app = a;
    a->add_option("--data", data, "scene corpus")->required();
    a->add_option("--out", out, "output checkpoint")->required();
    a->add_option("--log", log, "loss curve CSV (step,epoch,loss)");
    a->add_option("--resume", resume, "continue from this SFT checkpoint");
    a->add_option("--epochs", epochs, "epochs to run")->check(CLI::NonNegativeNumber)->capture_default_str();
    a->add_option("--batch-size", batch_size, "scenes per step")->check(CLI::PositiveNumber)->capture_default_str();
    a->add_option("--lr", lr, "learning rate")->capture_default_str();
    a->add_option("--seed", seed, "initialization and shuffling seed")->capture_default_str();
    add_policy_options(a, ps);
    a->add_flag("--overwrite", overwrite, "replace existing outputs")->configurable(false);
  }

  int run() const {
    const auto corpus = scenes::load_dataset(data);
    if (corpus.empty()) throw DataError(fmt::format("{}: corpus is empty", data));

    policy::Checkpoint ck;
    std::uint64_t run_seed = seed;
    if (!resume.empty()) {
      ck = policy::load_checkpoint(resume);
      if (ck.stage != "sft" && ck.stage != "init") {
        throw ConfigError(fmt::format("{}: cannot resume SFT from a '{}' checkpoint", resume, ck.stage));
      }
      bool shape_flags = false;
      for (const auto& f : kPolicyFlags) shape_flags = shape_flags || app->count(f) > 0;
      if (shape_flags && !(ps == ck.params.settings())) {
        throw ConfigError(fmt::format("policy settings differ from the checkpoint {}", resume));
      }
      run_seed = ck.seed;
    } else {
      ps.validate();
      ck.params = policy::init_params(ps, seed);
      ck.seed = seed;
      ck.step = 0;
    }
    ck.stage = "sft";
    if (!(lr >= 0.0)) throw ConfigError("lr: must be non-negative");
    check_corpus_fits(corpus, ck.params.settings(), data);

    require_free(out, overwrite);
    if (!log.empty() && resume.empty()) require_free(log, overwrite);

    std::vector<policy::SftExample> examples;
    examples.reserve(corpus.size());
    for (const auto& s : corpus) examples.push_back(policy::make_sft_example(s, ck.params.settings()));

    policy::Adam opt = ck.optimizer ? *ck.optimizer : policy::Adam(ck.params.size(), policy::AdamSettings{});
    opt.set_lr(lr);

    const std::size_t per_epoch = (examples.size() + batch_size - 1) / batch_size;
    if (ck.step % static_cast<std::int64_t>(per_epoch) != 0) {
      throw DataError(fmt::format("{}: step {} is not at an epoch boundary for batch size {}", resume, ck.step,
                                  batch_size));
    }
    const auto first_epoch = static_cast<std::uint64_t>(ck.step) / per_epoch;
    const double initial = policy::sft_loss(ck.params, examples);

    std::string rows;
    std::vector<std::size_t> order(examples.size());
    std::vector<policy::SftExample> batch;
    for (std::uint64_t e = first_epoch; e < first_epoch + static_cast<std::uint64_t>(epochs); ++e) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 rng(derive_seed(run_seed, 0x5f7, e));
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t b = 0; b < per_epoch; ++b) {
        batch.clear();
        for (std::size_t i = b * batch_size; i < std::min(order.size(), (b + 1) * batch_size); ++i) {
          batch.push_back(examples[order[i]]);
        }
        const double loss = policy::sft_step(ck.params, opt, batch);
        ++ck.step;
        rows += fmt::format("{},{},{}\n", ck.step, e + 1, fmt_double(loss));
      }
    }
    ck.optimizer = opt;
    policy::save_checkpoint(out, ck);

    if (!log.empty()) {
      if (!resume.empty() && fs::exists(log)) {
        std::ofstream f(log, std::ios::app | std::ios::binary);
        f << rows;
        if (!f) throw DataError(fmt::format("cannot append to {}", log));
      } else {
        write_text(log, "step,epoch,loss\n" + rows);
      }
    }
    const double final_loss = policy::sft_loss(ck.params, examples);
    fmt::print("steps {}\ninitial_nll {}\nfinal_nll {}\n", ck.step, fmt_double(initial), fmt_double(final_loss));
    return kOk;
  }
};

// ---- train ----------------------------------------------------------------

struct TrainCmd {
  std::string data, init, out_dir;
  bool cold_init = false;
  std::int64_t eval_every = 0;
  std::int64_t checkpoint_every = 0;
  bool overwrite = false;
  TrainOpts opts;

  void add(CLI::App* app) {
    app->add_option("--data", data, "scene corpus")->required();
    app->add_option("--init", init, "initial checkpoint; also the KL reference");
    app->add_flag("--cold-init", cold_init, "start from a fresh initialization");
    app->add_option("--out-dir", out_dir, "output directory")->required();
    opts.add(app);
    app->add_option("--eval-every", eval_every, "greedy evaluation interval in steps, 0 for the end only")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app->add_option("--checkpoint-every", checkpoint_every, "checkpoint interval in steps, 0 for the end only")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app->add_flag("--overwrite", overwrite, "replace existing outputs")->configurable(false);
  }

  int run() const {
    if (init.empty() == !cold_init) throw ConfigError("train needs exactly one of --init and --cold-init");
    auto cfg = opts.resolve();
    const auto corpus = scenes::load_dataset(data);
    if (corpus.empty()) throw DataError(fmt::format("{}: corpus is empty", data));

    policy::PolicyParams start;
    if (cold_init) {
      start = policy::init_params(cfg.policy, cfg.seed);
    } else {
      start = policy::load_checkpoint(init).params;
      cfg.policy = start.settings();
    }
    check_corpus_fits(corpus, cfg.policy, data);

    const fs::path dir(out_dir);
    const fs::path steps_csv = dir / "steps.csv", eval_csv = dir / "eval.csv", final_ck = dir / "final.json",
                   report = dir / "report.json";
    for (const auto& p : {steps_csv, eval_csv, final_ck, report}) require_free(p, overwrite);
    fs::create_directories(dir);

    std::string eval_rows = "step,acc05,acc07,miou\n";
    auto eval_row = [&](std::int64_t step, const eval::EvalReport& r) {
      eval_rows += fmt::format("{},{},{},{}\n", step, fmt_double(r.acc_at_05), fmt_double(r.acc_at_07),
                               fmt_double(r.miou));
    };
    auto on_step = [&](const StepLog& log, const policy::PolicyParams& p) {
      if (eval_every > 0 && log.step % eval_every == 0 && log.step != cfg.steps) {
        eval_row(log.step, experiment::evaluate_policy(p, corpus));
      }
      if (checkpoint_every > 0 && log.step % checkpoint_every == 0 && log.step != cfg.steps) {
        policy::save_checkpoint(dir / fmt::format("ckpt_{:06d}.json", log.step),
                                {p, cfg.seed, log.step, "rft", std::nullopt});
      }
    };

    std::vector<StepLog> partial;
    experiment::RunResult res;
    try {
      res = experiment::run_grpo(cfg, corpus, start, std::nullopt, 1, on_step, &partial);
    } catch (const NumericError&) {
      write_step_logs(steps_csv, partial);
      write_text(eval_csv, eval_rows);
      fmt::print(stderr, "numeric abort after {} steps; partial log in {}\n", partial.size(), steps_csv.string());
      throw;
    }
    write_step_logs(steps_csv, res.logs);
    eval_row(cfg.steps, res.final_report);
    write_text(eval_csv, eval_rows);
    policy::save_checkpoint(final_ck, {res.params, cfg.seed, cfg.steps, "rft", res.optimizer});
    write_text(report, res.final_report.to_json().dump(2) + "\n");
    fmt::print("{}", res.final_report.to_text());
    return kOk;
  }
};

// ---- eval -----------------------------------------------------------------

struct EvalCmd {
  std::string checkpoint, data, predictions, out_json, out_text, write_predictions;
  bool inclusive = false;
  bool overwrite = false;

  void add(CLI::App* app) {
    auto* c = app->add_option("--checkpoint", checkpoint, "policy checkpoint for greedy decoding");
    auto* d = app->add_option("--data", data, "scene corpus");
    auto* p = app->add_option("--predictions", predictions, "external predictions (JSON Lines)");
    c->needs(d);
    p->excludes(c);
    p->excludes(d);
    app->add_option("--out-json", out_json, "JSON report");
    app->add_option("--out-text", out_text, "text report");
    app->add_option("--write-predictions", write_predictions, "save decoded predictions (JSON Lines)");
    app->add_flag("--inclusive", inclusive, "count IoU equal to the threshold as a hit");
    app->add_flag("--overwrite", overwrite, "replace existing outputs")->configurable(false);
  }

  int run() const {
    if (predictions.empty() && checkpoint.empty()) {
      throw ConfigError("eval needs --checkpoint with --data, or --predictions");
    }
    for (const auto& p : {out_json, out_text, write_predictions}) {
      if (!p.empty()) require_free(p, overwrite);
    }
    std::vector<eval::PredictionPair> pairs;
    if (!predictions.empty()) {
      pairs = eval::load_predictions(predictions);
    } else {
      const auto ck = policy::load_checkpoint(checkpoint);
      const auto corpus = scenes::load_dataset(data);
      check_corpus_fits(corpus, ck.params.settings(), data);
      pairs = experiment::greedy_predictions(ck.params, corpus);
    }
    if (!write_predictions.empty()) {
      std::string text;
      for (const auto& p : pairs) text += eval::prediction_to_json(p).dump() + "\n";
      write_text(write_predictions, text);
    }
    const auto report = eval::evaluate(pairs, inclusive);
    if (!out_json.empty()) write_text(out_json, report.to_json().dump(2) + "\n");
    if (!out_text.empty()) write_text(out_text, report.to_text());
    fmt::print("{}", report.to_text());
    return kOk;
  }
};

// ---- reward ---------------------------------------------------------------

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string field;
  while (std::getline(in, field, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(field, &used);
    } catch (const std::exception&) {
      throw DataError(fmt::format("malformed number '{}' in IoU list", field));
    }
    if (field.find_first_not_of(" \t", used) != std::string::npos) {
      throw DataError(fmt::format("malformed number '{}' in IoU list", field));
    }
    out.push_back(v);
  }
  if (out.empty()) throw DataError("empty IoU list");
  return out;
}

struct RewardCmd {
  std::string pred, gt, ious, proximity = "gaussian";
  double image_w = 256.0, image_h = 256.0;
  bool no_format = false;
  grpo::GrpoSettings s;

  void add(CLI::App* app) {
    app->add_option("--pred", pred, "predicted box text, e.g. \"[10,10,50,50]\"")->required();
    app->add_option("--gt", gt, "ground-truth box text")->required();
    app->add_option("--image-w", image_w, "image width")->capture_default_str();
    app->add_option("--image-h", image_h, "image height")->capture_default_str();
    app->add_option("--alpha", s.alpha, "kernel width factor")->capture_default_str();
    app->add_option("--beta", s.beta, "proximity channel weight")->capture_default_str();
    app->add_option("--format-weight", s.format_weight, "format channel weight")->capture_default_str();
    app->add_flag("--no-format", no_format, "score the response as badly formatted");
    app->add_option("--proximity", proximity, "gaussian, giou, diou, or center")
        ->check(CLI::IsMember({"gaussian", "giou", "diou", "center"}))
        ->capture_default_str();
    app->add_option("--ious", ious, "comma-separated group IoUs for the consistency weight");
    app->add_option("--lambda-m", s.lambda_m, "consistency weight mean coefficient")->capture_default_str();
    app->add_option("--lambda-v", s.lambda_v, "consistency weight variance coefficient")->capture_default_str();
    app->add_option("--w-min", s.w_min, "lower weight clip")->capture_default_str();
    app->add_option("--w-max", s.w_max, "upper weight clip")->capture_default_str();
  }

  int run() const {
    s.validate();
    const auto p = parse_box_text(pred);
    if (!p) throw DataError(fmt::format("malformed predicted box '{}'", pred));
    const auto g = parse_box_text(gt);
    if (!g) throw DataError(fmt::format("malformed ground-truth box '{}'", gt));
    if (!g->valid() || !g->inside(image_w, image_h)) {
      throw DataError(fmt::format("ground-truth box {} is not a valid box inside the image", to_string(*g)));
    }
    const auto group = ious.empty() ? std::vector<double>{} : parse_list(ious);
    const auto kernel = KernelParams::from_gt(*g, s.alpha, image_w, image_h);
    const RewardWeights w{s.beta, s.format_weight, *proximity_from_string(proximity)};
    const auto r = composite_reward(p, *g, !no_format, w, kernel);
    fmt::print("format {}\niou {}\npos {}\ntotal {}\n", fmt_double(r.format), fmt_double(r.iou), fmt_double(r.pos),
               fmt_double(r.total));
    if (!group.empty()) fmt::print("w {}\n", fmt_double(grpo::consistency_weight(group, s)));
    return kOk;
  }
};

// ---- cot-filter -----------------------------------------------------------

struct CotFilterCmd {
  std::string input, accepted, rejected, verdicts, summary;
  FilterSettings settings;
  bool overwrite = false;

  void add(CLI::App* app) {
    app->add_option("--input", input, "CoT corpus (JSON Lines)")->required();
    app->add_option("--accepted", accepted, "accepted records")->required();
    app->add_option("--rejected", rejected, "rejected records with verdicts")->required();
    app->add_option("--verdicts", verdicts, "one verdict per input line");
    app->add_option("--summary", summary, "summary counts (JSON)");
    app->add_option("--min-think-chars", settings.min_think_chars, "shortest acceptable reasoning")->capture_default_str();
    app->add_option("--match-tolerance", settings.match_tolerance, "minimum IoU between answer and ground truth")
        ->capture_default_str();
    app->add_flag("--overwrite", overwrite, "replace existing outputs")->configurable(false);
  }

  int run() const {
    if (!(settings.match_tolerance >= 0.0 && settings.match_tolerance <= 1.0)) {
      throw ConfigError("match_tolerance: must be in [0, 1]");
    }
    std::ifstream in(input, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot read {}", input));
    for (const auto& p : {accepted, rejected, verdicts, summary}) {
      if (!p.empty()) require_free(p, overwrite);
    }
    std::ostringstream acc, rej, ver;
    const auto sum = filter_stream(in, acc, rej, verdicts.empty() ? nullptr : &ver, settings);
    if (in.bad()) throw DataError(fmt::format("error reading {}", input));
    write_text(accepted, acc.str());
    write_text(rejected, rej.str());
    if (!verdicts.empty()) write_text(verdicts, ver.str());
    const std::string js = sum.to_json().dump(2) + "\n";
    if (!summary.empty()) write_text(summary, js);
    fmt::print("{}", js);
    return kOk;
  }
};

// ---- ablate ---------------------------------------------------------------

struct AblateCmd {
  std::string out_dir, data;
  std::uint64_t first_seed = 1;
  int seeds = 5;
  std::vector<std::string> modes{"iou", "pos"};
  bool overwrite = false;
  TrainOpts opts;

  AblateCmd() {
    const auto preset = experiment::far_init_config(0);
    opts.cfg = preset;
    opts.grpo.s = preset.grpo;
  }

  void add(CLI::App* app) {
    app->add_option("--out-dir", out_dir, "output directory")->required();
    app->add_option("--data", data, "shared scene corpus; defaults to per-seed far-init scenes");
    app->add_option("--first-seed", first_seed, "first seed")->capture_default_str();
    app->add_option("--seeds", seeds, "number of seeds")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--modes", modes, "reward arms")
        ->delimiter(',')
        ->check(CLI::IsMember(mode_names()))
        ->capture_default_str();
    opts.add(app);
    app->remove_option(app->get_option("--reward-mode"));
    app->remove_option(app->get_option("--seed"));
    app->add_flag("--overwrite", overwrite, "replace existing outputs")->configurable(false);
  }

  int run() const {
    auto cfg = opts.resolve();
    for (const auto& m : modes) grpo::apply_reward_mode(cfg.grpo, *grpo::reward_mode_from_string(m)).validate();
    std::optional<std::vector<scenes::Scene>> shared;
    if (!data.empty()) {
      shared = scenes::load_dataset(data);
      if (shared->empty()) throw DataError(fmt::format("{}: corpus is empty", data));
      check_corpus_fits(*shared, cfg.policy, data);
    }
    const fs::path dir(out_dir);
    require_free(dir / "summary.csv", overwrite);
    fs::create_directories(dir);

    struct Row {
      std::string seed, mode;
      double acc05, acc07, miou, late_std;
    };
    std::vector<Row> rows;
    for (int k = 0; k < seeds; ++k) {
      const std::uint64_t seed = first_seed + static_cast<std::uint64_t>(k);
      const auto scenes = shared ? *shared : experiment::far_init_scenes(seed);
      for (const auto& m : modes) {
        const auto mode = *grpo::reward_mode_from_string(m);
        const auto arm = experiment::run_arm(cfg, mode, seed, scenes);
        fs::create_directories(dir / m);
        write_step_logs(dir / m / fmt::format("seed_{}.csv", seed), arm.run.logs);
        const auto& r = arm.run.final_report;
        rows.push_back({std::to_string(seed), m, r.acc_at_05, r.acc_at_07, r.miou, arm.late_std});
        fmt::print(stderr, "seed {} {} acc05 {:.4f}\n", seed, m, r.acc_at_05);
      }
    }
    for (const auto& m : modes) {
      Row mean{"mean", m, 0, 0, 0, 0};
      for (const auto& r : rows) {
        if (r.mode != m || r.seed == "mean") continue;
        mean.acc05 += r.acc05 / seeds;
        mean.acc07 += r.acc07 / seeds;
        mean.miou += r.miou / seeds;
        mean.late_std += r.late_std / seeds;
      }
      rows.push_back(mean);
    }
    std::string csv = "seed,mode,acc05,acc07,miou,late_reward_std\n";
    std::string table = fmt::format("{:<6} {:<12} {:>8} {:>8} {:>8} {:>10}\n", "seed", "mode", "Acc@0.5", "Acc@0.7",
                                    "mIoU", "late_std");
    for (const auto& r : rows) {
      csv += fmt::format("{},{},{},{},{},{}\n", r.seed, r.mode, fmt_double(r.acc05), fmt_double(r.acc07),
                         fmt_double(r.miou), fmt_double(r.late_std));
      table += fmt::format("{:<6} {:<12} {:>8.4f} {:>8.4f} {:>8.4f} {:>10.5f}\n", r.seed, r.mode, r.acc05, r.acc07,
                           r.miou, r.late_std);
    }
    write_text(dir / "summary.csv", csv);
    fmt::print("{}", table);
    return kOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grounding toolkit: scenes, rewards, GRPO training, evaluation, CoT filtering."};
  app.set_config("--config", "", "read options from a config file");
  std::string emit_config;
  app.add_option("--emit-config", emit_config, "write the effective config of the command to this file")
      ->configurable(false);
  app.require_subcommand(1);

  GenCmd gen;
  SftCmd sft;
  TrainCmd train;
  EvalCmd ev;
  RewardCmd reward;
  CotFilterCmd cot;
  AblateCmd ablate;

  struct Entry {
    CLI::App* app;
    std::function<int()> run;
  };
  std::vector<Entry> commands;
  auto reg = [&](const char* name, const char* help, auto& cmd) {
    auto* sub = app.add_subcommand(name, help);
    sub->configurable();
    sub->fallthrough();
    cmd.add(sub);
    commands.push_back({sub, [&cmd] { return cmd.run(); }});
  };
  reg("gen", "generate a scene corpus", gen);
  reg("sft", "supervised warm start on a scene corpus", sft);
  reg("train", "GRPO fine-tuning", train);
  reg("eval", "grounding metrics for a checkpoint or a prediction file", ev);
  reg("reward", "print reward channels for one prediction", reward);
  reg("cot-filter", "split a CoT corpus into accepted and rejected records", cot);
  reg("ablate", "multi-seed reward-mode comparison", ablate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    for (const auto& c : commands) {
      if (!c.app->parsed()) continue;
      if (!emit_config.empty()) {
        write_text(emit_config, fmt::format("[{}]\n{}", c.app->get_name(), c.app->config_to_str(true, false)));
      }
      return c.run();
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kUsage;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kData;
  } catch (const GeometryError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kData;
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric abort: {}\n", e.what());
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kData;
  }
  return kUsage;
}
