// SPDX-License-Identifier: Apache-2.0
#include "vgrft/scenes.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "vgrft/errors.hpp"

namespace vgrft::scenes {

namespace {

constexpr std::array<std::string_view, kMaxCategories> kCategories = {
    "airplane", "ship",    "storage-tank", "vehicle", "tennis-court", "basketball-court",
    "bridge",   "harbor",  "windmill",     "chimney", "dam",          "stadium"};

std::string spoken(std::string_view name) {
  std::string s(name);
  std::replace(s.begin(), s.end(), '-', ' ');
  return s;
}

using Rng = std::mt19937_64;

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

bool overlaps(const Box& a, const Box& b) {
  return std::min(a.x2, b.x2) > std::max(a.x1, b.x1) && std::min(a.y2, b.y2) > std::max(a.y1, b.y1);
}

bool satisfies(Relation r, const Box& m, const Box& a) {
  switch (r) {
    case Relation::LeftOf: return m.cx() < a.cx();
    case Relation::RightOf: return m.cx() > a.cx();
    case Relation::Above: return m.cy() < a.cy();
    case Relation::Below: return m.cy() > a.cy();
  }
  return false;
}

// Signed key whose maximum is the extremal member in direction r.
double extremal_key(Relation r, const Box& b) {
  switch (r) {
    case Relation::LeftOf: return -b.cx();
    case Relation::RightOf: return b.cx();
    case Relation::Above: return -b.cy();
    case Relation::Below: return b.cy();
  }
  return 0.0;
}

bool place(Rng& rng, const Difficulty& d, std::vector<SceneObject>& objects, Box box) {
  for (const auto& o : objects) {
    if (overlaps(o.box, box)) return false;
  }
  objects.push_back({uniform_int(rng, 0, d.num_categories - 1), box});
  return true;
}

Box random_box(Rng& rng, const Difficulty& d) {
  const int w = uniform_int(rng, d.min_size, d.max_size);
  const int h = uniform_int(rng, d.min_size, d.max_size);
  const int x = uniform_int(rng, 0, static_cast<int>(d.image_w) - w);
  const int y = uniform_int(rng, 0, static_cast<int>(d.image_h) - h);
  return {double(x), double(y), double(x + w), double(y + h)};
}

// Target box whose center lies in the outer quarter of a random corner.
Box corner_box(Rng& rng, const Difficulty& d) {
  const int w = uniform_int(rng, d.min_size, d.max_size);
  const int h = uniform_int(rng, d.min_size, d.max_size);
  const int corner = uniform_int(rng, 0, 3);
  const int iw = static_cast<int>(d.image_w);
  const int ih = static_cast<int>(d.image_h);
  const int cx_max = iw / 4;
  const int cy_max = ih / 4;
  int cx = uniform_int(rng, (w + 1) / 2, std::max((w + 1) / 2, cx_max));
  int cy = uniform_int(rng, (h + 1) / 2, std::max((h + 1) / 2, cy_max));
  int x = cx - (w + 1) / 2;
  int y = cy - (h + 1) / 2;
  if (corner & 1) x = iw - w - x;
  if (corner & 2) y = ih - h - y;
  return {double(x), double(y), double(x + w), double(y + h)};
}

std::optional<Expression> choose_expression(Rng& rng, const Scene& s) {
  const SceneObject& target = s.objects[static_cast<std::size_t>(s.target)];
  const auto same = std::count_if(s.objects.begin(), s.objects.end(),
                                  [&](const SceneObject& o) { return o.category == target.category; });
  Expression base;
  base.category = target.category;
  if (same == 1) {
    base.kind = ExpressionKind::Unique;
    base.text = render(base);
    return base;
  }

  std::vector<Expression> candidates;
  auto consider = [&](Expression e) {
    const auto hits = resolve_expression(s, e);
    if (hits.size() == 1 && hits.front() == s.target) candidates.push_back(std::move(e));
  };

  Expression region = base;
  region.kind = ExpressionKind::AbsoluteRegion;
  region.region = region_of(target.box.cx(), target.box.cy(), s.image_w, s.image_h);
  consider(region);

  for (int r = 0; r < kRelations; ++r) {
    Expression ord = base;
    ord.kind = ExpressionKind::Ordinal;
    ord.relation = static_cast<Relation>(r);
    consider(ord);
  }

  std::array<bool, kMaxCategories> present{};
  for (const auto& o : s.objects) present[static_cast<std::size_t>(o.category)] = true;
  for (int c = 0; c < kMaxCategories; ++c) {
    if (!present[static_cast<std::size_t>(c)] || c == target.category) continue;
    for (int r = 0; r < kRelations; ++r) {
      Expression rel = base;
      rel.kind = ExpressionKind::Relative;
      rel.relation = static_cast<Relation>(r);
      rel.anchor_category = c;
      consider(rel);
    }
  }

  if (candidates.empty()) return std::nullopt;
  Expression e = candidates[static_cast<std::size_t>(
      uniform_int(rng, 0, static_cast<int>(candidates.size()) - 1))];
  e.text = render(e);
  return e;
}

std::optional<Scene> attempt(Rng& rng, const Difficulty& d) {
  Scene s;
  s.image_w = d.image_w;
  s.image_h = d.image_h;
  const int n = uniform_int(rng, d.min_objects, d.max_objects);
  if (d.layout == Layout::FarInit) {
    place(rng, d, s.objects, corner_box(rng, d));
  }
  constexpr int kPlacementTries = 200;
  for (int tries = 0; static_cast<int>(s.objects.size()) < n; ++tries) {
    if (tries == kPlacementTries) return std::nullopt;
    place(rng, d, s.objects, random_box(rng, d));
  }
  if (d.layout == Layout::FarInit) {
    // Move the corner target to a random slot so the index carries no signal.
    const int slot = uniform_int(rng, 0, n - 1);
    std::swap(s.objects[0], s.objects[static_cast<std::size_t>(slot)]);
    s.target = slot;
  } else {
    s.target = uniform_int(rng, 0, n - 1);
  }
  auto e = choose_expression(rng, s);
  if (!e) return std::nullopt;
  s.expression = std::move(*e);
  return s;
}

}  // namespace

std::string_view category_name(int id) {
  if (id < 0 || id >= kMaxCategories) return "unknown";
  return kCategories[static_cast<std::size_t>(id)];
}

std::string_view to_string(ExpressionKind k) {
  switch (k) {
    case ExpressionKind::Unique: return "unique";
    case ExpressionKind::AbsoluteRegion: return "absolute-region";
    case ExpressionKind::Relative: return "relative";
    case ExpressionKind::Ordinal: return "ordinal";
  }
  return "unknown";
}

std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::LeftOf: return "left-of";
    case Relation::RightOf: return "right-of";
    case Relation::Above: return "above";
    case Relation::Below: return "below";
  }
  return "unknown";
}

std::optional<ExpressionKind> kind_from_string(std::string_view s) {
  for (int i = 0; i < kExpressionKinds; ++i) {
    if (to_string(static_cast<ExpressionKind>(i)) == s) return static_cast<ExpressionKind>(i);
  }
  return std::nullopt;
}

std::optional<Relation> relation_from_string(std::string_view s) {
  for (int i = 0; i < kRelations; ++i) {
    if (to_string(static_cast<Relation>(i)) == s) return static_cast<Relation>(i);
  }
  return std::nullopt;
}

std::string_view to_string(Layout l) { return l == Layout::FarInit ? "far-init" : "standard"; }

std::optional<Layout> layout_from_string(std::string_view s) {
  if (s == "standard") return Layout::Standard;
  if (s == "far-init") return Layout::FarInit;
  return std::nullopt;
}

std::string region_text(Region r) {
  static constexpr std::array<std::string_view, 3> rows = {"upper", "middle", "lower"};
  static constexpr std::array<std::string_view, 3> cols = {"left", "center", "right"};
  if (r.row == 1 && r.col == 1) return "center";
  return fmt::format("{} {}", rows.at(static_cast<std::size_t>(r.row)),
                     cols.at(static_cast<std::size_t>(r.col)));
}

Region region_of(double x, double y, double image_w, double image_h) {
  auto cell = [](double v, double extent) {
    if (v <= extent / 3.0) return 0;
    if (v <= 2.0 * extent / 3.0) return 1;
    return 2;
  };
  return {cell(y, image_h), cell(x, image_w)};
}

std::string render(const Expression& e) {
  const std::string cat = spoken(category_name(e.category));
  switch (e.kind) {
    case ExpressionKind::Unique: return "the " + cat;
    case ExpressionKind::AbsoluteRegion:
      return fmt::format("the {} in the {}", cat, region_text(e.region.value_or(Region{})));
    case ExpressionKind::Relative: {
      const std::string anchor = spoken(category_name(e.anchor_category.value_or(0)));
      switch (e.relation.value_or(Relation::LeftOf)) {
        case Relation::LeftOf: return fmt::format("the {} to the left of the {}", cat, anchor);
        case Relation::RightOf: return fmt::format("the {} to the right of the {}", cat, anchor);
        case Relation::Above: return fmt::format("the {} above the {}", cat, anchor);
        case Relation::Below: return fmt::format("the {} below the {}", cat, anchor);
      }
      break;
    }
    case ExpressionKind::Ordinal: {
      static constexpr std::array<std::string_view, 4> words = {"leftmost", "rightmost", "topmost",
                                                                "bottommost"};
      return fmt::format("the {} {}",
                         words[static_cast<std::size_t>(e.relation.value_or(Relation::LeftOf))], cat);
    }
  }
  return "the " + cat;
}

void Difficulty::validate() const {
  auto fail = [](std::string_view field, const std::string& why) {
    throw ConfigError(fmt::format("difficulty.{}: {}", field, why));
  };
  if (!(image_w >= 16.0) || !(image_h >= 16.0)) fail("image_w", "image must be at least 16x16");
  if (min_objects < 1) fail("min_objects", "must be at least 1");
  if (max_objects < min_objects) fail("max_objects", "must be >= min_objects");
  if (min_size < 1) fail("min_size", "must be at least 1");
  if (max_size < min_size) fail("max_size", "must be >= min_size");
  if (max_size > static_cast<int>(std::min(image_w, image_h)) / 2) {
    fail("max_size", "must be at most half the image side");
  }
  if (num_categories < 1 || num_categories > kMaxCategories) {
    fail("num_categories", fmt::format("must be in [1, {}]", kMaxCategories));
  }
  if (retry_budget < 1) fail("retry_budget", "must be positive");
}

Difficulty Difficulty::single_object() {
  Difficulty d;
  d.min_objects = 1;
  d.max_objects = 1;
  return d;
}

Difficulty Difficulty::far_init() {
  Difficulty d;
  d.min_objects = 2;
  d.max_objects = 5;
  d.min_size = 24;
  d.max_size = 40;
  d.layout = Layout::FarInit;
  return d;
}

std::vector<int> resolve_expression(const Scene& scene, const Expression& e) {
  std::vector<int> members;
  for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i) {
    if (scene.objects[static_cast<std::size_t>(i)].category == e.category) members.push_back(i);
  }
  const auto box = [&](int i) -> const Box& { return scene.objects[static_cast<std::size_t>(i)].box; };

  std::vector<int> out;
  switch (e.kind) {
    case ExpressionKind::Unique:
      return members;
    case ExpressionKind::AbsoluteRegion: {
      if (!e.region) return {};
      for (int i : members) {
        if (region_of(box(i).cx(), box(i).cy(), scene.image_w, scene.image_h) == *e.region) {
          out.push_back(i);
        }
      }
      return out;
    }
    case ExpressionKind::Relative: {
      if (!e.relation || !e.anchor_category) return {};
      for (int i : members) {
        bool ok = true;
        for (int j = 0; j < static_cast<int>(scene.objects.size()) && ok; ++j) {
          if (j == i || scene.objects[static_cast<std::size_t>(j)].category != *e.anchor_category) continue;
          ok = satisfies(*e.relation, box(i), box(j));
        }
        if (ok) out.push_back(i);
      }
      return out;
    }
    case ExpressionKind::Ordinal: {
      if (!e.relation || members.empty()) return {};
      double best = extremal_key(*e.relation, box(members.front()));
      for (int i : members) best = std::max(best, extremal_key(*e.relation, box(i)));
      for (int i : members) {
        if (extremal_key(*e.relation, box(i)) == best) out.push_back(i);
      }
      return out;
    }
  }
  return out;
}

Scene generate_scene(std::uint64_t seed, const Difficulty& d) {
  d.validate();
  Rng rng(seed);
  for (int i = 0; i < d.retry_budget; ++i) {
    if (auto s = attempt(rng, d)) return std::move(*s);
  }
  throw DataError(fmt::format("scene generation exhausted {} retries for seed {}", d.retry_budget, seed));
}

std::vector<Scene> generate_scenes(std::uint64_t seed, std::size_t n, const Difficulty& d) {
  std::vector<Scene> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_scene(seed + i, d));
  return out;
}

jsonl::json scene_to_json(const Scene& s) {
  jsonl::json j;
  j["image_w"] = s.image_w;
  j["image_h"] = s.image_h;
  auto objects = jsonl::json::array();
  for (const auto& o : s.objects) {
    jsonl::json oj;
    oj["category"] = o.category;
    oj["box"] = jsonl::box_to_json(o.box);
    objects.push_back(std::move(oj));
  }
  j["objects"] = std::move(objects);
  j["target"] = s.target;
  jsonl::json e;
  e["kind"] = std::string(to_string(s.expression.kind));
  e["category"] = s.expression.category;
  if (s.expression.region) {
    e["region"] = jsonl::json{{"row", s.expression.region->row}, {"col", s.expression.region->col}};
  }
  if (s.expression.relation) e["relation"] = std::string(to_string(*s.expression.relation));
  if (s.expression.anchor_category) e["anchor_category"] = *s.expression.anchor_category;
  e["text"] = s.expression.text;
  j["expression"] = std::move(e);
  return j;
}

Scene scene_from_json(const jsonl::json& j) {
  try {
    Scene s;
    s.image_w = j.at("image_w").get<double>();
    s.image_h = j.at("image_h").get<double>();
    for (const auto& oj : j.at("objects")) {
      SceneObject o;
      o.category = oj.at("category").get<int>();
      if (o.category < 0 || o.category >= kMaxCategories) throw DataError("category out of range");
      o.box = jsonl::box_from_json(oj.at("box"));
      if (!o.box.inside(s.image_w, s.image_h)) throw DataError("object box invalid or outside the image");
      s.objects.push_back(o);
    }
    s.target = j.at("target").get<int>();
    if (s.target < 0 || s.target >= static_cast<int>(s.objects.size())) {
      throw DataError("target index out of range");
    }
    const auto& ej = j.at("expression");
    const auto kind = kind_from_string(ej.at("kind").get<std::string>());
    if (!kind) throw DataError("unknown expression kind");
    s.expression.kind = *kind;
    s.expression.category = ej.at("category").get<int>();
    if (ej.contains("region")) {
      Region r{ej["region"].at("row").get<int>(), ej["region"].at("col").get<int>()};
      if (r.row < 0 || r.row > 2 || r.col < 0 || r.col > 2) throw DataError("region out of range");
      s.expression.region = r;
    }
    if (ej.contains("relation")) {
      const auto rel = relation_from_string(ej["relation"].get<std::string>());
      if (!rel) throw DataError("unknown relation");
      s.expression.relation = rel;
    }
    if (ej.contains("anchor_category")) s.expression.anchor_category = ej["anchor_category"].get<int>();
    s.expression.text = ej.at("text").get<std::string>();
    return s;
  } catch (const jsonl::json::exception& e) {
    throw DataError(std::string("scene schema: ") + e.what());
  }
}

std::string to_jsonl(const std::vector<Scene>& scenes) {
  std::string out;
  for (const auto& s : scenes) {
    out += scene_to_json(s).dump();
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<Scene>& scenes) {
  jsonl::write_file(path, to_jsonl(scenes));
}

std::vector<Scene> load_dataset(const std::filesystem::path& path) {
  std::vector<Scene> out;
  jsonl::for_each_line(path, [&](std::size_t n, std::string_view line) {
    try {
      out.push_back(scene_from_json(jsonl::json::parse(line)));
    } catch (const jsonl::json::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), n, e.what()));
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), n, e.what()));
    }
  });
  return out;
}

}  // namespace vgrft::scenes
