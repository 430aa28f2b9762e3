// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vgrft/geometry.hpp"
#include "vgrft/jsonl.hpp"

namespace vgrft::scenes {

inline constexpr int kMaxCategories = 12;

/// Category names, indexed by id.
std::string_view category_name(int id);

enum class ExpressionKind { Unique, AbsoluteRegion, Relative, Ordinal };
enum class Relation { LeftOf, RightOf, Above, Below };

inline constexpr int kExpressionKinds = 4;
inline constexpr int kRelations = 4;
inline constexpr int kRegions = 9;

std::string_view to_string(ExpressionKind k);
std::string_view to_string(Relation r);
std::optional<ExpressionKind> kind_from_string(std::string_view s);
std::optional<Relation> relation_from_string(std::string_view s);

/// Cell of the 3x3 grid: row 0..2 top to bottom, col 0..2 left to right.
struct Region {
  int row = 0;
  int col = 0;
  [[nodiscard]] int index() const { return row * 3 + col; }
  static Region from_index(int i) { return {i / 3, i % 3}; }
  friend bool operator==(const Region&, const Region&) = default;
};

std::string region_text(Region r);

/// Cell containing (x, y). Centers on a grid line go to the upper/left cell.
Region region_of(double x, double y, double image_w, double image_h);

/// Referring expression. Ordinal expressions reuse `relation` as the
/// extremal direction (LeftOf = leftmost, Above = topmost, ...).
struct Expression {
  ExpressionKind kind = ExpressionKind::Unique;
  int category = 0;
  std::optional<Region> region;
  std::optional<Relation> relation;
  std::optional<int> anchor_category;
  std::string text;

  friend bool operator==(const Expression&, const Expression&) = default;
};

/// Rendered template text for the expression's fields.
std::string render(const Expression& e);

struct SceneObject {
  int category = 0;
  Box box;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Scene {
  double image_w = 256.0;
  double image_h = 256.0;
  std::vector<SceneObject> objects;
  int target = 0;
  Expression expression;

  [[nodiscard]] const Box& target_box() const { return objects.at(static_cast<std::size_t>(target)).box; }
  friend bool operator==(const Scene&, const Scene&) = default;
};

enum class Layout {
  Standard,  // objects placed uniformly
  FarInit,   // target pinned to an image corner
};

std::string_view to_string(Layout l);
std::optional<Layout> layout_from_string(std::string_view s);

struct Difficulty {
  int min_objects = 3;
  int max_objects = 12;
  int min_size = 12;  // pixels, per side
  int max_size = 48;
  int num_categories = kMaxCategories;
  double image_w = 256.0;
  double image_h = 256.0;
  Layout layout = Layout::Standard;
  int retry_budget = 2000;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  static Difficulty single_object();
  /// Few objects, target in a corner: the untrained policy's centered prior
  /// gives zero IoU on nearly every rollout.
  static Difficulty far_init();
};

/// Indices of objects matching `e`.
std::vector<int> resolve_expression(const Scene& scene, const Expression& e);

/// Deterministic in (seed, difficulty). Throws DataError naming the seed when
/// no uniquely resolvable scene is found within the retry budget.
Scene generate_scene(std::uint64_t seed, const Difficulty& d);

/// Scenes for seeds seed, seed+1, ..., seed+n-1.
std::vector<Scene> generate_scenes(std::uint64_t seed, std::size_t n, const Difficulty& d);

jsonl::json scene_to_json(const Scene& s);
/// Throws DataError on schema violations.
Scene scene_from_json(const jsonl::json& j);

/// One JSON object per line, stable key order, no header.
std::string to_jsonl(const std::vector<Scene>& scenes);
void write_dataset(const std::filesystem::path& path, const std::vector<Scene>& scenes);
/// Throws DataError with the line number on malformed input.
std::vector<Scene> load_dataset(const std::filesystem::path& path);

}  // namespace vgrft::scenes
