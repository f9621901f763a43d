#include "crt/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <vector>

#include "crt/errors.hpp"

namespace crt {

std::string_view corner_phrase(Corner corner) {
  switch (corner) {
    case Corner::kTopLeft:
      return "top left";
    case Corner::kTopRight:
      return "top right";
    case Corner::kBottomLeft:
      return "bottom left";
    case Corner::kBottomRight:
      return "bottom right";
  }
  return "";
}

std::string instruction_sentence(std::string_view color, std::string_view shape, Corner corner) {
  std::string s = "move the ";
  s.append(color).append(" ").append(shape).append(" to the ");
  s.append(corner_phrase(corner)).append(" box");
  return s;
}

std::string paraphrase_sentence(std::string_view color, std::string_view shape, Corner corner) {
  std::string s = "put the ";
  s.append(color).append(" ").append(shape).append(" in the ");
  s.append(corner_phrase(corner)).append(" box");
  return s;
}

namespace {

constexpr std::size_t kColorOffset = 0;
constexpr std::size_t kShapeOffset = kSynthColors.size();
constexpr std::size_t kCenterOffset = kShapeOffset + kSynthShapes.size();
constexpr std::size_t kMinVisualDim = kCenterOffset + 2;

struct Cell {
  std::size_t row;
  std::size_t col;
};

}  // namespace

SceneSet synth_generate(const SynthOptions& o) {
  if (o.count == 0) throw ConfigError("synthetic scene count must be ≥ 1");
  if (o.visual_dim < kMinVisualDim) {
    throw ConfigError("synthetic features need d_v ≥ " + std::to_string(kMinVisualDim));
  }
  if (o.grid_rows < 2 || o.grid_cols < 2) throw ConfigError("grid must be at least 2x2");
  const std::size_t inner_cells = o.grid_rows * o.grid_cols - 4;
  if (o.min_objects < 1 || o.max_objects < o.min_objects || o.max_objects > inner_cells ||
      o.max_objects > kSynthColors.size() * kSynthShapes.size()) {
    throw ConfigError("object count range does not fit the grid");
  }
  const double cell_w = o.width / static_cast<double>(o.grid_cols);
  const double cell_h = o.height / static_cast<double>(o.grid_rows);

  std::vector<Cell> free_cells;
  for (std::size_t r = 0; r < o.grid_rows; ++r) {
    for (std::size_t c = 0; c < o.grid_cols; ++c) {
      const bool corner = (r == 0 || r == o.grid_rows - 1) && (c == 0 || c == o.grid_cols - 1);
      if (!corner) free_cells.push_back({r, c});
    }
  }

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> noise(0.0, o.noise_sigma);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Objects carry color, shape and center; the destination bin carries noise
  // only, so its corner is visible solely through its box.
  auto object_feature = [&](int color, int shape, const BBox& box) {
    std::vector<double> v(o.visual_dim, 0.0);
    v[kColorOffset + static_cast<std::size_t>(color)] = 1.0;
    v[kShapeOffset + static_cast<std::size_t>(shape)] = 1.0;
    v[kCenterOffset] = 0.5 * (box.xmin + box.xmax) / o.width;
    v[kCenterOffset + 1] = 0.5 * (box.ymin + box.ymax) / o.height;
    for (double& x : v) x += noise(rng);
    return v;
  };
  auto bin_feature = [&] {
    std::vector<double> v(o.visual_dim, 0.0);
    for (double& x : v) x += noise(rng);
    return v;
  };

  SceneSet set;
  set.visual_dim = o.visual_dim;
  set.scenes.reserve(o.count);
  for (std::size_t i = 0; i < o.count; ++i) {
    Scene s;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%06zu", i);
    s.id = id;
    s.width = o.width;
    s.height = o.height;

    const std::size_t n_objects =
        o.min_objects + static_cast<std::size_t>(rng() % (o.max_objects - o.min_objects + 1));
    std::vector<int> pairs(kSynthColors.size() * kSynthShapes.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) pairs[k] = static_cast<int>(k);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    std::vector<Cell> cells = free_cells;
    std::shuffle(cells.begin(), cells.end(), rng);

    std::vector<RegionFeature> objects;
    std::vector<std::pair<int, int>> attrs;
    for (std::size_t k = 0; k < n_objects; ++k) {
      const int color = pairs[k] / static_cast<int>(kSynthShapes.size());
      const int shape = pairs[k] % static_cast<int>(kSynthShapes.size());
      const double fw = 0.4 + 0.5 * unit(rng);
      const double fh = 0.4 + 0.5 * unit(rng);
      const double x0 = static_cast<double>(cells[k].col) * cell_w;
      const double y0 = static_cast<double>(cells[k].row) * cell_h;
      const double ox = (1.0 - fw) * cell_w * unit(rng);
      const double oy = (1.0 - fh) * cell_h * unit(rng);
      BBox box{x0 + ox, y0 + oy, x0 + ox + fw * cell_w, y0 + oy + fh * cell_h};
      RegionFeature r{Role::kContext, box, object_feature(color, shape, box)};
      objects.push_back(std::move(r));
      attrs.emplace_back(color, shape);
    }
    const std::size_t target = static_cast<std::size_t>(rng() % n_objects);
    const auto corner = static_cast<Corner>(rng() % 4);
    const std::size_t crow = (corner == Corner::kTopLeft || corner == Corner::kTopRight) ? 0 : o.grid_rows - 1;
    const std::size_t ccol = (corner == Corner::kTopLeft || corner == Corner::kBottomLeft) ? 0 : o.grid_cols - 1;
    BBox dest_box{static_cast<double>(ccol) * cell_w, static_cast<double>(crow) * cell_h,
                  static_cast<double>(ccol + 1) * cell_w, static_cast<double>(crow + 1) * cell_h};

    s.target = objects[target];
    s.target.role = Role::kTarget;
    s.destination = RegionFeature{Role::kDestination, dest_box, bin_feature()};
    for (std::size_t k = 0; k < n_objects; ++k)
      if (k != target) s.context.push_back(objects[k]);

    const auto color = kSynthColors[static_cast<std::size_t>(attrs[target].first)];
    const auto shape = kSynthShapes[static_cast<std::size_t>(attrs[target].second)];
    s.sentences.push_back(instruction_sentence(color, shape, corner));
    if (unit(rng) < o.paraphrase_rate) s.sentences.push_back(paraphrase_sentence(color, shape, corner));
    set.scenes.push_back(std::move(s));
  }
  return set;
}

}  // namespace crt
