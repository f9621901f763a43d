#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crt/geometry.hpp"

namespace crt {

enum class Role { kTarget, kDestination, kContext };

const char* role_name(Role role);

struct RegionFeature {
  Role role = Role::kContext;
  BBox bbox;
  std::vector<double> visual;
};

inline constexpr std::size_t kMaxContextRegions = 30;
inline constexpr std::size_t kDefaultVisualDim = 2048;

// One fetching-instruction sample group: a target, a destination, up to 30
// context regions and one or more reference sentences.
struct Scene {
  std::string id;
  double width = 0.0;
  double height = 0.0;
  RegionFeature target;
  RegionFeature destination;
  std::vector<RegionFeature> context;
  std::vector<std::string> sentences;
};

struct SceneSet {
  std::size_t visual_dim = kDefaultVisualDim;
  std::vector<Scene> scenes;
};

// Throws ValidationError prefixed with the scene id.
void validate_scene(const Scene& scene, std::size_t visual_dim);

// Scene file: {"d_v": int, "scenes": [...]}. Region features are base64 of
// little-endian float64 or {"ref": sidecar, "offset": byte offset}; sidecar
// paths resolve against the scene file's directory.
SceneSet load_scenes(const std::filesystem::path& path);
SceneSet parse_scenes(std::string_view json_text,
                      const std::filesystem::path& base_dir = std::filesystem::path());
// Inline base64 features; deterministic bytes for identical input.
std::string serialize_scenes(const SceneSet& set);
void save_scenes(const SceneSet& set, const std::filesystem::path& path);

std::string encode_features(std::span<const double> values);
std::vector<double> decode_features(std::string_view base64, std::size_t expected_count);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<Scene> train;
  std::vector<Scene> validation;
  std::vector<Scene> test;
};

// Seeded shuffle then partition. Counts are round(ratio·n) for the first two
// splits and the remainder for test; any empty split is an error.
DatasetSplit split(std::span<const Scene> scenes, const SplitRatios& ratios, std::uint64_t seed);

// Counts used by the PFN-PIC experiments, for reference output only.
inline constexpr std::array<std::size_t, 3> kReferenceSplitSizes = {81087, 8774, 898};

}  // namespace crt
