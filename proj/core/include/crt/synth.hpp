#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "crt/dataset.hpp"

namespace crt {

inline constexpr std::array<std::string_view, 8> kSynthColors = {
    "red", "green", "blue", "yellow", "white", "black", "orange", "purple"};
inline constexpr std::array<std::string_view, 6> kSynthShapes = {
    "circle", "square", "triangle", "star", "heart", "cross"};

enum class Corner { kTopLeft, kTopRight, kBottomLeft, kBottomRight };

std::string_view corner_phrase(Corner corner);

// "move the <color> <shape> to the <corner> box"
std::string instruction_sentence(std::string_view color, std::string_view shape, Corner corner);
// "put the <color> <shape> in the <corner> box"
std::string paraphrase_sentence(std::string_view color, std::string_view shape, Corner corner);

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t count = 1;
  std::size_t visual_dim = kDefaultVisualDim;
  std::size_t grid_rows = 4;
  std::size_t grid_cols = 4;
  double width = 640.0;
  double height = 480.0;
  std::size_t min_objects = 2;
  std::size_t max_objects = 6;
  double noise_sigma = 0.05;
  double paraphrase_rate = 0.1;
};

// Tabletop scenes on a grid: objects occupy distinct non-corner cells, the
// destination is a whole corner cell. Object features are one-hot color,
// one-hot shape and normalized center, zero padded to d_v; the destination
// feature is empty. Gaussian noise is added everywhere. Identical options
// give identical scenes.
SceneSet synth_generate(const SynthOptions& options);

}  // namespace crt
