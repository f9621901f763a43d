#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "crt/tensor.hpp"

namespace crt {

// Axis-aligned region in pixel (or normalized) coordinates.
struct BBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  bool operator==(const BBox&) const = default;
};

// Throws ValidationError naming the offending coordinate. Width/height ≤ 0
// skips the image-bounds check.
void validate_box(const BBox& box, double image_width = 0.0, double image_height = 0.0);

// [xmin/W, ymin/H, xmax/W, ymax/H]
using GeometryFeature = std::array<double, 4>;

// Λ(m,n) = [log(δw/w_m), log(δh/h_m), log(w_n/w_m), log(h_n/h_m)]
using Displacement = std::array<double, 4>;

inline constexpr double kDisplacementEpsilon = 1e-3;
inline constexpr std::size_t kDefaultGeometryDim = 64;
inline constexpr double kGeometryWavelength = 1000.0;

GeometryFeature geometry_feature(const BBox& box, double image_width, double image_height);

// δw and δh are clamped below by kDisplacementEpsilon before the logarithm.
Displacement displacement(const BBox& m, const BBox& n);

// Sinusoidal encoding of the four displacement components: d_g/8
// frequencies per component, sines in the first half and cosines in the
// second. d_g must be a positive multiple of 8.
std::vector<double> embed_displacement(const Displacement& d, std::size_t geometry_dim);

// (N·N)×d_g matrix; row m·N+n embeds Λ(m,n).
Tensor displacement_embeddings(std::span<const BBox> boxes, std::size_t geometry_dim);

// ReLU(embeddings · W_G) for every head at once: W_G is d_g×H and the result
// is (N·N)×H. Column h reshaped to N×N is head h's ω_G.
Var geometric_weights_all_heads(Var embeddings, Var w_g);

// ω_G for one head with a d_g×1 weight, as an N×N matrix.
Var geometric_weights(std::span<const BBox> boxes, Var w_g_head,
                      std::size_t geometry_dim = kDefaultGeometryDim);

}  // namespace crt
