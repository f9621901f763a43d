#include "crt/geometry.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "crt/errors.hpp"

namespace crt {

namespace {

std::string describe(const BBox& b) {
  std::ostringstream out;
  out << '(' << b.xmin << ',' << b.ymin << ',' << b.xmax << ',' << b.ymax << ')';
  return out.str();
}

}  // namespace

void validate_box(const BBox& box, double image_width, double image_height) {
  for (double v : {box.xmin, box.ymin, box.xmax, box.ymax}) {
    if (!std::isfinite(v)) throw ValidationError("box " + describe(box) + " has a non-finite coordinate");
  }
  if (!(box.xmin < box.xmax)) throw ValidationError("box " + describe(box) + ": xmin must be < xmax");
  if (!(box.ymin < box.ymax)) throw ValidationError("box " + describe(box) + ": ymin must be < ymax");
  if (image_width <= 0.0 || image_height <= 0.0) return;
  if (box.xmin < 0.0) throw ValidationError("box " + describe(box) + ": xmin below 0");
  if (box.ymin < 0.0) throw ValidationError("box " + describe(box) + ": ymin below 0");
  if (box.xmax > image_width) {
    throw ValidationError("box " + describe(box) + ": xmax exceeds image width " +
                          std::to_string(image_width));
  }
  if (box.ymax > image_height) {
    throw ValidationError("box " + describe(box) + ": ymax exceeds image height " +
                          std::to_string(image_height));
  }
}

GeometryFeature geometry_feature(const BBox& box, double image_width, double image_height) {
  if (!(image_width > 0.0) || !(image_height > 0.0)) {
    throw ValidationError("image size must be positive");
  }
  validate_box(box, image_width, image_height);
  return {box.xmin / image_width, box.ymin / image_height, box.xmax / image_width,
          box.ymax / image_height};
}

Displacement displacement(const BBox& m, const BBox& n) {
  validate_box(m);
  validate_box(n);
  const double dw = std::max(std::abs(m.xmin - n.xmin), kDisplacementEpsilon);
  const double dh = std::max(std::abs(m.ymin - n.ymin), kDisplacementEpsilon);
  return {std::log(dw / m.width()), std::log(dh / m.height()), std::log(n.width() / m.width()),
          std::log(n.height() / m.height())};
}

std::vector<double> embed_displacement(const Displacement& d, std::size_t geometry_dim) {
  if (geometry_dim == 0 || geometry_dim % 8 != 0) {
    throw ConfigError("geometry embedding width must be a positive multiple of 8, got " +
                      std::to_string(geometry_dim));
  }
  const std::size_t freqs = geometry_dim / 8;
  const std::size_t half = geometry_dim / 2;
  std::vector<double> out(geometry_dim);
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t k = 0; k < freqs; ++k) {
      const double inv_wavelength =
          1.0 / std::pow(kGeometryWavelength, static_cast<double>(k) / static_cast<double>(freqs));
      const double angle = d[c] * inv_wavelength;
      out[c * freqs + k] = std::sin(angle);
      out[half + c * freqs + k] = std::cos(angle);
    }
  }
  return out;
}

Tensor displacement_embeddings(std::span<const BBox> boxes, std::size_t geometry_dim) {
  const std::size_t n = boxes.size();
  if (n == 0) throw DimensionError("displacement_embeddings: no boxes");
  Tensor out({n * n, geometry_dim});
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      auto e = embed_displacement(displacement(boxes[a], boxes[b]), geometry_dim);
      std::copy(e.begin(), e.end(), out.row(a * n + b).begin());
    }
  }
  return out;
}

Var geometric_weights_all_heads(Var embeddings, Var w_g) { return relu(matmul(embeddings, w_g)); }

Var geometric_weights(std::span<const BBox> boxes, Var w_g_head, std::size_t geometry_dim) {
  if (w_g_head.value().rows() != geometry_dim || w_g_head.value().cols() != 1) {
    throw DimensionError("geometric_weights: W_G must be " + std::to_string(geometry_dim) +
                         "x1, got " + shape_string(w_g_head.shape()));
  }
  Tape& tape = w_g_head.tape();
  Var e = tape.constant(displacement_embeddings(boxes, geometry_dim));
  const std::size_t n = boxes.size();
  return reshape(geometric_weights_all_heads(e, w_g_head), {n, n});
}

}  // namespace crt
