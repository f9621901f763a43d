#pragma once

#include <vector>

#include "crt/dataset.hpp"
#include "crt/layers.hpp"

namespace crt {

// Encoder slots in role order: target, destination, context. Roles removed
// by the ablation are absent.
struct CrbInput {
  std::vector<RegionFeature> regions;
  double image_width = 0.0;
  double image_height = 0.0;
  AblationFlags ablation;
};

struct CrbOutput {
  Var h_v;                       // N_total × d_model
  Tensor h_g;                    // N_total × 4 geometry features
  std::vector<Role> slot_roles;  // aligned with rows

  std::size_t slots() const { return slot_roles.size(); }
  // Rows of h_g as normalized boxes.
  std::vector<BBox> boxes() const;
};

// Throws ConfigError when every flag is off or no slot survives.
CrbInput build_crb_input(const Scene& scene, const AblationFlags& ablation);

// Role-specific affine projection of each visual feature into d_model.
CrbOutput project(Tape& tape, const CrbInput& input, const CrbParams& params);

}  // namespace crt
