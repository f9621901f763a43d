#include "crt/crb.hpp"

#include "crt/errors.hpp"

namespace crt {

std::vector<BBox> CrbOutput::boxes() const {
  std::vector<BBox> out;
  out.reserve(h_g.rows());
  for (std::size_t i = 0; i < h_g.rows(); ++i) {
    out.push_back({h_g(i, 0), h_g(i, 1), h_g(i, 2), h_g(i, 3)});
  }
  return out;
}

CrbInput build_crb_input(const Scene& scene, const AblationFlags& ablation) {
  if (!ablation.any()) throw ConfigError("ablation disables every input");
  if (scene.context.size() > kMaxContextRegions) {
    throw ValidationError("scene '" + scene.id + "': too many context regions");
  }
  CrbInput in;
  in.image_width = scene.width;
  in.image_height = scene.height;
  in.ablation = ablation;
  if (ablation.use_target) in.regions.push_back(scene.target);
  if (ablation.use_destination) in.regions.push_back(scene.destination);
  if (ablation.use_context) in.regions.insert(in.regions.end(), scene.context.begin(), scene.context.end());
  if (in.regions.empty()) {
    throw ConfigError("scene '" + scene.id + "' has no regions left under ablation condition " +
                      std::string(1, ablation.condition()));
  }
  return in;
}

namespace {

const LinearParams& params_for(const CrbParams& p, Role role) {
  switch (role) {
    case Role::kTarget:
      return p.target;
    case Role::kDestination:
      return p.destination;
    case Role::kContext:
      break;
  }
  return p.context;
}

}  // namespace

CrbOutput project(Tape& tape, const CrbInput& input, const CrbParams& params) {
  if (input.regions.empty()) throw ConfigError("no regions to project");
  const std::size_t d_v = params.target.weight->value.rows();
  CrbOutput out;
  out.h_g = Tensor({input.regions.size(), 4});
  std::vector<Var> blocks;
  // Consecutive regions sharing a role are projected as one block.
  std::size_t i = 0;
  while (i < input.regions.size()) {
    const Role role = input.regions[i].role;
    std::size_t j = i;
    while (j < input.regions.size() && input.regions[j].role == role) ++j;
    Tensor x({j - i, d_v});
    for (std::size_t k = i; k < j; ++k) {
      const auto& r = input.regions[k];
      if (r.visual.size() != d_v) {
        throw ValidationError(std::string(role_name(role)) + " region has " +
                              std::to_string(r.visual.size()) + " visual values, expected " +
                              std::to_string(d_v));
      }
      std::copy(r.visual.begin(), r.visual.end(), x.row(k - i).begin());
      const auto g = geometry_feature(r.bbox, input.image_width, input.image_height);
      for (std::size_t c = 0; c < 4; ++c) out.h_g(k, c) = g[c];
      out.slot_roles.push_back(role);
    }
    blocks.push_back(apply_linear(tape, tape.constant(std::move(x)), params_for(params, role)));
    i = j;
  }
  out.h_v = blocks.size() == 1 ? blocks[0] : concat_rows(blocks);
  return out;
}

}  // namespace crt
