#include "crt/layers.hpp"

#include "crt/errors.hpp"

namespace crt {

AblationFlags AblationFlags::from_condition(char letter) {
  switch (letter) {
    case 'a':
      return {false, false, true};
    case 'b':
      return {false, true, false};
    case 'c':
      return {true, false, false};
    case 'd':
      return {false, true, true};
    case 'e':
      return {true, false, true};
    case 'f':
      return {true, true, false};
    case 'g':
      return {true, true, true};
    default:
      throw ConfigError(std::string("unknown ablation condition '") + letter +
                        "'; valid conditions are a, b, c, d, e, f, g");
  }
}

char AblationFlags::condition() const {
  for (char c = 'a'; c <= 'g'; ++c)
    if (from_condition(c) == *this) return c;
  throw ConfigError("ablation disables every input");
}

void ModelConfig::validate() const {
  if (visual_dim == 0 || d_model == 0 || layers == 0 || heads == 0 || d_ff == 0 ||
      max_len < 2) {
    throw ConfigError("model sizes must be positive and max_len ≥ 2");
  }
  if (d_model % heads != 0) {
    throw ConfigError("heads (" + std::to_string(heads) + ") must divide d_model (" +
                      std::to_string(d_model) + ")");
  }
  if (d_model < 2) throw ConfigError("d_model must be ≥ 2 for layer normalization");
  if (geometry_dim == 0 || geometry_dim % 8 != 0) {
    throw ConfigError("geometry_dim must be a positive multiple of 8");
  }
  if (!ablation.any()) throw ConfigError("ablation disables every input");
}

Var apply_linear(Tape& tape, Var x, const LinearParams& p) {
  return linear(x, param(tape, p.weight), param(tape, p.bias));
}

Var apply_norm(Tape& tape, Var x, const NormParams& p) {
  return layer_norm(x, param(tape, p.gain), param(tape, p.bias));
}

Var feed_forward(Tape& tape, Var x, const FeedForwardParams& p) {
  return apply_linear(tape, relu(apply_linear(tape, x, p.in)), p.out);
}

}  // namespace crt
