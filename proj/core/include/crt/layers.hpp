#pragma once

#include <cstddef>
#include <string>

#include "crt/geometry.hpp"
#include "crt/tensor.hpp"

namespace crt {

// Which input roles reach the encoder.
struct AblationFlags {
  bool use_target = true;
  bool use_destination = true;
  bool use_context = true;

  bool any() const { return use_target || use_destination || use_context; }
  bool operator==(const AblationFlags&) const = default;

  // Input-type ablation conditions (a)–(g):
  //   a: context  b: destination  c: target  d: context+destination
  //   e: context+target  f: destination+target  g: all three
  static AblationFlags from_condition(char letter);
  char condition() const;
};

struct ModelConfig {
  std::size_t visual_dim = 2048;
  std::size_t d_model = 512;
  std::size_t layers = 6;
  std::size_t heads = 8;
  std::size_t d_ff = 2048;
  std::size_t geometry_dim = kDefaultGeometryDim;
  std::size_t max_len = 30;
  AblationFlags ablation;

  std::size_t head_dim() const { return d_model / heads; }
  // Throws ConfigError on non-positive sizes or heads not dividing d_model.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LinearParams {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
};

struct NormParams {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;
};

// Full-width projections; head i uses the i-th block of d_k columns of
// w_q/w_k/w_v. w_m mixes the concatenated heads.
struct AttentionParams {
  Parameter* w_q = nullptr;
  Parameter* w_k = nullptr;
  Parameter* w_v = nullptr;
  Parameter* w_m = nullptr;
};

struct FeedForwardParams {
  LinearParams in;
  LinearParams out;
};

struct CrbParams {
  LinearParams target;
  LinearParams destination;
  LinearParams context;
};

struct EncoderLayerParams {
  AttentionParams attention;
  Parameter* w_g = nullptr;  // d_g × heads, column h is head h's W_G
  FeedForwardParams ffn;
  NormParams norm1;
  NormParams norm2;
};

struct DecoderLayerParams {
  AttentionParams self_attention;
  AttentionParams cross_attention;
  FeedForwardParams ffn;
  NormParams norm1;
  NormParams norm2;
  NormParams norm3;
};

inline Var param(Tape& tape, Parameter* p) { return tape.parameter(*p); }

Var apply_linear(Tape& tape, Var x, const LinearParams& p);
Var apply_norm(Tape& tape, Var x, const NormParams& p);
// affine → ReLU → affine
Var feed_forward(Tape& tape, Var x, const FeedForwardParams& p);

}  // namespace crt
