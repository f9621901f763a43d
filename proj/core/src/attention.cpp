#include "crt/attention.hpp"

#include <cmath>

#include "crt/errors.hpp"

namespace crt {

namespace {

Var scores(Var q, Var k) {
  const double d_k = static_cast<double>(q.value().cols());
  return scale(matmul_nt(q, k), 1.0 / std::sqrt(d_k));
}

}  // namespace

Var box_attention_head(Var q, Var k, Var v, Var omega_g, Tensor* weights_out) {
  Var w = geometric_softmax(scores(q, k), omega_g);
  if (weights_out) *weights_out = w.value();
  return matmul(w, v);
}

Var dot_attention_head(Var q, Var k, Var v, bool causal, Tensor* weights_out) {
  Var w = softmax_rows(scores(q, k), causal);
  if (weights_out) *weights_out = w.value();
  return matmul(w, v);
}

Var multi_head_attention(Tape& tape, Var query_src, Var kv_src, const AttentionParams& p,
                         std::size_t heads, AttentionKind kind, Var geometry,
                         std::vector<Tensor>* weights_out) {
  const std::size_t d_model = p.w_q->value.cols();
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("heads (" + std::to_string(heads) + ") must divide width " +
                      std::to_string(d_model));
  }
  const std::size_t d_k = d_model / heads;
  const std::size_t n_keys = kv_src.value().rows();
  if (kind == AttentionKind::kGeometric) {
    if (!geometry.valid() || geometry.value().rows() != n_keys * n_keys ||
        geometry.value().cols() != heads) {
      throw DimensionError("geometric attention needs (N·N)×heads weights");
    }
  }
  Var q = matmul(query_src, param(tape, p.w_q));
  Var k = matmul(kv_src, param(tape, p.w_k));
  Var v = matmul(kv_src, param(tape, p.w_v));
  if (weights_out) weights_out->assign(heads, Tensor());
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t b = h * d_k, e = b + d_k;
    Var qh = heads == 1 ? q : slice_cols(q, b, e);
    Var kh = heads == 1 ? k : slice_cols(k, b, e);
    Var vh = heads == 1 ? v : slice_cols(v, b, e);
    Tensor* w = weights_out ? &(*weights_out)[h] : nullptr;
    if (kind == AttentionKind::kGeometric) {
      Var g = reshape(heads == 1 ? geometry : slice_cols(geometry, h, h + 1), {n_keys, n_keys});
      outs.push_back(box_attention_head(qh, kh, vh, g, w));
    } else {
      outs.push_back(dot_attention_head(qh, kh, vh, kind == AttentionKind::kCausal, w));
    }
  }
  Var merged = heads == 1 ? outs[0] : concat_cols(outs);
  return matmul(merged, param(tape, p.w_m));
}

}  // namespace crt
