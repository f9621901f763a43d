#include "crt/encoder.hpp"

#include "crt/attention.hpp"

namespace crt {

namespace {

Var box_multi_head_from_embeddings(Tape& tape, Var h_in, Var embeddings,
                                   const EncoderLayerParams& p, std::size_t heads,
                                   std::vector<Tensor>* weights_out) {
  Var omega_g = geometric_weights_all_heads(embeddings, param(tape, p.w_g));
  return multi_head_attention(tape, h_in, h_in, p.attention, heads, AttentionKind::kGeometric,
                              omega_g, weights_out);
}

}  // namespace

Var box_multi_head(Tape& tape, Var h_in, std::span<const BBox> boxes,
                   const EncoderLayerParams& p, std::size_t heads, std::size_t geometry_dim,
                   std::vector<Tensor>* weights_out) {
  Var e = tape.constant(displacement_embeddings(boxes, geometry_dim));
  return box_multi_head_from_embeddings(tape, h_in, e, p, heads, weights_out);
}

Var encoder_layer(Tape& tape, Var h_in, Var geometry_embeddings, const EncoderLayerParams& p,
                  std::size_t heads) {
  Var attended = box_multi_head_from_embeddings(tape, h_in, geometry_embeddings, p, heads, nullptr);
  Var mid = apply_norm(tape, add(h_in, attended), p.norm1);
  return apply_norm(tape, add(mid, feed_forward(tape, mid, p.ffn)), p.norm2);
}

Var encoder_layer(Tape& tape, Var h_in, std::span<const BBox> boxes,
                  const EncoderLayerParams& p, std::size_t heads, std::size_t geometry_dim) {
  Var e = tape.constant(displacement_embeddings(boxes, geometry_dim));
  return encoder_layer(tape, h_in, e, p, heads);
}

Var encode(Tape& tape, const CrbOutput& crb, std::span<const EncoderLayerParams> layers,
           std::size_t heads, std::size_t geometry_dim) {
  const auto boxes = crb.boxes();
  Var e = tape.constant(displacement_embeddings(boxes, geometry_dim));
  Var h = crb.h_v;
  for (const auto& layer : layers) h = encoder_layer(tape, h, e, layer, heads);
  return h;
}

}  // namespace crt
