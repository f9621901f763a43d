#pragma once

#include <span>
#include <vector>

#include "crt/crb.hpp"
#include "crt/layers.hpp"

namespace crt {

// Box multi-head attention over regions with the given (normalized) boxes.
Var box_multi_head(Tape& tape, Var h_in, std::span<const BBox> boxes,
                   const EncoderLayerParams& p, std::size_t heads, std::size_t geometry_dim,
                   std::vector<Tensor>* weights_out = nullptr);

// h_mid = LN(h_in + MHA(h_in)); h_out = LN(h_mid + FFN(h_mid)).
// geometry_embeddings is the (N·N)×d_g displacement embedding of the boxes.
Var encoder_layer(Tape& tape, Var h_in, Var geometry_embeddings, const EncoderLayerParams& p,
                  std::size_t heads);
Var encoder_layer(Tape& tape, Var h_in, std::span<const BBox> boxes,
                  const EncoderLayerParams& p, std::size_t heads, std::size_t geometry_dim);

// Full stack; ω_G is recomputed per layer from the same boxes.
Var encode(Tape& tape, const CrbOutput& crb, std::span<const EncoderLayerParams> layers,
           std::size_t heads, std::size_t geometry_dim);

}  // namespace crt
