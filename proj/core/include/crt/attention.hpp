#pragma once

#include <cstddef>
#include <vector>

#include "crt/layers.hpp"

namespace crt {

// One box-attention head. Scores ω_A = q·kᵀ/√d_k are combined with the
// nonnegative geometric weights ω_G by a geometry-weighted softmax; the
// result multiplies v. Rows of ω_G that are entirely zero use softmax(ω_A).
// weights_out, when given, receives the combined attention matrix.
Var box_attention_head(Var q, Var k, Var v, Var omega_g, Tensor* weights_out = nullptr);

// Plain scaled dot-product head; causal restricts row i to keys ≤ i.
Var dot_attention_head(Var q, Var k, Var v, bool causal, Tensor* weights_out = nullptr);

enum class AttentionKind { kPlain, kCausal, kGeometric };

// Multi-head attention. Queries come from query_src, keys and values from
// kv_src. For kGeometric, geometry holds (N·N)×heads ω_G columns. The head
// outputs are concatenated and multiplied by W^M.
// weights_out, when given, receives one attention matrix per head.
Var multi_head_attention(Tape& tape, Var query_src, Var kv_src, const AttentionParams& p,
                         std::size_t heads, AttentionKind kind, Var geometry = Var(),
                         std::vector<Tensor>* weights_out = nullptr);

}  // namespace crt
