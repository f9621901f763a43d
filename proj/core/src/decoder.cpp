#include "crt/decoder.hpp"

#include <cmath>

#include "crt/attention.hpp"
#include "crt/errors.hpp"

namespace crt {

Tensor position_encoding(std::size_t length, std::size_t width) {
  Tensor pe({length, width});
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < width; i += 2) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(i) / static_cast<double>(width));
      pe(pos, i) = std::sin(angle);
      if (i + 1 < width) pe(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Var embed_tokens(Tape& tape, std::span<const TokenId> tokens, Var embedding) {
  const std::size_t vocab = embedding.value().rows();
  const std::size_t width = embedding.value().cols();
  if (tokens.empty()) throw VocabularyError("cannot embed an empty token sequence");
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw VocabularyError("token id " + std::to_string(t) + " outside vocabulary of size " +
                            std::to_string(vocab));
    }
  }
  Var looked_up = scale(gather_rows(embedding, tokens), std::sqrt(static_cast<double>(width)));
  return add(looked_up, tape.constant(position_encoding(tokens.size(), width)));
}

Var masked_self_attention(Tape& tape, Var y_emb, const AttentionParams& p, std::size_t heads,
                          std::vector<Tensor>* weights_out) {
  return multi_head_attention(tape, y_emb, y_emb, p, heads, AttentionKind::kCausal, Var(),
                              weights_out);
}

Var cross_attention(Tape& tape, Var h_emb, Var memory, const AttentionParams& p,
                    std::size_t heads, std::vector<Tensor>* weights_out) {
  return multi_head_attention(tape, h_emb, memory, p, heads, AttentionKind::kPlain, Var(),
                              weights_out);
}

Var decoder_layer(Tape& tape, Var y, Var memory, const DecoderLayerParams& p, std::size_t heads) {
  Var a = apply_norm(tape, add(y, masked_self_attention(tape, y, p.self_attention, heads)), p.norm1);
  Var b = apply_norm(tape, add(a, cross_attention(tape, a, memory, p.cross_attention, heads)), p.norm2);
  return apply_norm(tape, add(b, feed_forward(tape, b, p.ffn)), p.norm3);
}

Var decode(Tape& tape, std::span<const TokenId> tokens, Var memory, Var embedding,
           std::span<const DecoderLayerParams> layers, std::size_t heads) {
  Var h = embed_tokens(tape, tokens, embedding);
  for (const auto& layer : layers) h = decoder_layer(tape, h, memory, layer, heads);
  return h;
}

Var generate_distribution(Tape& tape, Var h_g, const LinearParams& generator) {
  return softmax_rows(apply_linear(tape, h_g, generator));
}

}  // namespace crt
