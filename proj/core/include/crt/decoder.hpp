#pragma once

#include <span>
#include <vector>

#include "crt/layers.hpp"
#include "crt/vocab.hpp"

namespace crt {

// Standard sinusoidal position encoding (base 10000), length × width.
Tensor position_encoding(std::size_t length, std::size_t width);

// Embedding lookup scaled by √d_model plus the position encoding. Throws
// VocabularyError on ids outside the table.
Var embed_tokens(Tape& tape, std::span<const TokenId> tokens, Var embedding);

Var masked_self_attention(Tape& tape, Var y_emb, const AttentionParams& p, std::size_t heads,
                          std::vector<Tensor>* weights_out = nullptr);

// Queries from h_emb, keys and values from the encoder memory. No
// geometric term.
Var cross_attention(Tape& tape, Var h_emb, Var memory, const AttentionParams& p,
                    std::size_t heads, std::vector<Tensor>* weights_out = nullptr);

// LN(y + self(y)) → LN(· + cross(·, memory)) → LN(· + FFN(·))
Var decoder_layer(Tape& tape, Var y, Var memory, const DecoderLayerParams& p, std::size_t heads);

// Embeds the tokens and runs the full stack: L × d_model.
Var decode(Tape& tape, std::span<const TokenId> tokens, Var memory, Var embedding,
           std::span<const DecoderLayerParams> layers, std::size_t heads);

// softmax(FC(h_g)) row by row over the vocabulary.
Var generate_distribution(Tape& tape, Var h_g, const LinearParams& generator);

}  // namespace crt
