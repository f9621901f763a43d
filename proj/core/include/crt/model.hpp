#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crt/crb.hpp"
#include "crt/dataset.hpp"
#include "crt/layers.hpp"
#include "crt/vocab.hpp"

namespace crt {

// Case-relation encoder–decoder: role-specific input projections, a box
// attention encoder, a causal decoder and a vocabulary generator.
class CrtModel {
 public:
  // Weights uniform(±1/√fan_in), biases zero, embeddings normal(0, 0.02),
  // norm gains one. Deterministic in the seed.
  CrtModel(ModelConfig config, Vocabulary vocab, std::uint64_t seed);
  // Parameters zero-filled; callers overwrite them (checkpoint loading).
  CrtModel(ModelConfig config, Vocabulary vocab);

  CrtModel(CrtModel&&) = default;
  CrtModel& operator=(CrtModel&&) = default;

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }

  const CrbParams& crb_params() const { return crb_; }
  std::span<const EncoderLayerParams> encoder_params() const { return encoder_; }
  std::span<const DecoderLayerParams> decoder_params() const { return decoder_; }
  Parameter& embedding() const { return *embedding_; }
  const LinearParams& generator_params() const { return generator_; }

  // Encoder memory (N_total × d_model) for a scene under the model's ablation.
  Var encode_scene(Tape& tape, const Scene& scene) const;
  // Decoder states for a token prefix against an encoder memory.
  Var decode_tokens(Tape& tape, std::span<const TokenId> tokens, Var memory) const;
  // Probability rows for every prefix position of `tokens` (teacher forcing).
  Var distributions(Tape& tape, const Scene& scene, std::span<const TokenId> tokens) const;

  // Σ_j −log p(reference_j | reference_<j) for one reference sequence
  // ([<bos>, ..., <eos>]).
  Var sequence_nll(Tape& tape, const Scene& scene, std::span<const TokenId> reference,
                   std::size_t* clamped = nullptr) const;

  // Sequential argmax from <bos> until <eos> or max_len tokens (including
  // <bos>).
  TokenSequence greedy_decode(const Scene& scene) const;
  TokenSequence greedy_decode(const Scene& scene, std::size_t max_len) const;

  // Copy of every parameter value in store order.
  std::vector<Tensor> snapshot() const;
  void restore(std::span<const Tensor> values);

 private:
  void build_parameters();
  void initialize(std::uint64_t seed);

  ModelConfig config_;
  Vocabulary vocab_;
  ParameterStore params_;
  CrbParams crb_;
  std::vector<EncoderLayerParams> encoder_;
  Parameter* embedding_ = nullptr;
  std::vector<DecoderLayerParams> decoder_;
  LinearParams generator_;
};

// Reference sequence truncated to at most max_len tokens.
TokenSequence reference_tokens(const Vocabulary& vocab, std::string_view sentence,
                               std::size_t max_len);

}  // namespace crt
