#include "crt/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "crt/decoder.hpp"
#include "crt/encoder.hpp"
#include "crt/errors.hpp"

namespace crt {

CrtModel::CrtModel(ModelConfig config, Vocabulary vocab)
    : config_(config), vocab_(std::move(vocab)) {
  config_.validate();
  if (vocab_.size() <= kSpecialCount) throw ConfigError("vocabulary has no words");
  build_parameters();
}

CrtModel::CrtModel(ModelConfig config, Vocabulary vocab, std::uint64_t seed)
    : CrtModel(config, std::move(vocab)) {
  initialize(seed);
}

void CrtModel::build_parameters() {
  const std::size_t d = config_.d_model;
  const std::size_t v = vocab_.size();
  auto linear_params = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    LinearParams p;
    p.weight = &params_.add(prefix + ".W", Tensor({in, out}));
    p.bias = &params_.add(prefix + ".b", Tensor({out}));
    return p;
  };
  auto norm_params = [&](const std::string& prefix) {
    NormParams p;
    p.gain = &params_.add(prefix + ".gain", Tensor({d}, 1.0));
    p.bias = &params_.add(prefix + ".bias", Tensor({d}));
    return p;
  };
  auto attention_params = [&](const std::string& prefix, const char* q, const char* k,
                              const char* vv) {
    AttentionParams p;
    p.w_q = &params_.add(prefix + "." + q, Tensor({d, d}));
    p.w_k = &params_.add(prefix + "." + k, Tensor({d, d}));
    p.w_v = &params_.add(prefix + "." + vv, Tensor({d, d}));
    p.w_m = &params_.add(prefix + ".W_M", Tensor({d, d}));
    return p;
  };
  auto ffn_params = [&](const std::string& prefix) {
    return FeedForwardParams{linear_params(prefix + ".in", d, config_.d_ff),
                             linear_params(prefix + ".out", config_.d_ff, d)};
  };

  crb_.target = linear_params("crb.target", config_.visual_dim, d);
  crb_.destination = linear_params("crb.destination", config_.visual_dim, d);
  crb_.context = linear_params("crb.context", config_.visual_dim, d);

  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string prefix = "encoder.layer" + std::to_string(l);
    EncoderLayerParams p;
    p.attention = attention_params(prefix + ".attn", "W_qe", "W_ke", "W_ve");
    p.w_g = &params_.add(prefix + ".attn.W_G", Tensor({config_.geometry_dim, config_.heads}));
    p.ffn = ffn_params(prefix + ".ffn");
    p.norm1 = norm_params(prefix + ".norm1");
    p.norm2 = norm_params(prefix + ".norm2");
    encoder_.push_back(p);
  }

  embedding_ = &params_.add("decoder.embedding", Tensor({v, d}));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string prefix = "decoder.layer" + std::to_string(l);
    DecoderLayerParams p;
    p.self_attention = attention_params(prefix + ".self", "W_q", "W_k", "W_v");
    p.cross_attention = attention_params(prefix + ".cross", "W_qd", "W_kd", "W_vd");
    p.ffn = ffn_params(prefix + ".ffn");
    p.norm1 = norm_params(prefix + ".norm1");
    p.norm2 = norm_params(prefix + ".norm2");
    p.norm3 = norm_params(prefix + ".norm3");
    decoder_.push_back(p);
  }

  generator_ = linear_params("generator", d, v);
}

void CrtModel::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> embed(0.0, 0.02);
  for (auto& p : params_) {
    const std::string& name = p->name;
    auto ends_with = [&](std::string_view suffix) {
      return name.size() >= suffix.size() &&
             name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (p.get() == embedding_) {
      for (double& x : p->value.data()) x = embed(rng);
    } else if (ends_with(".gain")) {
      p->value.fill(1.0);
    } else if (p->value.rank() == 1) {
      p->value.fill(0.0);
    } else if (ends_with(".W_G")) {
      // Displacement embeddings share a large positive cosine component, so a
      // sign-symmetric W_G leaves about half the heads with ω_G ≡ 0 and no
      // gradient. Nonnegative draws keep every head's geometry path live.
      const double bound = 1.0 / std::sqrt(static_cast<double>(p->value.rows()));
      std::uniform_real_distribution<double> uniform(0.0, bound);
      for (double& x : p->value.data()) x = uniform(rng);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(p->value.rows()));
      std::uniform_real_distribution<double> uniform(-bound, bound);
      for (double& x : p->value.data()) x = uniform(rng);
    }
  }
}

Var CrtModel::encode_scene(Tape& tape, const Scene& scene) const {
  CrbOutput crb = project(tape, build_crb_input(scene, config_.ablation), crb_);
  return encode(tape, crb, encoder_, config_.heads, config_.geometry_dim);
}

Var CrtModel::decode_tokens(Tape& tape, std::span<const TokenId> tokens, Var memory) const {
  return decode(tape, tokens, memory, tape.parameter(*embedding_), decoder_, config_.heads);
}

Var CrtModel::distributions(Tape& tape, const Scene& scene, std::span<const TokenId> tokens) const {
  Var memory = encode_scene(tape, scene);
  return generate_distribution(tape, decode_tokens(tape, tokens, memory), generator_);
}

Var CrtModel::sequence_nll(Tape& tape, const Scene& scene, std::span<const TokenId> reference,
                           std::size_t* clamped) const {
  if (reference.size() < 2) throw ContractError("reference needs <bos> and at least one token");
  auto inputs = reference.first(reference.size() - 1);
  std::vector<TokenId> targets(reference.begin() + 1, reference.end());
  for (auto& t : targets)
    if (t == kPadId) t = -1;
  Var probs = distributions(tape, scene, inputs);
  return negative_log_likelihood(probs, targets, clamped);
}

TokenSequence CrtModel::greedy_decode(const Scene& scene) const {
  return greedy_decode(scene, config_.max_len);
}

TokenSequence CrtModel::greedy_decode(const Scene& scene, std::size_t max_len) const {
  if (vocab_.size() <= kSpecialCount) throw ConfigError("empty vocabulary");
  Tape tape(false);
  Var memory = encode_scene(tape, scene);
  TokenSequence out{kBosId};
  while (out.size() < max_len) {
    Var states = decode_tokens(tape, out, memory);
    const std::array<TokenId, 1> last_row{static_cast<TokenId>(out.size() - 1)};
    Var last = gather_rows(states, last_row);
    Var probs = generate_distribution(tape, last, generator_);
    auto row = probs.value().row(0);
    const auto best = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    out.push_back(best);
    if (best == kEosId) break;
  }
  return out;
}

std::vector<Tensor> CrtModel::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void CrtModel::restore(std::span<const Tensor> values) {
  if (values.size() != params_.size()) throw ConfigError("snapshot does not match the model");
  std::size_t i = 0;
  for (auto& p : params_) {
    if (values[i].shape() != p->value.shape()) {
      throw DimensionError("snapshot shape " + shape_string(values[i].shape()) + " for " +
                           p->name + " expected " + shape_string(p->value.shape()));
    }
    p->value = values[i++];
  }
}

TokenSequence reference_tokens(const Vocabulary& vocab, std::string_view sentence,
                               std::size_t max_len) {
  TokenSequence ids = vocab.encode(sentence);
  if (ids.size() > max_len) {
    ids.resize(max_len);
    ids.back() = kEosId;
  }
  return ids;
}

}  // namespace crt
