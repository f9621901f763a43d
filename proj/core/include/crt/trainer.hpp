#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crt/dataset.hpp"
#include "crt/model.hpp"

namespace crt {

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t batch_size = 15;
  std::size_t epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t validation_interval = 3000;  // in samples
  std::uint64_t seed = 0;
  ModelConfig model;
  // Stop once an epoch's mean training loss falls below this value.
  std::optional<double> stop_below_loss;

  void validate() const;
};

// Reads a JSON object whose keys mirror the TrainConfig fields, with the
// model sizes nested under "model". Missing keys keep their defaults;
// unknown keys are rejected.
TrainConfig train_config_from_json(std::string_view json_text);
std::string train_config_to_json(const TrainConfig& config);

// −(1/I)·Σ_i Σ_j log p_i[j][targets_i[j]]: token sum per sample, mean over
// the I samples. Targets equal to <pad> are skipped.
Var batch_loss(std::span<const Var> probabilities, std::span<const TokenSequence> targets,
               std::size_t* clamped = nullptr);

// Bias-corrected Adam over every parameter. Gradients are checked for NaN
// first; a NaN aborts the step before any parameter changes.
void adam_step(ParameterStore& params, const TrainConfig& config);

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelConfig config;
  Vocabulary vocab;
  std::vector<std::pair<std::string, Tensor>> tensors;  // parameter store order
  double best_score = 0.0;
  std::uint64_t best_step = 0;
};

Checkpoint make_checkpoint(const CrtModel& model, double best_score = 0.0,
                           std::uint64_t best_step = 0);
// Throws CompatibilityError when tensor names or shapes disagree with the
// configuration.
CrtModel model_from_checkpoint(const Checkpoint& ckpt);

// "CRTCKPT1", u64 header length, JSON header, then float64 payloads.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainingSample {
  const Scene* scene = nullptr;
  TokenSequence reference;
};

// One sample per (scene, sentence) pair, truncated to max_len tokens.
std::vector<TrainingSample> make_samples(std::span<const Scene> scenes, const Vocabulary& vocab,
                                         std::size_t max_len);

struct CurvePoint {
  std::uint64_t step = 0;  // training samples seen
  double train_loss = 0.0;  // mean batch loss since the previous point
  double val_cider = 0.0;
};

struct TrainHooks {
  std::function<void(const CurvePoint&)> on_validation;
  std::function<void(std::size_t epoch, double mean_loss)> on_epoch;
};

struct TrainResult {
  Checkpoint best;
  std::vector<CurvePoint> curve;
  std::vector<double> epoch_losses;
  bool diverged = false;
  std::string diagnostic;
};

// Greedy decodes of the validation scenes scored with CIDEr-D against all
// of each scene's sentences.
double validation_cider(const CrtModel& model, std::span<const Scene> scenes);

// Vocabulary from the training sentences, seeded shuffles, Adam updates,
// validation every validation_interval samples and after the last epoch.
// Returns the highest-scoring parameters. A non-finite loss or gradient
// stops training and returns the best state seen so far.
TrainResult train(const TrainConfig& config, std::span<const Scene> train_set,
                  std::span<const Scene> validation_set, const TrainHooks& hooks = {});

}  // namespace crt
