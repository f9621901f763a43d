#include "crt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "crt/errors.hpp"
#include "crt/model.hpp"
#include "crt/synth.hpp"
#include "crt/trainer.hpp"

namespace crt {

bool GradcheckReport::passed() const {
  return !groups.empty() &&
         std::all_of(groups.begin(), groups.end(), [](const GroupCheck& g) { return g.passed; });
}

double GradcheckReport::max_relative_error() const {
  double worst = 0.0;
  for (const auto& g : groups) worst = std::max(worst, g.max_relative_error);
  return worst;
}

namespace {

constexpr std::size_t kRegions = 4;
constexpr std::size_t kTokens = 5;

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  SynthOptions synth;
  synth.seed = options.seed;
  synth.count = 2;
  synth.visual_dim = 16;
  synth.min_objects = kRegions - 1;
  synth.max_objects = kRegions - 1;
  const SceneSet data = synth_generate(synth);

  ModelConfig config;
  config.visual_dim = synth.visual_dim;
  config.d_model = 16;
  config.layers = 1;
  config.heads = 2;
  config.d_ff = 32;
  config.geometry_dim = kDefaultGeometryDim;
  config.max_len = kTokens;

  std::vector<std::string> sentences;
  for (const auto& s : data.scenes)
    sentences.insert(sentences.end(), s.sentences.begin(), s.sentences.end());
  CrtModel model(config, build_vocab(sentences), options.seed);

  std::vector<TrainingSample> samples;
  for (const auto& s : data.scenes) {
    if (s.context.size() + 2 != kRegions) throw ContractError("gradcheck scene has wrong size");
    samples.push_back({&s, reference_tokens(model.vocab(), s.sentences.front(), kTokens)});
  }

  auto build_loss = [&](Tape& tape) {
    std::vector<Var> probs;
    std::vector<TokenSequence> targets;
    for (const auto& s : samples) {
      const std::span<const TokenId> ref(s.reference);
      probs.push_back(model.distributions(tape, *s.scene, ref.first(ref.size() - 1)));
      targets.emplace_back(s.reference.begin() + 1, s.reference.end());
    }
    return batch_loss(probs, targets);
  };
  auto loss_value = [&] {
    Tape tape(false);
    return build_loss(tape).value().item();
  };

  model.parameters().zero_grad();
  {
    Tape tape;
    tape.backward(build_loss(tape));
  }

  GradcheckReport report;
  for (auto& p : model.parameters()) {
    GroupCheck group;
    group.name = p->name;
    group.elements = p->value.size();
    auto values = p->value.data();
    auto grads = p->grad.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + options.step;
      const double plus = loss_value();
      values[i] = original - options.step;
      const double minus = loss_value();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double analytic = grads[i];
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), options.magnitude_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      group.max_relative_error = std::max(group.max_relative_error, rel);
    }
    group.passed = group.max_relative_error < options.tolerance;
    report.groups.push_back(group);
  }
  return report;
}

}  // namespace crt
