#include "crt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "crt/errors.hpp"
#include "crt/metrics.hpp"

namespace crt {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (validation_interval == 0) throw ConfigError("validation interval must be positive");
  model.validate();
}

namespace {

template <typename T>
void read_key(nlohmann::json& obj, const char* key, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
  obj.erase(it);
}

void reject_leftovers(const nlohmann::json& obj, const std::string& where) {
  if (obj.empty()) return;
  std::string keys;
  for (const auto& [k, v] : obj.items()) keys += " " + k;
  throw ConfigError("unknown " + where + " keys:" + keys);
}

}  // namespace

TrainConfig train_config_from_json(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  read_key(doc, "learning_rate", c.learning_rate);
  read_key(doc, "batch_size", c.batch_size);
  read_key(doc, "epochs", c.epochs);
  read_key(doc, "beta1", c.beta1);
  read_key(doc, "beta2", c.beta2);
  read_key(doc, "epsilon", c.epsilon);
  read_key(doc, "validation_interval", c.validation_interval);
  read_key(doc, "seed", c.seed);
  if (auto it = doc.find("stop_below_loss"); it != doc.end()) {
    if (!it->is_null()) c.stop_below_loss = it->get<double>();
    doc.erase(it);
  }
  if (auto it = doc.find("model"); it != doc.end()) {
    nlohmann::json m = *it;
    if (!m.is_object()) throw ConfigError("config 'model' must be an object");
    read_key(m, "visual_dim", c.model.visual_dim);
    read_key(m, "d_model", c.model.d_model);
    read_key(m, "layers", c.model.layers);
    read_key(m, "heads", c.model.heads);
    read_key(m, "d_ff", c.model.d_ff);
    read_key(m, "geometry_dim", c.model.geometry_dim);
    read_key(m, "max_len", c.model.max_len);
    std::string condition;
    read_key(m, "ablation", condition);
    if (!condition.empty()) {
      if (condition.size() != 1) throw ConfigError("ablation must be a single letter");
      c.model.ablation = AblationFlags::from_condition(condition[0]);
    }
    reject_leftovers(m, "model");
    doc.erase(it);
  }
  reject_leftovers(doc, "config");
  c.validate();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::json doc{
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"epsilon", c.epsilon},
      {"validation_interval", c.validation_interval},
      {"seed", c.seed},
      {"stop_below_loss", c.stop_below_loss ? nlohmann::json(*c.stop_below_loss) : nlohmann::json(nullptr)},
      {"model",
       {{"visual_dim", c.model.visual_dim},
        {"d_model", c.model.d_model},
        {"layers", c.model.layers},
        {"heads", c.model.heads},
        {"d_ff", c.model.d_ff},
        {"geometry_dim", c.model.geometry_dim},
        {"max_len", c.model.max_len},
        {"ablation", std::string(1, c.model.ablation.condition())}}}};
  return doc.dump(2);
}

Var batch_loss(std::span<const Var> probabilities, std::span<const TokenSequence> targets,
               std::size_t* clamped) {
  if (probabilities.empty()) throw ContractError("loss over an empty batch");
  if (probabilities.size() != targets.size()) {
    throw DimensionError("batch has " + std::to_string(probabilities.size()) +
                         " probability blocks but " + std::to_string(targets.size()) +
                         " target sequences");
  }
  if (clamped) *clamped = 0;
  Var total;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i].value().rows() != targets[i].size()) {
      throw DimensionError("sample " + std::to_string(i) + " has " +
                           std::to_string(probabilities[i].value().rows()) +
                           " probability rows for " + std::to_string(targets[i].size()) +
                           " targets");
    }
    std::vector<std::int32_t> t(targets[i].begin(), targets[i].end());
    for (auto& x : t)
      if (x == kPadId) x = -1;
    std::size_t c = 0;
    Var nll = negative_log_likelihood(probabilities[i], t, &c);
    if (clamped) *clamped += c;
    total = total.valid() ? add(total, nll) : nll;
  }
  return scale(total, 1.0 / static_cast<double>(probabilities.size()));
}

void adam_step(ParameterStore& params, const TrainConfig& config) {
  for (const auto& p : params) {
    for (double g : p->grad.data()) {
      if (std::isnan(g)) throw NumericError("NaN gradient in parameter " + p->name);
    }
  }
  for (auto& p : params) {
    ++p->step;
    const double t = static_cast<double>(p->step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    auto w = p->value.data();
    auto g = p->grad.data();
    auto m = p->first_moment.data();
    auto v = p->second_moment.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

std::vector<TrainingSample> make_samples(std::span<const Scene> scenes, const Vocabulary& vocab,
                                         std::size_t max_len) {
  std::vector<TrainingSample> out;
  for (const auto& scene : scenes) {
    for (const auto& sentence : scene.sentences) {
      out.push_back({&scene, reference_tokens(vocab, sentence, max_len)});
    }
  }
  return out;
}

double validation_cider(const CrtModel& model, std::span<const Scene> scenes) {
  std::vector<EvalPair> pairs;
  pairs.reserve(scenes.size());
  for (const auto& scene : scenes) {
    EvalPair pair;
    pair.id = scene.id;
    pair.candidate = model.vocab().words(model.greedy_decode(scene));
    for (const auto& s : scene.sentences) pair.references.push_back(tokenize(s));
    pairs.push_back(std::move(pair));
  }
  return cider_d(pairs);
}

TrainResult train(const TrainConfig& config, std::span<const Scene> train_set,
                  std::span<const Scene> validation_set, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw ConfigError("training split is empty");
  if (validation_set.empty()) throw ConfigError("validation split is empty");

  std::vector<std::string> sentences;
  for (const auto& scene : train_set)
    sentences.insert(sentences.end(), scene.sentences.begin(), scene.sentences.end());
  CrtModel model(config.model, build_vocab(sentences), config.seed);
  const std::vector<TrainingSample> samples =
      make_samples(train_set, model.vocab(), config.model.max_len);

  TrainResult result;
  double best_score = -std::numeric_limits<double>::infinity();
  std::uint64_t seen = 0;
  std::uint64_t next_validation = config.validation_interval;
  double interval_loss = 0.0;
  std::size_t interval_batches = 0;

  auto validate_now = [&] {
    CurvePoint point;
    point.step = seen;
    point.train_loss = interval_batches ? interval_loss / static_cast<double>(interval_batches)
                                        : std::numeric_limits<double>::quiet_NaN();
    point.val_cider = validation_cider(model, validation_set);
    result.curve.push_back(point);
    if (hooks.on_validation) hooks.on_validation(point);
    if (point.val_cider > best_score) {
      best_score = point.val_cider;
      result.best = make_checkpoint(model, best_score, seen);
    }
    interval_loss = 0.0;
    interval_batches = 0;
  };

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs && !result.diverged; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      model.parameters().zero_grad();
      double loss = 0.0;
      try {
        // One tape per sample keeps peak memory at a single sequence; the
        // accumulated gradient equals that of the batch mean.
        for (std::size_t k = start; k < end; ++k) {
          const TrainingSample& s = samples[order[k]];
          Tape tape;
          Var nll = scale(model.sequence_nll(tape, *s.scene, s.reference), inv_batch);
          loss += nll.value().item();
          tape.backward(nll);
        }
        if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
        adam_step(model.parameters(), config);
      } catch (const NumericError& e) {
        result.diverged = true;
        result.diagnostic = std::string(e.what()) + " at sample " + std::to_string(seen);
        break;
      }
      seen += end - start;
      epoch_loss += loss;
      interval_loss += loss;
      ++epoch_batches;
      ++interval_batches;
      if (seen >= next_validation) {
        validate_now();
        while (next_validation <= seen) next_validation += config.validation_interval;
      }
    }
    if (result.diverged) break;
    const double mean = epoch_loss / static_cast<double>(epoch_batches);
    result.epoch_losses.push_back(mean);
    if (hooks.on_epoch) hooks.on_epoch(epoch, mean);
    if (config.stop_below_loss && mean < *config.stop_below_loss) break;
  }

  if (!result.diverged && (result.curve.empty() || result.curve.back().step != seen)) {
    validate_now();
  }
  if (result.best.tensors.empty()) result.best = make_checkpoint(model, 0.0, seen);
  return result;
}

}  // namespace crt
