#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "crt/errors.hpp"
#include "crt/trainer.hpp"
#include "support.hpp"

namespace crt {
namespace {

Tensor rows_with(std::size_t rows, std::size_t cols, double fill) { return Tensor({rows, cols}, fill); }

TEST(Loss, UniformPredictions) {
  Tape tape;
  const std::vector<Var> probs{tape.constant(rows_with(3, 10, 0.1))};
  const std::vector<TokenSequence> targets{{4, 5, 2}};
  EXPECT_NEAR(batch_loss(probs, targets).value().item(), 3.0 * std::log(10.0), 1e-12);
  EXPECT_NEAR(batch_loss(probs, targets).value().item(), 6.9078, 1e-4);
}

TEST(Loss, PerfectPredictionsAreZero) {
  Tape tape;
  Tensor p({2, 5});
  p(0, 3) = 1.0;
  p(1, 2) = 1.0;
  const std::vector<Var> probs{tape.constant(p)};
  const std::vector<TokenSequence> targets{{3, 2}};
  EXPECT_EQ(batch_loss(probs, targets).value().item(), 0.0);
}

TEST(Loss, MeanOverSamples) {
  Tape tape;
  const std::vector<Var> probs{tape.constant(rows_with(1, 4, std::exp(-2.0))),
                               tape.constant(rows_with(2, 4, std::exp(-2.0)))};
  const std::vector<TokenSequence> targets{{1}, {3, 1}};
  EXPECT_NEAR(batch_loss(probs, targets).value().item(), 3.0, 1e-12);
}

TEST(Loss, DuplicatedBatchIsUnchanged) {
  std::mt19937_64 rng(3);
  Tape tape;
  std::vector<Var> probs;
  std::vector<TokenSequence> targets;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t len = 2 + i;
    probs.push_back(softmax_rows(tape.constant(testing::random_tensor({len, 9}, rng, -2, 2))));
    TokenSequence t(len);
    for (auto& x : t) x = static_cast<TokenId>(1 + rng() % 8);
    targets.push_back(t);
  }
  const double single = batch_loss(probs, targets).value().item();
  auto probs2 = probs;
  auto targets2 = targets;
  probs2.insert(probs2.end(), probs.begin(), probs.end());
  targets2.insert(targets2.end(), targets.begin(), targets.end());
  EXPECT_NEAR(batch_loss(probs2, targets2).value().item(), single, 1e-12);
}

TEST(Loss, PaddingSkippedAndShapesChecked) {
  Tape tape;
  const std::vector<Var> probs{tape.constant(rows_with(3, 10, 0.1))};
  const std::vector<TokenSequence> padded{{4, kPadId, kPadId}};
  EXPECT_NEAR(batch_loss(probs, padded).value().item(), std::log(10.0), 1e-12);
  const std::vector<TokenSequence> short_targets{{4, 5}};
  EXPECT_THROW(batch_loss(probs, short_targets), DimensionError);
  Tensor zero({1, 10});
  zero(0, 0) = 1.0;
  std::size_t clamped = 0;
  const std::vector<Var> degenerate{tape.constant(zero)};
  const std::vector<TokenSequence> miss{{7}};
  EXPECT_NEAR(batch_loss(degenerate, miss, &clamped).value().item(), -std::log(1e-12), 1e-9);
  EXPECT_EQ(clamped, 1u);
}

TEST(Adam, ZeroGradientFromFreshStateKeepsParameters) {
  ParameterStore store;
  Parameter& p = store.add("w", Tensor::matrix(1, 2, {0.5, -1.0}));
  TrainConfig config;
  adam_step(store, config);
  EXPECT_EQ(p.value, Tensor::matrix(1, 2, {0.5, -1.0}));
  EXPECT_EQ(p.first_moment, Tensor({1, 2}));
  EXPECT_EQ(p.second_moment, Tensor({1, 2}));
  EXPECT_EQ(p.step, 1u);
}

TEST(Adam, ZeroGradientDecaysMoments) {
  ParameterStore store;
  Parameter& p = store.add("w", Tensor::matrix(1, 2, {0.5, -1.0}));
  p.first_moment = Tensor::matrix(1, 2, {0.2, -0.4});
  p.second_moment = Tensor::matrix(1, 2, {0.09, 0.01});
  TrainConfig config;
  adam_step(store, config);
  EXPECT_DOUBLE_EQ(p.first_moment[0], 0.9 * 0.2);
  EXPECT_DOUBLE_EQ(p.first_moment[1], 0.9 * -0.4);
  EXPECT_DOUBLE_EQ(p.second_moment[0], 0.999 * 0.09);
  EXPECT_DOUBLE_EQ(p.second_moment[1], 0.999 * 0.01);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  ParameterStore store;
  Parameter& p = store.add("w", Tensor::matrix(1, 4, {0, 1, 2, 3}));
  p.grad = Tensor::matrix(1, 4, {0.3, -2.0, 1e-3, -7.5});
  TrainConfig config;
  adam_step(store, config);
  const double expected[] = {-1, 1, -1, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    const double g = std::abs(Tensor::matrix(1, 4, {0.3, -2.0, 1e-3, -7.5})[i]);
    const double step = config.learning_rate * g / (g + config.epsilon);
    EXPECT_NEAR(p.value[i] - static_cast<double>(i), expected[i] * step, 1e-15);
    EXPECT_NEAR(p.value[i] - static_cast<double>(i), expected[i] * config.learning_rate, 1e-8);
  }
}

TEST(Adam, DeterministicAndRejectsNaN) {
  auto make = [](ParameterStore& s) {
    Parameter& p = s.add("w", Tensor::matrix(1, 3, {0.1, 0.2, 0.3}));
    p.grad = Tensor::matrix(1, 3, {0.5, -0.25, 2.0});
    return &p;
  };
  ParameterStore a, b;
  Parameter* pa = make(a);
  Parameter* pb = make(b);
  TrainConfig config;
  adam_step(a, config);
  adam_step(b, config);
  adam_step(a, config);
  adam_step(b, config);
  EXPECT_EQ(pa->value, pb->value);
  EXPECT_EQ(pa->second_moment, pb->second_moment);

  ParameterStore c;
  c.add("fine", Tensor({2}, 1.0)).grad = Tensor({2}, 0.5);
  Parameter& bad = c.add("broken.W", Tensor({2}, 1.0));
  bad.grad = Tensor::matrix(1, 2, {0.0, std::nan("")}).reshaped({2});
  try {
    adam_step(c, config);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.W"), std::string::npos);
  }
  EXPECT_EQ(c.get("fine").value, Tensor({2}, 1.0));
}

TEST(TrainConfigJson, DefaultsRoundTripAndUnknownKeys) {
  const TrainConfig defaults;
  EXPECT_EQ(defaults.learning_rate, 5e-4);
  EXPECT_EQ(defaults.batch_size, 15u);
  EXPECT_EQ(defaults.epochs, 10u);
  EXPECT_EQ(defaults.beta1, 0.9);
  EXPECT_EQ(defaults.beta2, 0.999);
  EXPECT_EQ(defaults.validation_interval, 3000u);
  EXPECT_EQ(defaults.model.d_model, 512u);
  EXPECT_EQ(defaults.model.layers, 6u);
  EXPECT_EQ(defaults.model.heads, 8u);
  EXPECT_EQ(defaults.model.visual_dim, 2048u);

  const TrainConfig parsed =
      train_config_from_json(R"({"learning_rate": 0.001, "model": {"layers": 2, "ablation": "f"}})");
  EXPECT_EQ(parsed.learning_rate, 1e-3);
  EXPECT_EQ(parsed.model.layers, 2u);
  EXPECT_EQ(parsed.model.ablation, AblationFlags::from_condition('f'));
  EXPECT_EQ(parsed.batch_size, 15u);
  const TrainConfig again = train_config_from_json(train_config_to_json(parsed));
  EXPECT_EQ(train_config_to_json(again), train_config_to_json(parsed));
  EXPECT_THROW(train_config_from_json(R"({"learning_rte": 0.1})"), ConfigError);
  EXPECT_THROW(train_config_from_json(R"({"batch_size": 0})"), ConfigError);
  EXPECT_THROW(train_config_from_json(R"({"model": {"heads": 5}})"), ConfigError);
}

class Training : public ::testing::Test {
 protected:
  static TrainConfig tiny_config(std::uint64_t seed) {
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.batch_size = 4;
    c.epochs = 2;
    c.validation_interval = 10;
    c.seed = seed;
    c.model = testing::small_config(16, 'g', 1);
    return c;
  }

  Training()
      : data_(testing::small_scenes(24, 77, 16, 2, 3)),
        train_(data_.scenes.begin(), data_.scenes.begin() + 18),
        validation_(data_.scenes.begin() + 18, data_.scenes.end()) {}

  SceneSet data_;
  std::vector<Scene> train_;
  std::vector<Scene> validation_;
};

TEST_F(Training, FixedSeedGivesIdenticalCurves) {
  const TrainResult a = train(tiny_config(5), train_, validation_);
  const TrainResult b = train(tiny_config(5), train_, validation_);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].step, b.curve[i].step);
    EXPECT_EQ(a.curve[i].train_loss, b.curve[i].train_loss);
    EXPECT_EQ(a.curve[i].val_cider, b.curve[i].val_cider);
  }
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
  EXPECT_EQ(serialize_checkpoint(a.best), serialize_checkpoint(b.best));
  EXPECT_FALSE(a.diverged);
}

TEST_F(Training, ValidationScheduleAndBestSelection) {
  std::vector<CurvePoint> seen;
  TrainHooks hooks;
  hooks.on_validation = [&](const CurvePoint& p) { seen.push_back(p); };
  const TrainResult r = train(tiny_config(6), train_, validation_, hooks);
  // Replay the schedule: validate whenever the running sample count
  // crosses the next multiple of the interval, and once more at the end.
  const std::size_t n = make_samples(train_, r.best.vocab, 12).size();
  std::vector<std::uint64_t> expected;
  std::uint64_t count = 0, next = 10;
  for (int epoch = 0; epoch < 2; ++epoch)
    for (std::size_t start = 0; start < n; start += 4) {
      count += std::min<std::size_t>(4, n - start);
      if (count >= next) {
        expected.push_back(count);
        while (next <= count) next += 10;
      }
    }
  if (expected.back() != count) expected.push_back(count);
  ASSERT_EQ(r.curve.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(r.curve[i].step, expected[i]);
  EXPECT_EQ(seen.size(), r.curve.size());
  for (const auto& p : r.curve) EXPECT_GE(r.best.best_score, p.val_cider);
  const bool matches = std::any_of(r.curve.begin(), r.curve.end(), [&](const CurvePoint& p) {
    return p.val_cider == r.best.best_score && p.step == r.best.best_step;
  });
  EXPECT_TRUE(matches);
}

TEST_F(Training, LossFallsOverFirstInterval) {
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig config = tiny_config(seed);
    config.epochs = 1;
    config.batch_size = 2;
    config.validation_interval =
        make_samples(train_, testing::vocab_of(SceneSet{16, train_}), 12).size();
    const TrainResult r = train(config, train_, validation_);
    ASSERT_EQ(r.curve.size(), 1u);
    const CrtModel trained = model_from_checkpoint(r.best);
    const CrtModel initial(config.model, trained.vocab(), seed);
    auto mean_nll = [&](const CrtModel& m) {
      double total = 0.0;
      const auto samples = make_samples(train_, m.vocab(), config.model.max_len);
      for (const auto& s : samples) {
        Tape tape(false);
        total += m.sequence_nll(tape, *s.scene, s.reference).value().item();
      }
      return total / static_cast<double>(samples.size());
    };
    EXPECT_LT(mean_nll(trained), mean_nll(initial)) << "seed " << seed;
  }
}

TEST_F(Training, SamplesPerSentence) {
  const Vocabulary v = testing::vocab_of(data_);
  std::size_t sentences = 0;
  for (const auto& s : train_) sentences += s.sentences.size();
  const auto samples = make_samples(train_, v, 30);
  EXPECT_EQ(samples.size(), sentences);
  for (const auto& s : samples) {
    EXPECT_EQ(s.reference.front(), kBosId);
    EXPECT_EQ(s.reference.back(), kEosId);
  }
  for (const auto& s : make_samples(train_, v, 4)) EXPECT_LE(s.reference.size(), 4u);
}

TEST_F(Training, RejectsEmptySplits) {
  EXPECT_THROW(train(tiny_config(1), {}, validation_), ConfigError);
  EXPECT_THROW(train(tiny_config(1), train_, {}), ConfigError);
}

class CheckpointFile : public ::testing::Test {
 protected:
  CheckpointFile()
      : scenes_(testing::small_scenes(5, 8, 16)),
        model_(testing::small_config(16), testing::vocab_of(scenes_), 21),
        ckpt_(make_checkpoint(model_, 1.25, 300)) {}

  SceneSet scenes_;
  CrtModel model_;
  Checkpoint ckpt_;
};

TEST_F(CheckpointFile, RoundTripIsByteIdentical) {
  const std::string bytes = serialize_checkpoint(ckpt_);
  EXPECT_EQ(bytes.substr(0, 8), "CRTCKPT1");
  const Checkpoint back = parse_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.config, ckpt_.config);
  EXPECT_EQ(back.vocab, ckpt_.vocab);
  EXPECT_EQ(back.best_score, 1.25);
  EXPECT_EQ(back.best_step, 300u);

  const auto path = std::filesystem::temp_directory_path() / "crt_ckpt_roundtrip.bin";
  save_checkpoint(ckpt_, path);
  const Checkpoint loaded = load_checkpoint(path);
  save_checkpoint(loaded, path);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), bytes);
  std::filesystem::remove(path);
}

TEST_F(CheckpointFile, RestoredModelMatchesBitwise) {
  const CrtModel restored = model_from_checkpoint(parse_checkpoint(serialize_checkpoint(ckpt_)));
  const auto a = model_.snapshot();
  const auto b = restored.snapshot();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  for (const Scene& s : scenes_.scenes) EXPECT_EQ(restored.greedy_decode(s), model_.greedy_decode(s));
}

TEST_F(CheckpointFile, DirectoryOffsetsAreOrderedAndInBounds) {
  const std::string bytes = serialize_checkpoint(ckpt_);
  std::uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i)
    header_len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  const auto header = nlohmann::json::parse(bytes.substr(16, header_len));
  const std::uint64_t payload = bytes.size() - 16 - header_len;
  std::uint64_t previous = 0;
  ASSERT_EQ(header.at("tensors").size(), model_.parameters().size());
  for (const auto& t : header.at("tensors")) {
    const auto offset = t.at("offset").get<std::uint64_t>();
    std::uint64_t count = 1;
    for (const auto& d : t.at("shape")) count *= d.get<std::uint64_t>();
    EXPECT_GE(offset, previous);
    EXPECT_LE(offset + 8 * count, payload);
    previous = offset;
  }
}

TEST_F(CheckpointFile, CorruptionIsDetected) {
  std::string bytes = serialize_checkpoint(ckpt_);
  std::string bad_magic = bytes;
  bad_magic.replace(0, 8, "XXXXXXXX");
  EXPECT_THROW(parse_checkpoint(bad_magic), FormatError);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), IntegrityError);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, 12)), IntegrityError);
  EXPECT_THROW(parse_checkpoint(""), Error);

  // A newer format version in the header is refused.
  std::uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i)
    header_len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  auto header = nlohmann::json::parse(bytes.substr(16, header_len));
  header["format_version"] = 99;
  std::string text = header.dump();
  std::string rewritten = bytes.substr(0, 8);
  for (int i = 0; i < 8; ++i)
    rewritten.push_back(static_cast<char>((text.size() >> (8 * i)) & 0xFF));
  rewritten += text + bytes.substr(16 + header_len);
  EXPECT_THROW(parse_checkpoint(rewritten), FormatError);
}

TEST_F(CheckpointFile, ShapeMismatchIsIncompatible) {
  Checkpoint broken = ckpt_;
  broken.tensors[0].second = Tensor({1, 1});
  EXPECT_THROW(model_from_checkpoint(broken), CompatibilityError);
}

}  // namespace
}  // namespace crt
