#include <gtest/gtest.h>
#include <sodium.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "crt/errors.hpp"

namespace crt {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome crt(std::vector<std::string> args) {
  args.insert(args.begin(), "crt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(digest, reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char b : digest) {
    out.push_back(hex[b >> 4]);
    out.push_back(hex[b & 15]);
  }
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("crt_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    unsetenv("CRT_SEED");
  }
  void TearDown() override {
    fs::remove_all(dir_);
    unsetenv("CRT_SEED");
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Scenes, a tiny training config and a trained checkpoint.
  void prepare_checkpoint() {
    ASSERT_EQ(crt({"synth", "--out", path("data.json"), "--count", "20", "--seed", "3"}).code, 0);
    spit(path("config.json"), R"({"epochs": 1, "batch_size": 4, "validation_interval": 8,
      "learning_rate": 0.001, "seed": 2,
      "model": {"d_model": 16, "layers": 1, "heads": 2, "d_ff": 32, "geometry_dim": 16,
                "max_len": 12}})");
    const Outcome t = crt({"train", "--data", path("data.json"), "--config", path("config.json"),
                           "--out", path("model.ckpt")});
    ASSERT_EQ(t.code, 0) << t.err;
  }

  fs::path dir_;
};

TEST_F(Cli, SynthIsDeterministicAndValidates) {
  ASSERT_EQ(crt({"synth", "--out", path("a.json"), "--count", "6", "--seed", "7"}).code, 0);
  ASSERT_EQ(crt({"synth", "--out", path("b.json"), "--count", "6", "--seed", "7"}).code, 0);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  const Outcome v = crt({"validate", "--data", path("a.json")});
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find("6 scenes"), std::string::npos);
}

TEST_F(Cli, SeedFallsBackToEnvironment) {
  setenv("CRT_SEED", "7", 1);
  ASSERT_EQ(crt({"synth", "--out", path("env.json"), "--count", "3"}).code, 0);
  ASSERT_EQ(crt({"synth", "--out", path("flag.json"), "--count", "3", "--seed", "7"}).code, 0);
  EXPECT_EQ(slurp(path("env.json")), slurp(path("flag.json")));
  EXPECT_EQ(cli::resolve_seed(std::nullopt), 7u);
  EXPECT_EQ(cli::resolve_seed(11), 11u);
  setenv("CRT_SEED", "seven", 1);
  EXPECT_THROW(cli::resolve_seed(std::nullopt), ConfigError);
  EXPECT_EQ(crt({"synth", "--out", path("bad.json"), "--count", "3"}).code, cli::kExitArgument);
}

TEST_F(Cli, ManifestHashesMatchArtifacts) {
  ASSERT_EQ(crt({"synth", "--out", path("m.json"), "--count", "2", "--seed", "1"}).code, 0);
  const auto manifest = nlohmann::json::parse(slurp(path("m.json.manifest.json")));
  EXPECT_EQ(manifest.at("command"), "synth");
  EXPECT_EQ(manifest.at("seed"), 1);
  EXPECT_EQ(manifest.at("sha256").at(path("m.json")), sha256_hex(slurp(path("m.json"))));
  EXPECT_TRUE(manifest.contains("started_at"));
  EXPECT_TRUE(manifest.contains("finished_at"));
}

TEST_F(Cli, ArgumentErrors) {
  EXPECT_EQ(crt({"synth", "--out", path("x.json"), "--count", "0"}).code, cli::kExitArgument);
  EXPECT_EQ(crt({}).code, cli::kExitArgument);
  EXPECT_EQ(crt({"frobnicate"}).code, cli::kExitArgument);
  ASSERT_EQ(crt({"synth", "--out", path("d.json"), "--count", "2"}).code, 0);
  const Outcome bad = crt({"train", "--data", path("d.json"), "--out", path("c"), "--ablate", "h"});
  EXPECT_EQ(bad.code, cli::kExitArgument);
  for (char c = 'a'; c <= 'g'; ++c) EXPECT_NE(bad.err.find(c), std::string::npos) << c;
  spit(path("cfg.json"), R"({"epochs": 1, "learnign_rate": 0.1})");
  EXPECT_EQ(crt({"train", "--data", path("d.json"), "--config", path("cfg.json"), "--out",
                 path("c")})
                .code,
            cli::kExitArgument);
}

TEST_F(Cli, ValidationErrors) {
  spit(path("broken.json"), R"({"d_v": 2, "scenes": [{"id": "q", "width": 10, "height": 10,
    "target": {"bbox": [0, 0, 5, 5], "feat": "AAAAAAAAAAAAAAAAAAAAAA=="},
    "context": [], "sentences": ["x"]}]})");
  const Outcome v = crt({"validate", "--data", path("broken.json")});
  EXPECT_EQ(v.code, cli::kExitValidation);
  EXPECT_NE(v.err.find("q"), std::string::npos);
  spit(path("garbage.ckpt"), "XXXXXXXX and more");
  ASSERT_EQ(crt({"synth", "--out", path("d.json"), "--count", "2"}).code, 0);
  EXPECT_EQ(crt({"generate", "--ckpt", path("garbage.ckpt"), "--data", path("d.json"), "--out",
                 path("g.jsonl")})
                .code,
            cli::kExitValidation);
}

TEST_F(Cli, TrainGenerateEvaluate) {
  prepare_checkpoint();
  for (const char* suffix : {"", ".curve.jsonl", ".test.json"}) {
    const std::string artifact = path("model.ckpt") + suffix;
    ASSERT_TRUE(fs::exists(artifact)) << artifact;
    const auto manifest = nlohmann::json::parse(slurp(artifact + ".manifest.json"));
    EXPECT_EQ(manifest.at("sha256").at(artifact), sha256_hex(slurp(artifact)));
  }
  std::istringstream curve(slurp(path("model.ckpt.curve.jsonl")));
  std::string line;
  std::size_t points = 0;
  while (std::getline(curve, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("step") && j.contains("train_loss") && j.contains("val_cider"));
    ++points;
  }
  EXPECT_GE(points, 1u);

  const std::string test_set = path("model.ckpt.test.json");
  ASSERT_EQ(crt({"generate", "--ckpt", path("model.ckpt"), "--data", test_set, "--out",
                 path("gen1.jsonl")})
                .code,
            0);
  ASSERT_EQ(crt({"generate", "--ckpt", path("model.ckpt"), "--data", test_set, "--out",
                 path("gen2.jsonl")})
                .code,
            0);
  EXPECT_EQ(slurp(path("gen1.jsonl")), slurp(path("gen2.jsonl")));
  std::istringstream gen(slurp(path("gen1.jsonl")));
  std::size_t generated = 0;
  while (std::getline(gen, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto sentence = j.at("sentence").get<std::string>();
    EXPECT_EQ(sentence.find('\n'), std::string::npos);
    EXPECT_LE(j.at("token_ids").size(), 11u);
    ++generated;
  }
  EXPECT_EQ(generated, 2u);

  const Outcome e = crt({"evaluate", "--hyp", path("gen1.jsonl"), "--ref", test_set});
  EXPECT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("CIDEr-D"), std::string::npos);
  const auto report = nlohmann::json::parse(slurp(path("gen1.jsonl.metrics.json")));
  EXPECT_EQ(report.at("samples").size(), 2u);

  ASSERT_EQ(crt({"synth", "--out", path("other.json"), "--count", "2"}).code, 0);
  std::string narrowed = slurp(path("other.json"));
  auto doc = nlohmann::json::parse(narrowed);
  doc["d_v"] = 4;
  for (auto& s : doc["scenes"]) {
    for (auto* r : {&s["target"], &s["destination"]}) (*r)["feat"] = "AAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAA=";
    for (auto& c : s["context"]) c["feat"] = "AAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAA=";
  }
  spit(path("narrow.json"), doc.dump());
  EXPECT_EQ(crt({"validate", "--data", path("narrow.json")}).code, 0);
  EXPECT_EQ(crt({"generate", "--ckpt", path("model.ckpt"), "--data", path("narrow.json"), "--out",
                 path("g.jsonl")})
                .code,
            cli::kExitValidation);
}

TEST_F(Cli, EvaluateIdentityAndErrors) {
  spit(path("ref.jsonl"),
       "{\"id\": \"a\", \"sentence\": \"move the red circle to the top left box\"}\n"
       "{\"id\": \"b\", \"sentence\": \"put the blue star in the bottom right box\"}\n");
  const Outcome same = crt({"evaluate", "--hyp", path("ref.jsonl"), "--ref", path("ref.jsonl")});
  ASSERT_EQ(same.code, 0) << same.err;
  EXPECT_NE(same.out.find("BLEU-4        100.0"), std::string::npos) << same.out;
  EXPECT_NE(same.out.find("ROUGE-L       100.0"), std::string::npos) << same.out;
  EXPECT_NE(same.out.find("CIDEr-D      1000.0"), std::string::npos) << same.out;
  const auto raw = nlohmann::json::parse(slurp(path("ref.jsonl.metrics.json")));
  EXPECT_DOUBLE_EQ(raw.at("corpus").at("bleu4").get<double>(), 1.0);

  spit(path("empty.jsonl"), "");
  EXPECT_EQ(crt({"evaluate", "--hyp", path("empty.jsonl"), "--ref", path("ref.jsonl")}).code,
            cli::kExitValidation);
  spit(path("stray.jsonl"), "{\"id\": \"zz\", \"sentence\": \"x\"}\n");
  const Outcome stray = crt({"evaluate", "--hyp", path("stray.jsonl"), "--ref", path("ref.jsonl")});
  EXPECT_EQ(stray.code, cli::kExitValidation);
  EXPECT_NE(stray.err.find("zz"), std::string::npos);
}

TEST_F(Cli, GradcheckPassesAndIsDeterministic) {
  const Outcome a = crt({"gradcheck", "--seed", "4"});
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_NE(a.out.find("PASS"), std::string::npos);
  EXPECT_EQ(crt({"gradcheck", "--seed", "4"}).out, a.out);
  for (const char* group : {"crb.target.W ", "encoder.layer0.attn.W_G ", "generator.W "}) {
    const auto first = a.out.find(group);
    ASSERT_NE(first, std::string::npos) << group;
    EXPECT_EQ(a.out.find(group, first + 1), std::string::npos) << group;
  }
}

}  // namespace
}  // namespace crt
