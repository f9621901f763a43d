#include "cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "crt/errors.hpp"
#include "crt/gradcheck.hpp"
#include "crt/metrics.hpp"
#include "crt/synth.hpp"
#include "crt/trainer.hpp"
#include "manifest.hpp"

namespace crt::cli {

namespace fs = std::filesystem;

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  const char* env = std::getenv("CRT_SEED");
  if (!env || !*env) return 0;
  const std::string_view text(env);
  std::uint64_t value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("CRT_SEED must be a nonnegative integer, got '" + std::string(text) + "'");
  }
  return value;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

fs::path with_suffix(const fs::path& base, std::string_view suffix) {
  fs::path p = base;
  p += std::string(suffix);
  return p;
}

RunManifest start_manifest(std::string command) {
  RunManifest m;
  m.command = std::move(command);
  m.started_at = utc_timestamp();
  return m;
}

// --- synth ------------------------------------------------------------------

int cmd_synth(const fs::path& out_path, std::size_t count, std::optional<std::uint64_t> seed_flag,
              std::ostream& out) {
  RunManifest manifest = start_manifest("synth");
  SynthOptions options;
  options.seed = resolve_seed(seed_flag);
  options.count = count;
  const SceneSet set = synth_generate(options);
  write_atomic(out_path, serialize_scenes(set));
  manifest.seed = options.seed;
  manifest.config_json = nlohmann::json{{"count", count}, {"d_v", options.visual_dim}}.dump();
  manifest.outputs = {out_path};
  manifest.finished_at = utc_timestamp();
  write_manifests(manifest);
  out << "wrote " << set.scenes.size() << " scenes to " << out_path.string() << "\n";
  return kExitOk;
}

// --- validate ---------------------------------------------------------------

int cmd_validate(const fs::path& data, std::ostream& out) {
  const SceneSet set = load_scenes(data);
  std::size_t sentences = 0, regions = 0;
  for (const auto& s : set.scenes) {
    sentences += s.sentences.size();
    regions += 2 + s.context.size();
  }
  out << data.string() << ": " << set.scenes.size() << " scenes, " << regions << " regions, "
      << sentences << " sentences, d_v " << set.visual_dim << "\n";
  return kExitOk;
}

// --- train ------------------------------------------------------------------

int cmd_train(const fs::path& data, const std::optional<fs::path>& config_path,
              const fs::path& out_path, const std::optional<char>& ablate, std::ostream& out,
              std::ostream& err) {
  RunManifest manifest = start_manifest("train");
  const SceneSet set = load_scenes(data);
  manifest.inputs.push_back(data);

  TrainConfig config;
  bool explicit_seed = false;
  bool explicit_visual_dim = false;
  if (config_path) {
    const std::string text = read_file(*config_path);
    config = train_config_from_json(text);
    const auto doc = nlohmann::json::parse(text);
    explicit_seed = doc.contains("seed");
    explicit_visual_dim = doc.contains("model") && doc["model"].contains("visual_dim");
    manifest.inputs.push_back(*config_path);
  }
  if (!explicit_seed) config.seed = resolve_seed(std::nullopt);
  if (explicit_visual_dim && config.model.visual_dim != set.visual_dim) {
    throw CompatibilityError("config visual_dim " + std::to_string(config.model.visual_dim) +
                             " differs from the data's d_v " + std::to_string(set.visual_dim));
  }
  config.model.visual_dim = set.visual_dim;
  if (ablate) config.model.ablation = AblationFlags::from_condition(*ablate);
  config.validate();

  const DatasetSplit parts = split(set.scenes, SplitRatios{}, config.seed);
  err << "train " << parts.train.size() << " / validation " << parts.validation.size()
      << " / test " << parts.test.size() << " scenes, condition ("
      << config.model.ablation.condition() << ")\n";

  std::string curve_text;
  TrainHooks hooks;
  hooks.on_validation = [&](const CurvePoint& p) {
    const nlohmann::json record{
        {"step", p.step},
        {"train_loss", std::isfinite(p.train_loss) ? nlohmann::json(p.train_loss)
                                                   : nlohmann::json(nullptr)},
        {"val_cider", p.val_cider}};
    curve_text += record.dump() + "\n";
    err << "step " << p.step << " train_loss " << p.train_loss << " val_cider " << p.val_cider
        << "\n";
  };
  hooks.on_epoch = [&](std::size_t epoch, double loss) {
    err << "epoch " << epoch + 1 << "/" << config.epochs << " loss " << loss << "\n";
  };
  const TrainResult result = train(config, parts.train, parts.validation, hooks);

  const fs::path curve_path = with_suffix(out_path, ".curve.jsonl");
  const fs::path test_path = with_suffix(out_path, ".test.json");
  write_atomic(out_path, serialize_checkpoint(result.best));
  write_atomic(curve_path, curve_text);
  write_atomic(test_path, serialize_scenes(SceneSet{set.visual_dim, parts.test}));

  manifest.seed = config.seed;
  manifest.config_json = train_config_to_json(config);
  manifest.outputs = {out_path, curve_path, test_path};
  manifest.finished_at = utc_timestamp();
  write_manifests(manifest);

  out << "best val CIDEr-D " << result.best.best_score << " at step " << result.best.best_step
      << "; checkpoint " << out_path.string() << "\n";
  if (result.diverged) {
    err << "training diverged: " << result.diagnostic << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

// --- generate ---------------------------------------------------------------

int cmd_generate(const fs::path& ckpt_path, const fs::path& data, const fs::path& out_path,
                 std::ostream& out) {
  RunManifest manifest = start_manifest("generate");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const SceneSet set = load_scenes(data);
  if (set.visual_dim != ckpt.config.visual_dim) {
    throw CompatibilityError("checkpoint expects d_v " + std::to_string(ckpt.config.visual_dim) +
                             ", data has " + std::to_string(set.visual_dim));
  }
  const CrtModel model = model_from_checkpoint(ckpt);
  std::string text;
  for (const auto& scene : set.scenes) {
    const TokenSequence ids = model.greedy_decode(scene);
    const TokenSequence emitted(ids.begin() + 1, ids.end());
    const nlohmann::json line{{"id", scene.id},
                              {"sentence", model.vocab().decode(ids)},
                              {"token_ids", emitted}};
    text += line.dump() + "\n";
  }
  write_atomic(out_path, text);
  manifest.inputs = {ckpt_path, data};
  manifest.config_json = nlohmann::json{{"max_len", ckpt.config.max_len}}.dump();
  manifest.outputs = {out_path};
  manifest.finished_at = utc_timestamp();
  write_manifests(manifest);
  out << "wrote " << set.scenes.size() << " generations to " << out_path.string() << "\n";
  return kExitOk;
}

// --- evaluate ---------------------------------------------------------------

// JSON lines with {"id", "sentence"} or {"id", "sentences": [...]}; repeated
// ids accumulate sentences.
std::map<std::string, std::vector<Words>> read_sentence_lines(const fs::path& path) {
  std::map<std::string, std::vector<Words>> out;
  std::istringstream lines(read_file(path));
  std::string line;
  std::size_t number = 0;
  while (std::getline(lines, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      auto& slot = out[j.at("id").get<std::string>()];
      if (j.contains("sentences")) {
        for (const auto& s : j.at("sentences")) slot.push_back(tokenize(s.get<std::string>()));
      } else {
        slot.push_back(tokenize(j.at("sentence").get<std::string>()));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::map<std::string, std::vector<Words>> read_references(const fs::path& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    auto doc = nlohmann::json::parse(text, nullptr, false);
    if (!doc.is_discarded() && doc.is_object() && doc.contains("scenes")) {
      std::map<std::string, std::vector<Words>> out;
      for (const auto& scene : load_scenes(path).scenes) {
        auto& slot = out[scene.id];
        for (const auto& s : scene.sentences) slot.push_back(tokenize(s));
      }
      return out;
    }
  }
  return read_sentence_lines(path);
}

int cmd_evaluate(const fs::path& hyp_path, const fs::path& ref_path, std::ostream& out) {
  RunManifest manifest = start_manifest("evaluate");
  const auto hyp_lines = read_sentence_lines(hyp_path);
  if (hyp_lines.empty()) throw ValidationError("hypothesis file " + hyp_path.string() + " is empty");
  std::map<std::string, Words> candidates;
  for (const auto& [id, sentences] : hyp_lines) {
    if (sentences.size() != 1) {
      throw ValidationError("hypothesis id '" + id + "' appears " +
                            std::to_string(sentences.size()) + " times");
    }
    candidates[id] = sentences.front();
  }
  const MetricReport report = evaluate_corpus(candidates, read_references(ref_path));
  const fs::path report_path = with_suffix(hyp_path, ".metrics.json");
  write_atomic(report_path, report.to_json());

  out << std::fixed << std::setprecision(1);
  out << "metric      score (x100)\n";
  out << "BLEU-4   " << std::setw(10) << report.bleu4 * 100.0 << "\n";
  out << "ROUGE-L  " << std::setw(10) << report.rouge_l * 100.0 << "\n";
  out << "CIDEr-D  " << std::setw(10) << report.cider_d * 100.0 << "\n";
  out << std::defaultfloat;
  for (const auto& w : report.warnings) out << "warning: " << w << "\n";
  out << "report " << report_path.string() << "\n";

  manifest.inputs = {hyp_path, ref_path};
  manifest.outputs = {report_path};
  manifest.finished_at = utc_timestamp();
  write_manifests(manifest);
  return kExitOk;
}

// --- gradcheck --------------------------------------------------------------

int cmd_gradcheck(std::optional<std::uint64_t> seed_flag, std::ostream& out) {
  GradcheckOptions options;
  options.seed = resolve_seed(seed_flag);
  const GradcheckReport report = run_gradcheck(options);
  out << "gradcheck seed " << options.seed << " h " << options.step << " tolerance "
      << options.tolerance << "\n";
  for (const auto& g : report.groups) {
    out << std::left << std::setw(36) << g.name << std::right << std::setw(6) << g.elements
        << "  " << std::scientific << std::setprecision(3) << g.max_relative_error
        << std::defaultfloat << "  " << (g.passed ? "ok" : "FAIL") << "\n";
  }
  out << "max relative error " << std::scientific << std::setprecision(3)
      << report.max_relative_error() << std::defaultfloat << ": "
      << (report.passed() ? "PASS" : "FAIL") << "\n";
  return report.passed() ? kExitOk : kExitNumeric;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitArgument;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const VocabularyError*>(&e) ||
      dynamic_cast<const FormatError*>(&e) || dynamic_cast<const IntegrityError*>(&e) ||
      dynamic_cast<const AlignmentError*>(&e) || dynamic_cast<const CompatibilityError*>(&e)) {
    return kExitValidation;
  }
  return kExitFailure;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Case relation transformer: synthetic data, training, decoding, evaluation"};
  app.require_subcommand(1);

  fs::path out_path, data_path, ckpt_path, hyp_path, ref_path;
  std::optional<fs::path> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<char> ablate;
  std::size_t count = 0;

  auto* synth = app.add_subcommand("synth", "write a deterministic synthetic scene file");
  synth->add_option("--out", out_path, "scene file to write")->required();
  synth->add_option("--count", count, "number of scenes")->required()->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "generator seed (default: CRT_SEED or 0)");

  auto* validate = app.add_subcommand("validate", "check a scene file");
  validate->add_option("--data", data_path, "scene file")->required()->check(CLI::ExistingFile);

  auto* train_cmd = app.add_subcommand("train", "train and write the best checkpoint");
  train_cmd->add_option("--data", data_path, "scene file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", config_path, "JSON training config")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out_path, "checkpoint to write")->required();
  train_cmd->add_option("--ablate", ablate, "input condition a-g (default g)")
      ->check(CLI::IsMember({'a', 'b', 'c', 'd', 'e', 'f', 'g'}));

  auto* generate = app.add_subcommand("generate", "greedy-decode every scene");
  generate->add_option("--ckpt", ckpt_path, "checkpoint")->required()->check(CLI::ExistingFile);
  generate->add_option("--data", data_path, "scene file")->required()->check(CLI::ExistingFile);
  generate->add_option("--out", out_path, "JSON lines output")->required();

  auto* evaluate = app.add_subcommand("evaluate", "score hypotheses against references");
  evaluate->add_option("--hyp", hyp_path, "JSON lines {id, sentence}")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--ref", ref_path, "scene file or JSON lines {id, sentence(s)}")
      ->required()
      ->check(CLI::ExistingFile);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gradcheck->add_option("--seed", seed, "model seed (default: CRT_SEED or 0)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitArgument;
  }

  try {
    if (synth->parsed()) return cmd_synth(out_path, count, seed, out);
    if (validate->parsed()) return cmd_validate(data_path, out);
    if (train_cmd->parsed()) return cmd_train(data_path, config_path, out_path, ablate, out, err);
    if (generate->parsed()) return cmd_generate(ckpt_path, data_path, out_path, out);
    if (evaluate->parsed()) return cmd_evaluate(hyp_path, ref_path, out);
    if (gradcheck->parsed()) return cmd_gradcheck(seed, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitFailure;
}

}  // namespace crt::cli
