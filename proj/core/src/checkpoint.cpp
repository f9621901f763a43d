#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "crt/errors.hpp"
#include "crt/trainer.hpp"
#include "little_endian.hpp"

namespace crt {

namespace {

constexpr std::string_view kMagic = "CRTCKPT1";

nlohmann::json config_json(const ModelConfig& c) {
  return {{"visual_dim", c.visual_dim},   {"d_model", c.d_model},
          {"layers", c.layers},           {"heads", c.heads},
          {"d_ff", c.d_ff},               {"geometry_dim", c.geometry_dim},
          {"max_len", c.max_len},         {"ablation", std::string(1, c.ablation.condition())}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.visual_dim = j.at("visual_dim").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.geometry_dim = j.at("geometry_dim").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  const auto letter = j.at("ablation").get<std::string>();
  if (letter.size() != 1) throw FormatError("checkpoint ablation must be one letter");
  c.ablation = AblationFlags::from_condition(letter[0]);
  return c;
}

}  // namespace

Checkpoint make_checkpoint(const CrtModel& model, double best_score, std::uint64_t best_step) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.vocab = model.vocab();
  for (const auto& p : model.parameters()) ckpt.tensors.emplace_back(p->name, p->value);
  ckpt.best_score = best_score;
  ckpt.best_step = best_step;
  return ckpt;
}

CrtModel model_from_checkpoint(const Checkpoint& ckpt) {
  CrtModel model(ckpt.config, ckpt.vocab);
  if (model.parameters().size() != ckpt.tensors.size()) {
    throw CompatibilityError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                             " tensors, configuration needs " +
                             std::to_string(model.parameters().size()));
  }
  for (const auto& [name, tensor] : ckpt.tensors) {
    Parameter* p = model.parameters().find(name);
    if (!p) throw CompatibilityError("checkpoint tensor '" + name + "' unknown to the model");
    if (p->value.shape() != tensor.shape()) {
      throw CompatibilityError("checkpoint tensor '" + name + "' has shape " +
                               shape_string(tensor.shape()) + ", model expects " +
                               shape_string(p->value.shape()));
    }
    p->value = tensor;
  }
  return model;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json directory = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : ckpt.tensors) {
    directory.push_back({{"name", name}, {"shape", tensor.shape()}, {"offset", offset}});
    offset += tensor.size() * sizeof(double);
  }
  const nlohmann::json header{{"format_version", Checkpoint::kFormatVersion},
                              {"config", config_json(ckpt.config)},
                              {"vocabulary", ckpt.vocab.tokens()},
                              {"best_score", ckpt.best_score},
                              {"best_step", ckpt.best_step},
                              {"tensors", directory}};
  const std::string text = header.dump();

  std::string out(kMagic);
  detail::append_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& entry : ckpt.tensors) {
    for (double v : entry.second.data()) detail::append_f64(out, v);
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    throw FormatError("not a checkpoint: bad magic");
  }
  std::size_t pos = kMagic.size();
  if (bytes.size() < pos + 8) throw IntegrityError("checkpoint truncated in header length");
  const std::uint64_t header_len = detail::read_u64(bytes.data() + pos);
  pos += 8;
  if (header_len > bytes.size() - pos) throw IntegrityError("checkpoint truncated in header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  pos += header_len;
  const std::string_view payload = bytes.substr(pos);

  Checkpoint ckpt;
  try {
    const auto version = header.at("format_version").get<std::uint32_t>();
    if (version != Checkpoint::kFormatVersion) {
      throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    ckpt.config = config_from_json(header.at("config"));
    ckpt.vocab = Vocabulary(header.at("vocabulary").get<std::vector<std::string>>());
    ckpt.best_score = header.at("best_score").get<double>();
    ckpt.best_step = header.at("best_step").get<std::uint64_t>();
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      std::size_t count = 1;
      for (auto d : shape) count *= d;
      const std::uint64_t nbytes = count * sizeof(double);
      if (offset > payload.size() || nbytes > payload.size() - offset) {
        throw IntegrityError("checkpoint truncated in tensor '" + name + "'");
      }
      std::vector<double> data(count);
      for (std::size_t i = 0; i < count; ++i) {
        data[i] = detail::read_f64(payload.data() + offset + i * sizeof(double));
      }
      ckpt.tensors.emplace_back(name, Tensor(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

}  // namespace crt
