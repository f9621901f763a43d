#include "crt/dataset.hpp"

#include <sodium.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <sstream>

#include "crt/errors.hpp"
#include "little_endian.hpp"

namespace crt {

using nlohmann::json;

const char* role_name(Role role) {
  switch (role) {
    case Role::kTarget:
      return "target";
    case Role::kDestination:
      return "destination";
    case Role::kContext:
      return "context";
  }
  return "unknown";
}

std::string encode_features(std::span<const double> values) {
  const std::string bytes = detail::pack_f64(values);
  std::string out(sodium_base64_ENCODED_LEN(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bytes.data()),
                    bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(std::strlen(out.c_str()));
  return out;
}

std::vector<double> decode_features(std::string_view base64, std::size_t expected_count) {
  std::vector<unsigned char> bytes(base64.size());
  std::size_t len = 0;
  if (sodium_base642bin(bytes.data(), bytes.size(), base64.data(), base64.size(), nullptr, &len,
                        nullptr, sodium_base64_VARIANT_ORIGINAL) != 0) {
    throw ValidationError("feature is not valid base64");
  }
  if (len != expected_count * 8) {
    throw ValidationError("feature holds " + std::to_string(len / 8) + " values, expected " +
                          std::to_string(expected_count));
  }
  std::vector<double> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) out[i] = detail::read_f64(bytes.data() + 8 * i);
  return out;
}

void validate_scene(const Scene& scene, std::size_t visual_dim) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("scene '" + scene.id + "': " + what);
  };
  if (!(scene.width > 0.0) || !(scene.height > 0.0)) fail("image size must be positive");
  if (scene.context.size() > kMaxContextRegions) {
    fail(std::to_string(scene.context.size()) + " context regions exceed the limit of " +
         std::to_string(kMaxContextRegions));
  }
  if (scene.sentences.empty()) fail("no reference sentences");
  auto check_region = [&](const RegionFeature& r, const std::string& label) {
    try {
      validate_box(r.bbox, scene.width, scene.height);
    } catch (const ValidationError& e) {
      fail(label + ": " + e.what());
    }
    if (r.visual.size() != visual_dim) {
      fail(label + ": visual feature has " + std::to_string(r.visual.size()) +
           " values, expected " + std::to_string(visual_dim));
    }
    for (double v : r.visual)
      if (!std::isfinite(v)) fail(label + ": non-finite visual feature");
  };
  if (scene.target.role != Role::kTarget) fail("target region has the wrong role");
  if (scene.destination.role != Role::kDestination) fail("destination region has the wrong role");
  check_region(scene.target, "target");
  check_region(scene.destination, "destination");
  for (std::size_t i = 0; i < scene.context.size(); ++i) {
    if (scene.context[i].role != Role::kContext) fail("context region with the wrong role");
    check_region(scene.context[i], "context[" + std::to_string(i) + "]");
  }
}

namespace {

std::vector<double> read_sidecar(const std::filesystem::path& path, std::int64_t offset,
                                 std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open feature sidecar " + path.string());
  if (offset < 0) throw ValidationError("negative sidecar offset");
  in.seekg(offset);
  std::vector<unsigned char> bytes(count * 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw ValidationError("sidecar " + path.string() + " truncated at offset " +
                          std::to_string(offset));
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = detail::read_f64(bytes.data() + 8 * i);
  return out;
}

RegionFeature parse_region(const json& j, Role role, std::size_t visual_dim,
                           const std::filesystem::path& base_dir) {
  RegionFeature r;
  r.role = role;
  const auto& b = j.at("bbox");
  if (!b.is_array() || b.size() != 4) throw ValidationError("bbox must be [xmin,ymin,xmax,ymax]");
  r.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  const auto& f = j.at("feat");
  if (f.is_string()) {
    r.visual = decode_features(f.get<std::string>(), visual_dim);
  } else if (f.is_object()) {
    r.visual = read_sidecar(base_dir / f.at("ref").get<std::string>(),
                            f.at("offset").get<std::int64_t>(), visual_dim);
  } else {
    throw ValidationError("feat must be base64 or {ref, offset}");
  }
  return r;
}

Scene parse_scene(const json& j, std::size_t visual_dim, const std::filesystem::path& base_dir) {
  Scene s;
  if (j.contains("id")) s.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  try {
    if (!j.contains("target")) throw ValidationError("missing target");
    if (!j.contains("destination")) throw ValidationError("missing destination");
    s.width = j.at("width").get<double>();
    s.height = j.at("height").get<double>();
    s.target = parse_region(j["target"], Role::kTarget, visual_dim, base_dir);
    s.destination = parse_region(j["destination"], Role::kDestination, visual_dim, base_dir);
    if (j.contains("context")) {
      const auto& ctx = j["context"];
      if (ctx.size() > kMaxContextRegions) {
        throw ValidationError(std::to_string(ctx.size()) + " context regions exceed the limit of " +
                              std::to_string(kMaxContextRegions));
      }
      for (const auto& c : ctx) s.context.push_back(parse_region(c, Role::kContext, visual_dim, base_dir));
    }
    for (const auto& sent : j.at("sentences")) s.sentences.push_back(sent.get<std::string>());
  } catch (const ValidationError& e) {
    throw ValidationError("scene '" + s.id + "': " + e.what());
  } catch (const json::exception& e) {
    throw ValidationError("scene '" + s.id + "': " + e.what());
  }
  validate_scene(s, visual_dim);
  return s;
}

json region_json(const RegionFeature& r) {
  return json{{"bbox", {r.bbox.xmin, r.bbox.ymin, r.bbox.xmax, r.bbox.ymax}},
              {"feat", encode_features(r.visual)}};
}

}  // namespace

SceneSet parse_scenes(std::string_view json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("scene file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("d_v") || !doc.contains("scenes")) {
    throw ValidationError("scene file needs top-level \"d_v\" and \"scenes\"");
  }
  SceneSet set;
  const auto dv = doc["d_v"].get<std::int64_t>();
  if (dv <= 0) throw ValidationError("d_v must be positive");
  set.visual_dim = static_cast<std::size_t>(dv);
  for (const auto& s : doc["scenes"]) set.scenes.push_back(parse_scene(s, set.visual_dim, base_dir));
  return set;
}

SceneSet load_scenes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read scene file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenes(buf.str(), path.parent_path());
}

std::string serialize_scenes(const SceneSet& set) {
  json scenes = json::array();
  for (const auto& s : set.scenes) {
    json ctx = json::array();
    for (const auto& c : s.context) ctx.push_back(region_json(c));
    scenes.push_back(json{{"id", s.id},
                          {"width", s.width},
                          {"height", s.height},
                          {"target", region_json(s.target)},
                          {"destination", region_json(s.destination)},
                          {"context", ctx},
                          {"sentences", s.sentences}});
  }
  json doc{{"d_v", set.visual_dim}, {"scenes", scenes}};
  return doc.dump() + "\n";
}

void save_scenes(const SceneSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write scene file " + path.string());
  out << serialize_scenes(set);
  if (!out) throw IoError("write failed for " + path.string());
}

DatasetSplit split(std::span<const Scene> scenes, const SplitRatios& ratios, std::uint64_t seed) {
  const double total = ratios.train + ratios.validation + ratios.test;
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be nonnegative and sum to 1");
  }
  const std::size_t n = scenes.size();
  const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(ratios.validation * static_cast<double>(n)));
  if (n_train + n_val > n || n_train == 0 || n_val == 0 || n_train + n_val == n) {
    throw ConfigError("split of " + std::to_string(n) + " scenes leaves an empty partition");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  DatasetSplit out;
  for (std::size_t i = 0; i < n; ++i) {
    const Scene& s = scenes[order[i]];
    if (i < n_train) {
      out.train.push_back(s);
    } else if (i < n_train + n_val) {
      out.validation.push_back(s);
    } else {
      out.test.push_back(s);
    }
  }
  return out;
}

}  // namespace crt
