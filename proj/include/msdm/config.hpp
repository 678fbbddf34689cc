#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "msdm/architecture.hpp"
#include "msdm/error.hpp"
#include "msdm/layers.hpp"
#include "msdm/text.hpp"

namespace msdm {

using Json = nlohmann::json;

struct TrainConfig {
  int epochs = 30;
  int batch_size = 256;
  SgdConfig sgd;
  std::optional<double> pos_weight;  // default: S / mean positives per site
  std::uint64_t shuffle_seed = 0;
  bool validate_each_epoch = true;
  bool keep_epoch_checkpoints = false;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (pos_weight && !(*pos_weight >= 1.0)) throw ConfigError("pos_weight must be >= 1");
    sgd.validate();
  }
};

namespace config_detail {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline std::vector<EncoderOp> encoder_ops_from_json(const Json& ops) {
  std::vector<EncoderOp> out;
  for (const auto& op : ops) {
    if (op.contains("conv")) {
      const auto v = op.at("conv").get<std::vector<int>>();
      if (v.size() != 3) throw ConfigError("encoder conv entry needs [kernel, stride, channels]");
      if (v[2] < 1) throw ConfigError("encoder conv channels must be >= 1");
      out.push_back({v[0], v[1], v[2]});
    } else if (op.contains("pool")) {
      const auto v = op.at("pool").get<std::vector<int>>();
      if (v.size() != 2) throw ConfigError("encoder pool entry needs [kernel, stride]");
      out.push_back({v[0], v[1], 0});
    } else {
      throw ConfigError("encoder entries must be {\"conv\": [...]} or {\"pool\": [...]}");
    }
  }
  return out;
}

inline Json encoder_to_json(const std::vector<LayerSpec>& layers) {
  Json ops = Json::array();
  for (const auto& l : layers) {
    if (l.kind == LayerKind::Conv2d) ops.push_back({{"conv", {l.kernel, l.stride, l.out_channels}}});
    if (l.kind == LayerKind::MaxPool) ops.push_back({{"pool", {l.kernel, l.stride}}});
  }
  return ops;
}

}  // namespace config_detail

/// Paths inside a config are relative to the config file's directory.
inline std::string resolve_path(const std::string& base_dir, const std::string& p) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path.lexically_normal().string();
  return (std::filesystem::path(base_dir) / path).lexically_normal().string();
}

inline ModalityConfig modality_from_json(const Json& j, const std::string& base_dir = {}) {
  using config_detail::get_or;
  ModalityConfig m;
  m.name = get_or<std::string>(j, "name", "");
  m.raster_ref = resolve_path(base_dir, get_or<std::string>(j, "raster", ""));
  m.pixel_km = get_or<double>(j, "pixel_km", 1.0);
  m.bands = get_or<int>(j, "bands", 1);
  m.scales = get_or<std::vector<int>>(j, "scales", {});
  m.branch_width = get_or<int>(j, "branch_width", 256);
  m.head_width = get_or<int>(j, "head_width", 512);
  const Json enc = j.contains("encoder") ? j.at("encoder") : Json::object();
  const std::string preset = get_or<std::string>(enc, "preset", "");
  if (preset == "bioclim") {
    m.encoder = pointwise_encoder(m.bands, {64, 128, 256, 256});
  } else if (preset == "satellite") {
    m.encoder = build_encoder(m.bands, satellite_encoder_ops());
  } else if (!preset.empty()) {
    throw ConfigError("unknown encoder preset '" + preset + "'");
  } else if (enc.contains("pointwise")) {
    m.encoder = pointwise_encoder(m.bands, enc.at("pointwise").get<std::vector<int>>());
  } else {
    m.encoder = build_encoder(m.bands, config_detail::encoder_ops_from_json(get_or<Json>(enc, "ops", Json::array())));
  }
  const auto rf = rf_symbolic(m.encoder);
  m.encoder_rf = get_or<int>(enc, "rf", rf.rf);
  m.encoder_jump = get_or<int>(enc, "jump", rf.jump);
  return m;
}

inline Json modality_to_json(const ModalityConfig& m) {
  return Json{{"name", m.name},
              {"raster", m.raster_ref},
              {"pixel_km", m.pixel_km},
              {"bands", m.bands},
              {"scales", m.scales},
              {"branch_width", m.branch_width},
              {"head_width", m.head_width},
              {"encoder",
               {{"ops", config_detail::encoder_to_json(m.encoder)}, {"rf", m.encoder_rf}, {"jump", m.encoder_jump}}}};
}

inline ModelConfig model_config_from_json(const Json& j, const std::string& base_dir = {}) {
  using config_detail::get_or;
  ModelConfig c;
  c.seed = get_or<std::uint64_t>(j, "seed", 0);
  c.species_count = get_or<int>(j, "species_count", 1);
  c.projection_dim = get_or<int>(j, "projection_dim", 1024);
  if (!j.contains("modalities")) throw ConfigError("model config needs 'modalities'");
  for (const auto& m : j.at("modalities")) c.modalities.push_back(modality_from_json(m, base_dir));
  return c;
}

inline Json model_config_to_json(const ModelConfig& c) {
  Json mods = Json::array();
  for (const auto& m : c.modalities) mods.push_back(modality_to_json(m));
  return Json{{"seed", c.seed}, {"species_count", c.species_count}, {"projection_dim", c.projection_dim}, {"modalities", mods}};
}

inline TrainConfig train_config_from_json(const Json& j) {
  using config_detail::get_or;
  TrainConfig t;
  t.epochs = get_or<int>(j, "epochs", t.epochs);
  t.batch_size = get_or<int>(j, "batch_size", t.batch_size);
  t.sgd.learning_rate = get_or<double>(j, "learning_rate", t.sgd.learning_rate);
  t.sgd.weight_decay = get_or<double>(j, "weight_decay", t.sgd.weight_decay);
  t.sgd.seed = get_or<std::uint64_t>(j, "seed", t.sgd.seed);
  if (j.contains("pos_weight") && !j.at("pos_weight").is_null()) t.pos_weight = j.at("pos_weight").get<double>();
  t.shuffle_seed = get_or<std::uint64_t>(j, "shuffle_seed", t.shuffle_seed);
  t.validate_each_epoch = get_or<bool>(j, "validate_each_epoch", t.validate_each_epoch);
  t.keep_epoch_checkpoints = get_or<bool>(j, "keep_epoch_checkpoints", t.keep_epoch_checkpoints);
  t.validate();
  return t;
}

inline Json train_config_to_json(const TrainConfig& t) {
  return Json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.sgd.learning_rate},
              {"weight_decay", t.sgd.weight_decay},
              {"seed", t.sgd.seed},
              {"pos_weight", t.pos_weight ? Json(*t.pos_weight) : Json(nullptr)},
              {"shuffle_seed", t.shuffle_seed},
              {"validate_each_epoch", t.validate_each_epoch},
              {"keep_epoch_checkpoints", t.keep_epoch_checkpoints}};
}

inline Json load_json(const std::string& path) {
  try {
    return Json::parse(text::read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
}

/// Applies a `a.b.0.c=value` override; the value is parsed as JSON when it
/// is valid JSON and taken as a string otherwise.
inline void apply_override(Json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  Json* node = &root;
  const auto parts = text::split(key, '.');
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& part = parts[i];
    const bool last = i + 1 == parts.size();
    if (node->is_array()) {
      const auto idx = static_cast<std::size_t>(text::parse_int(part, "override index"));
      if (idx >= node->size()) throw ConfigError("override index out of range in '" + key + "'");
      node = &(*node)[idx];
    } else {
      if (!node->is_object() && !node->is_null()) throw ConfigError("override path '" + key + "' is not an object");
      node = &(*node)[part];
    }
    if (last) *node = value;
  }
}

}  // namespace msdm
