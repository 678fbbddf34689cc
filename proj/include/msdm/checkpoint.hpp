#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "msdm/architecture.hpp"
#include "msdm/config.hpp"
#include "msdm/error.hpp"
#include "msdm/text.hpp"

namespace msdm {

/// Checkpoint file: a text manifest (magic, seed, step counter, epoch,
/// one-line model config, one line per tensor: index, layer, kind, name,
/// shape), a blank line, then every tensor's float32 values (little endian)
/// concatenated in manifest order. Batch-norm running statistics are stored
/// as tensors so that resumed runs continue bitwise.
struct CheckpointInfo {
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  int epoch = 0;
};

inline std::string encode_checkpoint(Model& model, const CheckpointInfo& info) {
  auto tensors = model.named_tensors(true);
  std::string h = "MSDM-CHECKPOINT 1\n";
  h += "seed: " + std::to_string(info.seed) + "\n";
  h += "step: " + std::to_string(info.step) + "\n";
  h += "epoch: " + std::to_string(info.epoch) + "\n";
  h += "config: " + model_config_to_json(model.config()).dump() + "\n";
  h += "tensors: " + std::to_string(tensors.size()) + "\n";
  std::size_t total = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    h += std::to_string(i) + " " + t.layer + " " + t.kind + " " + t.name + " " + t.tensor->shape_str() + "\n";
    total += t.tensor->size();
  }
  h += "\n";
  std::string out = h;
  out.resize(h.size() + total * sizeof(float));
  char* dst = out.data() + h.size();
  for (const auto& t : tensors) {
    std::memcpy(dst, t.tensor->data(), t.tensor->size() * sizeof(float));
    dst += t.tensor->size() * sizeof(float);
  }
  return out;
}

struct LoadedCheckpoint {
  Model model;
  CheckpointInfo info;
};

inline LoadedCheckpoint decode_checkpoint(const std::string& bytes) {
  std::size_t pos = 0;
  std::vector<std::string> lines;
  while (true) {
    const auto eol = bytes.find('\n', pos);
    if (eol == std::string::npos) throw DataError("checkpoint: manifest not terminated");
    std::string line = bytes.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) break;
    lines.push_back(std::move(line));
  }
  if (lines.size() < 5 || lines[0] != "MSDM-CHECKPOINT 1") throw DataError("checkpoint: bad magic");
  auto field = [&](std::size_t i, const std::string& key) {
    if (lines[i].rfind(key + ": ", 0) != 0) throw DataError("checkpoint: expected '" + key + "' on line " + std::to_string(i + 1));
    return lines[i].substr(key.size() + 2);
  };
  CheckpointInfo info;
  info.seed = static_cast<std::uint64_t>(std::stoull(field(1, "seed")));
  info.step = text::parse_int(field(2, "step"), "step");
  info.epoch = static_cast<int>(text::parse_int(field(3, "epoch"), "epoch"));
  ModelConfig config;
  try {
    config = model_config_from_json(Json::parse(field(4, "config")));
  } catch (const Json::exception& e) {
    throw DataError(std::string("checkpoint: bad config: ") + e.what());
  }
  const auto count = static_cast<std::size_t>(text::parse_int(field(5, "tensors"), "tensors"));
  Model model(config);
  auto tensors = model.named_tensors(true);
  if (count != tensors.size() || lines.size() != 6 + count) throw DataError("checkpoint: tensor count does not match model");
  for (std::size_t i = 0; i < count; ++i) {
    const auto f = text::split(lines[6 + i], ' ');
    const auto& t = tensors[i];
    if (f.size() != 5 || f[1] != t.layer || f[2] != t.kind || f[3] != t.name || f[4] != t.tensor->shape_str()) {
      throw DataError("checkpoint: tensor " + std::to_string(i) + " does not match model layout");
    }
  }
  std::size_t total = 0;
  for (const auto& t : tensors) total += t.tensor->size();
  if (bytes.size() - pos != total * sizeof(float)) throw DataError("checkpoint: payload size mismatch");
  const char* src = bytes.data() + pos;
  for (const auto& t : tensors) {
    std::memcpy(t.tensor->data(), src, t.tensor->size() * sizeof(float));
    src += t.tensor->size() * sizeof(float);
  }
  return {std::move(model), info};
}

inline void write_checkpoint(const std::string& path, Model& model, const CheckpointInfo& info) {
  text::write_file(path, encode_checkpoint(model, info));
}

inline LoadedCheckpoint read_checkpoint(const std::string& path) { return decode_checkpoint(text::read_file(path)); }

/// Copy of every tensor value, for keeping the best model in memory.
inline std::vector<std::vector<float>> snapshot(Model& model) {
  std::vector<std::vector<float>> out;
  for (const auto& t : model.named_tensors(true)) out.push_back(t.tensor->values);
  return out;
}

inline void restore(Model& model, const std::vector<std::vector<float>>& snap) {
  auto tensors = model.named_tensors(true);
  if (tensors.size() != snap.size()) throw ShapeMismatch("snapshot does not match model");
  for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i].tensor->values = snap[i];
}

}  // namespace msdm
