#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msdm/config.hpp"
#include "msdm/evaluation.hpp"
#include "msdm/synthgen.hpp"
#include "msdm/training.hpp"

namespace msdm {

// ---------------------------------------------------------------------------
// Synthetic dataset configs and directories

struct SynthConfig {
  WorldSpec world;
  std::vector<VirtualSpeciesSpec> species;
  SamplingSpec sampling;
};

namespace experiment_detail {

inline RasterSpec raster_spec_from_json(const Json& j) {
  using config_detail::get_or;
  RasterSpec r;
  r.bands = get_or<int>(j, "bands", r.bands);
  r.height = get_or<int>(j, "height", r.height);
  r.width = get_or<int>(j, "width", r.width);
  r.pixel_km = get_or<double>(j, "pixel_km", r.pixel_km);
  if (j.contains("blur")) {
    const Json& b = j.at("blur");
    r.blur = b.is_array() ? b.get<std::vector<double>>() : std::vector<double>(r.bands, b.get<double>());
  }
  return r;
}

inline Json raster_spec_to_json(const RasterSpec& r) {
  return Json{{"bands", r.bands}, {"height", r.height}, {"width", r.width}, {"pixel_km", r.pixel_km}, {"blur", r.blur}};
}

}  // namespace experiment_detail

inline SynthConfig synth_config_from_json(const Json& j) {
  using config_detail::get_or;
  SynthConfig c;
  try {
    c.world.seed = get_or<std::uint64_t>(j, "seed", 0);
    if (!j.contains("world")) throw ConfigError("synth config needs 'world'");
    c.world.coarse = experiment_detail::raster_spec_from_json(j.at("world").at("coarse"));
    c.world.fine = experiment_detail::raster_spec_from_json(j.at("world").at("fine"));
    c.world.validate();
    if (!j.contains("species") || j.at("species").empty()) throw ConfigError("synth config needs 'species'");
    for (const auto& s : j.at("species")) {
      VirtualSpeciesSpec sp;
      sp.species_id = get_or<std::string>(s, "id", "");
      if (sp.species_id.empty()) throw ConfigError("every species needs an 'id'");
      sp.layer = parse_world_layer(get_or<std::string>(s, "layer", "coarse"));
      sp.band = get_or<int>(s, "band", 0);
      sp.window = get_or<int>(s, "window", 1);
      sp.direction = get_or<int>(s, "direction", 1);
      sp.steepness = get_or<double>(s, "steepness", 1.0);
      sp.prevalence = get_or<double>(s, "prevalence", 0.3);
      sp.standardize = get_or<bool>(s, "standardize", false);
      if (s.contains("offset")) {
        sp.offset = s.at("offset").get<double>();
        sp.calibrate = false;
      }
      c.species.push_back(sp);
    }
    const Json smp = j.contains("sampling") ? j.at("sampling") : Json::object();
    c.sampling.n_po = get_or<int>(smp, "n_po", c.sampling.n_po);
    c.sampling.n_pa = get_or<int>(smp, "n_pa", c.sampling.n_pa);
    c.sampling.seed = get_or<std::uint64_t>(smp, "seed", derive_seed(c.world.seed, 0x5A));
    c.sampling.bias_ratio = get_or<double>(smp, "bias_ratio", c.sampling.bias_ratio);
    c.sampling.bias_grid = get_or<int>(smp, "bias_grid", c.sampling.bias_grid);
    c.sampling.inset_coarse = get_or<int>(smp, "inset_coarse", c.sampling.inset_coarse);
    c.sampling.inset_fine = get_or<int>(smp, "inset_fine", c.sampling.inset_fine);
    c.sampling.calibration_sites = get_or<int>(smp, "calibration_sites", c.sampling.calibration_sites);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  return c;
}

inline Json species_truth_json(const std::vector<VirtualSpeciesSpec>& species) {
  Json arr = Json::array();
  for (const auto& s : species) {
    arr.push_back({{"id", s.species_id},
                   {"layer", to_string(s.layer)},
                   {"band", s.band},
                   {"window", s.window},
                   {"direction", s.direction},
                   {"steepness", s.steepness},
                   {"offset", s.offset},
                   {"prevalence", s.prevalence}});
  }
  return arr;
}

/// Files written by `synth`; rasters are named after the world layer.
struct DatasetFiles {
  std::string dir;
  std::string coarse() const { return dir + "/coarse.grb1"; }
  std::string fine() const { return dir + "/fine.grb1"; }
  std::string po() const { return dir + "/po.csv"; }
  std::string pa() const { return dir + "/pa.csv"; }
  std::string species() const { return dir + "/species.csv"; }
  std::string truth() const { return dir + "/truth.json"; }
};

inline std::vector<std::string> write_dataset(const std::string& dir, const World& world, const SampledData& data,
                                              const SynthConfig& config) {
  std::filesystem::create_directories(dir);
  const DatasetFiles f{dir};
  write_grb1(f.coarse(), world.coarse);
  write_grb1(f.fine(), world.fine);
  text::write_file(f.po(), encode_po_csv(data.po_raw));
  text::write_file(f.pa(), encode_pa_csv(data.pa));
  text::write_file(f.species(), encode_species_list(data.pa.species_ids));
  Json truth{{"seed", config.world.seed},
             {"world", {{"coarse", experiment_detail::raster_spec_to_json(config.world.coarse)},
                        {"fine", experiment_detail::raster_spec_to_json(config.world.fine)}}},
             {"species", species_truth_json(data.species)},
             {"counts", {{"po_sites", data.po.size()}, {"po_records", data.po_raw.size()}, {"pa_sites", data.pa.size()}}}};
  text::write_file(f.truth(), truth.dump(2) + "\n");
  return {f.coarse(), f.fine(), f.po(), f.pa(), f.species(), f.truth()};
}

// ---------------------------------------------------------------------------
// Run configs: data location + model + training

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string po_path;
  std::string pa_path;
  std::string species_path;
  std::string out_dir;
};

/// Resolves a run config. Paths are relative to `base_dir`; with a `data`
/// directory, missing paths default to the files `synth` writes there and a
/// modality without a raster reads `<data>/<name>.grb1`. `use_modalities`
/// keeps a subset of the model's modalities, in the order given.
inline RunConfig run_config_from_json(const Json& j, const std::string& base_dir = {}) {
  using config_detail::get_or;
  RunConfig r;
  try {
    const std::string data = resolve_path(base_dir, get_or<std::string>(j, "data", ""));
    auto path_or = [&](const char* key, const char* file) {
      const std::string p = get_or<std::string>(j, key, "");
      if (!p.empty()) return resolve_path(base_dir, p);
      if (data.empty()) throw ConfigError(std::string("run config needs '") + key + "' or 'data'");
      return data + "/" + file;
    };
    r.po_path = path_or("po", "po.csv");
    r.pa_path = path_or("pa", "pa.csv");
    r.species_path = path_or("species", "species.csv");
    if (!j.contains("model")) throw ConfigError("run config needs 'model'");
    r.model = model_config_from_json(j.at("model"), base_dir);
    if (j.contains("use_modalities")) {
      std::vector<ModalityConfig> kept;
      for (const auto& name : j.at("use_modalities").get<std::vector<std::string>>()) {
        auto it = std::find_if(r.model.modalities.begin(), r.model.modalities.end(),
                               [&](const ModalityConfig& m) { return m.name == name; });
        if (it == r.model.modalities.end()) throw ConfigError("use_modalities: no modality named '" + name + "'");
        kept.push_back(*it);
      }
      if (kept.empty()) throw ConfigError("use_modalities must name at least one modality");
      r.model.modalities = std::move(kept);
    }
    for (auto& m : r.model.modalities) {
      if (!m.raster_ref.empty()) continue;
      if (data.empty()) throw ConfigError("modality '" + m.name + "' needs a raster path");
      m.raster_ref = data + "/" + m.name + ".grb1";
    }
    r.train = train_config_from_json(j.contains("train") ? j.at("train") : Json::object());
    r.out_dir = resolve_path(base_dir, get_or<std::string>(j, "out", "run"));
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return r;
}

struct LoadedData {
  std::vector<std::string> species;
  OccurrenceTable po;
  OccurrenceTable pa;
  std::map<std::string, GeoRaster> rasters;  // by path

  std::vector<const GeoRaster*> for_model(const ModelConfig& config) const {
    std::vector<const GeoRaster*> out;
    for (const auto& m : config.modalities) out.push_back(&rasters.at(m.raster_ref));
    return out;
  }
};

/// Reads tables and every raster the model needs; the model's species count
/// is set from the species list.
inline LoadedData load_run_data(RunConfig& run) {
  LoadedData d;
  d.species = read_species_list(run.species_path);
  d.po = merge_po_records(read_po_csv(run.po_path), d.species);
  d.pa = read_pa_csv(run.pa_path, d.species);
  for (const auto& m : run.model.modalities) {
    if (!d.rasters.count(m.raster_ref)) {
      GeoRaster r = read_grb1(m.raster_ref);
      if (!r.band_stats) compute_band_stats(r);
      d.rasters.emplace(m.raster_ref, std::move(r));
    }
  }
  run.model.species_count = static_cast<int>(d.species.size());
  return d;
}

// ---------------------------------------------------------------------------
// One train + evaluate cycle

struct RunOutcome {
  TrainResult train;
  EvalReport report;  // final-epoch model on the presence-absence table
  double runtime_s = 0.0;
};

/// Trains a fresh model and evaluates the final epoch. Validation during
/// training only selects best.ckpt; the reported numbers never use it.
inline RunOutcome train_and_evaluate(const RunConfig& run, const LoadedData& data, const TrainHooks& hooks = {},
                                     Model* out_model = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  Model model(run.model);
  const auto rasters = data.for_model(run.model);
  RunOutcome o;
  o.train = train(model, data.po, rasters, run.train, &data.pa, hooks);
  o.report = evaluate(model, data.pa, rasters, &data.po);
  o.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (out_model) *out_model = std::move(model);
  return o;
}

/// "coarse:1/5/9 fine:25" style label for the scales of a model.
inline std::string scales_label(const ModelConfig& config) {
  std::string s;
  for (const auto& m : config.modalities) {
    if (!s.empty()) s += ' ';
    s += m.name + ':';
    for (std::size_t i = 0; i < m.scales.size(); ++i) s += (i ? "/" : "") + std::to_string(m.scales[i]);
  }
  return s;
}

}  // namespace msdm
