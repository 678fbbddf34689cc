#include <gtest/gtest.h>

#include <filesystem>

#include "msdm/experiment.hpp"

namespace fs = std::filesystem;
using namespace msdm;

namespace {

Json tiny_synth() {
  return Json::parse(R"({
    "seed": 3,
    "world": {"coarse": {"bands": 2, "height": 24, "width": 24, "pixel_km": 0.6, "blur": [1.0, 0.0]},
              "fine": {"bands": 1, "height": 72, "width": 72, "pixel_km": 0.2, "blur": 1.0}},
    "species": [{"id": "a", "layer": "coarse", "window": 3},
                {"id": "b", "layer": "fine", "window": 5, "direction": -1, "offset": 0.25}],
    "sampling": {"n_po": 80, "n_pa": 36}})");
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::current_path() / "experiment_tests" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(SynthConfig, ParsesWorldSpeciesAndSampling) {
  const SynthConfig c = synth_config_from_json(tiny_synth());
  EXPECT_EQ(c.world.coarse.blur, (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(c.world.fine.blur, (std::vector<double>{1.0}));
  ASSERT_EQ(c.species.size(), 2u);
  EXPECT_TRUE(c.species[0].calibrate);
  EXPECT_FALSE(c.species[1].calibrate);
  EXPECT_EQ(c.species[1].offset, 0.25);
  EXPECT_EQ(c.species[1].direction, -1);
  EXPECT_EQ(c.sampling.n_po, 80);
  EXPECT_EQ(c.sampling.seed, derive_seed(3, 0x5A));
}

TEST(SynthConfig, Errors) {
  Json j = tiny_synth();
  j.erase("world");
  EXPECT_THROW(synth_config_from_json(j), ConfigError);
  j = tiny_synth();
  j["species"][0].erase("id");
  EXPECT_THROW(synth_config_from_json(j), ConfigError);
  j = tiny_synth();
  j["species"][0]["layer"] = "medium";
  EXPECT_THROW(synth_config_from_json(j), ConfigError);
  j = tiny_synth();
  j["world"]["fine"]["height"] = 71;
  EXPECT_THROW(synth_config_from_json(j), ConfigError);
}

TEST(RunConfig, DataDirectorySuppliesDefaults) {
  const Json j = Json::parse(R"({"data": "d", "out": "o",
      "model": {"modalities": [{"name": "coarse", "bands": 2, "scales": [1, 3], "encoder": {"pointwise": [4]}},
                               {"name": "fine", "raster": "elsewhere/f.grb1", "scales": [3]}]},
      "train": {"epochs": 2}})");
  const RunConfig r = run_config_from_json(j, "/base");
  EXPECT_EQ(r.po_path, "/base/d/po.csv");
  EXPECT_EQ(r.pa_path, "/base/d/pa.csv");
  EXPECT_EQ(r.species_path, "/base/d/species.csv");
  EXPECT_EQ(r.model.modalities[0].raster_ref, "/base/d/coarse.grb1");
  EXPECT_EQ(r.model.modalities[1].raster_ref, "/base/elsewhere/f.grb1");
  EXPECT_EQ(r.out_dir, "/base/o");
  EXPECT_EQ(r.train.epochs, 2);
  EXPECT_EQ(scales_label(r.model), "coarse:1/3 fine:3");
}

TEST(RunConfig, ModalitySubsetAndErrors) {
  Json j = Json::parse(R"({"data": "d",
      "model": {"modalities": [{"name": "coarse", "scales": [1]}, {"name": "fine", "scales": [3]}]}})");
  j["use_modalities"] = {"fine"};
  const RunConfig r = run_config_from_json(j, "/b");
  ASSERT_EQ(r.model.modalities.size(), 1u);
  EXPECT_EQ(r.model.modalities[0].name, "fine");
  j["use_modalities"] = {"radar"};
  EXPECT_THROW(run_config_from_json(j, "/b"), ConfigError);
  j["use_modalities"] = Json::array();
  EXPECT_THROW(run_config_from_json(j, "/b"), ConfigError);
  Json nodata = j;
  nodata.erase("data");
  nodata.erase("use_modalities");
  EXPECT_THROW(run_config_from_json(nodata, "/b"), ConfigError);
  Json nomodel = j;
  nomodel.erase("model");
  EXPECT_THROW(run_config_from_json(nomodel, "/b"), ConfigError);
}

TEST(Dataset, WrittenFilesLoadBackForTraining) {
  const SynthConfig c = synth_config_from_json(tiny_synth());
  const World world = gen_world(c.world);
  const SampledData data = sample_occurrences(world, c.species, c.sampling);
  const fs::path dir = scratch("dataset");
  const auto files = write_dataset(dir.string(), world, data, c);
  EXPECT_EQ(files.size(), 6u);
  for (const auto& f : files) EXPECT_TRUE(fs::exists(f)) << f;

  const Json j = Json::parse(R"({"data": "dataset",
      "model": {"seed": 2, "projection_dim": 4, "modalities": [
        {"name": "coarse", "bands": 2, "scales": [1, 3], "encoder": {"pointwise": [3]}, "branch_width": 3, "head_width": 4},
        {"name": "fine", "bands": 1, "scales": [5], "encoder": {"ops": [{"conv": [3, 1, 2]}]}, "branch_width": 2, "head_width": 4}]},
      "train": {"epochs": 2, "batch_size": 16}})");
  RunConfig run = run_config_from_json(j, dir.parent_path().string());
  const LoadedData loaded = load_run_data(run);
  EXPECT_EQ(run.model.species_count, 2);
  EXPECT_EQ(loaded.po.size(), data.po.size());
  EXPECT_EQ(loaded.pa.size(), 36u);
  EXPECT_EQ(encode_pa_csv(loaded.pa), encode_pa_csv(data.pa));
  EXPECT_EQ(loaded.rasters.at(run.model.modalities[0].raster_ref).data, world.coarse.data);

  const Json truth = Json::parse(text::read_file(DatasetFiles{dir.string()}.truth()));
  EXPECT_EQ(truth.at("species").at(1).at("offset"), 0.25);
  EXPECT_EQ(truth.at("counts").at("pa_sites"), 36);

  const RunOutcome a = train_and_evaluate(run, loaded), b = train_and_evaluate(run, loaded);
  ASSERT_EQ(a.train.history.size(), 2u);
  EXPECT_EQ(a.train.history.back().mean_loss, b.train.history.back().mean_loss);
  EXPECT_EQ(a.report.per_species_auc, b.report.per_species_auc);
  EXPECT_EQ(a.report.sites.size(), 36u);
}
