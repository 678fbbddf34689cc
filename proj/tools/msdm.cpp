// msdm: command-line entry point.
//
//   msdm synth    CONFIG [--out DIR]
//   msdm plan     CONFIG
//   msdm train    CONFIG [--out DIR] [--resume]
//   msdm evaluate --checkpoint CKPT --pa CSV [--species CSV] [--po CSV] --out DIR
//   msdm ablate   CONFIG [--out DIR]
//   msdm compare  --a DIR --b DIR --out DIR
//   msdm predict  --checkpoint CKPT --lon X --lat Y [--k 25] [--species CSV]
//
// Every config-taking command accepts repeated `--set key=value` overrides.
// Exit codes: 0 ok, 1 usage/config, 2 data, 3 numerical.

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msdm/checkpoint.hpp"
#include "msdm/experiment.hpp"

namespace fs = std::filesystem;
using namespace msdm;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericalError("SHA-256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

Json digests(const std::vector<std::string>& paths) {
  Json arr = Json::array();
  for (const auto& p : paths) arr.push_back({{"path", p}, {"sha256", sha256_hex(text::read_file(p))}});
  return arr;
}

int worker_threads() {
  const char* env = std::getenv("MSDM_THREADS");
  if (!env || !*env) return 1;
  const long long n = text::parse_int(env, "MSDM_THREADS");
  if (n < 1) throw ConfigError("MSDM_THREADS must be >= 1");
  return static_cast<int>(n);
}

struct LoadedConfig {
  Json json;
  std::string dir;  // absolute directory of the config file
  std::string path;
};

LoadedConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  if (!fs::exists(path)) throw ConfigError("config not found: " + path);
  LoadedConfig c;
  c.path = fs::absolute(path).lexically_normal().string();
  c.dir = fs::path(c.path).parent_path().string();
  c.json = load_json(path);
  for (const auto& o : overrides) apply_override(c.json, o);
  return c;
}

/// Output directories given on the command line are relative to the working
/// directory; those inside a config are relative to the config file.
std::string out_dir(const std::string& flag, const LoadedConfig& cfg, const std::string& fallback) {
  if (!flag.empty()) return fs::absolute(flag).lexically_normal().string();
  const std::string p = cfg.json.value("out", fallback);
  return resolve_path(cfg.dir, p);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir);
}

class Manifest {
 public:
  explicit Manifest(std::string command) : start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["version"] = kVersion;
    j_["threads"] = worker_threads();
    j_["inputs"] = Json::array();
    j_["outputs"] = Json::array();
  }
  Json& operator[](const char* key) { return j_[key]; }
  void inputs(const std::vector<std::string>& paths) {
    for (auto& d : digests(paths)) j_["inputs"].push_back(d);
  }
  void outputs(const std::vector<std::string>& paths) {
    for (auto& d : digests(paths)) j_["outputs"].push_back(d);
  }
  void write(const std::string& dir) {
    j_["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    text::write_file(dir + "/manifest.json", j_.dump(2) + "\n");
  }

 private:
  Json j_;
  std::chrono::steady_clock::time_point start_;
};

Json run_config_echo(const RunConfig& r) {
  return Json{{"model", model_config_to_json(r.model)},
              {"train", train_config_to_json(r.train)},
              {"po", r.po_path},
              {"pa", r.pa_path},
              {"species", r.species_path},
              {"out", r.out_dir}};
}

std::vector<std::string> run_inputs(const RunConfig& r) {
  std::vector<std::string> in{r.species_path, r.po_path, r.pa_path};
  for (const auto& m : r.model.modalities)
    if (std::find(in.begin(), in.end(), m.raster_ref) == in.end()) in.push_back(m.raster_ref);
  return in;
}

// --- history.csv -----------------------------------------------------------

std::string history_csv(const std::vector<EpochRecord>& h) {
  std::string out = "epoch,mean_loss,val_median_auc,val_site_f1_mean,skipped,consumed\n";
  for (const auto& e : h) {
    out += std::to_string(e.epoch) + "," + text::fmt(e.mean_loss) + "," +
           (e.val_median_auc ? text::fmt(*e.val_median_auc) : "NA") + "," +
           (e.val_site_f1_mean ? text::fmt(*e.val_site_f1_mean) : "NA") + "," + std::to_string(e.skipped) + "," +
           std::to_string(e.consumed) + "\n";
  }
  return out;
}

std::vector<EpochRecord> read_history(const std::string& path) {
  const auto lines = text::read_lines(path);
  if (lines.empty()) throw DataError(path + ": empty history");
  std::vector<EpochRecord> h;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = text::split(lines[i], ',');
    if (f.size() != 6) throw DataError(path + ": malformed line " + std::to_string(i + 1));
    EpochRecord e;
    e.epoch = static_cast<int>(text::parse_int(f[0], "epoch"));
    e.mean_loss = text::parse_double(f[1], "mean_loss");
    if (f[2] != "NA") e.val_median_auc = text::parse_double(f[2], "val_median_auc");
    if (f[3] != "NA") e.val_site_f1_mean = text::parse_double(f[3], "val_site_f1_mean");
    e.skipped = static_cast<int>(text::parse_int(f[4], "skipped"));
    e.consumed = static_cast<int>(text::parse_int(f[5], "consumed"));
    h.push_back(e);
  }
  return h;
}

// --- commands ----------------------------------------------------------------

int cmd_synth(const std::string& config_path, const std::vector<std::string>& sets, const std::string& out_flag) {
  const auto cfg = load_config(config_path, sets);
  const SynthConfig sc = synth_config_from_json(cfg.json);
  const std::string out = out_dir(out_flag, cfg, "data");
  ensure_dir(out);
  Manifest man("synth");
  man["config"] = cfg.json;
  man.inputs({cfg.path});
  man["seeds"] = {{"world", sc.world.seed}, {"sampling", sc.sampling.seed}};
  const World world = gen_world(sc.world);
  const SampledData data = sample_occurrences(world, sc.species, sc.sampling);
  man.outputs(write_dataset(out, world, data, sc));
  man["counts"] = {{"species", data.species.size()},
                   {"po_records", data.po_raw.size()},
                   {"po_sites", data.po.size()},
                   {"pa_sites", data.pa.size()},
                   {"coarse", {world.coarse.bands, world.coarse.height, world.coarse.width}},
                   {"fine", {world.fine.bands, world.fine.height, world.fine.width}}};
  man.write(out);
  std::printf("wrote %s: %zu species, %zu PO sites (%zu records), %zu PA sites\n", out.c_str(), data.species.size(),
              data.po.size(), data.po_raw.size(), data.pa.size());
  return 0;
}

int cmd_plan(const std::string& config_path, const std::vector<std::string>& sets) {
  const auto cfg = load_config(config_path, sets);
  const Json& mj = cfg.json.contains("model") ? cfg.json.at("model") : cfg.json;
  const ModelConfig model = model_config_from_json(mj, cfg.dir);
  if (model.modalities.empty()) throw ConfigError("no modalities in " + config_path);
  std::string table = "modality,scale,rf,jump,patch,side_km,area_km2\n", details;
  for (const auto& m : model.modalities) {
    const auto enc = rf_symbolic(m.encoder);
    if (enc.rf != m.encoder_rf || enc.jump != m.encoder_jump) m.validate();  // reports the mismatch
    details += m.name + ": encoder rf " + std::to_string(enc.rf) + " jump " + std::to_string(enc.jump) +
               ", patch " + std::to_string(required_patch_size(m)) + "\n";
    for (int s : m.scales) {
      const BranchPlan plan = plan_branch(m.encoder_rf, m.encoder_jump, s, m.encoder_channels(), m.branch_width,
                                          m.head_width, m.name);
      const Footprint fp = footprint(s, m.pixel_km);
      table += m.name + "," + std::to_string(s) + "," + std::to_string(plan.proven.rf) + "," +
               std::to_string(plan.proven.jump) + "," + std::to_string(required_patch_size(m)) + "," +
               text::fixed(round_decimals(fp.side_km, 2), 2) + "," + text::fixed(round_decimals(fp.area_km2, 2), 2) + "\n";
      details += "  scale " + std::to_string(s) + ":";
      for (const auto& l : plan.layers) details += " " + l.describe();
      details += "\n";
    }
  }
  std::fputs(table.c_str(), stdout);
  std::fputs(details.c_str(), stdout);
  return 0;
}

RunConfig resolve_run(const LoadedConfig& cfg, const std::string& out_flag) {
  RunConfig run = run_config_from_json(cfg.json, cfg.dir);
  if (!out_flag.empty()) run.out_dir = fs::absolute(out_flag).lexically_normal().string();
  return run;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets, const std::string& out_flag,
              bool resume) {
  const auto cfg = load_config(config_path, sets);
  RunConfig run = resolve_run(cfg, out_flag);
  const LoadedData data = load_run_data(run);
  ensure_dir(run.out_dir);
  const std::string ckpt_dir = run.out_dir + "/checkpoints";
  Manifest man("train");
  man["config"] = run_config_echo(run);
  man["seeds"] = {{"model", run.model.seed}, {"shuffle", run.train.shuffle_seed}};
  man.inputs(run_inputs(run));

  Model model(run.model);
  ResumeState state;
  if (resume) {
    auto loaded = read_checkpoint(ckpt_dir + "/last.ckpt");
    if (model_config_to_json(loaded.model.config()) != model_config_to_json(run.model)) {
      throw ConfigError("checkpoint was written for a different model config");
    }
    model = std::move(loaded.model);
    state.completed_epochs = loaded.info.epoch;
    state.step = loaded.info.step;
    for (const auto& e : read_history(run.out_dir + "/history.csv"))
      if (e.epoch <= state.completed_epochs) state.history.push_back(e);
    if (static_cast<int>(state.history.size()) != state.completed_epochs) {
      throw DataError("history.csv does not cover the checkpointed epochs");
    }
  }
  const auto rasters = data.for_model(run.model);
  TrainHooks hooks;
  hooks.checkpoint_dir = ckpt_dir;
  std::vector<EpochRecord> history = state.history;
  hooks.on_epoch = [&](const EpochRecord& e) {
    history.push_back(e);
    text::write_file(run.out_dir + "/history.csv", history_csv(history));
    std::fprintf(stderr, "epoch %d/%d loss %.6f val_auc %s skipped %d\n", e.epoch, run.train.epochs, e.mean_loss,
                 e.val_median_auc ? text::fixed(*e.val_median_auc, 4).c_str() : "NA", e.skipped);
  };
  const TrainResult res = train(model, data.po, rasters, run.train, &data.pa, hooks, state);
  text::write_file(run.out_dir + "/history.csv", history_csv(res.history));

  const std::string eval_dir = run.out_dir + "/eval";
  ensure_dir(eval_dir);
  const EvalReport report = evaluate(model, data.pa, rasters, &data.po);
  std::vector<std::string> outputs{run.out_dir + "/history.csv", ckpt_dir + "/last.ckpt"};
  if (fs::exists(ckpt_dir + "/best.ckpt")) outputs.push_back(ckpt_dir + "/best.ckpt");
  for (const auto& p : write_report(eval_dir, report)) outputs.push_back(p);
  man.outputs(outputs);
  man["pos_weight"] = res.pos_weight;
  man["counts"] = {{"po_sites", data.po.size()},
                   {"pa_sites", data.pa.size()},
                   {"skipped_last_epoch", res.history.empty() ? 0 : res.history.back().skipped},
                   {"pa_excluded", report.sites_excluded}};
  man["best_epoch"] = res.best_epoch;
  man["final"] = {{"median_auc", report.median_auc ? Json(*report.median_auc) : Json(nullptr)},
                  {"site_f1_mean", report.site_f1_mean}};
  man.write(run.out_dir);
  std::printf("median_auc %s site_f1_mean %s\n", metrics_detail::opt(report.median_auc).c_str(),
              text::fmt(report.site_f1_mean).c_str());
  return 0;
}

std::vector<std::string> default_species_path(const std::string& species, const std::string& table) {
  if (!species.empty()) return {species};
  return {(fs::path(table).parent_path() / "species.csv").string()};
}

int cmd_evaluate(const std::string& ckpt, const std::string& pa_path, const std::string& species_flag,
                 const std::string& po_path, const std::string& out) {
  auto loaded = read_checkpoint(ckpt);
  const std::string species_path = default_species_path(species_flag, pa_path)[0];
  const auto species = read_species_list(species_path);
  if (species.size() != static_cast<std::size_t>(loaded.model.config().species_count)) {
    throw MismatchedUniverse("checkpoint predicts " + std::to_string(loaded.model.config().species_count) +
                             " species, list has " + std::to_string(species.size()));
  }
  const OccurrenceTable pa = read_pa_csv(pa_path, species);
  std::optional<OccurrenceTable> po;
  if (!po_path.empty()) po = merge_po_records(read_po_csv(po_path), species);
  std::vector<GeoRaster> owned;
  std::vector<std::string> inputs{ckpt, species_path, pa_path};
  if (po) inputs.push_back(po_path);
  for (const auto& m : loaded.model.config().modalities) {
    owned.push_back(read_grb1(m.raster_ref));
    if (!owned.back().band_stats) compute_band_stats(owned.back());
    inputs.push_back(m.raster_ref);
  }
  std::vector<const GeoRaster*> rasters;
  for (const auto& r : owned) rasters.push_back(&r);
  ensure_dir(out);
  Manifest man("evaluate");
  man.inputs(inputs);
  const EvalReport report = evaluate(loaded.model, pa, rasters, po ? &*po : nullptr);
  man.outputs(write_report(out, report));
  man["counts"] = {{"sites", report.sites.size()},
                   {"sites_excluded", report.sites_excluded},
                   {"species_excluded", report.species_excluded}};
  man.write(out);
  if (report.sites_excluded > 0) std::fprintf(stderr, "excluded %d sites (patch extraction failed)\n", report.sites_excluded);
  std::printf("median_auc %s site_f1_mean %s\n", metrics_detail::opt(report.median_auc).c_str(),
              text::fmt(report.site_f1_mean).c_str());
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const DataError*>(&e)) return 2;
  return 1;
}

int cmd_ablate(const std::string& config_path, const std::vector<std::string>& sets, const std::string& out_flag) {
  const auto cfg = load_config(config_path, sets);
  const std::string out = out_dir(out_flag, cfg, "ablate");
  ensure_dir(out);
  Json base;
  std::string base_dir = cfg.dir;
  if (!cfg.json.contains("base")) throw ConfigError("sweep config needs 'base'");
  if (cfg.json.at("base").is_string()) {
    const std::string p = resolve_path(cfg.dir, cfg.json.at("base").get<std::string>());
    base = load_json(p);
    base_dir = fs::path(p).parent_path().string();
  } else {
    base = cfg.json.at("base");
  }
  // sweep-wide overrides, applied before each variant's own
  if (cfg.json.contains("set")) {
    for (const auto& [key, value] : cfg.json.at("set").items()) apply_override(base, key + "=" + value.dump());
  }
  if (!cfg.json.contains("variants") || cfg.json.at("variants").empty()) throw ConfigError("sweep config needs 'variants'");
  std::vector<std::uint64_t> seeds;
  if (cfg.json.contains("seeds")) seeds = cfg.json.at("seeds").get<std::vector<std::uint64_t>>();

  Manifest man("ablate");
  man["config"] = cfg.json;
  man.inputs({cfg.path});
  std::string csv = "name,seed,scales,median_auc,site_f1_mean,runtime_s,status\n";
  int first_failure = 0;
  int rows = 0;
  std::optional<LoadedData> cache;
  std::string cache_key;
  const std::vector<std::optional<std::uint64_t>> seed_list =
      seeds.empty() ? std::vector<std::optional<std::uint64_t>>{std::nullopt}
                    : std::vector<std::optional<std::uint64_t>>(seeds.begin(), seeds.end());
  for (const auto& variant : cfg.json.at("variants")) {
    const std::string name = variant.value("name", "row" + std::to_string(rows));
    for (const auto& seed : seed_list) {
      ++rows;
      std::string scales = "", status = "ok", auc = "NA", f1 = "NA", runtime = "NA";
      try {
        Json j = base;
        if (variant.contains("set")) {
          for (const auto& [key, value] : variant.at("set").items()) apply_override(j, key + "=" + value.dump());
        }
        if (seed) {
          apply_override(j, "model.seed=" + std::to_string(*seed));
          apply_override(j, "train.shuffle_seed=" + std::to_string(*seed));
        }
        RunConfig run = run_config_from_json(j, base_dir);
        scales = scales_label(run.model);
        // variants usually share the dataset; reload only when inputs change
        Json key = Json::array({run.po_path, run.pa_path, run.species_path});
        for (const auto& m : run.model.modalities) key.push_back(m.raster_ref);
        if (!cache || cache_key != key.dump()) {
          cache = load_run_data(run);
          cache_key = key.dump();
          for (const auto& d : digests(run_inputs(run))) man["inputs"].push_back(d);
        }
        run.model.species_count = static_cast<int>(cache->species.size());
        LoadedData* data = &*cache;
        for (const auto& m : run.model.modalities) {
          if (!data->rasters.count(m.raster_ref)) {
            GeoRaster r = read_grb1(m.raster_ref);
            if (!r.band_stats) compute_band_stats(r);
            data->rasters.emplace(m.raster_ref, std::move(r));
          }
        }
        const RunOutcome o = train_and_evaluate(run, *data);
        auc = metrics_detail::opt(o.report.median_auc);
        f1 = text::fmt(o.report.site_f1_mean);
        runtime = text::fixed(o.runtime_s, 2);
        std::fprintf(stderr, "%s seed %s: median_auc %s site_f1 %s (%.1f s)\n", name.c_str(),
                     seed ? std::to_string(*seed).c_str() : "-", auc.c_str(), f1.c_str(), o.runtime_s);
      } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        status = "failed: " + msg;
        if (!first_failure) first_failure = exit_code_for(e);
        std::fprintf(stderr, "%s failed: %s\n", name.c_str(), e.what());
      }
      csv += name + "," + (seed ? std::to_string(*seed) : "") + "," + scales + "," + auc + "," + f1 + "," + runtime +
             "," + status + "\n";
      text::write_file(out + "/ablation.csv", csv);
    }
  }
  man.outputs({out + "/ablation.csv"});
  man["counts"] = {{"rows", rows}};
  man.write(out);
  std::fputs(csv.c_str(), stdout);
  return first_failure;
}

int cmd_compare(const std::string& a_dir, const std::string& b_dir, const std::string& out) {
  const EvalReport a = read_report(a_dir), b = read_report(b_dir);
  const DeltaTable d = compare(a, b);
  ensure_dir(out);
  Manifest man("compare");
  man.inputs({a_dir + "/species_metrics.csv", a_dir + "/site_metrics.csv", b_dir + "/species_metrics.csv",
              b_dir + "/site_metrics.csv"});
  text::write_file(out + "/delta_species.csv", delta_species_csv(d));
  text::write_file(out + "/delta_sites.csv", delta_sites_csv(d));
  man.outputs({out + "/delta_species.csv", out + "/delta_sites.csv"});
  man["counts"] = {{"species", d.species.size()}, {"sites", d.sites.size()}};
  man.write(out);
  std::printf("delta_median_auc %s delta_site_f1_mean %s\n", metrics_detail::opt(d.delta_median_auc).c_str(),
              text::fmt(d.delta_site_f1_mean).c_str());
  return 0;
}

int cmd_predict(const std::string& ckpt, double lon, double lat, int k, const std::string& species_path) {
  if (k < 1) throw ConfigError("--k must be >= 1");
  auto loaded = read_checkpoint(ckpt);
  const ModelConfig& config = loaded.model.config();
  std::vector<std::string> ids;
  if (!species_path.empty()) {
    ids = read_species_list(species_path);
    if (ids.size() != static_cast<std::size_t>(config.species_count)) {
      throw MismatchedUniverse("species list does not match the checkpoint");
    }
  } else {
    for (int i = 0; i < config.species_count; ++i) ids.push_back(std::to_string(i));
  }
  std::vector<Tensor> inputs;
  for (const auto& m : config.modalities) {
    GeoRaster r = read_grb1(m.raster_ref);
    if (!r.band_stats) compute_band_stats(r);
    const int p = required_patch_size(m);
    Tensor t({1, m.bands, p, p});
    const PatchStatus st = extract_patch_into(r, lon, lat, p, t.values);
    if (st == PatchStatus::OutOfBounds) {
      throw OutOfBounds("(" + text::fmt(lon) + ", " + text::fmt(lat) + ") has no " + std::to_string(p) + "x" +
                        std::to_string(p) + " window inside raster '" + m.name + "'");
    }
    if (st != PatchStatus::Ok) throw NodataInWindow("nodata inside the window of raster '" + m.name + "'");
    inputs.push_back(std::move(t));
  }
  const Tensor probs = loaded.model.forward(inputs, Mode::Eval);
  std::vector<int> order(probs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs.values[a] > probs.values[b]; });
  std::printf("rank,species,probability\n");
  for (int i = 0; i < std::min<int>(k, static_cast<int>(order.size())); ++i)
    std::printf("%d,%s,%s\n", i + 1, ids[order[i]].c_str(), text::fmt(probs.values[order[i]]).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale species distribution models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config, out, ckpt, pa, po, species, a_dir, b_dir;
  std::vector<std::string> sets;
  bool resume = false;
  double lon = 0.0, lat = 0.0;
  int k = 25;

  auto* synth = app.add_subcommand("synth", "generate a synthetic world and occurrence tables");
  synth->add_option("config", config, "synth config (JSON)")->required();
  synth->add_option("--out", out, "dataset directory");
  synth->add_option("--set", sets, "override key=value")->take_all();

  auto* plan = app.add_subcommand("plan", "print branch plans, receptive fields and footprints");
  plan->add_option("config", config, "run or model config (JSON)")->required();
  plan->add_option("--set", sets, "override key=value")->take_all();

  auto* trn = app.add_subcommand("train", "train a model and evaluate it on the presence-absence table");
  trn->add_option("config", config, "run config (JSON)")->required();
  trn->add_option("--out", out, "run directory");
  trn->add_option("--set", sets, "override key=value")->take_all();
  trn->add_flag("--resume", resume, "continue from <out>/checkpoints/last.ckpt");

  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a presence-absence table");
  ev->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  ev->add_option("--pa", pa, "presence-absence CSV")->required();
  ev->add_option("--species", species, "species list (default: species.csv next to the PA table)");
  ev->add_option("--po", po, "presence-only CSV, for training counts");
  ev->add_option("--out", out, "report directory")->required();

  auto* abl = app.add_subcommand("ablate", "train and evaluate a list of configurations");
  abl->add_option("config", config, "sweep config (JSON)")->required();
  abl->add_option("--out", out, "output directory");
  abl->add_option("--set", sets, "override key=value")->take_all();

  auto* cmp = app.add_subcommand("compare", "per-species and per-site differences between two reports");
  cmp->add_option("--a", a_dir, "report directory of model a")->required();
  cmp->add_option("--b", b_dir, "report directory of model b")->required();
  cmp->add_option("--out", out, "output directory")->required();

  auto* pred = app.add_subcommand("predict", "top-k species at a coordinate");
  pred->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  pred->add_option("--lon", lon, "x coordinate")->required();
  pred->add_option("--lat", lat, "y coordinate")->required();
  pred->add_option("--k", k, "number of species to list")->capture_default_str();
  pred->add_option("--species", species, "species list for ids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    worker_threads();  // validate early
    if (*synth) return cmd_synth(config, sets, out);
    if (*plan) return cmd_plan(config, sets);
    if (*trn) return cmd_train(config, sets, out, resume);
    if (*ev) return cmd_evaluate(ckpt, pa, species, po, out);
    if (*abl) return cmd_ablate(config, sets, out);
    if (*cmp) return cmd_compare(a_dir, b_dir, out);
    if (*pred) return cmd_predict(ckpt, lon, lat, k, species);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  }
  return 1;
}
