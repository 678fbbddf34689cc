// Acceptance suite: `acceptance --criterion N` prints detail lines and one
// PASS/FAIL line for criterion N; without arguments every criterion runs.
// The exit status is 0 whenever the checks ran, also on FAIL; it is nonzero
// only when a criterion could not be evaluated.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "msdm/experiment.hpp"
#include "msdm/metrics.hpp"

#ifndef MSDM_CLI_PATH
#error "MSDM_CLI_PATH must point at the msdm binary"
#endif
#ifndef MSDM_SOURCE_DIR
#error "MSDM_SOURCE_DIR must point at the source tree"
#endif

namespace fs = std::filesystem;
using namespace msdm;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void detail(const std::string& s) {
  std::printf("  %s\n", s.c_str());
  std::fflush(stdout);
}

bool verdict(int n, bool ok, const std::string& summary) {
  std::printf("criterion %d: %s %s\n", n, ok ? "PASS" : "FAIL", summary.c_str());
  std::fflush(stdout);
  return ok;
}

std::string src(const std::string& rel) { return std::string(MSDM_SOURCE_DIR) + "/" + rel; }

fs::path workdir(const std::string& name) {
  const fs::path d = fs::current_path() / "acceptance_work" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

/// Runs the CLI with stdout/stderr captured to `log`; returns the exit code.
int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + MSDM_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc == -1 || !WIFEXITED(rc)) return -1;
  return WEXITSTATUS(rc);
}

std::string f4(double v) { return text::fixed(v, 4); }

// --- 1. receptive-field exactness ------------------------------------------

bool criterion_rf() {
  const auto t0 = Clock::now();
  bool ok = true;
  auto check = [&](const std::string& label, const std::vector<LayerSpec>& encoder, int enc_rf, int enc_jump,
                   int bands, int target, bool counts) {
    ModalityConfig m;
    m.name = label;
    m.bands = bands;
    m.encoder = encoder;
    m.encoder_rf = enc_rf;
    m.encoder_jump = enc_jump;
    m.scales = {target};
    m.branch_width = 4;
    m.head_width = 4;
    try {
      Model model(ModelConfig{{m}, 2, 4, 1});
      const auto& plan = model.streams()[0].branches[0].plan;
      std::vector<LayerSpec> stack = encoder;
      stack.insert(stack.end(), plan.layers.begin(), plan.layers.end());
      const int symbolic = rf_symbolic(stack).rf;
      const int verified = rf_verify(model, 0, 0);
      const bool good = symbolic == target && verified == target;
      if (counts) ok = ok && good;
      detail(label + " scale " + std::to_string(target) + ": rf_symbolic " + std::to_string(symbolic) +
             ", rf_verify " + std::to_string(verified) + (good ? "" : "  MISMATCH") + (counts ? "" : "  (info)"));
    } catch (const Unreachable& e) {
      if (counts) ok = false;
      detail(label + " scale " + std::to_string(target) + ": unreachable: " + e.what() + (counts ? "" : "  (info)"));
    }
  };

  const auto coarse = pointwise_encoder(3, {4});
  for (int s : {1, 5, 9, 17, 25}) check("coarse rf1/jump1", coarse, 1, 1, 3, s, true);

  // rf 25 / jump 4: conv3 conv3 pool3s2 conv3 conv3 pool2s2 conv3
  const auto fine = build_encoder(2, {{3, 1, 4}, {3, 1, 4}, {3, 2, 0}, {3, 1, 4}, {3, 1, 4}, {2, 2, 0}, {3, 1, 4}});
  const auto fr = rf_symbolic(fine);
  detail("fine encoder: rf " + std::to_string(fr.rf) + " jump " + std::to_string(fr.jump));
  if (fr.rf != 25 || fr.jump != 4) ok = false;
  for (int s : {25, 59, 115}) check("fine rf25/jump4", fine, 25, 4, 2, s, true);

  // the shipped satellite encoder (rf 25 / jump 2) at narrow width, for reference
  std::vector<EncoderOp> ops = satellite_encoder_ops();
  for (auto& op : ops)
    if (op.channels > 0) op.channels = 4;
  const auto sat = build_encoder(2, ops);
  for (int s : {25, 59, 115}) check("satellite rf25/jump2", sat, 25, 2, 2, s, false);

  const double secs = seconds_since(t0);
  detail("runtime " + text::fixed(secs, 1) + " s (limit 120)");
  return verdict(1, ok && secs < 120.0, "receptive fields");
}

// --- 2. gradient correctness -------------------------------------------------

bool criterion_gradients() {
  const auto t0 = Clock::now();
  bool ok = true;
  long checked = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto r = gradcheck::check_all_kinds(seed);
    for (double pw : {1.0, 3.0}) r.merge(gradcheck::check_loss(derive_seed(seed, 77), pw));
    checked += r.checked;
    if (!r.ok()) {
      ok = false;
      detail("seed " + std::to_string(seed) + ": " + std::to_string(r.failed) + "/" + std::to_string(r.checked) +
             " failed, first: " + r.first_failure);
    }
  }
  detail(std::to_string(checked) + " layer and loss derivatives over 20 seeds, tolerance 1e-3 rel / 1e-5 abs");
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto r = gradcheck::check_model(seed);
    detail("whole model seed " + std::to_string(seed) + ": " + std::to_string(r.checked - r.failed) + "/" +
           std::to_string(r.checked) + " (info)");
  }
  const double secs = seconds_since(t0);
  detail("runtime " + text::fixed(secs, 1) + " s (limit 120)");
  return verdict(2, ok && secs < 120.0, "finite-difference gradients");
}

// --- 3. oracle equivalence ---------------------------------------------------

std::optional<double> pairwise_auc(const std::vector<float>& s, const std::vector<std::uint8_t>& y) {
  long pos = 0, neg = 0, twice = 0;
  for (auto v : y) (v ? pos : neg) += 1;
  if (pos == 0 || neg == 0) return std::nullopt;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] && !y[j]) twice += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
  return static_cast<double>(twice) / static_cast<double>(2 * pos * neg);
}

bool criterion_oracles() {
  Rng rng(303);
  int mismatches = 0, defined = 0, with_ties = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(50));
    std::vector<float> s(m);
    std::vector<std::uint8_t> y(m);
    for (int i = 0; i < m; ++i) {
      s[i] = static_cast<float>(rng.below(8)) / 8.0f;  // at most 8 distinct scores: ties are common
      y[i] = rng.bernoulli(0.4);
    }
    const auto want = pairwise_auc(s, y);
    const auto got = species_auc(s, y);
    if (want) ++defined;
    if (m > 8) ++with_ties;
    if (want.has_value() != got.has_value() || (want && *want != *got)) ++mismatches;
  }
  detail("AUC: " + std::to_string(200 - mismatches) + "/200 exact (" + std::to_string(defined) + " defined, " +
         std::to_string(with_ties) + " with forced ties)");

  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(64));
    std::vector<float> p(m);
    std::vector<std::uint8_t> y(m);
    double direct = 0.0;
    for (int i = 0; i < m; ++i) {
      p[i] = static_cast<float>(rng.uniform(0.001, 0.999));
      y[i] = rng.bernoulli(0.5);
      direct -= y[i] ? std::log(static_cast<double>(p[i])) : std::log(1.0 - static_cast<double>(p[i]));
    }
    worst = std::max(worst, std::abs(weighted_loss(p, y, 1.0) - direct / m));
  }
  detail("weighted_loss(pos_weight 1) vs direct BCE: max |diff| " + text::fmt(worst) + " (limit 1e-6)");
  return verdict(3, mismatches == 0 && worst <= 1e-6, "AUC and loss oracles");
}

// --- 4. footprints -----------------------------------------------------------

bool criterion_footprints() {
  struct Case {
    int px;
    double km;
    double want;
  };
  bool ok = true;
  for (const Case& c : {Case{25, 0.6, 225.0}, Case{25, 0.01, 0.06}, Case{59, 0.01, 0.35}, Case{115, 0.01, 1.33}}) {
    const double got = round_decimals(footprint(c.px, c.km).area_km2, 2);
    const bool good = got == c.want;
    ok = ok && good;
    detail(std::to_string(c.px) + " px x " + text::fmt(c.km) + " km: " + text::fixed(got, 2) + " km2, expected " +
           text::fixed(c.want, 2) + (good ? "" : "  MISMATCH (unrounded " + text::fmt(footprint(c.px, c.km).area_km2) + ")"));
  }
  return verdict(4, ok, "footprint arithmetic");
}

// --- 5. synthetic scale recovery ------------------------------------------

struct Group {
  std::string label;
  std::vector<int> species;
  std::string matched, mismatched;
};

bool criterion_recovery() {
  const auto t0 = Clock::now();
  const fs::path dir = workdir("recovery");
  const SynthConfig sc = synth_config_from_json(load_json(src("configs/acceptance/synth.json")));
  const World world = gen_world(sc.world);
  const SampledData sampled = sample_occurrences(world, sc.species, sc.sampling);
  write_dataset((dir / "data").string(), world, sampled, sc);

  const std::string sweep_path = src("configs/acceptance/ablate.json");
  const Json sweep = load_json(sweep_path);
  const std::string sweep_dir = fs::path(sweep_path).parent_path().string();
  const std::string base_path = resolve_path(sweep_dir, sweep.at("base").get<std::string>());
  Json base = load_json(base_path);
  base["data"] = (dir / "data").string();
  const auto seeds = sweep.at("seeds").get<std::vector<std::uint64_t>>();

  // species groups from the generator's own truth
  std::map<std::string, Group> groups;
  for (std::size_t i = 0; i < sampled.species.size(); ++i) {
    const auto& sp = sampled.species[i];
    const std::string key = std::string(to_string(sp.layer)) + " w" + std::to_string(sp.window);
    groups[key].label = key;
    groups[key].species.push_back(static_cast<int>(i));
  }
  // matched and most-mismatched single-scale models per group
  groups.at("coarse w1").matched = "coarse-1", groups.at("coarse w1").mismatched = "coarse-9";
  groups.at("coarse w9").matched = "coarse-9", groups.at("coarse w9").mismatched = "coarse-1";
  groups.at("fine w5").matched = "fine-5", groups.at("fine w5").mismatched = "fine-23";
  groups.at("fine w23").matched = "fine-23", groups.at("fine w23").mismatched = "fine-5";

  // variant -> seed-averaged overall and per-group median AUC
  std::map<std::string, double> overall;
  std::map<std::string, std::map<std::string, double>> by_group;
  std::optional<LoadedData> data;
  for (const auto& variant : sweep.at("variants")) {
    const std::string name = variant.at("name").get<std::string>();
    for (std::uint64_t seed : seeds) {
      Json j = base;
      for (const auto& [key, value] : variant.at("set").items()) apply_override(j, key + "=" + value.dump());
      apply_override(j, "model.seed=" + std::to_string(seed));
      apply_override(j, "train.shuffle_seed=" + std::to_string(seed));
      apply_override(j, "train.validate_each_epoch=false");
      RunConfig run = run_config_from_json(j, fs::path(base_path).parent_path().string());
      if (!data) {
        data = load_run_data(run);
        // the fine raster is not needed by the coarse-only first variant
        for (const char* layer : {"coarse", "fine"}) {
          const std::string p = (dir / "data" / (std::string(layer) + ".grb1")).string();
          if (!data->rasters.count(p)) {
            GeoRaster r = read_grb1(p);
            if (!r.band_stats) compute_band_stats(r);
            data->rasters.emplace(p, std::move(r));
          }
        }
      }
      run.model.species_count = static_cast<int>(data->species.size());
      const RunOutcome o = train_and_evaluate(run, *data);
      const double n = static_cast<double>(seeds.size());
      overall[name] += o.report.median_auc.value_or(0.5) / n;
      std::string line = name + " seed " + std::to_string(seed) + ": overall " + f4(o.report.median_auc.value_or(0.5));
      for (const auto& [key, g] : groups) {
        const double v = o.report.median_auc_over(g.species).value_or(0.5);
        by_group[name][key] += v / n;
        line += ", " + key + " " + f4(v);
      }
      detail(line + " (" + text::fixed(o.runtime_s, 1) + " s)");
    }
  }

  bool ok = true;
  for (const auto& [key, g] : groups) {
    const double matched = by_group[g.matched][key], mismatched = by_group[g.mismatched][key];
    const bool a = matched >= 0.80, b = matched - mismatched >= 0.05;
    ok = ok && a && b;
    detail("(a) " + key + ": " + g.matched + " " + f4(matched) + " >= 0.80 " + (a ? "ok" : "NO"));
    detail("(b) " + key + ": " + g.matched + " - " + g.mismatched + " = " + f4(matched - mismatched) + " >= 0.05 " +
           (b ? "ok" : "NO"));
  }
  const std::map<std::string, std::vector<std::string>> families{{"coarse-1-9", {"coarse-1", "coarse-9"}},
                                                                 {"fine-5-23", {"fine-5", "fine-23"}}};
  for (const auto& [multi, singles] : families) {
    double best = 0.0;
    for (const auto& s : singles) best = std::max(best, overall[s]);
    const bool c = overall[multi] >= best - 0.03;
    ok = ok && c;
    detail("(c) " + multi + " " + f4(overall[multi]) + " vs best single " + f4(best) + " (diff " +
           f4(overall[multi] - best) + ", must be >= -0.03) " + (c ? "ok" : "NO"));
  }
  for (const auto& [name, value] : overall) {
    if (name == "bimodal") continue;
    const bool d = overall["bimodal"] >= value - 0.01;
    ok = ok && d;
    detail("(d) bimodal " + f4(overall["bimodal"]) + " >= " + name + " " + f4(value) + " - 0.01 " + (d ? "ok" : "NO"));
  }
  const double secs = seconds_since(t0);
  detail("runtime " + text::fixed(secs, 1) + " s (limit 1800)");
  return verdict(5, ok && secs < 1800.0, "synthetic scale recovery over " + std::to_string(seeds.size()) + " seeds");
}

// --- 6. determinism ----------------------------------------------------------

bool criterion_determinism() {
  const fs::path dir = workdir("determinism");
  const std::string data = (dir / "data").string();
  if (cli("synth \"" + src("configs/tiny/synth.json") + "\" --out \"" + data + "\"", dir / "synth.log") != 0) {
    return verdict(6, false, "synth failed, see " + (dir / "synth.log").string());
  }
  for (const char* run : {"a", "b"}) {
    const int rc = cli("train \"" + src("configs/tiny/run.json") + "\" --set data=\"" + data + "\" --out \"" +
                           (dir / run).string() + "\"",
                       dir / (std::string(run) + ".log"));
    if (rc != 0) return verdict(6, false, std::string("train ") + run + " exited " + std::to_string(rc));
  }
  bool ok = true;
  for (const char* f : {"history.csv", "checkpoints/last.ckpt", "checkpoints/best.ckpt", "eval/species_metrics.csv"}) {
    const bool same = text::read_file((dir / "a" / f).string()) == text::read_file((dir / "b" / f).string());
    ok = ok && same;
    detail(std::string(f) + (same ? ": identical" : ": DIFFERENT"));
  }
  return verdict(6, ok, "two identical train runs");
}

// --- 7. metric conventions -------------------------------------------------

bool criterion_metrics() {
  const std::vector<int> ab{0, 1}, bcd{1, 2, 3}, cd{2, 3}, empty;
  struct Case {
    const char* label;
    double got, want;
  };
  bool ok = true;
  for (const Case& c : {Case{"{a,b} vs {b,c,d}", site_f1(ab, bcd), 0.4}, Case{"both empty", site_f1(empty, empty), 1.0},
                        Case{"disjoint", site_f1(ab, cd), 0.0}, Case{"identical", site_f1(ab, ab), 1.0},
                        Case{"empty vs {a,b}", site_f1(empty, ab), 0.0}}) {
    ok = ok && c.got == c.want;
    detail(std::string(c.label) + ": " + text::fmt(c.got) + (c.got == c.want ? "" : "  expected " + text::fmt(c.want)));
  }
  const std::vector<float> scores{0.5f, std::nextafter(0.5f, 1.0f), std::nextafter(0.5f, 0.0f), 0.9f};
  const auto on = binarize(scores);
  const bool strict = on == std::vector<int>{1, 3};
  ok = ok && strict;
  detail(std::string("binarize {0.5, 0.5+ulp, 0.5-ulp, 0.9} -> ") + (strict ? "{1, 3}" : "unexpected"));
  return verdict(7, ok, "site F1 and binarization");
}

// --- 8. end-to-end ablate ----------------------------------------------------

bool criterion_ablate() {
  const fs::path dir = workdir("ablate");
  const std::string data = (dir / "data").string();
  if (cli("synth \"" + src("configs/tiny/synth.json") + "\" --out \"" + data + "\"", dir / "synth.log") != 0) {
    return verdict(8, false, "synth failed");
  }
  const std::string sweep = src("configs/tiny/ablate.json");
  const int rc = cli("ablate \"" + sweep + "\" --set set.data=\"" + data + "\" --out \"" + (dir / "out").string() + "\"",
                     dir / "ablate.log");
  detail("ablate exit code " + std::to_string(rc));
  const fs::path csv = dir / "out" / "ablation.csv";
  if (!fs::exists(csv)) return verdict(8, false, "no ablation.csv");
  const auto lines = text::read_lines(csv.string());
  const std::size_t variants = load_json(sweep).at("variants").size();
  bool ok = rc == 0 && !lines.empty() &&
            lines[0] == "name,seed,scales,median_auc,site_f1_mean,runtime_s,status" && lines.size() == variants + 1;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    detail(lines[i]);
    ok = ok && text::split(lines[i], ',').back() == "ok";
  }
  return verdict(8, ok, std::to_string(lines.empty() ? 0 : lines.size() - 1) + " rows for " +
                            std::to_string(variants) + " configurations");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<bool()>> criteria{criterion_rf,         criterion_gradients, criterion_oracles,
                                                    criterion_footprints, criterion_recovery,  criterion_determinism,
                                                    criterion_metrics,    criterion_ablate};
  std::vector<int> which;
  if (argc == 3 && std::string(argv[1]) == "--criterion") {
    which.push_back(std::atoi(argv[2]));
  } else if (argc == 1) {
    for (int i = 1; i <= 8; ++i) which.push_back(i);
  } else {
    std::fprintf(stderr, "usage: acceptance [--criterion N]\n");
    return 1;
  }
  for (int n : which) {
    if (n < 1 || n > 8) {
      std::fprintf(stderr, "no criterion %d\n", n);
      return 1;
    }
    try {
      criteria[n - 1]();
    } catch (const std::exception& e) {
      std::printf("criterion %d: FAIL error: %s\n", n, e.what());
      return 2;
    }
  }
  return 0;
}
