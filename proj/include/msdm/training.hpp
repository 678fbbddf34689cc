#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msdm/architecture.hpp"
#include "msdm/checkpoint.hpp"
#include "msdm/config.hpp"
#include "msdm/evaluation.hpp"
#include "msdm/loss.hpp"
#include "msdm/pipeline.hpp"

namespace msdm {

/// S / mean positives per site: balances the total weight of positive and
/// negative terms for an average site.
inline double default_pos_weight(const OccurrenceTable& table) {
  if (table.sites.empty()) return 1.0;
  double positives = 0.0;
  for (const auto& s : table.sites) positives += s.positives();
  const double mean = positives / static_cast<double>(table.sites.size());
  if (!(mean > 0.0)) return 1.0;
  return std::max(1.0, static_cast<double>(table.species_count()) / mean);
}

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> val_median_auc;
  std::optional<double> val_site_f1_mean;
  int skipped = 0;
  int consumed = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double pos_weight = 1.0;
  std::int64_t steps = 0;
  int best_epoch = 0;
  std::optional<double> best_val_auc;
};

/// Where a resumed run picks up; epochs are 1-based and `completed_epochs`
/// have already run.
struct ResumeState {
  int completed_epochs = 0;
  std::int64_t step = 0;
  std::vector<EpochRecord> history;
};

struct TrainHooks {
  /// Directory for last.ckpt / best.ckpt (and epoch_NNN.ckpt when kept);
  /// empty disables checkpoint files.
  std::string checkpoint_dir;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mean loss of one batch plus parameter update; returns the batch loss.
inline double train_step(Model& model, const Batch& batch, double pos_weight, const SgdConfig& sgd) {
  Model::Trace trace;
  const Tensor logits = model.forward_logits(batch.inputs, Mode::Train, &trace);
  Tensor probs = logits;
  for (auto& v : probs.values) v = sigmoid(v);
  const double loss = weighted_loss(probs.values, batch.labels, pos_weight);
  auto params = model.parameters();
  zero_grads(params);
  model.backward(weighted_loss_grad(logits, batch.labels, pos_weight), trace);
  sgd_step(params, sgd);
  return loss;
}

inline TrainResult train(Model& model, const OccurrenceTable& po, std::span<const GeoRaster* const> rasters,
                         const TrainConfig& cfg, const OccurrenceTable* pa = nullptr, const TrainHooks& hooks = {},
                         ResumeState resume = {}) {
  cfg.validate();
  if (po.species_count() != static_cast<std::size_t>(model.config().species_count)) {
    throw ConfigError("model has " + std::to_string(model.config().species_count) + " outputs but the table has " +
                      std::to_string(po.species_count()) + " species");
  }
  const auto sources = patch_sources(model.config(), rasters);
  TrainResult result;
  result.pos_weight = cfg.pos_weight.value_or(default_pos_weight(po));
  result.steps = resume.step;
  result.history = std::move(resume.history);
  for (const auto& h : result.history) {
    if (h.val_median_auc && (!result.best_val_auc || *h.val_median_auc > *result.best_val_auc)) {
      result.best_val_auc = h.val_median_auc;
      result.best_epoch = h.epoch;
    }
  }
  if (!hooks.checkpoint_dir.empty()) std::filesystem::create_directories(hooks.checkpoint_dir);

  for (int epoch = resume.completed_epochs + 1; epoch <= cfg.epochs; ++epoch) {
    auto stream = make_batches(po, sources, cfg.batch_size, cfg.shuffle_seed, epoch);
    double loss_sum = 0.0;
    long samples = 0;
    while (auto batch = stream.next()) {
      const double loss = train_step(model, *batch, result.pos_weight, cfg.sgd);
      loss_sum += loss * batch->size();
      samples += batch->size();
      ++result.steps;
    }
    if (samples == 0) throw DataError("no training site produced a valid patch");
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(samples);
    rec.skipped = stream.skipped();
    rec.consumed = stream.consumed();
    bool improved = false;
    if (pa && cfg.validate_each_epoch) {
      const auto report = evaluate(model, *pa, rasters, &po);
      rec.val_median_auc = report.median_auc;
      rec.val_site_f1_mean = report.site_f1_mean;
      if (report.median_auc && (!result.best_val_auc || *report.median_auc > *result.best_val_auc)) {
        result.best_val_auc = report.median_auc;
        result.best_epoch = epoch;
        improved = true;
      }
    }
    result.history.push_back(rec);
    if (!hooks.checkpoint_dir.empty()) {
      const CheckpointInfo info{model.config().seed, result.steps, epoch};
      const std::string bytes = encode_checkpoint(model, info);
      text::write_file(hooks.checkpoint_dir + "/last.ckpt", bytes);
      if (improved) text::write_file(hooks.checkpoint_dir + "/best.ckpt", bytes);
      if (cfg.keep_epoch_checkpoints) {
        char name[32];
        std::snprintf(name, sizeof(name), "/epoch_%03d.ckpt", epoch);
        text::write_file(hooks.checkpoint_dir + name, bytes);
      }
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  return result;
}

}  // namespace msdm
