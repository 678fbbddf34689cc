#pragma once

#include <span>
#include <vector>

#include "msdm/architecture.hpp"
#include "msdm/metrics.hpp"
#include "msdm/occurrence.hpp"
#include "msdm/pipeline.hpp"

namespace msdm {

/// Sites are processed in fixed chunks so the result does not depend on how
/// many chunks run at once.
inline constexpr int kEvalChunk = 256;

struct Predictions {
  std::vector<std::size_t> sites;  // table rows that produced a prediction
  std::vector<float> probs;        // sites.size() × S
  int excluded = 0;
};

inline Predictions predict_table(Model& model, const OccurrenceTable& table, std::span<const GeoRaster* const> rasters) {
  Predictions out;
  auto stream = ordered_batches(table, patch_sources(model.config(), rasters), kEvalChunk);
  while (auto batch = stream.next()) {
    const Tensor p = model.forward(batch->inputs, Mode::Eval);
    out.sites.insert(out.sites.end(), batch->sites.begin(), batch->sites.end());
    out.probs.insert(out.probs.end(), p.values.begin(), p.values.end());
  }
  out.excluded = stream.skipped();
  return out;
}

/// Builds the report from per-site probabilities (rows aligned with
/// `pred.sites`).
inline EvalReport report_from_predictions(const Predictions& pred, const OccurrenceTable& table,
                                          const OccurrenceTable* train_table = nullptr, double threshold = 0.5) {
  const std::size_t s_count = table.species_count();
  const std::size_t m = pred.sites.size();
  EvalReport r;
  r.species_ids = table.species_ids;
  r.threshold = threshold;
  r.sites_excluded = pred.excluded;
  r.n_train = train_table ? train_table->species_counts() : std::vector<int>(s_count, 0);
  r.n_val.assign(s_count, 0);
  std::vector<float> scores(m);
  std::vector<std::uint8_t> labels(m);
  for (std::size_t j = 0; j < s_count; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      scores[i] = pred.probs[i * s_count + j];
      labels[i] = table.sites[pred.sites[i]].labels[j];
      r.n_val[j] += labels[i];
    }
    r.per_species_auc.push_back(species_auc(scores, labels));
  }
  for (std::size_t i = 0; i < m; ++i) {
    const Site& site = table.sites[pred.sites[i]];
    const auto predicted = binarize(std::span<const float>(pred.probs.data() + i * s_count, s_count), threshold);
    std::vector<int> truth;
    for (std::size_t j = 0; j < s_count; ++j)
      if (site.labels[j]) truth.push_back(static_cast<int>(j));
    r.sites.push_back({site.site_id, site.lon, site.lat, site_f1(predicted, truth)});
  }
  finalize_report(r);
  return r;
}

/// Eval-mode predictions on a presence-absence table; sites whose patches
/// cannot be extracted are excluded and counted.
inline EvalReport evaluate(Model& model, const OccurrenceTable& pa_table, std::span<const GeoRaster* const> rasters,
                           const OccurrenceTable* train_table = nullptr, double threshold = 0.5) {
  return report_from_predictions(predict_table(model, pa_table, rasters), pa_table, train_table, threshold);
}

}  // namespace msdm
