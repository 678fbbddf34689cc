#pragma once

#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "msdm/architecture.hpp"
#include "msdm/geodata.hpp"
#include "msdm/occurrence.hpp"
#include "msdm/rng.hpp"
#include "msdm/tensor.hpp"

namespace msdm {

/// Raster and patch side for one modality, in model order.
struct PatchSource {
  const GeoRaster* raster = nullptr;
  int size = 1;
};

inline std::vector<PatchSource> patch_sources(const ModelConfig& config, std::span<const GeoRaster* const> rasters) {
  if (rasters.size() != config.modalities.size()) throw ConfigError("need one raster per modality");
  std::vector<PatchSource> out;
  for (std::size_t i = 0; i < rasters.size(); ++i) {
    const auto& m = config.modalities[i];
    if (!rasters[i]) throw ConfigError("missing raster for modality '" + m.name + "'");
    if (rasters[i]->bands != m.bands) {
      throw ConfigError("modality '" + m.name + "' expects " + std::to_string(m.bands) + " bands, raster has " +
                        std::to_string(rasters[i]->bands));
    }
    out.push_back({rasters[i], required_patch_size(m)});
  }
  return out;
}

struct Batch {
  std::vector<Tensor> inputs;         // per modality: N×bands×k×k
  std::vector<std::uint8_t> labels;   // N×S
  std::vector<std::size_t> sites;     // table row of each sample
  int size() const { return static_cast<int>(sites.size()); }
};

/// Fisher-Yates permutation seeded by (shuffle_seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t shuffle_seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

/// Walks the sites in a fixed order, extracting every modality's patch and
/// grouping successes into batches. Sites whose patch extraction fails for
/// any modality are skipped and counted; the last batch may be short.
class BatchStream {
 public:
  BatchStream(const OccurrenceTable& table, std::vector<PatchSource> sources, std::vector<std::size_t> order,
              int batch_size)
      : table_(&table), sources_(std::move(sources)), order_(std::move(order)), batch_size_(batch_size) {
    if (batch_size_ < 1) throw ConfigError("batch_size must be >= 1");
    for (const auto& s : sources_) {
      if (!s.raster || !s.raster->band_stats) throw ConfigError("rasters need band statistics before batching");
    }
  }

  std::optional<Batch> next() {
    const std::size_t species = table_->species_count();
    Batch batch;
    std::vector<std::vector<float>> buffers(sources_.size());
    std::vector<std::vector<float>> scratch(sources_.size());
    for (std::size_t m = 0; m < sources_.size(); ++m) {
      scratch[m].resize(static_cast<std::size_t>(sources_[m].raster->bands) * sources_[m].size * sources_[m].size);
    }
    while (cursor_ < order_.size() && batch.size() < batch_size_) {
      const std::size_t row = order_[cursor_++];
      const Site& site = table_->sites[row];
      bool ok = true;
      for (std::size_t m = 0; m < sources_.size() && ok; ++m) {
        ok = extract_patch_into(*sources_[m].raster, site.lon, site.lat, sources_[m].size, scratch[m]) ==
             PatchStatus::Ok;
      }
      if (!ok) {
        ++skipped_;
        continue;
      }
      ++consumed_;
      for (std::size_t m = 0; m < sources_.size(); ++m)
        buffers[m].insert(buffers[m].end(), scratch[m].begin(), scratch[m].end());
      batch.labels.insert(batch.labels.end(), site.labels.begin(), site.labels.end());
      batch.sites.push_back(row);
    }
    if (batch.sites.empty()) return std::nullopt;
    const int n = batch.size();
    for (std::size_t m = 0; m < sources_.size(); ++m) {
      const int k = sources_[m].size;
      batch.inputs.emplace_back(std::vector<int>{n, sources_[m].raster->bands, k, k}, std::move(buffers[m]));
    }
    if (batch.labels.size() != static_cast<std::size_t>(n) * species) throw ShapeMismatch("label width mismatch");
    return batch;
  }

  int skipped() const { return skipped_; }
  int consumed() const { return consumed_; }

 private:
  const OccurrenceTable* table_;
  std::vector<PatchSource> sources_;
  std::vector<std::size_t> order_;
  int batch_size_;
  std::size_t cursor_ = 0;
  int skipped_ = 0;
  int consumed_ = 0;
};

inline BatchStream make_batches(const OccurrenceTable& table, std::vector<PatchSource> sources, int batch_size,
                                std::uint64_t shuffle_seed, int epoch) {
  return BatchStream(table, std::move(sources), epoch_order(table.size(), shuffle_seed, epoch), batch_size);
}

/// Sites in table order (evaluation).
inline BatchStream ordered_batches(const OccurrenceTable& table, std::vector<PatchSource> sources, int batch_size) {
  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), 0);
  return BatchStream(table, std::move(sources), std::move(order), batch_size);
}

}  // namespace msdm
