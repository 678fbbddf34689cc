#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "msdm/error.hpp"
#include "msdm/geodata.hpp"
#include "msdm/occurrence.hpp"
#include "msdm/rng.hpp"

namespace msdm {

enum class WorldLayer { Coarse, Fine };

inline const char* to_string(WorldLayer l) { return l == WorldLayer::Coarse ? "coarse" : "fine"; }

inline WorldLayer parse_world_layer(const std::string& s) {
  if (s == "coarse") return WorldLayer::Coarse;
  if (s == "fine") return WorldLayer::Fine;
  throw ConfigError("world layer must be 'coarse' or 'fine', got '" + s + "'");
}

struct RasterSpec {
  int bands = 1;
  int height = 32;
  int width = 32;
  double pixel_km = 1.0;
  std::vector<double> blur;  // Gaussian sigma in pixels, one per band (0 = white noise)
};

struct WorldSpec {
  std::uint64_t seed = 0;
  RasterSpec coarse;
  RasterSpec fine;

  void validate() const {
    for (const auto* r : {&coarse, &fine}) {
      if (r->bands < 1 || r->height < 1 || r->width < 1 || !(r->pixel_km > 0.0)) {
        throw ConfigError("world rasters need positive dimensions and pixel size");
      }
      if (!r->blur.empty() && r->blur.size() != static_cast<std::size_t>(r->bands)) {
        throw ConfigError("blur needs one radius per band");
      }
      for (double b : r->blur)
        if (b < 0.0) throw ConfigError("blur radius must be >= 0");
    }
    const double tol = 1e-9 * std::max(coarse.height * coarse.pixel_km, 1.0);
    if (std::abs(coarse.height * coarse.pixel_km - fine.height * fine.pixel_km) > tol ||
        std::abs(coarse.width * coarse.pixel_km - fine.width * fine.pixel_km) > tol) {
      throw ConfigError("coarse and fine rasters must cover the same extent");
    }
  }
};

struct World {
  GeoRaster coarse;
  GeoRaster fine;

  const GeoRaster& layer(WorldLayer l) const { return l == WorldLayer::Coarse ? coarse : fine; }
};

/// Periodic separable Gaussian blur of one H×W plane.
inline void gaussian_blur(std::vector<double>& plane, int height, int width, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) norm += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& k : kernel) k /= norm;
  auto wrap = [](int i, int n) { return ((i % n) + n) % n; };
  std::vector<double> tmp(plane.size());
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * plane[r * width + wrap(c + i, width)];
      tmp[r * width + c] = s;
    }
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * tmp[wrap(r + i, height) * width + c];
      plane[r * width + c] = s;
    }
}

inline GeoRaster gen_layer(const RasterSpec& spec, double extent_y, std::uint64_t seed, WorldLayer which) {
  GeoTransform t;
  t.origin_x = 0.0;
  t.origin_y = extent_y;
  t.pixel_size_x = spec.pixel_km;
  t.pixel_size_y = spec.pixel_km;
  t.crs_label = "synthetic-km";
  GeoRaster r(spec.bands, spec.height, spec.width, t);
  const std::size_t plane_size = static_cast<std::size_t>(spec.height) * spec.width;
  for (int b = 0; b < spec.bands; ++b) {
    r.band_names[b] = std::string(to_string(which)) + std::to_string(b);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(which), static_cast<std::uint64_t>(b)));
    std::vector<double> plane(plane_size);
    for (auto& v : plane) v = rng.normal();
    gaussian_blur(plane, spec.height, spec.width, spec.blur.empty() ? 0.0 : spec.blur[b]);
    double mean = 0.0;
    for (double v : plane) mean += v;
    mean /= static_cast<double>(plane_size);
    double var = 0.0;
    for (double v : plane) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(plane_size));
    for (std::size_t i = 0; i < plane_size; ++i) r.data[b * plane_size + i] = static_cast<float>((plane[i] - mean) / sd);
  }
  compute_band_stats(r);
  return r;
}

/// Per band: seeded white noise, Gaussian blur, rescaled to mean 0 / std 1.
inline World gen_world(const WorldSpec& spec) {
  spec.validate();
  const double extent_y = spec.coarse.height * spec.coarse.pixel_km;
  return {gen_layer(spec.coarse, extent_y, spec.seed, WorldLayer::Coarse),
          gen_layer(spec.fine, extent_y, spec.seed, WorldLayer::Fine)};
}

/// Sample correlation between horizontally adjacent pixels of one band.
inline double adjacent_correlation(const GeoRaster& r, int band) {
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  long n = 0;
  for (long row = 0; row < r.height; ++row)
    for (long col = 0; col + 1 < r.width; ++col) {
      const double x = r.at(band, row, col), y = r.at(band, row, col + 1);
      sx += x, sy += y, sxx += x * x, syy += y * y, sxy += x * y;
      ++n;
    }
  const double cov = sxy / n - (sx / n) * (sy / n);
  return cov / std::sqrt((sxx / n - (sx / n) * (sx / n)) * (syy / n - (sy / n) * (sy / n)));
}

// ---------------------------------------------------------------------------

/// A species whose occurrence probability is a logistic function of one
/// band averaged over its own characteristic window.
struct VirtualSpeciesSpec {
  std::string species_id;
  WorldLayer layer = WorldLayer::Coarse;
  int band = 0;
  int window = 1;
  int direction = 1;
  double steepness = 1.0;
  double offset = 0.0;
  double prevalence = 0.3;
  bool calibrate = true;     // false keeps `offset` as given
  bool standardize = false;  // steepness per standard deviation of the window mean

  void validate(const World& world) const {
    if (window < 1 || window % 2 == 0) throw ConfigError("species '" + species_id + "': window must be odd");
    if (band < 0 || band >= world.layer(layer).bands) throw ConfigError("species '" + species_id + "': band out of range");
    if (direction != 1 && direction != -1) throw ConfigError("species '" + species_id + "': direction must be +-1");
    if (!(prevalence > 0.0 && prevalence < 1.0)) throw ConfigError("species '" + species_id + "': prevalence must be in (0,1)");
  }
};

inline double logistic(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

/// Mean of the species' band over its window centred on the site's pixel.
inline double window_mean(const World& world, const VirtualSpeciesSpec& sp, double lon, double lat) {
  const GeoRaster& r = world.layer(sp.layer);
  const auto px = world_to_pixel(r, lon, lat);
  const long half = sp.window / 2;
  if (px.row - half < 0 || px.col - half < 0 || px.row + half >= r.height || px.col + half >= r.width) {
    throw OutOfBounds("species window crosses the raster edge");
  }
  double s = 0.0;
  for (long row = px.row - half; row <= px.row + half; ++row)
    for (long col = px.col - half; col <= px.col + half; ++col) s += r.at(sp.band, row, col);
  return s / static_cast<double>(sp.window * sp.window);
}

inline double suitability(const World& world, const VirtualSpeciesSpec& sp, double lon, double lat) {
  return logistic(sp.steepness * sp.direction * window_mean(world, sp, lon, lat) + sp.offset);
}

/// Rectangle (in world units) in which every window of every modality at the
/// given inset scales stays inside both rasters.
struct Interior {
  double min_x, max_x, min_y, max_y;
};

inline Interior interior(const World& world, int inset_coarse, int inset_fine) {
  const double m = std::max((inset_coarse / 2 + 1) * world.coarse.transform.pixel_size_x,
                            (inset_fine / 2 + 1) * world.fine.transform.pixel_size_x);
  Interior in{world.coarse.min_x() + m, world.coarse.max_x() - m, world.coarse.min_y() + m, world.coarse.max_y() - m};
  if (!(in.min_x < in.max_x && in.min_y < in.max_y)) throw ConfigError("world is too small for the requested inset");
  return in;
}

/// Bisection on the offset so that mean suitability over `sample` hits the
/// prevalence target.
inline double calibrate_offset(const World& world, VirtualSpeciesSpec sp,
                               const std::vector<std::pair<double, double>>& sample) {
  std::vector<double> means;
  means.reserve(sample.size());
  for (const auto& [x, y] : sample) means.push_back(sp.direction * sp.steepness * window_mean(world, sp, x, y));
  auto mean_suit = [&](double beta) {
    double s = 0.0;
    for (double m : means) s += logistic(m + beta);
    return s / static_cast<double>(means.size());
  };
  double lo = -60.0, hi = 60.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mean_suit(mid) < sp.prevalence) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct SamplingSpec {
  int n_po = 100;
  int n_pa = 100;
  std::uint64_t seed = 0;
  double bias_ratio = 2.0;  // max/min presence-only sampling density
  int bias_grid = 4;        // control points per axis of the bias field
  int inset_coarse = 1;     // largest extent (pixels) used on each layer
  int inset_fine = 1;
  int calibration_sites = 1000;
};

struct SampledData {
  std::vector<RawRecord> po_raw;
  OccurrenceTable po;
  OccurrenceTable pa;
  std::vector<VirtualSpeciesSpec> species;  // with calibrated offsets
};

/// Low-frequency sampling-bias density in [1, ratio] at (x, y): bilinear
/// interpolation of seeded control values on a grid x grid lattice.
class BiasField {
 public:
  BiasField(const Interior& area, int grid, double ratio, std::uint64_t seed) : area_(area), grid_(std::max(grid, 2)), ratio_(ratio) {
    Rng rng(seed);
    values_.resize(static_cast<std::size_t>(grid_) * grid_);
    for (auto& v : values_) v = rng.uniform();
    const auto [mn, mx] = std::minmax_element(values_.begin(), values_.end());
    const double lo = *mn, span = *mx - *mn;
    for (auto& v : values_) v = span > 0 ? (v - lo) / span : 0.0;
  }

  double density(double x, double y) const {
    const double u = (x - area_.min_x) / (area_.max_x - area_.min_x) * (grid_ - 1);
    const double v = (area_.max_y - y) / (area_.max_y - area_.min_y) * (grid_ - 1);
    const int i = std::clamp(static_cast<int>(u), 0, grid_ - 2), j = std::clamp(static_cast<int>(v), 0, grid_ - 2);
    const double fu = u - i, fv = v - j;
    auto at = [&](int a, int b) { return values_[static_cast<std::size_t>(b) * grid_ + a]; };
    const double f = (1 - fu) * (1 - fv) * at(i, j) + fu * (1 - fv) * at(i + 1, j) + (1 - fu) * fv * at(i, j + 1) +
                     fu * fv * at(i + 1, j + 1);
    return 1.0 + (ratio_ - 1.0) * f;
  }

  double max_density() const { return ratio_; }

 private:
  Interior area_;
  int grid_;
  double ratio_;
  std::vector<double> values_;
};

/// Presence-absence sites on a regular interior grid with Bernoulli labels
/// from each species' suitability; presence-only sites drawn from a biased
/// density, each keeping only sites with at least one presence, then merged.
inline SampledData sample_occurrences(const World& world, std::vector<VirtualSpeciesSpec> species,
                                      const SamplingSpec& spec) {
  if (spec.n_po < 1 || spec.n_pa < 1) throw ConfigError("n_po and n_pa must be >= 1");
  if (species.empty()) throw ConfigError("need at least one species");
  if (!(spec.bias_ratio >= 1.0)) throw ConfigError("bias_ratio must be >= 1");
  int inset_c = spec.inset_coarse, inset_f = spec.inset_fine;
  for (const auto& sp : species) {
    sp.validate(world);
    (sp.layer == WorldLayer::Coarse ? inset_c : inset_f) = std::max(sp.layer == WorldLayer::Coarse ? inset_c : inset_f, sp.window);
  }
  const Interior area = interior(world, inset_c, inset_f);

  std::vector<std::pair<double, double>> calib;
  {
    Rng rng(derive_seed(spec.seed, 0xCA11B));
    for (int i = 0; i < spec.calibration_sites; ++i)
      calib.emplace_back(rng.uniform(area.min_x, area.max_x), rng.uniform(area.min_y, area.max_y));
  }
  for (auto& sp : species) {
    if (sp.standardize) {
      double sum = 0.0, sq = 0.0;
      for (const auto& [x, y] : calib) {
        const double m = window_mean(world, sp, x, y);
        sum += m;
        sq += m * m;
      }
      const double n = static_cast<double>(calib.size());
      const double sd = std::sqrt(std::max(0.0, sq / n - (sum / n) * (sum / n)));
      if (!(sd > 0.0)) throw ConfigError("species '" + sp.species_id + "': window mean is constant");
      sp.steepness /= sd;
      sp.standardize = false;
    }
    if (sp.calibrate) sp.offset = calibrate_offset(world, sp, calib);
  }

  std::vector<std::string> ids;
  for (const auto& sp : species) ids.push_back(sp.species_id);
  const std::size_t s_count = species.size();

  auto draw_labels = [&](Rng& rng, double x, double y) {
    std::vector<std::uint8_t> labels(s_count);
    for (std::size_t j = 0; j < s_count; ++j) labels[j] = rng.bernoulli(suitability(world, species[j], x, y)) ? 1 : 0;
    return labels;
  };

  SampledData out;
  out.species = species;

  out.pa.kind = OccurrenceKind::PresenceAbsence;
  out.pa.species_ids = ids;
  const int g = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.n_pa))));
  const double dx = (area.max_x - area.min_x) / g, dy = (area.max_y - area.min_y) / g;
  for (int i = 0; i < spec.n_pa; ++i) {
    const int row = i / g, col = i % g;
    Site s;
    s.site_id = "pa" + std::to_string(i);
    s.lon = area.min_x + (col + 0.5) * dx;
    s.lat = area.max_y - (row + 0.5) * dy;
    Rng rng(derive_seed(spec.seed, 0x9A, static_cast<std::uint64_t>(i)));
    s.labels = draw_labels(rng, s.lon, s.lat);
    out.pa.sites.push_back(std::move(s));
  }

  const BiasField bias(area, spec.bias_grid, spec.bias_ratio, derive_seed(spec.seed, 0xB1A5));
  Rng rng(derive_seed(spec.seed, 0x90));
  int accepted = 0;
  while (accepted < spec.n_po) {
    const double x = rng.uniform(area.min_x, area.max_x), y = rng.uniform(area.min_y, area.max_y);
    if (rng.uniform() * bias.max_density() >= bias.density(x, y)) continue;
    const auto labels = draw_labels(rng, x, y);
    if (std::none_of(labels.begin(), labels.end(), [](std::uint8_t v) { return v != 0; })) continue;
    char date[16];
    std::snprintf(date, sizeof(date), "2020-%02d-01", static_cast<int>(rng.below(12)) + 1);
    for (std::size_t j = 0; j < s_count; ++j)
      if (labels[j]) out.po_raw.push_back({x, y, date, ids[j]});
    ++accepted;
  }
  out.po = merge_po_records(out.po_raw, ids);
  return out;
}

}  // namespace msdm
