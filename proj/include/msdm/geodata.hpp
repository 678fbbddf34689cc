#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msdm/error.hpp"
#include "msdm/text.hpp"

namespace msdm {

static_assert(std::endian::native == std::endian::little,
              "GRB1 payloads are read and written as host floats; big-endian hosts need byte swapping");

/// Affine north-up mapping between world coordinates and pixel indices.
/// The origin is the outer corner of pixel (0, 0); rows grow southward.
struct GeoTransform {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double pixel_size_x = 1.0;
  double pixel_size_y = 1.0;
  std::string crs_label;

  void validate() const {
    if (!(pixel_size_x > 0.0) || !(pixel_size_y > 0.0)) {
      throw ConfigError("pixel sizes must be positive");
    }
  }
};

struct PixelIndex {
  long row = 0;
  long col = 0;
  bool operator==(const PixelIndex&) const = default;
};

struct BandStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Multi-band grid, band-major then row-major.
struct GeoRaster {
  int bands = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;
  std::vector<std::optional<float>> nodata;  // one entry per band
  GeoTransform transform;
  std::vector<std::string> band_names;
  std::optional<std::vector<BandStats>> band_stats;

  GeoRaster() = default;
  GeoRaster(int b, int h, int w, GeoTransform t)
      : bands(b), height(h), width(w),
        data(static_cast<std::size_t>(b) * h * w, 0.0f),
        nodata(static_cast<std::size_t>(b)),
        transform(std::move(t)) {
    for (int i = 0; i < b; ++i) band_names.push_back("band" + std::to_string(i));
    validate();
  }

  std::size_t band_size() const { return static_cast<std::size_t>(height) * width; }

  float& at(int band, long row, long col) {
    return data[band * band_size() + static_cast<std::size_t>(row) * width + col];
  }
  float at(int band, long row, long col) const {
    return data[band * band_size() + static_cast<std::size_t>(row) * width + col];
  }

  std::span<const float> band(int b) const {
    return {data.data() + b * band_size(), band_size()};
  }

  bool is_valid(int band, float v) const {
    if (std::isnan(v)) return false;
    const auto& nd = nodata[band];
    return !(nd && v == *nd);
  }

  void validate() const {
    if (bands < 1 || height < 1 || width < 1) throw ConfigError("raster dimensions must be positive");
    if (data.size() != static_cast<std::size_t>(bands) * height * width) {
      throw ConfigError("raster data size does not match bands*height*width");
    }
    if (nodata.size() != static_cast<std::size_t>(bands) ||
        band_names.size() != static_cast<std::size_t>(bands)) {
      throw ConfigError("per-band metadata count does not match band count");
    }
    if (band_stats) {
      if (band_stats->size() != static_cast<std::size_t>(bands)) {
        throw ConfigError("band statistics count does not match band count");
      }
      for (const auto& s : *band_stats) {
        if (!(s.std > 0.0)) throw ConfigError("band std must be positive");
      }
    }
    transform.validate();
  }

  double min_x() const { return transform.origin_x; }
  double max_x() const { return transform.origin_x + width * transform.pixel_size_x; }
  double max_y() const { return transform.origin_y; }
  double min_y() const { return transform.origin_y - height * transform.pixel_size_y; }
};

/// Index of the pixel whose cell contains (lon, lat). Cell boundaries belong
/// to the higher-index cell.
inline PixelIndex world_to_pixel(const GeoRaster& raster, double lon, double lat) {
  const auto& t = raster.transform;
  const double fx = std::floor((lon - t.origin_x) / t.pixel_size_x);
  const double fy = std::floor((t.origin_y - lat) / t.pixel_size_y);
  if (!(fx >= 0.0 && fx < raster.width && fy >= 0.0 && fy < raster.height)) {
    throw OutOfBounds("coordinate (" + text::fmt(lon) + ", " + text::fmt(lat) + ") outside raster extent");
  }
  return {static_cast<long>(fy), static_cast<long>(fx)};
}

/// World coordinate of a pixel centre.
inline std::pair<double, double> pixel_to_world(const GeoRaster& raster, long row, long col) {
  const auto& t = raster.transform;
  return {t.origin_x + (static_cast<double>(col) + 0.5) * t.pixel_size_x,
          t.origin_y - (static_cast<double>(row) + 0.5) * t.pixel_size_y};
}

/// Population mean/std per band over valid pixels; stored on the raster.
inline const std::vector<BandStats>& compute_band_stats(GeoRaster& raster) {
  std::vector<BandStats> stats;
  stats.reserve(raster.bands);
  for (int b = 0; b < raster.bands; ++b) {
    double sum = 0.0;
    std::size_t n = 0;
    for (float v : raster.band(b)) {
      if (!raster.is_valid(b, v)) continue;
      sum += v;
      ++n;
    }
    if (n < 2) throw DegenerateBand("band '" + raster.band_names[b] + "' has fewer than two valid pixels");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (float v : raster.band(b)) {
      if (!raster.is_valid(b, v)) continue;
      ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 0.0)) throw DegenerateBand("band '" + raster.band_names[b] + "' is constant");
    stats.push_back({mean, sd});
  }
  raster.band_stats = std::move(stats);
  return *raster.band_stats;
}

struct Patch {
  std::string modality;
  std::pair<double, double> center;
  int size = 0;
  int bands = 0;
  std::vector<float> values;  // bands × size × size

  float at(int band, int row, int col) const {
    return values[(static_cast<std::size_t>(band) * size + row) * size + col];
  }
};

enum class PatchStatus { Ok, OutOfBounds, NodataInWindow };

/// Writes the normalized size×size window centred on `center` into `out`
/// (length bands*size*size). Returns the failure reason instead of throwing
/// so batch assembly can count skips cheaply.
inline PatchStatus extract_patch_into(const GeoRaster& raster, PixelIndex center, int size,
                                      std::span<float> out) {
  if (size < 1 || size % 2 == 0) throw ConfigError("patch size must be odd and >= 1");
  if (!raster.band_stats) throw ConfigError("raster has no band statistics; compute them first");
  if (out.size() != static_cast<std::size_t>(raster.bands) * size * size) {
    throw ShapeMismatch("patch buffer has wrong length");
  }
  const long half = size / 2;
  const long r0 = center.row - half;
  const long c0 = center.col - half;
  if (r0 < 0 || c0 < 0 || r0 + size > raster.height || c0 + size > raster.width) {
    return PatchStatus::OutOfBounds;
  }
  std::size_t k = 0;
  for (int b = 0; b < raster.bands; ++b) {
    const auto [mean, sd] = (*raster.band_stats)[b];
    for (long r = r0; r < r0 + size; ++r) {
      for (long c = c0; c < c0 + size; ++c) {
        const float v = raster.at(b, r, c);
        if (!raster.is_valid(b, v)) return PatchStatus::NodataInWindow;
        out[k++] = static_cast<float>((static_cast<double>(v) - mean) / sd);
      }
    }
  }
  return PatchStatus::Ok;
}

inline PatchStatus extract_patch_into(const GeoRaster& raster, double lon, double lat, int size,
                                      std::span<float> out) {
  const auto& t = raster.transform;
  const double fx = std::floor((lon - t.origin_x) / t.pixel_size_x);
  const double fy = std::floor((t.origin_y - lat) / t.pixel_size_y);
  if (!(fx >= 0.0 && fx < raster.width && fy >= 0.0 && fy < raster.height)) return PatchStatus::OutOfBounds;
  return extract_patch_into(raster, PixelIndex{static_cast<long>(fy), static_cast<long>(fx)}, size, out);
}

inline Patch extract_patch(const GeoRaster& raster, std::pair<double, double> center, int size,
                           std::string modality = {}) {
  Patch p;
  p.modality = std::move(modality);
  p.center = center;
  p.size = size;
  p.bands = raster.bands;
  p.values.resize(static_cast<std::size_t>(raster.bands) * size * size);
  const auto pix = world_to_pixel(raster, center.first, center.second);
  switch (extract_patch_into(raster, pix, size, p.values)) {
    case PatchStatus::Ok:
      return p;
    case PatchStatus::OutOfBounds:
      throw OutOfBounds("window of size " + std::to_string(size) + " crosses the raster edge");
    case PatchStatus::NodataInWindow:
      break;
  }
  throw NodataInWindow("window of size " + std::to_string(size) + " contains nodata");
}

struct Footprint {
  double side_km = 0.0;
  double area_km2 = 0.0;
};

inline Footprint footprint(int size, double pixel_ground_km) {
  if (size < 1) throw ConfigError("footprint size must be >= 1");
  const double side = size * pixel_ground_km;
  return {side, side * side};
}

/// Round half away from zero to `digits` decimals, via decimal text so that
/// binary representation error (0.36 → 0.35999…) does not leak in.
inline double round_decimals(double v, int digits) {
  const std::string s = text::fixed(v, digits + 6);
  const double scaled = text::parse_double(s, "round") * std::pow(10.0, digits);
  return std::round(scaled) / std::pow(10.0, digits);
}

// ---------------------------------------------------------------------------
// GRB1 file format: "key: value" header lines, a blank line, then
// bands*height*width little-endian float32 values (band-major, row-major).

namespace grb1_detail {

inline std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i];
  }
  return out;
}

}  // namespace grb1_detail

inline std::string encode_grb1(const GeoRaster& r) {
  r.validate();
  std::string h = "magic: GRB1\n";
  h += "bands: " + std::to_string(r.bands) + "\n";
  h += "height: " + std::to_string(r.height) + "\n";
  h += "width: " + std::to_string(r.width) + "\n";
  h += "origin_x: " + text::fmt(r.transform.origin_x) + "\n";
  h += "origin_y: " + text::fmt(r.transform.origin_y) + "\n";
  h += "pixel_size_x: " + text::fmt(r.transform.pixel_size_x) + "\n";
  h += "pixel_size_y: " + text::fmt(r.transform.pixel_size_y) + "\n";
  h += "crs: " + r.transform.crs_label + "\n";
  std::vector<std::string> nd;
  for (const auto& v : r.nodata) nd.push_back(v ? text::fmt(*v) : "none");
  h += "nodata: " + grb1_detail::join(nd) + "\n";
  h += "band_names: " + grb1_detail::join(r.band_names) + "\n";
  if (r.band_stats) {
    std::vector<std::string> means, stds;
    for (const auto& s : *r.band_stats) {
      means.push_back(text::fmt(s.mean));
      stds.push_back(text::fmt(s.std));
    }
    h += "band_means: " + grb1_detail::join(means) + "\n";
    h += "band_stds: " + grb1_detail::join(stds) + "\n";
  }
  h += "\n";
  const std::size_t nbytes = r.data.size() * sizeof(float);
  std::string out = h;
  out.resize(h.size() + nbytes);
  std::memcpy(out.data() + h.size(), r.data.data(), nbytes);
  return out;
}

inline GeoRaster decode_grb1(const std::string& bytes) {
  std::size_t pos = 0;
  std::vector<std::pair<std::string, std::string>> kv;
  while (true) {
    const auto eol = bytes.find('\n', pos);
    if (eol == std::string::npos) throw DataError("GRB1: header is not terminated by a blank line");
    std::string_view line(bytes.data() + pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) break;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) throw DataError("GRB1: malformed header line '" + std::string(line) + "'");
    kv.emplace_back(std::string(text::trim(line.substr(0, colon))), std::string(text::trim(line.substr(colon + 1))));
  }
  auto get = [&](const std::string& key) -> const std::string* {
    for (const auto& [k, v] : kv)
      if (k == key) return &v;
    return nullptr;
  };
  auto need = [&](const std::string& key) -> const std::string& {
    const auto* v = get(key);
    if (!v) throw DataError("GRB1: missing header key '" + key + "'");
    return *v;
  };
  if (need("magic") != "GRB1") throw DataError("GRB1: bad magic");

  GeoTransform t;
  t.origin_x = text::parse_double(need("origin_x"), "origin_x");
  t.origin_y = text::parse_double(need("origin_y"), "origin_y");
  t.pixel_size_x = text::parse_double(need("pixel_size_x"), "pixel_size_x");
  t.pixel_size_y = text::parse_double(need("pixel_size_y"), "pixel_size_y");
  if (const auto* crs = get("crs")) t.crs_label = *crs;
  const int bands = static_cast<int>(text::parse_int(need("bands"), "bands"));
  const int height = static_cast<int>(text::parse_int(need("height"), "height"));
  const int width = static_cast<int>(text::parse_int(need("width"), "width"));
  if (bands < 1 || height < 1 || width < 1) throw DataError("GRB1: non-positive dimensions");

  GeoRaster r(bands, height, width, t);
  if (const auto* names = get("band_names")) {
    auto parts = text::split(*names, ',');
    if (static_cast<int>(parts.size()) != bands) throw DataError("GRB1: band_names count mismatch");
    r.band_names = std::move(parts);
  }
  if (const auto* nd = get("nodata")) {
    auto parts = text::split(*nd, ',');
    if (parts.size() == 1) parts.assign(bands, parts[0]);
    if (static_cast<int>(parts.size()) != bands) throw DataError("GRB1: nodata count mismatch");
    for (int b = 0; b < bands; ++b) {
      if (parts[b] != "none" && !parts[b].empty()) {
        r.nodata[b] = static_cast<float>(text::parse_double(parts[b], "nodata"));
      }
    }
  }
  const auto* means = get("band_means");
  const auto* stds = get("band_stds");
  if ((means == nullptr) != (stds == nullptr)) throw DataError("GRB1: band_means and band_stds must appear together");
  if (means) {
    const auto m = text::split(*means, ',');
    const auto s = text::split(*stds, ',');
    if (static_cast<int>(m.size()) != bands || static_cast<int>(s.size()) != bands) {
      throw DataError("GRB1: band statistics count mismatch");
    }
    std::vector<BandStats> stats;
    for (int b = 0; b < bands; ++b) {
      stats.push_back({text::parse_double(m[b], "band_means"), text::parse_double(s[b], "band_stds")});
    }
    r.band_stats = std::move(stats);
  }
  const std::size_t nbytes = r.data.size() * sizeof(float);
  if (bytes.size() - pos != nbytes) {
    throw DataError("GRB1: payload has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                    std::to_string(nbytes));
  }
  std::memcpy(r.data.data(), bytes.data() + pos, nbytes);
  try {
    r.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("GRB1: ") + e.what());
  }
  return r;
}

inline void write_grb1(const std::string& path, const GeoRaster& r) { text::write_file(path, encode_grb1(r)); }

inline GeoRaster read_grb1(const std::string& path) { return decode_grb1(text::read_file(path)); }

}  // namespace msdm
