#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "msdm/geodata.hpp"
#include "msdm/rng.hpp"

using namespace msdm;

namespace {

GeoRaster grid(int bands, int h, int w, double origin_y = 10.0, double px = 1.0) {
  GeoTransform t{0.0, origin_y, px, px, "test"};
  GeoRaster r(bands, h, w, t);
  for (int b = 0; b < bands; ++b)
    for (int row = 0; row < h; ++row)
      for (int col = 0; col < w; ++col) r.at(b, row, col) = static_cast<float>(100 * b + 10 * row + col);
  return r;
}

GeoRaster random_raster(std::uint64_t seed, int bands, int h, int w) {
  GeoRaster r(bands, h, w, GeoTransform{-3.0, 7.0, 0.5, 0.25, ""});
  Rng rng(seed);
  for (auto& v : r.data) v = static_cast<float>(rng.normal() * 3.0 + 1.0);
  compute_band_stats(r);
  return r;
}

}  // namespace

TEST(WorldToPixel, FirstCellAndIntegerGrid) {
  const GeoRaster r = grid(1, 10, 10);
  EXPECT_EQ(world_to_pixel(r, 0.5, 9.5), (PixelIndex{0, 0}));
  EXPECT_EQ(world_to_pixel(r, 2.5, 7.5), (PixelIndex{2, 2}));
  EXPECT_THROW(world_to_pixel(r, -1.0, 9.5), OutOfBounds);
  EXPECT_THROW(world_to_pixel(r, 0.5, 10.5), OutOfBounds);
  EXPECT_THROW(world_to_pixel(r, 10.0, 5.0), OutOfBounds);
}

TEST(WorldToPixel, BoundariesBelongToHigherIndexCell) {
  const GeoRaster r = grid(1, 10, 10);
  EXPECT_EQ(world_to_pixel(r, 3.0, 6.0), (PixelIndex{4, 3}));
  EXPECT_EQ(world_to_pixel(r, 0.0, 10.0), (PixelIndex{0, 0}));
}

TEST(WorldToPixel, RoundTripStaysWithinHalfAPixel) {
  const GeoRaster r = random_raster(1, 1, 17, 23);
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const double lon = rng.uniform(r.min_x(), r.max_x());
    const double lat = rng.uniform(r.min_y() + 1e-9, r.max_y());
    const auto px = world_to_pixel(r, lon, lat);
    const auto [x, y] = pixel_to_world(r, px.row, px.col);
    EXPECT_LE(std::abs(x - lon), 0.5 * r.transform.pixel_size_x + 1e-12);
    EXPECT_LE(std::abs(y - lat), 0.5 * r.transform.pixel_size_y + 1e-12);
    EXPECT_EQ(world_to_pixel(r, x, y), px);
  }
}

TEST(BandStats, PopulationStatistics) {
  GeoRaster r(1, 1, 3, GeoTransform{});
  r.data = {1, 2, 3};
  const auto& s = compute_band_stats(r);
  EXPECT_DOUBLE_EQ(s[0].mean, 2.0);
  EXPECT_NEAR(s[0].std, std::sqrt(2.0 / 3.0), 1e-12);
  EXPECT_NEAR(s[0].std, 0.8165, 1e-4);
}

TEST(BandStats, DegenerateBands) {
  GeoRaster r(1, 1, 3, GeoTransform{});
  r.data = {5, 5, -9};
  r.nodata[0] = -9.0f;
  EXPECT_THROW(compute_band_stats(r), DegenerateBand);
  r.data = {-9, -9, -9};
  EXPECT_THROW(compute_band_stats(r), DegenerateBand);
  r.data = {NAN, 1, NAN};
  EXPECT_THROW(compute_band_stats(r), DegenerateBand);
}

TEST(BandStats, NodataIsExcluded) {
  GeoRaster r(1, 1, 4, GeoTransform{});
  r.data = {1, 3, -1, -1};
  r.nodata[0] = -1.0f;
  const auto& s = compute_band_stats(r);
  EXPECT_DOUBLE_EQ(s[0].mean, 2.0);
  EXPECT_DOUBLE_EQ(s[0].std, 1.0);
}

TEST(Patch, NormalizedValuesHaveUnitMoments) {
  const GeoRaster r = random_raster(3, 2, 20, 20);
  for (int b = 0; b < 2; ++b) {
    double s = 0, ss = 0;
    const auto [mean, sd] = (*r.band_stats)[b];
    for (float v : r.band(b)) {
      const double z = (v - mean) / sd;
      s += z;
      ss += z * z;
    }
    EXPECT_NEAR(s / 400.0, 0.0, 1e-5);
    EXPECT_NEAR(ss / 400.0, 1.0, 1e-5);
  }
}

TEST(Patch, SizeOneIsTheNormalizedPixel) {
  GeoRaster r = grid(2, 10, 10);
  compute_band_stats(r);
  const Patch p = extract_patch(r, {3.5, 5.5}, 1);
  ASSERT_EQ(p.values.size(), 2u);
  for (int b = 0; b < 2; ++b) {
    const auto [mean, sd] = (*r.band_stats)[b];
    EXPECT_FLOAT_EQ(p.values[b], static_cast<float>((r.at(b, 4, 3) - mean) / sd));
  }
}

TEST(Patch, CentreMatchesContainingPixelForEveryOddSize) {
  const GeoRaster r = random_raster(4, 3, 31, 31);
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const double lon = rng.uniform(r.min_x(), r.max_x());
    const double lat = rng.uniform(r.min_y() + 1e-9, r.max_y());
    const auto px = world_to_pixel(r, lon, lat);
    for (int k = 1; k <= 9; k += 2) {
      std::vector<float> buf(3 * k * k);
      if (extract_patch_into(r, lon, lat, k, buf) != PatchStatus::Ok) continue;
      for (int b = 0; b < 3; ++b) {
        const auto [mean, sd] = (*r.band_stats)[b];
        EXPECT_EQ(buf[(b * k + k / 2) * k + k / 2], static_cast<float>((r.at(b, px.row, px.col) - mean) / sd));
      }
    }
  }
}

TEST(Patch, NestedWindowsAgree) {
  const GeoRaster r = random_raster(6, 2, 25, 25);
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::pair<double, double> c{rng.uniform(r.min_x(), r.max_x()), rng.uniform(r.min_y() + 1e-9, r.max_y())};
    const int k1 = 1 + 2 * static_cast<int>(rng.below(4));
    const int k2 = k1 + 2 * static_cast<int>(rng.below(4));
    Patch a, b;
    try {
      a = extract_patch(r, c, k1);
      b = extract_patch(r, c, k2);
    } catch (const OutOfBounds&) {
      continue;
    }
    const int off = (k2 - k1) / 2;
    for (int band = 0; band < 2; ++band)
      for (int row = 0; row < k1; ++row)
        for (int col = 0; col < k1; ++col) EXPECT_EQ(a.at(band, row, col), b.at(band, row + off, col + off));
  }
}

TEST(Patch, EdgeAndNodataPolicies) {
  GeoRaster r = grid(1, 10, 10);
  r.nodata[0] = 55.0f;  // pixel (5, 5)
  compute_band_stats(r);
  EXPECT_THROW(extract_patch(r, {0.5, 9.5}, 3), OutOfBounds);
  EXPECT_NO_THROW(extract_patch(r, {1.5, 8.5}, 3));
  EXPECT_THROW(extract_patch(r, {4.5, 5.5}, 3), NodataInWindow);
  EXPECT_NO_THROW(extract_patch(r, {2.5, 7.5}, 3));
  EXPECT_THROW(extract_patch(r, {2.5, 7.5}, 4), ConfigError);
  GeoRaster nostats = grid(1, 10, 10);
  EXPECT_THROW(extract_patch(nostats, {2.5, 7.5}, 3), ConfigError);
}

TEST(Footprint, GroundSizes) {
  EXPECT_DOUBLE_EQ(footprint(25, 0.01).side_km, 0.25);
  EXPECT_DOUBLE_EQ(round_decimals(footprint(25, 0.01).area_km2, 2), 0.06);
  EXPECT_DOUBLE_EQ(round_decimals(footprint(1, 0.6).area_km2, 2), 0.36);
  EXPECT_DOUBLE_EQ(round_decimals(footprint(25, 0.6).area_km2, 2), 225.0);
  EXPECT_DOUBLE_EQ(round_decimals(footprint(59, 0.01).area_km2, 2), 0.35);
  EXPECT_DOUBLE_EQ(round_decimals(footprint(115, 0.01).side_km, 2), 1.15);
  // 1.15² = 1.3225, which rounds to 1.32 at two decimals
  EXPECT_DOUBLE_EQ(round_decimals(footprint(115, 0.01).area_km2, 2), 1.32);
  EXPECT_THROW(footprint(0, 1.0), ConfigError);
}

TEST(RoundDecimals, HalfAwayFromZeroOnDecimalText) {
  EXPECT_DOUBLE_EQ(round_decimals(0.125, 2), 0.13);
  EXPECT_DOUBLE_EQ(round_decimals(-0.125, 2), -0.13);
  EXPECT_DOUBLE_EQ(round_decimals(2.675, 2), 2.68);
  EXPECT_DOUBLE_EQ(round_decimals(29.16, 2), 29.16);
}

TEST(Grb1, RoundTripIsExact) {
  GeoRaster r = random_raster(8, 3, 5, 7);
  r.nodata[1] = -9999.0f;
  r.band_names = {"a", "b", "c"};
  r.transform.crs_label = "synthetic-km";
  const GeoRaster back = decode_grb1(encode_grb1(r));
  EXPECT_EQ(back.data, r.data);
  EXPECT_EQ(back.bands, 3);
  EXPECT_EQ(back.height, 5);
  EXPECT_EQ(back.width, 7);
  EXPECT_EQ(back.band_names, r.band_names);
  EXPECT_FALSE(back.nodata[0].has_value());
  EXPECT_EQ(back.nodata[1], -9999.0f);
  EXPECT_EQ(back.transform.origin_x, r.transform.origin_x);
  EXPECT_EQ(back.transform.pixel_size_y, r.transform.pixel_size_y);
  EXPECT_EQ(back.transform.crs_label, "synthetic-km");
  ASSERT_TRUE(back.band_stats.has_value());
  for (int b = 0; b < 3; ++b) {
    EXPECT_EQ((*back.band_stats)[b].mean, (*r.band_stats)[b].mean);
    EXPECT_EQ((*back.band_stats)[b].std, (*r.band_stats)[b].std);
  }
  EXPECT_EQ(encode_grb1(back), encode_grb1(r));
}

TEST(Grb1, WritesAndReadsFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "msdm_test_grb1";
  std::filesystem::create_directories(dir);
  const GeoRaster r = random_raster(9, 1, 4, 4);
  write_grb1((dir / "r.grb1").string(), r);
  EXPECT_EQ(read_grb1((dir / "r.grb1").string()).data, r.data);
  std::filesystem::remove_all(dir);
}

TEST(Grb1, RejectsMalformedInput) {
  const std::string good = encode_grb1(random_raster(10, 1, 2, 2));
  EXPECT_THROW(decode_grb1("magic: GRB2\n\n"), DataError);
  EXPECT_THROW(decode_grb1(good.substr(0, good.size() - 1)), DataError);
  EXPECT_THROW(decode_grb1("magic: GRB1\nbands: 1\n"), DataError);
  std::string missing = good;
  missing.replace(missing.find("height"), 6, "heigth");
  EXPECT_THROW(decode_grb1(missing), DataError);
}
