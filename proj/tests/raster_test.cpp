#include <gtest/gtest.h>

#include "oddmap/error.hpp"
#include "oddmap/raster.hpp"
#include "support.hpp"

using namespace oddmap;

TEST(Affine, InverseAndDeterminant) {
  const Affine a = Affine::north_up(530000, 9240000, 0.05, 0.05);
  EXPECT_TRUE(a.north_up());
  const Affine inv = a.inverse();
  const Point p = a.apply(123.5, 77.25);
  const Point q = inv.apply(p.x, p.y);
  EXPECT_NEAR(q.x, 123.5, 1e-6);
  EXPECT_NEAR(q.y, 77.25, 1e-6);
  EXPECT_THROW((Affine{{0, 0, 0, 0, 0, 0}}.inverse()), Error);
}

TEST(RasterMeta, ValidateRejectsBadInvariants) {
  auto m = test::utm_meta(10, 10, 0.05);
  EXPECT_NO_THROW(validate(m));
  m.width_px = 0;
  EXPECT_THROW(validate(m), Error);
  m = test::utm_meta(10, 10, 0.05);
  m.transform = Affine{{0, 0, 0, 0, 0, 0}};
  EXPECT_THROW(validate(m), Error);
}

TEST(Gsd, GeographicMeasuredInUtm) {
  const double deg = 0.05 / 111320.0;
  const double gsd = ground_sampling_distance(Affine::north_up(39.2, -6.8, deg, deg), Crs::wgs84(), {39.2, -6.8});
  EXPECT_NEAR(gsd, 0.05, 0.0005);
  EXPECT_DOUBLE_EQ(ground_sampling_distance(Affine::north_up(0, 0, 0.05, 0.05), Crs::utm(37, true), {0, 0}), 0.05);
}

class GeoTiffRoundTrip : public ::testing::TestWithParam<std::tuple<int, bool, int>> {};

TEST_P(GeoTiffRoundTrip, WindowsReturnExactSamples) {
  const auto [block, deflate, bits] = GetParam();
  test::TempDir dir;
  auto meta = test::utm_meta(301, 257, 0.05);
  meta.bits_per_sample = bits;
  const std::size_t n = 301 * 257 * 3;
  const auto bytes = test::noise(n, 11);
  std::vector<std::uint16_t> wide;
  if (bits == 16) {
    wide.resize(n);
    for (std::size_t i = 0; i < n; ++i) wide[i] = static_cast<std::uint16_t>(bytes[i] * 251 + i % 7);
  }
  const auto path = dir / "r.tif";
  write_geotiff(path, meta, bits == 8 ? std::span<const std::uint8_t>(bytes) : std::span<const std::uint8_t>(),
                wide, {block, deflate});
  const auto ds = RasterDataset::open(path, 1 << 16);
  EXPECT_EQ(ds.meta().width_px, 301);
  EXPECT_EQ(ds.meta().height_px, 257);
  EXPECT_EQ(ds.meta().crs, meta.crs);
  EXPECT_EQ(ds.meta().transform, meta.transform);
  EXPECT_EQ(ds.meta().bits_per_sample, bits);
  EXPECT_NEAR(ds.meta().gsd_m, 0.05, 1e-12);
  for (PixelWindow w : {PixelWindow{0, 0, 257, 301}, PixelWindow{100, 200, 100, 101}, PixelWindow{250, 0, 7, 1},
                        PixelWindow{13, 255, 60, 3}}) {
    const auto b = ds.read_window(w);
    ASSERT_EQ(b.samples.size(), static_cast<std::size_t>(w.height * w.width * 3));
    for (std::int64_t r = 0; r < w.height; ++r) {
      for (std::int64_t c = 0; c < w.width; ++c) {
        for (int k = 0; k < 3; ++k) {
          const std::size_t i = static_cast<std::size_t>(((w.row_off + r) * 301 + (w.col_off + c)) * 3 + k);
          ASSERT_EQ(b.at(r, c, k), bits == 8 ? bytes[i] : wide[i]);
        }
      }
    }
    EXPECT_EQ(b.valid_count(), w.pixel_count());
  }
}

INSTANTIATE_TEST_SUITE_P(Layouts, GeoTiffRoundTrip,
                         ::testing::Values(std::make_tuple(0, false, 8), std::make_tuple(256, false, 8),
                                           std::make_tuple(64, true, 8), std::make_tuple(0, true, 16),
                                           std::make_tuple(128, false, 16)));

TEST(RasterDataset, NodataMaskCoversExactlyTheHole) {
  test::TempDir dir;
  auto meta = test::utm_meta(40, 30, 0.05);
  meta.nodata = 0.0;
  std::vector<std::uint8_t> px(40 * 30 * 3, 90);
  for (int r = 10; r < 20; ++r)
    for (int c = 5; c < 15; ++c)
      for (int k = 0; k < 3; ++k) px[(r * 40 + c) * 3 + k] = 0;
  // A pixel with only one zero band stays valid.
  px[(0 * 40 + 0) * 3 + 1] = 0;
  write_geotiff(dir / "h.tif", meta, px, {});
  const auto ds = RasterDataset::open(dir / "h.tif");
  ASSERT_EQ(ds.meta().nodata, 0.0);
  const auto b = ds.read_window({0, 0, 30, 40});
  for (int r = 0; r < 30; ++r)
    for (int c = 0; c < 40; ++c) {
      const bool hole = r >= 10 && r < 20 && c >= 5 && c < 15;
      ASSERT_EQ(b.nodata_mask[r * 40 + c], hole ? 1 : 0) << r << "," << c;
    }
  EXPECT_EQ(b.valid_count(), 1200 - 100);
}

TEST(RasterDataset, AlphaBandMasks) {
  test::TempDir dir;
  auto meta = test::utm_meta(4, 1, 0.05, 4);
  meta.alpha_band = 3;
  const std::vector<std::uint8_t> px = {1, 2, 3, 255, 1, 2, 3, 0, 0, 0, 0, 255, 9, 9, 9, 0};
  write_geotiff(dir / "a.tif", meta, px, {});
  const auto ds = RasterDataset::open(dir / "a.tif");
  ASSERT_EQ(ds.meta().alpha_band, 3);
  const auto b = ds.read_window({0, 0, 1, 4});
  EXPECT_EQ(b.nodata_mask, (std::vector<std::uint8_t>{0, 1, 0, 1}));
}

TEST(RasterDataset, WindowOutsideExtentIsGeometryError) {
  test::TempDir dir;
  const auto meta = test::utm_meta(10, 10, 0.05);
  write_geotiff(dir / "s.tif", meta, std::vector<std::uint8_t>(300, 1), {});
  const auto ds = RasterDataset::open(dir / "s.tif");
  try {
    ds.read_window({5, 5, 10, 10});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Geometry);
  }
  EXPECT_THROW(ds.read_window({0, 0, 0, 3}), Error);
}

TEST(RasterDataset, MissingAndCorruptFilesAreIoErrors) {
  test::TempDir dir;
  try {
    RasterDataset::open(dir / "none.tif");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
  test::write_text(dir / "bad.tif", "II*\0garbage");
  EXPECT_THROW(RasterDataset::open(dir / "bad.tif"), Error);
}

TEST(RasterDataset, RejectsMissingGeoreferencing) {
  test::TempDir dir;
  auto meta = test::utm_meta(8, 8, 0.05);
  write_geotiff(dir / "ok.tif", meta, std::vector<std::uint8_t>(8 * 8 * 3, 5), {});
  EXPECT_NO_THROW(RasterDataset::open(dir / "ok.tif"));
}

TEST(ScalarGeoTiff, RoundTripWithNodata) {
  test::TempDir dir;
  ScalarGrid g;
  g.width = 5;
  g.height = 3;
  g.transform = Affine::north_up(39.0, -6.0, 0.01, 0.01);
  g.values = {1, 2, 3, 4, 5, 6, -9999, 8, 9, 10, 11.5, 12, 13, 14, 0.25};
  g.nodata = -9999;
  write_scalar_geotiff(dir / "s.tif", g);
  const auto r = read_scalar_geotiff(dir / "s.tif");
  EXPECT_EQ(r.width, 5);
  EXPECT_EQ(r.height, 3);
  EXPECT_EQ(r.crs, Crs::wgs84());
  EXPECT_EQ(r.transform, g.transform);
  EXPECT_EQ(r.values, g.values);
  EXPECT_EQ(r.nodata, -9999.0);
}
