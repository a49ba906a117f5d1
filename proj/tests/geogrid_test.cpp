#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "oddmap/error.hpp"
#include "oddmap/geogrid.hpp"
#include "oddmap/rng.hpp"
#include "support.hpp"

using namespace oddmap;

namespace {

bool interiors_overlap(const Rect& a, const Rect& b) {
  return a.min_x < b.max_x && b.min_x < a.max_x && a.min_y < b.max_y && b.min_y < a.max_y;
}

}  // namespace

TEST(WorkingCrs, MetricInputIsKept) {
  auto m = test::utm_meta(10, 10, 0.05);
  m.crs = Crs::utm(36, true);
  EXPECT_EQ(choose_working_crs(m), Crs::utm(36, true));
}

TEST(WorkingCrs, GeographicPicksCentroidZone) {
  RasterMeta m;
  m.width_px = 100;
  m.height_px = 100;
  m.crs = Crs::wgs84();
  m.transform = Affine::north_up(39.19, -6.79, 0.0002, 0.0002);
  EXPECT_EQ(choose_working_crs(m), Crs::utm(37, true));
  m.transform = Affine::north_up(-0.009, 0.011, 0.0002, 0.0002);
  EXPECT_EQ(choose_working_crs(m), Crs::utm(31, false));
}

TEST(MakeGrid, FiveHundredMeterFootprintGivesTenThousandTiles) {
  const auto meta = test::utm_meta(10000, 10000, 0.05);
  const Grid g = make_grid(meta);
  ASSERT_EQ(g.tiles.size(), 10000u);
  for (std::size_t i = 0; i < g.tiles.size(); ++i) {
    const auto& t = g.tiles[i];
    ASSERT_EQ(t.id.row, static_cast<std::int64_t>(i / 100));
    ASSERT_EQ(t.id.col, static_cast<std::int64_t>(i % 100));
    ASSERT_EQ(t.pixel_window, (PixelWindow{t.id.row * 100, t.id.col * 100, 100, 100}));
    ASSERT_EQ(t.valid_fraction, 1.0);
  }
}

TEST(MakeGrid, FullTileRuleAndPartials) {
  // 52 m x 50 m at 0.5 m/px.
  const auto meta = test::utm_meta(104, 100, 0.5);
  EXPECT_EQ(make_grid(meta).tiles.size(), 100u);
  GridSpec spec;
  spec.include_partials = true;
  const Grid g = make_grid(meta, spec);
  ASSERT_EQ(g.tiles.size(), 110u);
  for (const auto& t : g.tiles) {
    if (t.id.col == 10) {
      EXPECT_NEAR(t.valid_fraction, 0.4, 1e-12);
      EXPECT_EQ(t.pixel_window.width, 4);
    } else {
      EXPECT_EQ(t.valid_fraction, 1.0);
    }
  }
}

TEST(MakeGrid, SmallerThanOneTileIsEmpty) {
  EXPECT_TRUE(make_grid(test::utm_meta(8, 8, 0.5)).tiles.empty());
}

TEST(MakeGrid, NonMetricWorkingCrsIsConfigError) {
  GridSpec spec;
  spec.working_crs = Crs::wgs84();
  try {
    make_grid(test::utm_meta(100, 100, 0.05), spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
  spec.working_crs.reset();
  spec.tile_size_m = 0;
  EXPECT_THROW(make_grid(test::utm_meta(100, 100, 0.05), spec), Error);
}

TEST(TileToWindow, CeilForNonDividingGsd) {
  const auto meta = test::utm_meta(1000, 1000, 0.0352, 3, {530000.0, 9240000.0});
  const Rect b{530000.0, 9240000.0 - 5.0, 530005.0, 9240000.0};
  const auto w = tile_to_window(b, meta.crs, meta);
  EXPECT_EQ(w.width, 143);
  EXPECT_EQ(w.height, 143);
  // Oracle: enumerate pixels whose area meets the tile.
  std::int64_t count = 0;
  for (int c = 0; c < 200; ++c) {
    const double x0 = 530000.0 + c * 0.0352, x1 = x0 + 0.0352;
    count += x0 < b.max_x && x1 > b.min_x;
  }
  EXPECT_EQ(count, 143);
}

TEST(TileToWindow, DisjointTileIsGeometryError) {
  const auto meta = test::utm_meta(100, 100, 0.05);
  try {
    tile_to_window({0, 0, 5, 5}, meta.crs, meta);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Geometry);
  }
}

TEST(GridFrame, RoundTripAndEdgeOwnership) {
  GridFrame f{Crs::utm(37, true), 5.0, {530000.0, 9240000.0}};
  for (std::int64_t r = -3; r < 4; ++r) {
    for (std::int64_t c = -3; c < 4; ++c) {
      const Rect b = f.bounds_of({r, c});
      EXPECT_EQ(f.tile_at({(b.min_x + b.max_x) / 2, (b.min_y + b.max_y) / 2}), (TileId{r, c}));
      EXPECT_EQ(b.width(), 5.0);
    }
  }
  // Shared west/east edge goes east; shared north/south edge goes south.
  EXPECT_EQ(f.tile_at({530005.0, 9239997.0}), (TileId{0, 1}));
  EXPECT_EQ(f.tile_at({530002.0, 9239995.0}), (TileId{1, 0}));
}

TEST(MakeGrid, RandomizedPartitionAndRoundTrip) {
  Rng rng(2024);
  for (int iter = 0; iter < 1000; ++iter) {
    const double gsd = 0.03 + 0.1 * rng.uniform();
    const auto w = static_cast<std::int64_t>(50 + rng.below(400));
    const auto h = static_cast<std::int64_t>(50 + rng.below(400));
    const Point origin{500000.0 + 1000.0 * rng.uniform(), 9000000.0 + 1000.0 * rng.uniform()};
    const auto meta = test::utm_meta(w, h, gsd, 3, origin);
    GridSpec spec;
    spec.tile_size_m = 1.0 + 4.0 * rng.uniform();
    const Grid g = make_grid(meta, spec);
    const Rect fp = meta.bounds();
    // Count law for axis-aligned footprints under the snapped anchor.
    const double ts = spec.tile_size_m;
    const auto nx = static_cast<std::int64_t>(std::floor((fp.max_x - g.frame.anchor.x) / ts + 1e-7)) -
                    static_cast<std::int64_t>(std::ceil((fp.min_x - g.frame.anchor.x) / ts - 1e-7));
    const auto ny = static_cast<std::int64_t>(std::floor((g.frame.anchor.y - fp.min_y) / ts + 1e-7)) -
                    static_cast<std::int64_t>(std::ceil((g.frame.anchor.y - fp.max_y) / ts - 1e-7));
    ASSERT_EQ(static_cast<std::int64_t>(g.tiles.size()), std::max<std::int64_t>(0, nx) * std::max<std::int64_t>(0, ny))
        << "iteration " << iter;
    for (std::size_t i = 0; i < g.tiles.size(); ++i) {
      const auto& t = g.tiles[i];
      ASSERT_EQ(g.frame.tile_at({(t.bounds.min_x + t.bounds.max_x) / 2, (t.bounds.min_y + t.bounds.max_y) / 2}), t.id);
      ASSERT_GE(t.bounds.min_x, fp.min_x - 1e-6);
      ASSERT_LE(t.bounds.max_x, fp.max_x + 1e-6);
      ASSERT_GE(t.bounds.min_y, fp.min_y - 1e-6);
      ASSERT_LE(t.bounds.max_y, fp.max_y + 1e-6);
      ASSERT_GE(t.pixel_window.row_off, 0);
      ASSERT_LE(t.pixel_window.col_off + t.pixel_window.width, w);
      ASSERT_LE(t.pixel_window.row_off + t.pixel_window.height, h);
      ASSERT_LE(t.pixel_window.width, static_cast<std::int64_t>(std::ceil(ts / gsd)) + 1);
      if (i > 0) {
        ASSERT_LT(g.tiles[i - 1].id, t.id);
      }
    }
    if (g.tiles.size() <= 60) {
      for (std::size_t i = 0; i < g.tiles.size(); ++i) {
        for (std::size_t j = i + 1; j < g.tiles.size(); ++j) {
          ASSERT_FALSE(interiors_overlap(g.tiles[i].bounds, g.tiles[j].bounds));
        }
      }
    }
  }
}

TEST(MakeGrid, GeographicRasterGridsInUtm) {
  RasterMeta m;
  m.width_px = 2000;
  m.height_px = 2000;
  m.crs = Crs::wgs84();
  m.band_count = 3;
  const double deg = 0.05 / 111320.0;
  m.transform = Affine::north_up(39.2, -6.79, deg, deg);
  const Grid g = make_grid(m);
  EXPECT_EQ(g.frame.crs, Crs::utm(37, true));
  EXPECT_GT(g.tiles.size(), 300u);
  for (const auto& t : g.tiles) {
    EXPECT_GE(t.pixel_window.row_off, 0);
    EXPECT_LE(t.pixel_window.row_off + t.pixel_window.height, 2000);
    EXPECT_NEAR(static_cast<double>(t.pixel_window.width), 100.0, 3.0);
  }
}

TEST(MakeGrid, DeterministicAndCsvRoundTrip) {
  test::TempDir dir;
  GridSpec spec;
  spec.include_partials = true;
  spec.tile_size_m = 5.0 / 3.0;
  const auto meta = test::utm_meta(777, 555, 0.047, 3, {530001.3, 9240002.7});
  const Grid a = make_grid(meta, spec);
  const Grid b = make_grid(meta, spec);
  std::ostringstream sa, sb;
  write_grid_csv(sa, a);
  write_grid_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  test::write_text(dir / "g.csv", sa.str());
  const Grid r = read_grid_csv(dir / "g.csv");
  ASSERT_EQ(r.tiles.size(), a.tiles.size());
  EXPECT_EQ(r.frame.crs, a.frame.crs);
  EXPECT_EQ(r.frame.anchor, a.frame.anchor);
  EXPECT_EQ(r.frame.tile_size_m, a.frame.tile_size_m);
  for (std::size_t i = 0; i < a.tiles.size(); ++i) {
    EXPECT_EQ(r.tiles[i].id, a.tiles[i].id);
    EXPECT_EQ(r.tiles[i].pixel_window, a.tiles[i].pixel_window);
    EXPECT_EQ(r.tiles[i].bounds, a.tiles[i].bounds);
    EXPECT_NEAR(r.tiles[i].valid_fraction, a.tiles[i].valid_fraction, 1e-9);
  }
}

TEST(GridGeoJson, LonLatSevenDecimals) {
  const Grid g = make_grid(test::utm_meta(200, 100, 0.05));
  std::ostringstream out;
  write_grid_geojson(out, g);
  const auto j = nlohmann::json::parse(out.str());
  ASSERT_EQ(j["features"].size(), 2u);
  const auto& f = j["features"][1];
  EXPECT_EQ(f["properties"]["tile_id"], nlohmann::json({0, 1}));
  const double lon = f["geometry"]["coordinates"][0][0][0];
  EXPECT_NEAR(lon, 39.27, 0.01);
  EXPECT_EQ(geojson_polygon({0, 0, 5, 5}, Crs::projected(3857)).find("[0,0]") != std::string::npos, true);
}
