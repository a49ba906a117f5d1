#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "oddmap/error.hpp"
#include "oddmap/sociocorr.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace oddmap;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Config;
}

/// 0.01 degree cells over lon 39..40, lat -7..-6.
IndicatorRaster geo_raster(std::uint32_t seed) {
  IndicatorRaster r;
  r.width = 100;
  r.height = 100;
  r.transform = Affine::north_up(39.0, -6.0, 0.01, 0.01);
  r.crs = Crs::wgs84();
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 100 * 100; ++i) r.values.push_back(u(gen));
  r.nodata = -9999.0;
  for (int i = 0; i < 100 * 100; i += 37) r.values[i] = -9999.0;
  r.values[5050] = NAN;
  return r;
}

Polygon rect(double x0, double y0, double x1, double y1) { return {{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}}}; }

std::vector<RegionSummary> summaries_of(const oracle::OutlierFixture& f) {
  std::vector<RegionSummary> s;
  for (std::size_t i = 0; i < f.regions.size(); ++i) {
    RegionSummary r;
    r.region_id = f.regions[i];
    r.n_tiles_analyzed = 1000;
    r.oddmswc = f.oddmswc[i];
    s.push_back(r);
  }
  return s;
}

}  // namespace

TEST(Spearman, MatchesBruteForceAverageRanks) {
  std::mt19937_64 gen(17);
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 3 + c % 60;
    const auto x = oracle::random_values(gen, n, c % 4 == 0 ? 0 : 3 + c % 9);
    const auto y = oracle::random_values(gen, n, c % 3 == 0 ? 0 : 4 + c % 7);
    const auto rx = average_ranks(x);
    const auto bx = oracle::brute_ranks(x);
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(rx[i], bx[i]);
    double rho = 0;
    try {
      rho = spearman(x, y);
    } catch (const Error& e) {
      ASSERT_EQ(e.kind(), ErrorKind::Undefined);  // constant vector
      continue;
    }
    EXPECT_NEAR(rho, oracle::brute_spearman(x, y), 1e-12);
  }
}

TEST(Spearman, MonotoneTransformInvariance) {
  std::mt19937_64 gen(3);
  for (int c = 0; c < 200; ++c) {
    const auto x = oracle::random_values(gen, 40, c % 2 ? 6 : 0);
    const auto y = oracle::random_values(gen, 40, 0);
    std::vector<double> tx, ty;
    for (double v : x) tx.push_back(std::exp(3 * v) - 7);
    for (double v : y) ty.push_back(std::cbrt(v) * 1e6);
    EXPECT_NEAR(spearman(tx, ty), spearman(x, y), 1e-12);
  }
}

TEST(Spearman, KnownValuesAndErrors) {
  const std::vector<double> a = {1, 2, 3, 4, 5};
  const std::vector<double> b = {5, 6, 7, 8, 7};
  EXPECT_DOUBLE_EQ(spearman(a, a), 1.0);
  EXPECT_NEAR(spearman(a, b), 0.8207826816681233, 1e-15);
  EXPECT_EQ(kind_of([] { spearman(std::vector<double>{1, 2}, std::vector<double>{2, 1}); }), ErrorKind::SampleSize);
  EXPECT_EQ(kind_of([&] { spearman(a, std::vector<double>{1, 1, 1, 1, 1}); }), ErrorKind::Undefined);
  EXPECT_EQ(kind_of([&] { spearman(a, std::vector<double>{1, 2, NAN, 4, 5}); }), ErrorKind::Validation);
}

TEST(Zonal, MatchesCellLoopOracle) {
  const auto raster = geo_raster(1);
  RegionExtent e;
  e.region_id = "dar";
  Polygon p = rect(39.2, -6.9, 39.7, -6.3);
  p.rings.push_back(rect(39.4, -6.7, 39.5, -6.5).rings[0]);
  e.parts = {p, rect(39.8, -6.2, 39.85, -6.15)};

  double sum = 0;
  std::size_t n = 0;
  for (int r = 0; r < 100; ++r) {
    for (int c = 0; c < 100; ++c) {
      const double lon = 39.0 + (c + 0.5) * 0.01, lat = -6.0 - (r + 0.5) * 0.01;
      const bool outer = lon > 39.2 && lon < 39.7 && lat > -6.9 && lat < -6.3;
      const bool hole = lon > 39.4 && lon < 39.5 && lat > -6.7 && lat < -6.5;
      const bool second = lon > 39.8 && lon < 39.85 && lat > -6.2 && lat < -6.15;
      const double v = raster.at(r, c);
      if (!((outer && !hole) || second) || v == -9999.0 || std::isnan(v)) continue;
      sum += v;
      ++n;
    }
  }
  ASSERT_GT(n, 2000u);
  EXPECT_NEAR(zonal_aggregate(raster, e, Aggregation::Sum), sum, 1e-9);
  EXPECT_NEAR(zonal_aggregate(raster, e, Aggregation::Mean), sum / n, 1e-12);

  RegionExtent outside;
  outside.region_id = "far";
  outside.parts = {rect(10, 10, 11, 11)};
  EXPECT_EQ(kind_of([&] { zonal_aggregate(raster, outside, Aggregation::Mean); }), ErrorKind::Undefined);
}

TEST(Zonal, ReprojectsCellCentersIntoUtmExtents) {
  IndicatorRaster raster;
  raster.width = raster.height = 100;
  raster.transform = Affine::north_up(39.0, -6.0, 0.01, 0.01);
  raster.values.assign(100 * 100, 2.0);
  RegionExtent e;
  e.region_id = "utm";
  e.crs = Crs::utm(37, true);
  const Point ll = geographic_to_utm({39.3, -6.6}, e.crs);
  e.parts = {rect(ll.x, ll.y, ll.x + 20000, ll.y + 20000)};
  EXPECT_EQ(zonal_aggregate(raster, e, Aggregation::Mean), 2.0);
  const double cells = zonal_aggregate(raster, e, Aggregation::Sum) / 2.0;
  // 20 km squares hold about (20 / 1.1)^2 cells of 0.01 degrees.
  EXPECT_NEAR(cells, 330, 15);
  EXPECT_NEAR(area_km2(e), 400.0, 1e-6);
}

TEST(Layers, PopulationIsSummedDensity) {
  auto pop = make_layer("pop");
  EXPECT_EQ(pop.name, "population_density");
  EXPECT_EQ(pop.aggregation, Aggregation::Sum);
  IndicatorRaster counts;
  counts.width = counts.height = 10;
  counts.transform = Affine::north_up(0, 1000, 100, 100);
  counts.crs = Crs::utm(37, true);
  counts.values.assign(100, 50.0);
  pop.raster = counts;
  RegionExtent e;
  e.region_id = "a";
  e.crs = counts.crs;
  e.parts = {rect(0, 0, 1000, 1000)};  // 1 km^2, 100 cells
  EXPECT_DOUBLE_EQ(*layer_value(pop, &e, "a"), 5000.0);
  EXPECT_FALSE(layer_value(pop, nullptr, "a"));
  const auto shdi = make_layer("shdi");
  EXPECT_EQ(shdi.aggregation, Aggregation::Mean);
}

TEST(Report, OutlierExclusionStrengthensCorrelation) {
  const oracle::OutlierFixture f;
  IndicatorLayer shdi = make_layer("shdi");
  for (std::size_t i = 0; i < f.regions.size(); ++i) shdi.table[f.regions[i]] = f.shdi[i];
  const auto summaries = summaries_of(f);
  const auto full = sensitivity_exclude(summaries, shdi, {}, {});
  const auto excl = sensitivity_exclude(summaries, shdi, {}, {"outlier"});
  EXPECT_NEAR(full.rho, -0.4, 1e-12);
  EXPECT_NEAR(excl.rho, -1.0, 1e-12);
  EXPECT_GT(std::abs(excl.rho), std::abs(full.rho));
  EXPECT_EQ(full.n, 9u);
  EXPECT_EQ(excl.n, 8u);
  EXPECT_EQ(excl.excluded_regions, std::vector<std::string>{"outlier"});
  EXPECT_EQ(kind_of([&] { sensitivity_exclude(summaries, shdi, {}, {"nowhere"}); }), ErrorKind::Validation);
}

TEST(Report, MissingValuesDropOnlyTheirPairs) {
  const oracle::OutlierFixture f;
  IndicatorLayer shdi = make_layer("shdi");
  IndicatorLayer infra = make_layer("infra");
  for (std::size_t i = 0; i < f.regions.size(); ++i) {
    shdi.table[f.regions[i]] = f.shdi[i];
    if (i != 2) infra.table[f.regions[i]] = static_cast<double>(i * i % 7);
  }
  const auto report = bivariate_report(summaries_of(f), {shdi, infra}, {});
  ASSERT_EQ(report.target.size(), 2u);
  ASSERT_EQ(report.predictors.size(), 1u);
  EXPECT_EQ(report.target[0].n, 9u);
  EXPECT_EQ(report.target[1].n, 8u);
  EXPECT_EQ(report.target[1].missing_regions, std::vector<std::string>{"r3"});
  EXPECT_EQ(report.predictors[0].x_name, "shdi");
  EXPECT_EQ(report.predictors[0].y_name, "infrastructure_deficit");

  const auto j = to_json(report);
  EXPECT_EQ(j["target"][0]["n"], 9);
  std::ostringstream csv;
  write_scatter_csv(csv, report, report.target[0]);
  EXPECT_EQ(csv.str().substr(0, 48), "region_id,oddmswc,shdi\noutlier,0.5,0.3\nr1,9,0.4\n");
  EXPECT_EQ(kind_of([&] { bivariate_report(summaries_of(f), {shdi, shdi}, {}); }), ErrorKind::Config);
}

TEST(Extents, GeoJsonPolygonsAndTables) {
  test::TempDir dir;
  test::write_text(dir / "r.geojson", R"({"type":"FeatureCollection","features":[
    {"type":"Feature","properties":{"region_id":"a"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
    {"type":"Feature","properties":{"region_id":"b"},"geometry":{"type":"MultiPolygon","coordinates":[[[[2,2],[3,2],[3,3],[2,2]]],[[[5,5],[6,5],[6,6],[5,5]]]]}}]})");
  const auto ex = read_region_extents(dir / "r.geojson");
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[1].parts.size(), 2u);
  EXPECT_TRUE(contains(ex[0], {0.5, 0.5}));
  EXPECT_FALSE(contains(ex[0], {1.5, 0.5}));
  const double R = 6371.007181, rad = M_PI / 180;
  EXPECT_NEAR(area_km2(ex[0]), R * R * rad * std::sin(rad), 1e-6);

  test::write_text(dir / "t.csv", "region_id,value\na,0.5\nb,0.7\n");
  EXPECT_EQ(read_indicator_table(dir / "t.csv").at("b"), 0.7);
  test::write_text(dir / "d.csv", "region_id,value\na,0.5\na,0.7\n");
  EXPECT_EQ(kind_of([&] { read_indicator_table(dir / "d.csv"); }), ErrorKind::Validation);
}
