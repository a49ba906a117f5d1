#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "oddmap/crs.hpp"
#include "oddmap/dataset.hpp"
#include "oddmap/error.hpp"
#include "oddmap/geogrid.hpp"
#include "json.hpp"
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

std::vector<AnnotationRecord> synthetic(const std::map<std::string, std::pair<int, int>>& counts) {
  std::vector<AnnotationRecord> out;
  for (const auto& [region, wb] : counts) {
    int k = 0;
    for (int i = 0; i < wb.first + wb.second; ++i, ++k) {
      out.push_back({region, {k / 40, k % 40}, i < wb.first ? Label::Waste : Label::Background, {}, {}});
    }
  }
  return out;
}

}  // namespace

TEST(SplitQuotas, LargestRemainderWithEarlierTieBreak) {
  const SplitRatios r;
  EXPECT_EQ(split_quotas(10, r), (std::array<std::size_t, 3>{7, 2, 1}));
  EXPECT_EQ(split_quotas(870, r), (std::array<std::size_t, 3>{609, 131, 130}));
  EXPECT_EQ(split_quotas(0, r), (std::array<std::size_t, 3>{0, 0, 0}));
  EXPECT_EQ(split_quotas(1, r), (std::array<std::size_t, 3>{1, 0, 0}));
  EXPECT_EQ(split_quotas(7, {0.0, 0.5, 0.5}), (std::array<std::size_t, 3>{0, 4, 3}));
}

TEST(SplitQuotas, SumAndDeviationBounds) {
  const std::vector<SplitRatios> ratios = {{0.7, 0.15, 0.15}, {0.8, 0.1, 0.1}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, {0.6, 0.4, 0.0}};
  for (const auto& r : ratios) {
    for (std::size_t n = 0; n < 500; ++n) {
      const auto q = split_quotas(n, r);
      EXPECT_EQ(q[0] + q[1] + q[2], n);
      const auto a = r.as_array();
      for (int i = 0; i < 3; ++i) EXPECT_LT(std::abs(static_cast<double>(q[i]) - a[i] * n), 1.0);
    }
  }
}

TEST(SplitRatiosTest, ParseAndValidate) {
  const auto r = parse_ratios(" 0.8, 0.1 ,0.1");
  EXPECT_DOUBLE_EQ(r.train, 0.8);
  EXPECT_EQ(kind_of([] { parse_ratios("0.5,0.5"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { parse_ratios("0.5,0.5,0.5"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { parse_ratios("1.2,-0.1,-0.1"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { parse_ratios("a,b,c"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { validate(SplitRatios{0, 0, 0}); }), ErrorKind::Config);
}

TEST(MakeSplits, StratifiedQuotasPerRegionAndLabel) {
  const auto records = synthetic({{"dar", {37, 410}}, {"lagos", {12, 88}}, {"lima", {5, 0}}});
  const auto m = make_splits(records, {}, 42);
  ASSERT_EQ(m.records.size(), records.size());
  std::map<std::tuple<std::string, Label, Split>, std::size_t> counts;
  for (const auto& r : m.records) ++counts[{r.annotation.region_id, r.annotation.label, r.split}];
  for (const auto& [region, wb] : std::map<std::string, std::pair<int, int>>{{"dar", {37, 410}}, {"lagos", {12, 88}}, {"lima", {5, 0}}}) {
    for (auto [label, n] : {std::pair{Label::Waste, wb.first}, std::pair{Label::Background, wb.second}}) {
      const auto q = split_quotas(static_cast<std::size_t>(n), {});
      for (int s = 0; s < 3; ++s) EXPECT_EQ((counts[{region, label, static_cast<Split>(s)}]), q[s]) << region;
    }
  }
}

TEST(MakeSplits, DeterministicAndSeedSensitive) {
  const auto records = synthetic({{"a", {50, 150}}, {"b", {20, 80}}});
  const auto m1 = make_splits(records, {}, 7);
  const auto m2 = make_splits(records, {}, 7);
  const auto m3 = make_splits(records, {}, 8);
  EXPECT_EQ(m1.records, m2.records);
  EXPECT_NE(m1.records, m3.records);

  auto shuffled = records;
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_EQ(make_splits(shuffled, {}, 7).records, m1.records);
}

TEST(MakeSplits, AddingARegionLeavesOthersUntouched) {
  const auto base = make_splits(synthetic({{"a", {30, 70}}}), {}, 3);
  const auto more = make_splits(synthetic({{"a", {30, 70}}, {"z", {10, 10}}}), {}, 3);
  std::vector<ManifestRecord> only_a;
  for (const auto& r : more.records) {
    if (r.annotation.region_id == "a") only_a.push_back(r);
  }
  EXPECT_EQ(only_a, base.records);
}

TEST(MakeSplits, SmallStrataWarn) {
  const auto m = make_splits(synthetic({{"tiny", {2, 40}}}), {}, 1);
  ASSERT_EQ(m.warnings.size(), 1u);
  EXPECT_NE(m.warnings[0].find("tiny/waste"), std::string::npos);
}

TEST(Normalize, DuplicatesCollapseAndConflictsFail) {
  std::vector<AnnotationRecord> recs = {{"r", {1, 1}, Label::Waste, {}, {}},
                                        {"r", {1, 1}, Label::Waste, std::string("ann"), {}},
                                        {"r", {0, 5}, Label::Background, {}, {}},
                                        {"q", {1, 1}, Label::Background, {}, {}}};
  const auto out = normalize_annotations(recs);
  EXPECT_EQ(out.records.size(), 3u);
  EXPECT_EQ(out.duplicates_removed, 1u);
  EXPECT_EQ(out.records[0].region_id, "q");
  EXPECT_EQ(out.records[1].tile_id, (TileId{0, 5}));

  recs.push_back({"r", {1, 1}, Label::Background, {}, {}});
  EXPECT_EQ(kind_of([&] { normalize_annotations(recs); }), ErrorKind::Conflict);
}

TEST(Balance, ImbalanceRatio) {
  const auto b = balance_report(synthetic({{"a", {10, 40}}, {"b", {0, 5}}, {"c", {3, 3}}}));
  ASSERT_EQ(b.size(), 3u);
  EXPECT_DOUBLE_EQ(b[0].imbalance_ratio, 4.0);
  EXPECT_TRUE(std::isinf(b[1].imbalance_ratio));
  EXPECT_DOUBLE_EQ(b[2].imbalance_ratio, 1.0);
  EXPECT_EQ(b[0].waste, 10u);
  EXPECT_EQ(b[0].background, 40u);
}

TEST(ImportCsv, LabelsParsedAndBadRowsListed) {
  test::TempDir dir;
  test::write_text(dir / "ok.csv",
                   "region_id,row,col,label,annotator,timestamp\n"
                   "dar,0,1,Waste,ann1,2021-01-01\n"
                   "dar,0,0, background ,,\n"
                   "dar,0,1,waste,ann2,\n");
  const auto imp = import_annotations(dir / "ok.csv");
  ASSERT_EQ(imp.records.size(), 2u);
  EXPECT_EQ(imp.duplicates_removed, 1u);
  EXPECT_EQ(imp.records[1].annotator, std::optional<std::string>("ann1"));
  EXPECT_EQ(imp.records[0].label, Label::Background);

  test::write_text(dir / "bad.csv", "region_id,row,col,label\ndar,0,0,waste\ndar,0,1,trash\ndar,0,2,rubbish\n");
  try {
    import_annotations(dir / "bad.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Validation);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
  }

  test::write_text(dir / "noregion.csv", "row,col,label\n0,0,waste\n");
  EXPECT_EQ(kind_of([&] { import_annotations(dir / "noregion.csv"); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([&] { import_annotations(dir / "missing.csv"); }), ErrorKind::Io);
}

TEST(ImportCsv, TilesMustExistInGrid) {
  test::TempDir dir;
  const Grid g = make_grid(test::utm_meta(1000, 1000, 0.05));  // 10 x 10 tiles
  test::write_text(dir / "a.csv", "region_id,row,col,label\nr,9,9,waste\nr,10,0,waste\n");
  EXPECT_EQ(kind_of([&] { import_annotations(dir / "a.csv", &g); }), ErrorKind::Validation);
}

TEST(ImportGeoJson, PointsAndPolygonsSnapToTiles) {
  test::TempDir dir;
  const Grid g = make_grid(test::utm_meta(1000, 1000, 0.05));  // 10 x 10 tiles of 5 m
  const Crs crs = g.frame.crs;
  auto ll = [&](double e, double n) {
    const Point p = utm_to_geographic({e, n}, crs);
    return nlohmann::json::array({p.x, p.y});
  };
  const double x0 = 530000.0, y0 = 9240000.0;
  nlohmann::json point = {{"type", "Feature"},
                          {"properties", {{"region_id", "dar"}, {"label", "waste"}, {"annotator", "a1"}}},
                          {"geometry", {{"type", "Point"}, {"coordinates", ll(x0 + 17.5, y0 - 12.5)}}}};
  nlohmann::json ring = nlohmann::json::array({ll(x0 + 0.5, y0 - 25.5), ll(x0 + 9.5, y0 - 25.5), ll(x0 + 9.5, y0 - 34.5),
                                               ll(x0 + 0.5, y0 - 34.5), ll(x0 + 0.5, y0 - 25.5)});
  nlohmann::json poly = {{"type", "Feature"},
                         {"properties", {{"region_id", "dar"}, {"label", "background"}}},
                         {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}}};
  nlohmann::json doc = {{"type", "FeatureCollection"}, {"features", {point, poly}}};
  test::write_text(dir / "a.geojson", doc.dump());

  const auto imp = import_annotations(dir / "a.geojson", &g);
  ASSERT_EQ(imp.records.size(), 5u);
  EXPECT_EQ(imp.records[0].tile_id, (TileId{2, 3}));
  EXPECT_EQ(imp.records[0].label, Label::Waste);
  EXPECT_EQ(imp.records[0].annotator, std::optional<std::string>("a1"));
  const std::vector<TileId> poly_tiles = {{5, 0}, {5, 1}, {6, 0}, {6, 1}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(imp.records[i + 1].tile_id, poly_tiles[i]);
    EXPECT_EQ(imp.records[i + 1].label, Label::Background);
  }

  EXPECT_EQ(kind_of([&] { import_annotations(dir / "a.geojson"); }), ErrorKind::Config);
  test::write_text(dir / "bad.geojson", "{\"features\": [");
  EXPECT_EQ(kind_of([&] { import_annotations(dir / "bad.geojson", &g); }), ErrorKind::Parse);
}

TEST(Manifest, ExportImportRoundTrip) {
  test::TempDir dir;
  const auto m = make_splits(synthetic({{"a", {9, 31}}, {"b,c", {4, 6}}}), {0.8, 0.1, 0.1}, 99);
  export_manifest(m, dir / "manifest.csv");
  const auto back = import_manifest(dir / "manifest.csv");
  EXPECT_EQ(back.records, m.records);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_DOUBLE_EQ(back.ratios.train, 0.8);
  const auto text = test::read_all(dir / "manifest.csv");
  EXPECT_EQ(text.rfind("region_id,row,col,label,split\n", 0), 0u);
  EXPECT_NE(text.find("\"b,c\""), std::string::npos);

  test::write_text(dir / "bad.csv", "region_id,row,col,label,split\na,0,0,waste,holdout\n");
  EXPECT_EQ(kind_of([&] { import_manifest(dir / "bad.csv"); }), ErrorKind::Validation);
}
