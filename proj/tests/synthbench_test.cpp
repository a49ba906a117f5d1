#include <gtest/gtest.h>

#include "oddmap/error.hpp"
#include "oddmap/geogrid.hpp"
#include "oddmap/infer.hpp"
#include "oddmap/synthbench.hpp"
#include "oddmap/wastemap.hpp"
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

/// Fixture -> grid -> reference inference, compared with the planted truth.
PipelineDiff closure(const PlantingPlan& plan, std::vector<Prediction>* out = nullptr) {
  test::TempDir dir;
  const auto fx = make_fixture(plan, dir.path());
  const auto ds = RasterDataset::open(fx.raster);
  GridSpec spec;
  spec.tile_size_m = plan.tile_size_m;
  const Grid grid = make_grid(ds.meta(), spec);
  auto backend = reference_classifier();
  InferenceOptions opt;
  opt.region_id = plan.region_id;
  const auto result = run_inference(ds, grid.tiles, *backend, opt);
  if (out) *out = result.predictions;
  return verify_pipeline(fixture_truth(plan), result.predictions);
}

}  // namespace

TEST(Planting, ChoiceIsSeededAndDistinct) {
  const auto a = choose_planted(64, 64, 7, 3);
  EXPECT_EQ(a.size(), 7u);
  EXPECT_EQ(a, choose_planted(64, 64, 7, 3));
  EXPECT_NE(a, choose_planted(64, 64, 7, 4));
  for (const auto& id : a) {
    EXPECT_GE(id.row, 0);
    EXPECT_LT(id.col, 64);
  }
  EXPECT_EQ(choose_planted(3, 3, 9, 1).size(), 9u);
  EXPECT_EQ(kind_of([] { choose_planted(3, 3, 10, 1); }), ErrorKind::Config);
}

TEST(Planting, ValidationRejectsBadPlans) {
  PlantingPlan p;
  p.planted = {{10, 0}};
  EXPECT_EQ(kind_of([&] { validate(p); }), ErrorKind::Config);
  PlantingPlan q;
  q.gsd_m = 0.03;  // 166.67 px per tile
  EXPECT_EQ(kind_of([&] { validate(q); }), ErrorKind::Config);
  PlantingPlan r;
  r.marker.density = 0.0;
  EXPECT_EQ(kind_of([&] { validate(r); }), ErrorKind::Config);
  PlantingPlan s;
  s.marker.green = 90;
  EXPECT_EQ(kind_of([&] { validate(s); }), ErrorKind::Config);
  PlantingPlan t;
  t.marker.density = 0.9;
  EXPECT_EQ(kind_of([&] { validate(t); }), ErrorKind::Config);
}

TEST(Rendering, DeterministicBytesAndExactMarkerDensity) {
  PlantingPlan plan;
  plan.rows = 3;
  plan.cols = 4;
  plan.planted = {{0, 1}, {2, 3}};
  const auto a = render_fixture(plan);
  EXPECT_EQ(a, render_fixture(plan));
  const auto px = plan.tile_px();
  ASSERT_EQ(px, 100);
  const std::size_t width = static_cast<std::size_t>(plan.cols * px);
  for (std::int64_t tr = 0; tr < plan.rows; ++tr) {
    for (std::int64_t tc = 0; tc < plan.cols; ++tc) {
      std::size_t markers = 0;
      for (std::int64_t y = 0; y < px; ++y) {
        for (std::int64_t x = 0; x < px; ++x) {
          const std::uint8_t* p = a.data() + ((tr * px + y) * width + tc * px + x) * 3;
          markers += p[0] >= 200 && p[1] <= 60;
        }
      }
      // round(0.08 * 10000 / 9) = 89 blobs of 9 px
      EXPECT_EQ(markers, plan.planted.contains({tr, tc}) ? 801u : 0u) << tr << "," << tc;
    }
  }

  test::TempDir d1, d2;
  const auto f1 = make_fixture(plan, d1.path());
  const auto f2 = make_fixture(plan, d2.path());
  EXPECT_EQ(test::read_all(f1.raster), test::read_all(f2.raster));
  EXPECT_EQ(test::read_all(f1.truth), test::read_all(f2.truth));
  EXPECT_EQ(test::read_all(d1 / "plan.json"), test::read_all(d2 / "plan.json"));
}

TEST(Closure, TenByTenThirteenPlanted) {
  PlantingPlan plan;
  plan.planted = choose_planted(10, 10, 13, 5);
  std::vector<Prediction> preds;
  const auto d = closure(plan, &preds);
  EXPECT_TRUE(d.exact_match);
  EXPECT_EQ(d.tp, 13u);
  EXPECT_EQ(d.tn, 87u);
  EXPECT_EQ(oddmswc(preds).oddmswc, 13.0);
}

class ClosureSweep : public ::testing::TestWithParam<std::tuple<double, double>> {};

TEST_P(ClosureSweep, ExactAtEveryResolutionAndDensity) {
  const auto [gsd, density] = GetParam();
  PlantingPlan plan;
  plan.rows = 6;
  plan.cols = 7;
  plan.gsd_m = gsd;
  plan.marker.density = density;
  plan.marker.blob_px = gsd >= 0.2 ? 2 : 3;
  plan.planted = choose_planted(6, 7, 9, 21);
  const auto d = closure(plan);
  EXPECT_TRUE(d.exact_match) << "mismatched " << d.mismatched.size();
  EXPECT_EQ(d.tp, 9u);
}

INSTANTIATE_TEST_SUITE_P(GsdDensity, ClosureSweep,
                         ::testing::Combine(::testing::Values(0.04, 0.05, 0.1, 0.25),
                                            ::testing::Values(0.05, 0.08, 0.2)));

TEST(Verify, ReportsEveryKindOfDifference) {
  const std::vector<LabeledTile> truth = {{"s", {0, 0}, Label::Waste}, {"s", {0, 1}, Label::Background},
                                          {"s", {0, 2}, Label::Background}};
  const std::vector<Prediction> preds = {{"s", {0, 0}, Label::Waste, 0.9}, {"s", {0, 1}, Label::Waste, 0.6},
                                         {"s", {9, 9}, Label::Background, 0.9}};
  const auto d = verify_pipeline(truth, preds);
  EXPECT_FALSE(d.exact_match);
  EXPECT_EQ(d.mismatched.size(), 1u);
  EXPECT_EQ(d.missing.size(), 1u);
  EXPECT_EQ(d.unexpected.size(), 1u);
  EXPECT_EQ(d.tp, 1u);
  EXPECT_EQ(d.fp, 1u);
}
