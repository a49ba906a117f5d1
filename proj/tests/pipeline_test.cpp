#include <gtest/gtest.h>

#include "json.hpp"
#include "oddmap/error.hpp"
#include "oddmap/io.hpp"
#include "oddmap/pipeline.hpp"
#include "oddmap/synthbench.hpp"
#include "support.hpp"

using namespace oddmap;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Parse;
}

Fixture fixture(const fs::path& dir, const std::string& region, std::size_t plant, std::int64_t n = 10) {
  PlantingPlan plan;
  plan.rows = n;
  plan.cols = n;
  plan.region_id = region;
  plan.gsd_m = 0.25;
  plan.planted = choose_planted(n, n, plant, 5);
  return make_fixture(plan, dir);
}

RunConfig basic(const test::TempDir& dir, const Fixture& fx, const std::string& name) {
  RunConfig c;
  c.out_dir = dir / "runs";
  c.run_name = name;
  c.rasters = {{fx.plan.region_id, fx.raster}};
  c.truth = fx.truth;
  return c;
}

}  // namespace

TEST(Settings, EveryKeyIsAcceptedByApply) {
  RunConfig c;
  for (const auto& key : setting_keys()) {
    EXPECT_EQ(key.find('.') != std::string::npos, true) << key;
  }
  apply_setting(c, "grid.tile_size_m", {"2.5"});
  EXPECT_EQ(c.tile_size_m, 2.5);
  apply_setting(c, "run.stages", {"grid, infer", "map"});
  EXPECT_EQ(c.stages, (std::vector<std::string>{"grid", "infer", "map"}));
  apply_setting(c, "grid.rasters", {"dar=/data/dar.tif,/data/lagos_2020.tif"});
  ASSERT_EQ(c.rasters.size(), 2u);
  EXPECT_EQ(c.rasters[1].region_id, "lagos_2020");
  apply_setting(c, "dataset.ratios", {"0.8,0.1,0.1"});
  EXPECT_EQ(c.ratios.train, 0.8);
  apply_setting(c, "infer.model", {""});
  EXPECT_FALSE(c.model);

  EXPECT_EQ(kind_of([&] { apply_setting(c, "grid.tile_sise_m", {"1"}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { apply_setting(c, "grid.tile_size_m", {"big"}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { apply_setting(c, "run.workers", {"-2"}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { apply_setting(c, "tiles.dump_png", {"maybe"}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { apply_setting(c, "dataset.ratios", {"0.5,0.6,0.1"}); }), ErrorKind::Config);
}

TEST(Settings, IniRoundTripsThroughToIni) {
  test::TempDir dir;
  RunConfig c;
  c.rasters = {{"dar", "/x/dar one.tif"}};
  c.stages = {"grid", "infer"};
  c.marker_fraction = 0.025;
  c.bootstrap_sizes = "50,100,full";
  c.layers = {"shdi=/x/shdi.csv"};
  c.truth_split = "test";
  c.exclude = {"lagos"};
  test::write_text(dir / "c.ini", to_ini(c));
  RunConfig back;
  apply_ini(back, dir / "c.ini");
  EXPECT_EQ(to_ini(back), to_ini(c));
  EXPECT_EQ(back.rasters[0].path, fs::path("/x/dar one.tif"));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Settings, IniErrors) {
  test::TempDir dir;
  RunConfig c;
  test::write_text(dir / "a.ini", "[grid]\ntile_size = 5\n");
  EXPECT_EQ(kind_of([&] { apply_ini(c, dir / "a.ini"); }), ErrorKind::Config);
  test::write_text(dir / "b.ini", "tile_size_m = 5\n");
  EXPECT_EQ(kind_of([&] { apply_ini(c, dir / "b.ini"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { apply_ini(c, dir / "missing.ini"); }), ErrorKind::Config);
}

TEST(Validate, RejectsInconsistentConfigs) {
  auto bad = [](auto mutate) {
    RunConfig c;
    c.rasters = {{"r", "/x.tif"}};
    mutate(c);
    return kind_of([&] { validate(c); });
  };
  EXPECT_EQ(bad([](RunConfig& c) { c.stages = {"grid", "paint"}; }), ErrorKind::Config);
  EXPECT_EQ(bad([](RunConfig& c) { c.backend = "onnx"; }), ErrorKind::Config);
  EXPECT_EQ(bad([](RunConfig& c) { c.min_valid_fraction = 1.5; }), ErrorKind::Config);
  EXPECT_EQ(bad([](RunConfig& c) { c.rasters.push_back({"r", "/y.tif"}); }), ErrorKind::Config);
  EXPECT_EQ(bad([](RunConfig& c) { c.layers = {"shdi"}; }), ErrorKind::Config);
  EXPECT_EQ(bad([](RunConfig& c) { c.stages = {"eval"}; }), ErrorKind::Config);
  EXPECT_EQ(bad([](RunConfig& c) { c.truth_split = "holdout"; }), ErrorKind::Config);
  RunConfig ok;
  ok.rasters = {{"r", "/x.tif"}};
  EXPECT_NO_THROW(validate(ok));
}

TEST(Stages, AutoSelectionFollowsInputs) {
  RunConfig c;
  EXPECT_TRUE(resolve_stages(c).empty());
  c.rasters = {{"r", "/x.tif"}};
  EXPECT_EQ(resolve_stages(c), (std::vector<std::string>{"grid", "tiles", "infer", "map"}));
  c.truth = "/t.csv";
  c.layers = {"shdi=/s.csv"};
  EXPECT_EQ(resolve_stages(c), (std::vector<std::string>{"grid", "tiles", "infer", "eval", "map", "corr"}));
  RunConfig only;
  only.stages = {"infer", "map"};
  EXPECT_EQ(resolve_stages(only), (std::vector<std::string>{"grid", "infer", "map"}));
}

TEST(Run, PlantedFixtureEndToEnd) {
  test::TempDir dir;
  const auto fx = fixture(dir / "fx", "synth", 13);
  const auto out = run_pipeline(basic(dir, fx, "a"));
  EXPECT_EQ(out.stages, (std::vector<std::string>{"grid", "tiles", "infer", "eval", "map"}));
  EXPECT_EQ(out.tiles_classified, 100u);
  EXPECT_EQ(test::read_all(out.run_dir / "map" / "summary.csv"),
            "region_id,n_tiles,n_waste,oddmswc,rank\nsynth,100,13,13,1\n");
  const auto report = nlohmann::json::parse(test::read_all(out.run_dir / "eval" / "report.json"));
  EXPECT_EQ(report["metrics"]["accuracy"], 1.0);

  const auto manifest = nlohmann::json::parse(test::read_all(out.run_dir / "manifest.json"));
  for (const auto& [rel, sha] : out.outputs) {
    EXPECT_EQ(io::sha256_file(out.run_dir / rel), sha) << rel;
  }
  EXPECT_EQ(manifest.at("outputs").size(), out.outputs.size());
  EXPECT_TRUE(out.outputs.contains("infer/predictions.csv"));
  EXPECT_FALSE(out.outputs.contains("log.jsonl"));
  EXPECT_TRUE(fs::exists(out.run_dir / "config.ini"));
  EXPECT_FALSE(fs::exists(out.run_dir / "infer" / "checkpoint"));
}

TEST(Run, RepeatedRunsAreByteIdentical) {
  test::TempDir dir;
  const auto fx = fixture(dir / "fx", "synth", 9, 12);
  auto c = basic(dir, fx, "first");
  c.bootstrap_sizes = "40,80,full";
  c.replicates = 30;
  const auto a = run_pipeline(c);
  c.run_name = "second";
  c.workers = 3;
  const auto b = run_pipeline(c);
  auto data_only = [](std::map<std::string, std::string> m) {
    m.erase("config.ini");
    m.erase("config.json");
    return m;
  };
  EXPECT_EQ(data_only(a.outputs), data_only(b.outputs));
  EXPECT_NE(a.outputs.at("config.ini"), b.outputs.at("config.ini"));

  // The INI written by the first run reproduces it.
  RunConfig from_ini;
  apply_ini(from_ini, a.run_dir / "config.ini");
  from_ini.out_dir = c.out_dir;
  from_ini.run_name = "third";
  EXPECT_EQ(run_pipeline(from_ini).outputs, a.outputs);

  EXPECT_EQ(kind_of([&] { run_pipeline(c); }), ErrorKind::Config);  // run name taken
}

TEST(Run, FailureRecordsStageAndKind) {
  test::TempDir dir;
  RunConfig c;
  c.out_dir = dir / "runs";
  c.run_name = "broken";
  c.rasters = {{"r", dir / "nope.tif"}};
  EXPECT_EQ(kind_of([&] { run_pipeline(c); }), ErrorKind::Io);
  const auto f = nlohmann::json::parse(test::read_all(dir / "runs" / "broken" / "failure.json"));
  EXPECT_EQ(f["stage"], "grid");
  EXPECT_EQ(f["kind"], "io");
  EXPECT_EQ(f["exit_code"], 3);
  EXPECT_EQ(f["retriable"], false);
  EXPECT_TRUE(fs::exists(dir / "runs" / "broken" / "log.jsonl"));
}

TEST(Run, DatasetMapAndCorrelationAcrossRegions) {
  test::TempDir dir;
  RunConfig c;
  c.out_dir = dir / "runs";
  c.run_name = "multi";
  std::string labels = "region_id,row,col,label\n";
  std::string shdi = "region_id,value\n";
  const std::vector<std::pair<std::string, std::size_t>> regions = {{"a", 2}, {"b", 5}, {"c", 9}, {"d", 14}};
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& [id, plant] = regions[i];
    const auto fx = fixture(dir / id, id, plant, 6);
    c.rasters.push_back({id, fx.raster});
    for (std::int64_t r = 0; r < 6; ++r) {
      for (std::int64_t col = 0; col < 6; ++col) {
        labels += id + "," + std::to_string(r) + "," + std::to_string(col) + "," +
                  (fx.plan.planted.contains({r, col}) ? "waste" : "background") + "\n";
      }
    }
    shdi += id + "," + std::to_string(0.9 - 0.1 * static_cast<double>(i)) + "\n";
  }
  test::write_text(dir / "labels.csv", labels);
  test::write_text(dir / "shdi.csv", shdi);
  c.labels = dir / "labels.csv";
  c.layers = {"shdi=" + (dir / "shdi.csv").string()};
  c.exclude = {"d"};
  const auto out = run_pipeline(c);
  EXPECT_EQ(out.stages, (std::vector<std::string>{"grid", "tiles", "dataset", "infer", "eval", "map", "corr"}));
  EXPECT_TRUE(out.outputs.contains("dataset/manifest.csv"));
  EXPECT_TRUE(out.outputs.contains("corr/scatter_oddmswc__shdi.csv"));
  const auto corr = nlohmann::json::parse(test::read_all(out.run_dir / "corr" / "report.json"));
  EXPECT_EQ(corr["target"][0]["rho"], -1.0);
  EXPECT_EQ(corr["target"][0]["n"], 4);
  const auto sens = nlohmann::json::parse(test::read_all(out.run_dir / "corr" / "sensitivity.json"));
  EXPECT_EQ(sens["target"][0]["n"], 3);
  EXPECT_EQ(test::read_all(out.run_dir / "map" / "summary.csv").substr(0, 56),
            "region_id,n_tiles,n_waste,oddmswc,rank\nd,36,14,38.888889");
}
