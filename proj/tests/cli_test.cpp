#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "json.hpp"
#include "onnx_builder.hpp"
#include "support.hpp"

namespace {

struct Result {
  int code = -1;
  std::string output;
};

class Cli : public ::testing::Test {
 protected:
  Result run(const std::string& args) {
    const auto log = dir_ / "out.txt";
    const std::string cmd = "cd '" + dir_.path().string() + "' && '" + std::string(ODDMAP_CLI) + "' " + args + " > '" +
                            log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, oddmap::test::read_all(log)};
  }
  std::filesystem::path path(const std::string& rel) const { return dir_ / rel; }

  oddmap::test::TempDir dir_;
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("paint").code, 2);
  EXPECT_EQ(run("grid make").code, 2);  // --raster required
  const auto bbox = run("ingest search --bbox 1,2,3");
  EXPECT_EQ(bbox.code, 2);
  EXPECT_NE(bbox.output.find("bbox"), std::string::npos);
}

TEST_F(Cli, PlantedFixtureThroughSubcommands) {
  ASSERT_EQ(run("synth make --rows 10 --cols 10 --plant 13 --gsd 0.25 --out fx").code, 0);
  ASSERT_EQ(run("grid make --raster fx/fixture.tif --region synth --out g").code, 0);
  const auto infer = run("infer run --raster fx/fixture.tif --grid g/synth.csv --region synth --out p.csv");
  ASSERT_EQ(infer.code, 0) << infer.output;
  EXPECT_NE(infer.output.find("100 predicted"), std::string::npos);
  ASSERT_EQ(run("map oddmswc --preds p.csv --out s.csv").code, 0);
  EXPECT_EQ(oddmap::test::read_all(path("s.csv")), "region_id,n_tiles,n_waste,oddmswc,rank\nsynth,100,13,13,1\n");
  ASSERT_EQ(run("eval metrics --preds p.csv --truth fx/truth.csv --out r.json").code, 0);
  const auto report = nlohmann::json::parse(oddmap::test::read_all(path("r.json")));
  EXPECT_EQ(report["confusion"]["tp"], 13);
  EXPECT_EQ(report["confusion"]["fp"], 0);
  ASSERT_EQ(run("map export --preds p.csv --grid g/synth.csv --out m.geojson").code, 0);
  EXPECT_EQ(nlohmann::json::parse(oddmap::test::read_all(path("m.geojson")))["features"].size(), 100u);
  ASSERT_EQ(run("map export --preds p.csv --grid g/synth.csv --waste-only --out w.geojson").code, 0);
  EXPECT_EQ(nlohmann::json::parse(oddmap::test::read_all(path("w.geojson")))["features"].size(), 13u);
}

TEST_F(Cli, RunCommandFlagsOverrideIni) {
  ASSERT_EQ(run("synth make --rows 4 --cols 5 --plant 3 --gsd 0.25 --out fx").code, 0);
  oddmap::test::write_text(path("c.ini"),
                           "[run]\nout_dir = runs\nrun_name = base\n[grid]\nrasters = synth=fx/fixture.tif\n"
                           "[eval]\ntruth = fx/truth.csv\n");
  const auto ok = run("run --config c.ini --run.run_name flagged");
  ASSERT_EQ(ok.code, 0) << ok.output;
  EXPECT_TRUE(std::filesystem::exists(path("runs/flagged/manifest.json")));
  EXPECT_FALSE(std::filesystem::exists(path("runs/base")));
  EXPECT_EQ(run("run --config c.ini --run.run_name flagged").code, 2);  // exists
  EXPECT_EQ(run("run --config c.ini --dataset.ratios 0.5,0.6,0.1").code, 2);
  EXPECT_EQ(run("run --config missing.ini").code, 2);
  EXPECT_EQ(run("run --config c.ini --run.run_name gone --grid.rasters synth=fx/nothing.tif").code, 3);

  oddmap::test::write_text(path("fx/broken.tif"), "not a tiff");
  const auto failed = run("run --config c.ini --run.run_name broken --grid.rasters synth=fx/broken.tif");
  EXPECT_EQ(failed.code, 3) << failed.output;
  EXPECT_TRUE(std::filesystem::exists(path("runs/broken/failure.json")));
}

TEST_F(Cli, ModelContractFailuresExitFour) {
  ASSERT_EQ(run("synth make --rows 2 --cols 2 --plant 1 --gsd 0.25 --out fx").code, 0);
  oddmap::test::TinyModel reversed;
  reversed.metadata["class_names"] = "waste,background";
  oddmap::test::write_text(path("reversed.onnx"), oddmap::test::build_model(reversed));
  oddmap::test::write_text(path("good.onnx"), oddmap::test::build_model({}));
  oddmap::test::write_text(path("garbage.onnx"), "\x07\x07\x07");

  const auto inspect = run("infer inspect --model good.onnx");
  EXPECT_EQ(inspect.code, 0) << inspect.output;
  EXPECT_NE(inspect.output.find("NCHW"), std::string::npos) << inspect.output;
  const auto rev = run("infer inspect --model reversed.onnx");
  EXPECT_EQ(rev.code, 4);
  EXPECT_NE(rev.output.find("class_names"), std::string::npos);
  EXPECT_EQ(run("infer run --raster fx/fixture.tif --model reversed.onnx").code, 4);
  EXPECT_EQ(run("infer run --raster fx/fixture.tif --model garbage.onnx").code, 3);
  EXPECT_EQ(run("infer run --raster fx/fixture.tif --model good.onnx --out p.csv").code, 0);
  EXPECT_EQ(run("infer run --raster fx/fixture.tif --backend onnx").code, 2);
}
