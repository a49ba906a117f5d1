#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "oddmap/geogrid.hpp"
#include "oddmap/kernels.hpp"
#include "oddmap/predictions.hpp"
#include "oddmap/raster.hpp"

namespace oddmap {

struct MarkerSpec {
  /// Fraction of tile area covered by marker blobs.
  double density = 0.08;
  /// Blob edge in source pixels.
  int blob_px = 3;
  std::uint8_t red = 235;
  std::uint8_t green = 25;
  std::uint8_t blue = 30;
};

struct PlantingPlan {
  std::int64_t rows = 10;
  std::int64_t cols = 10;
  std::set<TileId> planted;
  MarkerSpec marker;
  std::uint64_t seed = 7;
  double gsd_m = 0.05;
  double tile_size_m = 5.0;
  std::string region_id = "synth";
  /// UTM 37S, near Dar es Salaam; tile (0, 0) starts at this corner.
  Crs crs = Crs::utm(37, true);
  Point origin{530000.0, 9240000.0};

  std::int64_t tile_px() const;
};

/// Throws Config when the tile size is not a whole number of pixels, a
/// planted id lies outside the grid, or the marker density is out of (0, 1].
void validate(const PlantingPlan& plan);

/// Chooses `count` distinct tiles with a generator keyed by `seed`.
std::set<TileId> choose_planted(std::int64_t rows, std::int64_t cols, std::size_t count,
                                std::uint64_t seed);

struct Fixture {
  std::filesystem::path raster;
  std::filesystem::path truth;
  PlantingPlan plan;
};

/// Writes `<out>/fixture.tif` (3-band 8-bit, tiled) and `<out>/truth.csv`
/// (prediction schema, confidence 1) plus `<out>/plan.json`.
Fixture make_fixture(const PlantingPlan& plan, const std::filesystem::path& out);

/// Renders the fixture pixels without writing them (row-major RGB).
std::vector<std::uint8_t> render_fixture(const PlantingPlan& plan);
RasterMeta fixture_meta(const PlantingPlan& plan);
std::vector<LabeledTile> fixture_truth(const PlantingPlan& plan);

struct PipelineDiff {
  bool exact_match = false;
  std::vector<TileKey> mismatched;
  std::vector<TileKey> missing;     // truth tiles lacking a prediction
  std::vector<TileKey> unexpected;  // predictions outside the truth
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

PipelineDiff verify_pipeline(const std::vector<LabeledTile>& truth,
                             const std::vector<Prediction>& predictions);

}  // namespace oddmap
